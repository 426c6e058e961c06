//! Honest regression forests for local centering.

use std::sync::Arc;

use rayon::prelude::*;

use crate::data::{CenteredDataset, Dataset, FeatureSet, Features};
use crate::error::{Error, Result};
use crate::forest::HonestForest;
use crate::params::ForestParams;
use crate::seed;
use crate::tree::SplitRule;

/// Lower clamp for propensity estimates; the upper clamp is `1 - PROPENSITY_FLOOR`.
pub const PROPENSITY_FLOOR: f64 = 0.01;

/// Variance-reduction splitting: responses are the target centered on the node mean.
struct VarianceRule<'a> {
    target: &'a [f64],
}

impl SplitRule for VarianceRule<'_> {
    fn responses(&self, samples: &[u32]) -> Option<Vec<f64>> {
        let mean = samples.iter().map(|&i| self.target[i as usize]).sum::<f64>() / samples.len() as f64;
        Some(samples.iter().map(|&i| self.target[i as usize] - mean).collect())
    }
}

#[derive(Debug, Clone)]
pub struct RegressionForest {
    forest: HonestForest,
    target: Vec<f64>,
    constant_target: bool,
}

impl RegressionForest {
    pub fn forest(&self) -> &HonestForest {
        &self.forest
    }

    /// True when the target was constant; predictions then equal that constant.
    pub fn constant_target(&self) -> bool {
        self.constant_target
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let leaves = self.forest.leaves(x, None)?;
        Ok(leaves.weighted_sum(|i| self.target[i]))
    }

    /// Out-of-bag prediction for training row `row`.
    pub fn oob_predict_row(&self, row: usize) -> Result<f64> {
        let x = self.forest.training_features().row(row);
        let leaves = self.forest.leaves(x, Some(row))?;
        Ok(leaves.weighted_sum(|i| self.target[i]))
    }

    /// Out-of-bag predictions for every training row. Fails on the first row
    /// that every tree drew.
    pub fn oob_predict(&self) -> Result<Vec<f64>> {
        (0..self.forest.n_train())
            .into_par_iter()
            .map(|i| self.oob_predict_row(i))
            .collect()
    }
}

pub fn fit_regression_forest(
    features: Arc<Features>,
    target: &[f64],
    params: &ForestParams,
) -> Result<RegressionForest> {
    let n = features.n_rows();
    if target.len() != n {
        return Err(Error::ShapeMismatch(format!("target has {} rows, features {}", target.len(), n)));
    }
    if let Some(row) = target.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue { row: row + 1, column: "target".into() });
    }
    let need = 2 * params.min_node_size;
    if n < need {
        return Err(Error::TooFewRows { got: n, need });
    }
    let constant_target = target.iter().all(|&v| v == target[0]);
    let feature_set = FeatureSet::all(features.n_cols())?;
    let forest = HonestForest::grow(features, &VarianceRule { target }, feature_set, params)?;
    Ok(RegressionForest { forest, target: target.to_vec(), constant_target })
}

/// Settings of the nuisance forests used by [`center`]: every column is a
/// split candidate at every node and children may hold a single estimation
/// observation. The remaining fields are taken from `params`.
pub fn centering_params(params: &ForestParams, p: usize) -> ForestParams {
    ForestParams { mtry: Some(p), min_node_size: 1, ..params.clone() }
}

/// Residualizes outcome and treatment against out-of-bag regression-forest
/// estimates fitted on every feature column with [`centering_params`].
/// Propensities are clamped to `[0.01, 0.99]`.
pub fn center(d: &Dataset, params: &ForestParams) -> Result<CenteredDataset> {
    let base = centering_params(params, d.p());
    let outcome_params = base.clone().with_seed(seed::derive(params.seed, seed::TAG_OUTCOME_CENTERING));
    let treatment_params = base.with_seed(seed::derive(params.seed, seed::TAG_TREATMENT_CENTERING));
    let m_hat = fit_regression_forest(d.shared_features(), d.outcome(), &outcome_params)?.oob_predict()?;
    let pi_hat = fit_regression_forest(d.shared_features(), d.treatment(), &treatment_params)?
        .oob_predict()?
        .into_iter()
        .map(|p| p.clamp(PROPENSITY_FLOOR, 1.0 - PROPENSITY_FLOOR))
        .collect();
    CenteredDataset::from_estimates(d, m_hat, pi_hat)
}
