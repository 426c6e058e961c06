//! Causal forests retrained without a column (or group), with the covariance
//! correction that keeps them consistent when the dropped column is a
//! confounder that also drives effect heterogeneity.
//!
//! With `a_i` the reduced forest's weights at `x`, `t_i` the full forest's
//! out-of-bag estimate at training row `i` and `W_i` the centered treatment:
//!
//! ```text
//! theta(x) = tau_reduced(x) - (sum a_i W_i^2 t_i - W2bar * tbar) / (W2bar - Wbar^2)
//! ```

use std::sync::Arc;

use rayon::prelude::*;

use crate::causal::{fit_causal_forest, CausalForest, TauEstimate, DEGENERATE_TOL};
use crate::data::{CenteredDataset, FeatureSet};
use crate::error::{Error, Result};
use crate::forest::LeafSet;
use crate::params::ForestParams;
use crate::seed;

/// Prediction of a corrected forest with its pieces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaEstimate {
    /// Corrected estimate, truncated to `[-K, K]`.
    pub theta: f64,
    /// Raw reduced-forest estimate, truncated to `[-K, K]`.
    pub tau_reduced: f64,
    pub correction: f64,
    pub tau_fallback: bool,
    pub correction_fallback: bool,
}

#[derive(Debug, Clone)]
pub struct CorrectedForest {
    reduced: CausalForest,
    base_tau: Arc<Vec<f64>>,
    dropped: Vec<usize>,
}

/// Seed for the forest refit without `drop` (the empty set gives the
/// fresh-randomization baseline).
pub fn reduced_seed(master: u64, drop: &[usize]) -> u64 {
    let mut sorted = drop.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    seed::derive_from(master, seed::TAG_REDUCED_FOREST, &sorted)
}

/// Full-forest plug-in values at every training row: out-of-bag where
/// available, otherwise the all-tree prediction.
pub fn base_plugin(base: &CausalForest) -> Result<Vec<f64>> {
    let training = base.training();
    (0..training.n())
        .into_par_iter()
        .map(|i| match base.oob_tau_row(i) {
            Ok(t) => Ok(t.value),
            Err(Error::NoOobTrees(_)) => base.predict_tau(training.features().row(i)).map(|t| t.value),
            Err(e) => Err(e),
        })
        .collect()
}

/// Fits the reduced forest on the centered data with `drop` removed and
/// captures the full forest's out-of-bag estimates for the correction.
pub fn fit_corrected_forest(
    data: Arc<CenteredDataset>,
    drop: &[usize],
    base: &CausalForest,
    params: &ForestParams,
) -> Result<CorrectedForest> {
    let plugin = Arc::new(base_plugin(base)?);
    fit_corrected_forest_with_plugin(data, drop, plugin, params)
}

/// As [`fit_corrected_forest`] with precomputed plug-in effects, so several
/// refits can share one pass over the full forest.
pub fn fit_corrected_forest_with_plugin(
    data: Arc<CenteredDataset>,
    drop: &[usize],
    base_tau: Arc<Vec<f64>>,
    params: &ForestParams,
) -> Result<CorrectedForest> {
    if base_tau.len() != data.n() {
        return Err(Error::ShapeMismatch("plug-in effects do not match n".into()));
    }
    let feature_set = FeatureSet::without(drop, data.p())?;
    let reduced_params = params.clone().with_seed(reduced_seed(params.seed, drop));
    let reduced = fit_causal_forest(data, feature_set, &reduced_params)?;
    let mut dropped = drop.to_vec();
    dropped.sort_unstable();
    dropped.dedup();
    Ok(CorrectedForest { reduced, base_tau, dropped })
}

impl CorrectedForest {
    pub fn reduced_forest(&self) -> &CausalForest {
        &self.reduced
    }

    pub fn base_tau(&self) -> &[f64] {
        &self.base_tau
    }

    pub fn dropped(&self) -> &[usize] {
        &self.dropped
    }

    /// Same forest with a different plug-in vector.
    pub fn with_base_tau(&self, base_tau: Vec<f64>) -> Result<Self> {
        if base_tau.len() != self.base_tau.len() {
            return Err(Error::ShapeMismatch("plug-in effects do not match n".into()));
        }
        Ok(Self { reduced: self.reduced.clone(), base_tau: Arc::new(base_tau), dropped: self.dropped.clone() })
    }

    fn estimate_with(&self, leaves: &LeafSet<'_>) -> ThetaEstimate {
        let TauEstimate { value: tau_reduced, fallback: tau_fallback } = self.reduced.estimate_with(leaves);
        let w = self.reduced.training().centered_treatment();
        let t = &self.base_tau;
        let w_bar = leaves.weighted_sum(|i| w[i]);
        let w2_bar = leaves.weighted_sum(|i| w[i] * w[i]);
        let t_bar = leaves.weighted_sum(|i| t[i]);
        let den = w2_bar - w_bar * w_bar;
        debug_assert!(
            (den - leaves.weighted_sum(|i| (w[i] - w_bar).powi(2))).abs() <= 1e-10 * w2_bar.max(1.0),
            "variance identity violated"
        );
        let (correction, correction_fallback) = if den.abs() < DEGENERATE_TOL {
            (0.0, true)
        } else {
            // Centered form of sum a_i W_i^2 t_i - W2bar * tbar.
            let num = leaves.weighted_sum(|i| w[i] * w[i] * (t[i] - t_bar));
            (num / den, false)
        };
        let params = self.reduced.params();
        ThetaEstimate {
            theta: params.truncate(tau_reduced - correction),
            tau_reduced,
            correction,
            tau_fallback,
            correction_fallback,
        }
    }

    pub fn predict_theta(&self, x: &[f64]) -> Result<ThetaEstimate> {
        let leaves = self.reduced.forest().leaves(x, None)?;
        Ok(self.estimate_with(&leaves))
    }

    pub fn oob_theta_row(&self, row: usize) -> Result<ThetaEstimate> {
        let x = self.reduced.training().features().row(row);
        let leaves = self.reduced.forest().leaves(x, Some(row))?;
        Ok(self.estimate_with(&leaves))
    }

    /// Out-of-bag estimates; `None` for rows every tree drew.
    pub fn oob_theta_partial(&self) -> Vec<Option<ThetaEstimate>> {
        (0..self.base_tau.len())
            .into_par_iter()
            .map(|i| self.oob_theta_row(i).ok())
            .collect()
    }
}
