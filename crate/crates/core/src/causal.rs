//! Honest causal forests on locally centered data.
//!
//! Trees split on a gradient-style heterogeneity criterion and the forest
//! estimate at `x` is the weighted slope
//!
//! ```text
//! tau(x) = sum_i a_i (W_i - Wbar)(Y_i - Ybar) / sum_i a_i (W_i - Wbar)^2
//! ```
//!
//! with `a_i = alpha_i(x)` the forest kernel weights and `Wbar`, `Ybar` the
//! weighted means of the centered treatment and outcome.

use std::sync::Arc;

use rayon::prelude::*;

use crate::data::{CenteredDataset, FeatureSet};
use crate::error::{Error, Result};
use crate::forest::{ForestWeights, HonestForest, LeafSet};
use crate::params::ForestParams;
use crate::tree::SplitRule;

/// Denominators below this are treated as "no treatment variation".
pub const DEGENERATE_TOL: f64 = 1e-12;

struct HeterogeneityRule<'a> {
    w: &'a [f64],
    y: &'a [f64],
}

impl SplitRule for HeterogeneityRule<'_> {
    fn responses(&self, samples: &[u32]) -> Option<Vec<f64>> {
        let n = samples.len() as f64;
        let (mut w_mean, mut y_mean) = (0.0, 0.0);
        for &i in samples {
            w_mean += self.w[i as usize];
            y_mean += self.y[i as usize];
        }
        w_mean /= n;
        y_mean /= n;
        let (mut sww, mut swy) = (0.0, 0.0);
        for &i in samples {
            let dw = self.w[i as usize] - w_mean;
            sww += dw * dw;
            swy += dw * (self.y[i as usize] - y_mean);
        }
        let var_w = sww / n;
        if var_w < DEGENERATE_TOL {
            return None;
        }
        let tau = swy / sww;
        Some(
            samples
                .iter()
                .map(|&i| {
                    let dw = self.w[i as usize] - w_mean;
                    dw * (self.y[i as usize] - y_mean - tau * dw) / var_w
                })
                .collect(),
        )
    }
}

/// A treatment-effect estimate and whether it came from the global fallback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauEstimate {
    pub value: f64,
    /// Set when the local denominator vanished and the global ratio was used.
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub struct CausalForest {
    forest: HonestForest,
    training: Arc<CenteredDataset>,
    params: ForestParams,
    global_tau: f64,
}

/// Weighted slope of `y` on `w` under the kernel `leaves`; `None` when the
/// weighted variance of `w` vanishes.
pub(crate) fn weighted_slope(leaves: &LeafSet<'_>, w: &[f64], y: &[f64]) -> Option<f64> {
    let w_bar = leaves.weighted_sum(|i| w[i]);
    let y_bar = leaves.weighted_sum(|i| y[i]);
    let den = leaves.weighted_sum(|i| (w[i] - w_bar).powi(2));
    if den < DEGENERATE_TOL {
        return None;
    }
    let num = leaves.weighted_sum(|i| (w[i] - w_bar) * (y[i] - y_bar));
    Some(num / den)
}

pub fn fit_causal_forest(
    data: Arc<CenteredDataset>,
    feature_set: FeatureSet,
    params: &ForestParams,
) -> Result<CausalForest> {
    let n = data.n();
    let need = 2 * params.min_node_size;
    if n < need {
        return Err(Error::TooFewRows { got: n, need });
    }
    let w = data.centered_treatment();
    let y = data.centered_outcome();
    let w_mean = w.iter().sum::<f64>() / n as f64;
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let sww: f64 = w.iter().map(|v| (v - w_mean).powi(2)).sum();
    if sww / (n as f64) < DEGENERATE_TOL {
        return Err(Error::ZeroTreatmentVariance);
    }
    let swy: f64 = w.iter().zip(y).map(|(a, b)| (a - w_mean) * (b - y_mean)).sum();
    let global_tau = params.truncate(swy / sww);

    let rule = HeterogeneityRule { w, y };
    let forest = HonestForest::grow(data.shared_features(), &rule, feature_set, params)?;
    Ok(CausalForest { forest, training: data, params: params.clone(), global_tau })
}

impl CausalForest {
    pub fn forest(&self) -> &HonestForest {
        &self.forest
    }

    pub fn feature_set(&self) -> &FeatureSet {
        self.forest.feature_set()
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn training(&self) -> &Arc<CenteredDataset> {
        &self.training
    }

    /// Whole-sample slope used when a local denominator degenerates.
    pub fn global_tau(&self) -> f64 {
        self.global_tau
    }

    /// Kernel weights at `x`; `x` carries all `p` columns and columns outside
    /// the forest's feature set are ignored.
    pub fn forest_weights(&self, x: &[f64]) -> Result<ForestWeights> {
        Ok(self.forest.leaves(x, None)?.weights())
    }

    pub(crate) fn estimate_with(&self, leaves: &LeafSet<'_>) -> TauEstimate {
        let d = &self.training;
        match weighted_slope(leaves, d.centered_treatment(), d.centered_outcome()) {
            Some(t) => TauEstimate { value: self.params.truncate(t), fallback: false },
            None => TauEstimate { value: self.global_tau, fallback: true },
        }
    }

    pub fn predict_tau(&self, x: &[f64]) -> Result<TauEstimate> {
        let leaves = self.forest.leaves(x, None)?;
        Ok(self.estimate_with(&leaves))
    }

    /// Like [`predict_tau`](Self::predict_tau) but reports a vanishing local
    /// denominator as an error instead of falling back.
    pub fn predict_tau_strict(&self, x: &[f64]) -> Result<f64> {
        let t = self.predict_tau(x)?;
        if t.fallback {
            return Err(Error::DegenerateDenominator);
        }
        Ok(t.value)
    }

    pub fn oob_tau_row(&self, row: usize) -> Result<TauEstimate> {
        let x = self.training.features().row(row);
        let leaves = self.forest.leaves(x, Some(row))?;
        Ok(self.estimate_with(&leaves))
    }

    /// Out-of-bag estimates; `None` for rows every tree drew.
    pub fn oob_tau_partial(&self) -> Vec<Option<TauEstimate>> {
        (0..self.training.n())
            .into_par_iter()
            .map(|i| self.oob_tau_row(i).ok())
            .collect()
    }

    pub fn oob_predict_tau(&self) -> Result<Vec<f64>> {
        (0..self.training.n())
            .into_par_iter()
            .map(|i| self.oob_tau_row(i).map(|t| t.value))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Features;
    use crate::seed;
    use rand::Rng;

    fn exact_slope(n: usize, slope: f64) -> Arc<CenteredDataset> {
        let mut rng = seed::rng(11);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let w: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 0.5 } else { -0.5 }).collect();
        let y = w.iter().map(|v| slope * v).collect();
        Arc::new(CenteredDataset::from_residuals(Features::from_rows(&rows).unwrap(), y, w).unwrap())
    }

    #[test]
    fn recovers_exact_linear_effect() {
        let data = exact_slope(3000, 2.0);
        let params = ForestParams::default().with_trees(100);
        let f = fit_causal_forest(data, FeatureSet::all(2).unwrap(), &params).unwrap();
        let mut rng = seed::rng(12);
        for _ in 0..50 {
            let t = f.predict_tau(&[rng.gen(), rng.gen()]).unwrap();
            assert!((t.value - 2.0).abs() < 0.05 && !t.fallback);
        }
    }

    #[test]
    fn zero_outcome_gives_zero_effect() {
        let data = exact_slope(400, 0.0);
        let f = fit_causal_forest(data, FeatureSet::all(2).unwrap(), &ForestParams::default().with_trees(20))
            .unwrap();
        assert_eq!(f.predict_tau(&[0.5, 0.5]).unwrap().value, 0.0);
    }

    #[test]
    fn zero_treatment_variance_is_rejected() {
        let x = Features::from_rows(&vec![vec![1.0]; 50]).unwrap();
        let data = Arc::new(CenteredDataset::from_residuals(x, vec![1.0; 50], vec![0.0; 50]).unwrap());
        assert!(matches!(
            fit_causal_forest(data, FeatureSet::all(1).unwrap(), &ForestParams::default()),
            Err(Error::ZeroTreatmentVariance)
        ));
    }

    #[test]
    fn two_point_slope() {
        // Weights {0.5, 0.5} on (W, Y) = (-0.5, -1), (0.5, 1).
        let x = Features::from_rows(&[vec![0.0], vec![0.0]]).unwrap();
        let data = CenteredDataset::from_residuals(x, vec![-1.0, 1.0], vec![-0.5, 0.5]).unwrap();
        let leaf: [u32; 2] = [0, 1];
        let leaves = LeafSet::from_leaves(vec![&leaf[..]]);
        let t = weighted_slope(&leaves, data.centered_treatment(), data.centered_outcome()).unwrap();
        assert_eq!(t, 2.0);
    }

    #[test]
    fn single_tree_without_oob_rows() {
        let data = exact_slope(60, 1.0);
        let params = ForestParams { num_trees: 1, subsample_fraction: 1.0, ..Default::default() };
        let f = fit_causal_forest(data, FeatureSet::all(2).unwrap(), &params).unwrap();
        assert!(matches!(f.oob_predict_tau(), Err(Error::NoOobTrees(_))));
    }
}
