use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Growth and prediction settings shared by regression and causal forests.
///
/// `mtry = None` resolves to `min(ceil(sqrt(q)) + 3, q)` where `q` is the
/// number of columns the forest may split on. Each column is then a split
/// candidate with probability `mtry / q` at every node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub num_trees: usize,
    pub subsample_fraction: f64,
    pub honesty_fraction: f64,
    pub min_node_size: usize,
    pub min_child_fraction: f64,
    pub mtry: Option<usize>,
    pub max_leaf_size: usize,
    pub truncation_bound: f64,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            num_trees: 2000,
            subsample_fraction: 0.5,
            honesty_fraction: 0.5,
            min_node_size: 5,
            min_child_fraction: 0.05,
            mtry: None,
            max_leaf_size: 20,
            truncation_bound: 1e6,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_trees(mut self, num_trees: usize) -> Self {
        self.num_trees = num_trees;
        self
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.num_trees == 0 {
            return bad("num_trees must be at least 1".into());
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return bad(format!("subsample_fraction {} not in (0, 1]", self.subsample_fraction));
        }
        if !(self.honesty_fraction > 0.0 && self.honesty_fraction < 1.0) {
            return bad(format!("honesty_fraction {} not in (0, 1)", self.honesty_fraction));
        }
        if self.min_node_size == 0 {
            return bad("min_node_size must be at least 1".into());
        }
        if !(self.min_child_fraction > 0.0 && self.min_child_fraction <= 0.5) {
            return bad(format!("min_child_fraction {} not in (0, 0.5]", self.min_child_fraction));
        }
        if let Some(m) = self.mtry {
            if m == 0 || m > p {
                return bad(format!("mtry {m} not in [1, {p}]"));
            }
        }
        if self.max_leaf_size < self.min_node_size {
            return bad(format!(
                "max_leaf_size {} below min_node_size {}",
                self.max_leaf_size, self.min_node_size
            ));
        }
        if !(self.truncation_bound > 0.0) || self.truncation_bound.is_nan() {
            return bad(format!("truncation_bound {} must be positive", self.truncation_bound));
        }
        Ok(())
    }

    /// Candidate columns per split when `available` columns may be used.
    pub fn resolved_mtry(&self, available: usize) -> usize {
        let default = ((available as f64).sqrt().ceil() as usize + 3).min(available);
        self.mtry.unwrap_or(default).clamp(1, available.max(1))
    }

    pub(crate) fn truncate(&self, v: f64) -> f64 {
        v.clamp(-self.truncation_bound, self.truncation_bound)
    }
}
