//! Forest-level plumbing: parallel honest tree growth and the adaptive
//! kernel weights a forest induces at a query point.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::data::{FeatureSet, Features};
use crate::error::{Error, Result};
use crate::params::ForestParams;
use crate::seed;
use crate::tree::{Grower, SplitRule, Tree};

#[derive(Debug, Clone)]
pub struct HonestForest {
    trees: Vec<Tree>,
    features: Arc<Features>,
    feature_set: FeatureSet,
}

impl HonestForest {
    /// Grows `params.num_trees` trees in parallel. Tree `t` draws from its own
    /// stream seeded by `(params.seed, t)`, so the output does not depend on
    /// the number of worker threads.
    pub(crate) fn grow<R: SplitRule>(
        features: Arc<Features>,
        rule: &R,
        feature_set: FeatureSet,
        params: &ForestParams,
    ) -> Result<Self> {
        params.validate(features.n_cols())?;
        if let Some(&j) = feature_set.indices().last() {
            if j >= features.n_cols() {
                return Err(Error::FeatureOutOfRange { index: j, p: features.n_cols() });
            }
        }
        let grower = Grower::new(&features, rule, &feature_set, params);
        let trees = (0..params.num_trees)
            .into_par_iter()
            .map(|t| grower.grow(&mut seed::rng(seed::derive(params.seed, t as u64))))
            .collect();
        Ok(Self { trees, features, feature_set })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn feature_set(&self) -> &FeatureSet {
        &self.feature_set
    }

    pub fn training_features(&self) -> &Features {
        &self.features
    }

    pub fn n_train(&self) -> usize {
        self.features.n_rows()
    }

    /// Number of trees whose subsample excludes `row`.
    pub fn oob_tree_count(&self, row: usize) -> usize {
        self.trees.iter().filter(|t| !t.contains(row)).count()
    }

    /// Co-leaf sets for `x` across all trees, or only across trees that did
    /// not draw `exclude` when it is given.
    pub fn leaves(&self, x: &[f64], exclude: Option<usize>) -> Result<LeafSet<'_>> {
        let mut used = 0;
        let mut leaves = Vec::with_capacity(self.trees.len());
        for tree in &self.trees {
            if exclude.is_some_and(|row| tree.contains(row)) {
                continue;
            }
            used += 1;
            let members = tree.leaf_members_for(x);
            if !members.is_empty() {
                leaves.push(members);
            }
        }
        if used == 0 {
            return Err(Error::NoOobTrees(exclude.unwrap_or(0)));
        }
        if leaves.is_empty() {
            return Err(Error::EmptyLeafEverywhere);
        }
        Ok(LeafSet { leaves })
    }
}

/// Non-empty leaves containing a query point, one per contributing tree.
///
/// Defines the weights `alpha_i(x) = (1/M) sum_l 1{i in L_l(x)} / |L_l(x)|`
/// with `M` the number of contributing trees.
pub struct LeafSet<'a> {
    leaves: Vec<&'a [u32]>,
}

impl<'a> LeafSet<'a> {
    #[cfg(test)]
    pub(crate) fn from_leaves(leaves: Vec<&'a [u32]>) -> Self {
        Self { leaves }
    }

    pub fn tree_count(&self) -> usize {
        self.leaves.len()
    }

    /// `sum_i alpha_i(x) f(i)` evaluated leaf by leaf.
    pub fn weighted_sum(&self, f: impl Fn(usize) -> f64) -> f64 {
        let total: f64 = self
            .leaves
            .iter()
            .map(|leaf| leaf.iter().map(|&i| f(i as usize)).sum::<f64>() / leaf.len() as f64)
            .sum();
        total / self.leaves.len() as f64
    }

    pub fn weights(&self) -> ForestWeights {
        let m = self.leaves.len() as f64;
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for leaf in &self.leaves {
            let w = 1.0 / (m * leaf.len() as f64);
            for &i in leaf.iter() {
                *acc.entry(i as usize).or_insert(0.0) += w;
            }
        }
        ForestWeights { weights: acc.into_iter().collect() }
    }
}

/// Sparse forest kernel weights over training rows, sorted by row index.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestWeights {
    pub weights: Vec<(usize, f64)>,
}

impl ForestWeights {
    pub fn get(&self, row: usize) -> f64 {
        self.weights
            .binary_search_by_key(&row, |&(i, _)| i)
            .map_or(0.0, |k| self.weights[k].1)
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().map(|&(_, w)| w).sum()
    }
}
