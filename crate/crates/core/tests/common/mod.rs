//! Checks shared by the property tests and the acceptance target. Each
//! returns a description of the first violation it finds.

#![allow(dead_code)]

use std::sync::Arc;

use cfvimp::{
    center, fit_causal_forest, fit_corrected_forest, generate, run_repetition, CausalForest, CorrectedForest, DgpSpec,
    DropGroup, Experiment, FeatureSet, ForestParams, HonestForest,
};
use cfvimp::tree::Node;
use rand::Rng;

pub type Check = std::result::Result<(), String>;

pub fn small_params(seed: u64) -> ForestParams {
    ForestParams { num_trees: 200, ..ForestParams::default() }.with_seed(seed)
}

pub struct Fitted {
    pub spec: DgpSpec,
    pub forest: CausalForest,
    pub corrected: CorrectedForest,
}

pub fn fit_exp1(n: usize, seed: u64) -> Fitted {
    let sim = generate(Experiment::Experiment1, n, seed).unwrap();
    let params = small_params(seed);
    let centered = Arc::new(center(&sim.dataset, &params).unwrap());
    let p = sim.dataset.p();
    let forest = fit_causal_forest(centered.clone(), FeatureSet::all(p).unwrap(), &params).unwrap();
    let corrected = fit_corrected_forest(centered, &[0], &forest, &params).unwrap();
    Fitted { spec: sim.spec, forest, corrected }
}

fn random_query(spec: &DgpSpec, rng: &mut impl Rng) -> Vec<f64> {
    (0..spec.p).map(|_| rng.gen_range(-3.0..3.0)).collect()
}

pub fn weights_are_a_distribution(f: &Fitted, queries: usize, seed: u64) -> Check {
    let mut rng = cfvimp::seed::rng(seed);
    for q in 0..queries {
        let x = random_query(&f.spec, &mut rng);
        let w = f.forest.forest_weights(&x).map_err(|e| e.to_string())?;
        if let Some(&(i, a)) = w.weights.iter().find(|&&(_, a)| !(a >= 0.0)) {
            return Err(format!("query {q}: weight {a} on row {i}"));
        }
        let total = w.total();
        if (total - 1.0).abs() > 1e-12 {
            return Err(format!("query {q}: weights sum to {total}"));
        }
    }
    Ok(())
}

pub fn honest_and_oob_exclusive(forest: &HonestForest) -> Check {
    let n = forest.n_train();
    for (t, tree) in forest.trees().iter().enumerate() {
        let mut side = vec![0u8; n];
        for &i in tree.split_half() {
            side[i as usize] |= 1;
        }
        for &i in tree.estimation_half() {
            side[i as usize] |= 2;
        }
        if let Some(i) = side.iter().position(|&s| s == 3) {
            return Err(format!("tree {t}: row {i} in both halves"));
        }
        let sub = tree.subsample();
        if sub.len() != tree.split_half().len() + tree.estimation_half().len() {
            return Err(format!("tree {t}: halves do not partition the subsample"));
        }
        for i in 0..n {
            if tree.contains(i) != (side[i] != 0) {
                return Err(format!("tree {t}: membership of row {i} disagrees with the halves"));
            }
        }
        // Leaves may only hold estimation rows.
        for node in 0..tree.nodes().len() {
            if let Some(&i) = tree.members(node).iter().find(|&&i| side[i as usize] != 2) {
                return Err(format!("tree {t}: leaf {node} holds non-estimation row {i}"));
            }
        }
    }
    // Out-of-bag kernels never touch the excluded row.
    for row in (0..n).step_by((n / 50).max(1)) {
        let x = forest.training_features().row(row).to_vec();
        if let Ok(leaves) = forest.leaves(&x, Some(row)) {
            if leaves.weights().get(row) != 0.0 {
                return Err(format!("row {row} carries weight in its own OOB kernel"));
            }
        }
    }
    Ok(())
}

pub fn node_constraints(forest: &HonestForest, params: &ForestParams) -> Check {
    for (t, tree) in forest.trees().iter().enumerate() {
        let counts = tree.estimation_counts();
        for (k, node) in tree.nodes().iter().enumerate() {
            match *node {
                Node::Split { left, right, .. } => {
                    let parent = counts[k];
                    let need = ((params.min_child_fraction * parent as f64).ceil() as usize).max(params.min_node_size);
                    for child in [left, right] {
                        if counts[child] < need {
                            return Err(format!(
                                "tree {t} node {k}: child {child} has {} of {parent} estimation rows, need {need}",
                                counts[child]
                            ));
                        }
                    }
                }
                Node::Leaf { len, .. } => {
                    if len > params.max_leaf_size {
                        return Err(format!("tree {t} leaf {k}: {len} rows exceed cap {}", params.max_leaf_size));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Weighted least squares of `y` on `(1, w)` solved from its normal
/// equations.
fn wls_slope(weights: &[(usize, f64)], w: &[f64], y: &[f64]) -> f64 {
    let (mut s, mut sw, mut sww, mut sy, mut swy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(i, a) in weights {
        s += a;
        sw += a * w[i];
        sww += a * w[i] * w[i];
        sy += a * y[i];
        swy += a * w[i] * y[i];
    }
    (s * swy - sw * sy) / (s * sww - sw * sw)
}

pub fn matches_wls(f: &Fitted, queries: usize, seed: u64) -> Check {
    let mut rng = cfvimp::seed::rng(seed);
    let data = f.forest.training();
    for q in 0..queries {
        let x = random_query(&f.spec, &mut rng);
        let est = f.forest.predict_tau(&x).map_err(|e| e.to_string())?;
        if est.fallback {
            continue;
        }
        let w = f.forest.forest_weights(&x).map_err(|e| e.to_string())?;
        let direct = wls_slope(&w.weights, data.centered_treatment(), data.centered_outcome());
        if (est.value - direct).abs() > 1e-10 {
            return Err(format!("query {q}: forest {} vs wls {direct}", est.value));
        }
    }
    Ok(())
}

pub fn correction_identities(f: &Fitted, queries: usize, seed: u64) -> Check {
    let mut rng = cfvimp::seed::rng(seed);
    let n = f.corrected.base_tau().len();
    let flat = f.corrected.with_base_tau(vec![0.7; n]).map_err(|e| e.to_string())?;
    let shifted =
        f.corrected.with_base_tau(f.corrected.base_tau().iter().map(|t| t + 3.25).collect()).map_err(|e| e.to_string())?;
    for q in 0..queries {
        let x = random_query(&f.spec, &mut rng);
        let z = flat.predict_theta(&x).map_err(|e| e.to_string())?;
        if (z.theta - z.tau_reduced).abs() > 1e-10 || z.correction.abs() > 1e-10 {
            return Err(format!("query {q}: constant plug-in gave correction {}", z.correction));
        }
        let a = f.corrected.predict_theta(&x).map_err(|e| e.to_string())?;
        let b = shifted.predict_theta(&x).map_err(|e| e.to_string())?;
        if (a.theta - b.theta).abs() > 1e-10 {
            return Err(format!("query {q}: shifting the plug-in moved theta from {} to {}", a.theta, b.theta));
        }
    }
    Ok(())
}

/// Bit patterns of one small importance repetition run on `threads` workers.
pub fn repetition_bits(threads: usize, seed: u64) -> Vec<u64> {
    let sim = generate(Experiment::Experiment1, 400, seed).unwrap();
    let groups = DropGroup::singletons(sim.dataset.feature_names());
    let params = ForestParams { num_trees: 100, ..ForestParams::default() }.with_seed(seed);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let r = pool.install(|| run_repetition(&sim.dataset, &groups, &params)).unwrap();
    r.corrected
        .iter()
        .chain(&r.uncorrected)
        .chain([&r.baseline_corrected, &r.baseline_uncorrected, &r.tau_variance])
        .map(|v| v.to_bits())
        .collect()
}

pub fn thread_invariant(seed: u64) -> Check {
    let one = repetition_bits(1, seed);
    for threads in [2, 8] {
        if repetition_bits(threads, seed) != one {
            return Err(format!("{threads} threads changed the output"));
        }
    }
    Ok(())
}
