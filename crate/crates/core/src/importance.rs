//! Drop-and-relearn variable importance for causal forests.
//!
//! One repetition centers the data on every column, fits the full forest,
//! refits once per target group with the group removed, and refits once more
//! on every column under fresh randomization. All forests are evaluated out
//! of bag at the training rows. For a group `J` with refit estimates `th_J`:
//!
//! ```text
//! I(J) = sum (tau - th_J)^2 / sum (tau - mean(tau))^2  -  I(0)
//! ```
//!
//! where `I(0)` is the same ratio for the fresh-randomization refit. The
//! corrected variant uses the covariance-corrected refits, the uncorrected
//! variant the raw ones.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::causal::{fit_causal_forest, TauEstimate};
use crate::corrected::{base_plugin, fit_corrected_forest_with_plugin, ThetaEstimate};
use crate::data::{Dataset, FeatureSet};
use crate::error::{Error, Result};
use crate::params::ForestParams;
use crate::regression::center;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Corrected,
    Uncorrected,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Corrected => "corrected",
            Variant::Uncorrected => "uncorrected",
        }
    }
}

/// Columns dropped together, with a display label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropGroup {
    pub label: String,
    pub columns: Vec<usize>,
}

impl DropGroup {
    pub fn new(label: impl Into<String>, columns: Vec<usize>) -> Self {
        Self { label: label.into(), columns }
    }

    /// One singleton group per column, labelled by column name.
    pub fn singletons(names: &[String]) -> Vec<DropGroup> {
        names.iter().enumerate().map(|(j, n)| DropGroup::new(n.clone(), vec![j])).collect()
    }

    pub fn from_feature_set(label: impl Into<String>, fs: &FeatureSet) -> Self {
        Self::new(label, fs.indices().to_vec())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Rows used as evaluation points.
    pub evaluation_rows: usize,
    /// Rows dropped because some forest had no out-of-bag tree for them.
    pub excluded_rows: usize,
    /// Evaluation-point estimates that fell back to the global ratio.
    pub tau_fallbacks: usize,
    /// Evaluation-point corrections zeroed because their denominator vanished.
    pub correction_fallbacks: usize,
}

impl Diagnostics {
    fn add(&mut self, o: &Diagnostics) {
        self.evaluation_rows += o.evaluation_rows;
        self.excluded_rows += o.excluded_rows;
        self.tau_fallbacks += o.tau_fallbacks;
        self.correction_fallbacks += o.correction_fallbacks;
    }
}

/// Importance values from one repetition, for both variants.
#[derive(Debug, Clone, PartialEq)]
pub struct RepetitionResult {
    pub corrected: Vec<f64>,
    pub uncorrected: Vec<f64>,
    pub baseline_corrected: f64,
    pub baseline_uncorrected: f64,
    /// Variance of the full forest's out-of-bag estimates at the evaluation rows.
    pub tau_variance: f64,
    pub diagnostics: Diagnostics,
}

impl RepetitionResult {
    pub fn values(&self, variant: Variant) -> &[f64] {
        match variant {
            Variant::Corrected => &self.corrected,
            Variant::Uncorrected => &self.uncorrected,
        }
    }

    pub fn baseline(&self, variant: Variant) -> f64 {
        match variant {
            Variant::Corrected => self.baseline_corrected,
            Variant::Uncorrected => self.baseline_uncorrected,
        }
    }
}

/// Runs the full procedure once on `d`, with all randomness derived from
/// `params.seed`. Both variants share every fitted forest.
pub fn run_repetition(d: &Dataset, groups: &[DropGroup], params: &ForestParams) -> Result<RepetitionResult> {
    if groups.is_empty() {
        return Err(Error::InvalidParams("no target groups".into()));
    }
    params.validate(d.p())?;
    for g in groups {
        FeatureSet::without(&g.columns, d.p())?;
        if g.columns.is_empty() {
            return Err(Error::InvalidParams(format!("group `{}` has no columns", g.label)));
        }
    }

    let centered = Arc::new(center(d, params)?);
    let base_params = params.clone().with_seed(seed::derive(params.seed, seed::TAG_BASE_FOREST));
    let base = fit_causal_forest(Arc::clone(&centered), FeatureSet::all(d.p())?, &base_params)?;
    let base_oob: Vec<Option<TauEstimate>> = base.oob_tau_partial();
    let plugin = Arc::new(base_plugin(&base)?);
    drop(base);

    let refit = |columns: &[usize]| -> Result<Vec<Option<ThetaEstimate>>> {
        let cf = fit_corrected_forest_with_plugin(Arc::clone(&centered), columns, Arc::clone(&plugin), params)?;
        Ok(cf.oob_theta_partial())
    };
    let baseline = refit(&[])?;
    let per_group: Vec<Vec<Option<ThetaEstimate>>> =
        groups.iter().map(|g| refit(&g.columns)).collect::<Result<_>>()?;

    let n = d.n();
    let eval: Vec<usize> = (0..n)
        .filter(|&i| base_oob[i].is_some() && baseline[i].is_some() && per_group.iter().all(|g| g[i].is_some()))
        .collect();
    if eval.is_empty() {
        return Err(Error::NoEvaluationRows);
    }
    let mut diagnostics = Diagnostics {
        evaluation_rows: eval.len(),
        excluded_rows: n - eval.len(),
        ..Default::default()
    };
    for &i in &eval {
        let thetas = per_group.iter().map(|g| g[i].unwrap()).chain(std::iter::once(baseline[i].unwrap()));
        diagnostics.tau_fallbacks += base_oob[i].unwrap().fallback as usize;
        for t in thetas {
            diagnostics.tau_fallbacks += t.tau_fallback as usize;
            diagnostics.correction_fallbacks += t.correction_fallback as usize;
        }
    }

    let tau: Vec<f64> = eval.iter().map(|&i| base_oob[i].unwrap().value).collect();
    let mean = tau.iter().sum::<f64>() / tau.len() as f64;
    let spread: f64 = tau.iter().map(|t| (t - mean).powi(2)).sum();
    let tau_variance = spread / tau.len() as f64;
    if tau_variance <= 1e-12 {
        return Err(Error::HomogeneousEffect(tau_variance));
    }

    let ratio = |est: &[Option<ThetaEstimate>], pick: fn(&ThetaEstimate) -> f64| -> f64 {
        eval.iter()
            .zip(&tau)
            .map(|(&i, t)| (t - pick(est[i].as_ref().unwrap())).powi(2))
            .sum::<f64>()
            / spread
    };
    let corrected_of = |e: &ThetaEstimate| e.theta;
    let raw_of = |e: &ThetaEstimate| e.tau_reduced;

    let baseline_corrected = ratio(&baseline, corrected_of);
    let baseline_uncorrected = ratio(&baseline, raw_of);
    let corrected = per_group.iter().map(|g| ratio(g, corrected_of) - baseline_corrected).collect();
    let uncorrected = per_group.iter().map(|g| ratio(g, raw_of) - baseline_uncorrected).collect();

    Ok(RepetitionResult {
        corrected,
        uncorrected,
        baseline_corrected,
        baseline_uncorrected,
        tau_variance,
        diagnostics,
    })
}

/// Importance of a single drop set.
pub fn importance_one(d: &Dataset, drop: &[usize], params: &ForestParams, variant: Variant) -> Result<f64> {
    let group = DropGroup::new("target", drop.to_vec());
    let r = run_repetition(d, std::slice::from_ref(&group), params)?;
    Ok(r.values(variant)[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetImportance {
    pub label: String,
    pub columns: Vec<usize>,
    /// Mean importance over repetitions, baseline already subtracted.
    pub value: f64,
    /// Standard deviation of the mean; absent with a single repetition.
    pub std_dev: Option<f64>,
    /// Per-repetition values.
    pub replicates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub variant: Variant,
    pub repetitions: usize,
    pub targets: Vec<TargetImportance>,
    /// Mean `I(0)` over repetitions.
    pub baseline: f64,
    pub baseline_std_dev: Option<f64>,
    pub diagnostics: Diagnostics,
}

impl ImportanceReport {
    pub fn value_of(&self, label: &str) -> Option<f64> {
        self.targets.iter().find(|t| t.label == label).map(|t| t.value)
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

/// Aggregates repetitions into a report for one variant.
pub fn summarize(results: &[RepetitionResult], groups: &[DropGroup], variant: Variant) -> Result<ImportanceReport> {
    if results.is_empty() {
        return Err(Error::InvalidParams("no repetitions to summarize".into()));
    }
    let targets = groups
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let replicates: Vec<f64> = results.iter().map(|r| r.values(variant)[k]).collect();
            let (value, std_dev) = mean_and_se(&replicates);
            TargetImportance { label: g.label.clone(), columns: g.columns.clone(), value, std_dev, replicates }
        })
        .collect();
    let baselines: Vec<f64> = results.iter().map(|r| r.baseline(variant)).collect();
    let (baseline, baseline_std_dev) = mean_and_se(&baselines);
    let mut diagnostics = Diagnostics::default();
    for r in results {
        diagnostics.add(&r.diagnostics);
    }
    Ok(ImportanceReport {
        variant,
        repetitions: results.len(),
        targets,
        baseline,
        baseline_std_dev,
        diagnostics,
    })
}

/// Seed for repetition `r` under master seed `seed`.
pub fn repetition_seed(seed: u64, r: usize) -> u64 {
    seed::derive(seed::derive(seed, seed::TAG_REPETITION), r as u64)
}

/// Repeats the procedure on the same data, re-randomizing every forest.
pub fn run_repetitions(
    d: &Dataset,
    groups: &[DropGroup],
    params: &ForestParams,
    repetitions: usize,
) -> Result<Vec<RepetitionResult>> {
    if repetitions == 0 {
        return Err(Error::InvalidParams("repetitions must be at least 1".into()));
    }
    (0..repetitions)
        .map(|r| run_repetition(d, groups, &params.clone().with_seed(repetition_seed(params.seed, r))))
        .collect()
}

pub fn importance_all(
    d: &Dataset,
    groups: &[DropGroup],
    params: &ForestParams,
    repetitions: usize,
    variant: Variant,
) -> Result<ImportanceReport> {
    let results = run_repetitions(d, groups, params, repetitions)?;
    summarize(&results, groups, variant)
}
