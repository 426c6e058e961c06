//! Honest causal random forests with local centering, and drop-and-relearn
//! variable importance for heterogeneous treatment effects.
//!
//! The pipeline is: [`center`] the outcome and treatment with regression
//! forests, fit a [`CausalForest`] on the residuals, then refit without each
//! target group and compare out-of-bag estimates ([`importance_all`]). The
//! [`simulation`] and [`oracle`] modules provide synthetic benchmarks with
//! known population importances.

pub mod causal;
pub mod cli;
pub mod corrected;
pub mod data;
pub mod error;
pub mod forest;
pub mod grouping;
pub mod importance;
pub mod oracle;
pub mod params;
pub mod regression;
pub mod seed;
pub mod simulation;
pub mod tree;

pub use causal::{fit_causal_forest, CausalForest, TauEstimate};
pub use corrected::{fit_corrected_forest, CorrectedForest, ThetaEstimate};
pub use data::{load_csv, write_csv, CenteredDataset, Dataset, FeatureSet, Features, Warning};
pub use error::{Error, ErrorKind, Result};
pub use forest::{ForestWeights, HonestForest};
pub use grouping::{correlation_groups, Grouping};
pub use importance::{
    importance_all, importance_one, repetition_seed, run_repetition, run_repetitions, summarize, DropGroup, ImportanceReport, RepetitionResult,
    Variant,
};
pub use oracle::{oracle_bias, oracle_importance, OracleImportance};
pub use params::ForestParams;
pub use regression::{center, centering_params, fit_regression_forest, RegressionForest};
pub use simulation::{generate, CovariateLaw, DgpSpec, Experiment, Simulated};
