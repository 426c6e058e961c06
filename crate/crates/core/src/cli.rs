//! Command-line front end: `simulate`, `importance` and `oracle`.
//!
//! Failures print one line `error kind=<kind> code=<code> message="<text>"`
//! on stderr and exit with 2 (configuration), 3 (data) or 4 (estimation).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{load_csv, write_csv, Dataset};
use crate::error::{Error, ErrorKind, Result};
use crate::importance::{repetition_seed, run_repetition, summarize, DropGroup, ImportanceReport, Variant};
use crate::oracle::{oracle_bias, oracle_importance};
use crate::params::ForestParams;
use crate::seed;
use crate::simulation::{generate, Experiment};

#[derive(Debug, Parser)]
#[command(name = "cfvimp", version, about = "Causal forest variable importance")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset and write it as CSV.
    Simulate(SimulateArgs),
    /// Estimate variable importance from a CSV file or a synthetic process.
    Importance(ImportanceArgs),
    /// Monte-Carlo ground truth for a synthetic process.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// experiment1, experiment2 or experiment3.
    #[arg(long, env = "CFVIMP_DGP")]
    pub dgp: String,
    #[arg(long, env = "CFVIMP_N")]
    pub n: usize,
    /// Drawn from entropy and printed on stderr when absent.
    #[arg(long, env = "CFVIMP_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "CFVIMP_OUT")]
    pub out: PathBuf,
    #[arg(long, env = "CFVIMP_OUTCOME", default_value = "y")]
    pub outcome: String,
    #[arg(long, env = "CFVIMP_TREATMENT", default_value = "w")]
    pub treatment: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum VariantChoice {
    Corrected,
    Uncorrected,
    Both,
}

impl VariantChoice {
    pub fn variants(self) -> Vec<Variant> {
        match self {
            VariantChoice::Corrected => vec![Variant::Corrected],
            VariantChoice::Uncorrected => vec![Variant::Uncorrected],
            VariantChoice::Both => vec![Variant::Corrected, Variant::Uncorrected],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    /// CSV file with a header row.
    #[arg(long, env = "CFVIMP_INPUT", conflicts_with = "dgp")]
    pub input: Option<PathBuf>,
    #[arg(long, env = "CFVIMP_OUTCOME")]
    pub outcome: Option<String>,
    #[arg(long, env = "CFVIMP_TREATMENT")]
    pub treatment: Option<String>,
    /// Synthetic process to draw a fresh dataset from in every repetition.
    #[arg(long, env = "CFVIMP_DGP")]
    pub dgp: Option<String>,
    /// Rows per synthetic dataset.
    #[arg(long, env = "CFVIMP_N", default_value_t = 3000)]
    pub n: usize,
    /// JSON array of `{"label": ..., "columns": [names]}`.
    #[arg(long, env = "CFVIMP_GROUPS")]
    pub groups: Option<PathBuf>,
    /// Only report the groups from `--groups`, not the remaining columns.
    #[arg(long, env = "CFVIMP_ONLY_GROUPS")]
    pub only_groups: bool,
    #[arg(long, env = "CFVIMP_TREES", default_value_t = 2000)]
    pub trees: usize,
    #[arg(long, env = "CFVIMP_SUBSAMPLE_FRACTION", default_value_t = 0.5)]
    pub subsample_fraction: f64,
    #[arg(long, env = "CFVIMP_HONESTY_FRACTION", default_value_t = 0.5)]
    pub honesty_fraction: f64,
    #[arg(long, env = "CFVIMP_MIN_NODE_SIZE", default_value_t = 5)]
    pub min_node_size: usize,
    #[arg(long, env = "CFVIMP_MIN_CHILD_FRACTION", default_value_t = 0.05)]
    pub min_child_fraction: f64,
    #[arg(long, env = "CFVIMP_MTRY")]
    pub mtry: Option<usize>,
    #[arg(long, env = "CFVIMP_MAX_LEAF_SIZE", default_value_t = 20)]
    pub max_leaf_size: usize,
    /// Bound K on the magnitude of every effect estimate.
    #[arg(long, env = "CFVIMP_TRUNCATION", default_value_t = 1e6)]
    pub truncation: f64,
    #[arg(long, env = "CFVIMP_REPS", default_value_t = 10)]
    pub reps: usize,
    #[arg(long, env = "CFVIMP_VARIANT", value_enum, default_value = "corrected")]
    pub variant: VariantChoice,
    /// Drawn from entropy and recorded in the report when absent.
    #[arg(long, env = "CFVIMP_SEED")]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "CFVIMP_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, env = "CFVIMP_FORMAT", value_enum, default_value = "json")]
    pub format: OutputFormat,
    /// Report destination; stdout when absent.
    #[arg(long, env = "CFVIMP_OUT")]
    pub out: Option<PathBuf>,
    /// Rerun the configuration recorded in an earlier JSON report.
    #[arg(long, env = "CFVIMP_REPLAY")]
    pub replay: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, env = "CFVIMP_DGP")]
    pub dgp: String,
    /// Column name (`X2`) or 1-based index (`2`); repeat to drop a group.
    #[arg(long = "target", env = "CFVIMP_TARGET", required = true, value_delimiter = ',')]
    pub targets: Vec<String>,
    /// Report the asymptotic bias of the uncorrected estimator instead.
    #[arg(long, env = "CFVIMP_BIAS")]
    pub bias: bool,
    /// Outer Monte-Carlo draws.
    #[arg(long, env = "CFVIMP_N_MC", default_value_t = 1_000_000)]
    pub n_mc: usize,
    #[arg(long, env = "CFVIMP_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "CFVIMP_THREADS")]
    pub threads: Option<usize>,
    /// Also write the JSON result here.
    #[arg(long, env = "CFVIMP_OUT")]
    pub out: Option<PathBuf>,
}

/// Where the data of an importance run comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Csv { path: PathBuf, outcome: String, treatment: String },
    /// A fresh dataset per repetition.
    Dgp { experiment: Experiment, n: usize },
}

/// A drop group named by columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub label: String,
    pub columns: Vec<String>,
}

/// Fully resolved settings of an importance run, embedded in its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub source: DataSource,
    pub params: ForestParams,
    pub repetitions: usize,
    pub variant: VariantChoice,
    /// Targets in report order.
    pub groups: Vec<GroupSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: RunConfig,
    pub timing_ms: u64,
    /// One entry per requested variant.
    pub results: Vec<ImportanceReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOutput {
    pub dgp: Experiment,
    pub columns: Vec<String>,
    pub n_mc: usize,
    pub seed: u64,
    /// Importance, or bias with `--bias`.
    pub value: f64,
    pub squared_form: Option<f64>,
    pub variance_form: Option<f64>,
    pub tau_variance: Option<f64>,
}

fn experiment(name: &str) -> Result<Experiment> {
    Experiment::from_name(name).ok_or_else(|| {
        Error::InvalidParams(format!(
            "unknown dgp `{name}` (expected experiment1, experiment2 or experiment3)"
        ))
    })
}

fn install_threads(threads: Option<usize>) -> Result<()> {
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::InvalidParams("threads must be at least 1".into()));
        }
        // A pool may already exist when called twice in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(())
}

/// Targets: the file's groups in file order, then each unlisted column alone.
pub fn resolve_groups(file: Option<Vec<GroupSpec>>, names: &[String], only_groups: bool) -> Result<Vec<GroupSpec>> {
    let listed = file.unwrap_or_default();
    if only_groups && listed.is_empty() {
        return Err(Error::InvalidParams("--only-groups needs a non-empty --groups file".into()));
    }
    let mut covered = vec![false; names.len()];
    for g in &listed {
        if g.columns.is_empty() {
            return Err(Error::InvalidParams(format!("group `{}` has no columns", g.label)));
        }
        for c in &g.columns {
            let j = names
                .iter()
                .position(|n| n == c)
                .ok_or_else(|| Error::UnknownGroupColumn(c.clone()))?;
            covered[j] = true;
        }
    }
    let mut groups = listed;
    if !only_groups {
        groups.extend(
            names
                .iter()
                .zip(&covered)
                .filter(|(_, &c)| !c)
                .map(|(n, _)| GroupSpec { label: n.clone(), columns: vec![n.clone()] }),
        );
    }
    Ok(groups)
}

fn to_drop_groups(groups: &[GroupSpec], d: &Dataset) -> Result<Vec<DropGroup>> {
    groups
        .iter()
        .map(|g| {
            let columns = g
                .columns
                .iter()
                .map(|c| d.feature_index(c).ok_or_else(|| Error::UnknownGroupColumn(c.clone())))
                .collect::<Result<Vec<_>>>()?;
            Ok(DropGroup::new(g.label.clone(), columns))
        })
        .collect()
}

fn warn_on(d: &Dataset) -> Result<()> {
    for w in d.validate()? {
        eprintln!("warning {w:?}");
    }
    Ok(())
}

/// Seed of the synthetic dataset used in repetition `r`.
pub fn dataset_seed(seed: u64, r: usize) -> u64 {
    seed::derive(seed::derive(seed, seed::TAG_DATASET), r as u64)
}

/// Runs every repetition of `cfg` and aggregates per variant. Timing is
/// left at zero for the caller to fill in.
pub fn run_importance(cfg: &RunConfig) -> Result<Report> {
    if cfg.repetitions == 0 {
        return Err(Error::InvalidParams("reps must be at least 1".into()));
    }
    if cfg.groups.is_empty() {
        return Err(Error::InvalidParams("no target groups".into()));
    }
    let fixed = match &cfg.source {
        DataSource::Csv { path, outcome, treatment } => {
            let d = load_csv(path, outcome, treatment)?;
            warn_on(&d)?;
            Some(d)
        }
        DataSource::Dgp { .. } => None,
    };
    let mut results = Vec::with_capacity(cfg.repetitions);
    let mut drop_groups = Vec::new();
    for r in 0..cfg.repetitions {
        let drawn;
        let d = match (&fixed, &cfg.source) {
            (Some(d), _) => d,
            (None, DataSource::Dgp { experiment, n }) => {
                drawn = generate(*experiment, *n, dataset_seed(cfg.params.seed, r))?.dataset;
                &drawn
            }
            (None, DataSource::Csv { .. }) => unreachable!("csv data is loaded up front"),
        };
        drop_groups = to_drop_groups(&cfg.groups, d)?;
        let params = cfg.params.clone().with_seed(repetition_seed(cfg.params.seed, r));
        results.push(run_repetition(d, &drop_groups, &params)?);
    }
    let reports = cfg
        .variant
        .variants()
        .into_iter()
        .map(|v| summarize(&results, &drop_groups, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(Report { config: cfg.clone(), timing_ms: 0, results: reports })
}

fn build_config(a: &ImportanceArgs) -> Result<RunConfig> {
    let source = match (&a.input, &a.dgp) {
        (Some(path), None) => {
            let outcome = a.outcome.clone().ok_or_else(|| Error::InvalidParams("--outcome is required with --input".into()))?;
            let treatment =
                a.treatment.clone().ok_or_else(|| Error::InvalidParams("--treatment is required with --input".into()))?;
            DataSource::Csv { path: path.clone(), outcome, treatment }
        }
        (None, Some(name)) => {
            if a.n == 0 {
                return Err(Error::InvalidParams("n must be at least 1".into()));
            }
            DataSource::Dgp { experiment: experiment(name)?, n: a.n }
        }
        (None, None) => return Err(Error::InvalidParams("one of --input or --dgp is required".into())),
        (Some(_), Some(_)) => return Err(Error::InvalidParams("--input and --dgp are exclusive".into())),
    };
    if let DataSource::Csv { path, .. } = &source {
        if !path.exists() {
            return Err(Error::InvalidParams(format!("input file {} does not exist", path.display())));
        }
    }
    let names = match &source {
        DataSource::Csv { path, outcome, treatment } => load_csv(path, outcome, treatment)?.feature_names().to_vec(),
        DataSource::Dgp { experiment, .. } => experiment.spec().feature_names(),
    };
    let file_groups = match &a.groups {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::InvalidParams(format!("cannot read groups file {}: {e}", p.display())))?;
            Some(serde_json::from_str::<Vec<GroupSpec>>(&text)?)
        }
        None => None,
    };
    let groups = resolve_groups(file_groups, &names, a.only_groups)?;
    let params = ForestParams {
        num_trees: a.trees,
        subsample_fraction: a.subsample_fraction,
        honesty_fraction: a.honesty_fraction,
        min_node_size: a.min_node_size,
        min_child_fraction: a.min_child_fraction,
        mtry: a.mtry,
        max_leaf_size: a.max_leaf_size,
        truncation_bound: a.truncation,
        seed: a.seed.unwrap_or_else(rand::random),
    };
    params.validate(names.len())?;
    if a.reps == 0 {
        return Err(Error::InvalidParams("reps must be at least 1".into()));
    }
    Ok(RunConfig { source, params, repetitions: a.reps, variant: a.variant, groups })
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

/// Flat table: one row per variant and target plus one baseline row per variant.
pub fn report_csv(report: &Report) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["variant", "target", "columns", "value", "std_dev"])?;
    let fmt_sd = |s: Option<f64>| s.map(|v| v.to_string()).unwrap_or_default();
    for r in &report.results {
        for (t, g) in r.targets.iter().zip(&report.config.groups) {
            w.write_record([
                r.variant.name(),
                &t.label,
                &g.columns.join(";"),
                &t.value.to_string(),
                &fmt_sd(t.std_dev),
            ])?;
        }
        w.write_record([r.variant.name(), "baseline", "", &r.baseline.to_string(), &fmt_sd(r.baseline_std_dev)])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn cmd_importance(a: &ImportanceArgs) -> Result<()> {
    install_threads(a.threads)?;
    let cfg = match &a.replay {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::InvalidParams(format!("cannot read report {}: {e}", p.display())))?;
            serde_json::from_str::<Report>(&text)?.config
        }
        None => build_config(a)?,
    };
    let start = Instant::now();
    let mut report = run_importance(&cfg)?;
    report.timing_ms = start.elapsed().as_millis() as u64;
    let bytes = match a.format {
        OutputFormat::Json => {
            let mut b = serde_json::to_vec_pretty(&report)?;
            b.push(b'\n');
            b
        }
        OutputFormat::Csv => report_csv(&report)?,
    };
    write_output(a.out.as_deref(), &bytes)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let exp = experiment(&a.dgp)?;
    let seed = a.seed.unwrap_or_else(|| {
        let s = rand::random();
        eprintln!("info seed={s}");
        s
    });
    let sim = generate(exp, a.n, seed)?;
    write_csv(&sim.dataset, &a.out, &a.outcome, &a.treatment)
}

fn parse_target(t: &str, names: &[String]) -> Result<usize> {
    if let Some(j) = names.iter().position(|n| n == t) {
        return Ok(j);
    }
    match t.parse::<usize>() {
        Ok(j) if (1..=names.len()).contains(&j) => Ok(j - 1),
        _ => Err(Error::UnknownGroupColumn(t.to_string())),
    }
}

pub fn run_oracle(a: &OracleArgs) -> Result<OracleOutput> {
    let exp = experiment(&a.dgp)?;
    let spec = exp.spec();
    let names = spec.feature_names();
    let mut drop = a.targets.iter().map(|t| parse_target(t, &names)).collect::<Result<Vec<_>>>()?;
    drop.sort_unstable();
    drop.dedup();
    let columns = drop.iter().map(|&j| names[j].clone()).collect();
    let tau = |x: &[f64]| spec.effect(x);
    let mut out = OracleOutput {
        dgp: exp,
        columns,
        n_mc: a.n_mc,
        seed: a.seed,
        value: 0.0,
        squared_form: None,
        variance_form: None,
        tau_variance: None,
    };
    if a.bias {
        out.value = oracle_bias(tau, |x: &[f64]| spec.propensity(x), &spec, &drop, a.n_mc, a.seed)?;
    } else {
        let r = oracle_importance(tau, &spec, &drop, a.n_mc, a.seed)?;
        out.value = r.value();
        out.squared_form = Some(r.squared_form);
        out.variance_form = Some(r.variance_form);
        out.tau_variance = Some(r.tau_variance);
    }
    Ok(out)
}

fn cmd_oracle(a: &OracleArgs) -> Result<()> {
    install_threads(a.threads)?;
    let out = run_oracle(a)?;
    let json = serde_json::to_string(&out)?;
    println!("{}", out.value);
    match &a.out {
        Some(p) => std::fs::write(p, json + "\n")?,
        None => println!("{json}"),
    }
    Ok(())
}

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Estimation => 4,
    }
}

fn kind_name(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Config => "config",
        ErrorKind::Data => "data",
        ErrorKind::Estimation => "estimation",
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error kind=config code=Usage message={first:?}");
            return 2;
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Importance(a) => cmd_importance(a),
        Command::Oracle(a) => cmd_oracle(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let kind = e.kind();
            eprintln!("error kind={} code={} message={:?}", kind_name(kind), e.code(), e.to_string());
            exit_code(kind)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: usize) -> Vec<String> {
        (1..=p).map(|j| format!("X{j}")).collect()
    }

    #[test]
    fn unlisted_columns_become_singletons() {
        let file = vec![GroupSpec { label: "pair".into(), columns: vec!["X3".into(), "X4".into()] }];
        let g = resolve_groups(Some(file.clone()), &names(5), false).unwrap();
        let labels: Vec<_> = g.iter().map(|g| g.label.as_str()).collect();
        assert_eq!(labels, ["pair", "X1", "X2", "X5"]);
        assert_eq!(resolve_groups(Some(file), &names(5), true).unwrap().len(), 1);
    }

    #[test]
    fn unknown_group_column_is_a_config_error() {
        let file = vec![GroupSpec { label: "g".into(), columns: vec!["nope".into()] }];
        let e = resolve_groups(Some(file), &names(3), false).unwrap_err();
        assert_eq!(exit_code(e.kind()), 2);
    }

    #[test]
    fn targets_by_name_or_index() {
        let n = names(8);
        assert_eq!(parse_target("X2", &n).unwrap(), 1);
        assert_eq!(parse_target("2", &n).unwrap(), 1);
        assert!(parse_target("0", &n).is_err());
        assert!(parse_target("9", &n).is_err());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["cfvimp", "simulate", "--dgp", "experiment9", "--n", "5", "--out", "/dev/null"]), 2);
        assert_eq!(run(["cfvimp", "frobnicate"]), 2);
        assert_eq!(run(["cfvimp", "--help"]), 0);
    }
}
