use std::path::Path;
use std::process::{Command, Output};

use cfvimp::cli::Report;

fn cfvimp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfvimp"))
        .args(args)
        .env_remove("CFVIMP_SEED")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn simulate(dir: &Path, dgp: &str, n: &str) -> String {
    let path = dir.join(format!("{dgp}.csv"));
    let o = cfvimp(&["simulate", "--dgp", dgp, "--n", n, "--seed", "3", "--out", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    path.to_str().unwrap().to_owned()
}

const SMALL: &[&str] = &["--trees", "40", "--reps", "2", "--seed", "9"];

#[test]
fn simulate_writes_a_loadable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = simulate(dir.path(), "experiment3", "120");
    let d = cfvimp::load_csv(&path, "y", "w").unwrap();
    assert_eq!((d.n(), d.p()), (120, 5));
    assert_eq!(d.feature_names(), ["X1", "X2", "X3", "X4", "X5"]);
}

#[test]
fn simulate_without_seed_reports_the_drawn_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.csv");
    let o = cfvimp(&["simulate", "--dgp", "experiment1", "--n", "10", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let line = stderr(&o);
    let seed: u64 = line.trim().strip_prefix("info seed=").expect("seed line").parse().unwrap();
    let again = dir.path().join("b.csv");
    let seed = seed.to_string();
    let o = cfvimp(&["simulate", "--dgp", "experiment1", "--n", "10", "--seed", &seed, "--out", again.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(out).unwrap(), std::fs::read(again).unwrap());
}

#[test]
fn json_report_round_trips_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulate(dir.path(), "experiment1", "300");
    let out = dir.path().join("r.json");
    let mut args = vec!["importance", "--input", &input, "--outcome", "y", "--treatment", "w", "--variant", "both"];
    args.extend(SMALL);
    args.extend(["--out", out.to_str().unwrap()]);
    let o = cfvimp(&args);
    assert!(o.status.success(), "{}", stderr(&o));

    let text = std::fs::read_to_string(&out).unwrap();
    let report: Report = serde_json::from_str(&text).unwrap();
    assert_eq!(report.results.len(), 2);
    assert_eq!(report.config.groups.len(), 8);
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let again: serde_json::Value = serde_json::to_value(&report).unwrap();
    assert_eq!(value, again, "report does not survive a serde round trip");

    let replayed = dir.path().join("r2.json");
    let o = cfvimp(&["importance", "--replay", out.to_str().unwrap(), "--out", replayed.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let second: Report = serde_json::from_str(&std::fs::read_to_string(replayed).unwrap()).unwrap();
    assert_eq!(second.config, report.config);
    assert_eq!(second.results, report.results);
}

#[test]
fn csv_format_has_a_row_per_target_and_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulate(dir.path(), "experiment3", "300");
    let groups = dir.path().join("g.json");
    std::fs::write(&groups, r#"[{"label": "both", "columns": ["X1", "X2"]}]"#).unwrap();
    let mut args = vec![
        "importance", "--input", &input, "--outcome", "y", "--treatment", "w", "--format", "csv",
        "--groups", groups.to_str().unwrap(), "--only-groups",
    ];
    args.extend(SMALL);
    let o = cfvimp(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut r = csv::Reader::from_reader(o.stdout.as_slice());
    assert_eq!(r.headers().unwrap(), vec!["variant", "target", "columns", "value", "std_dev"]);
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    let targets: Vec<&str> = rows.iter().map(|x| &x[1]).collect();
    assert_eq!(targets, ["both", "baseline"]);
    assert_eq!(&rows[0][2], "X1;X2");
    assert!(rows.iter().all(|x| x[3].parse::<f64>().unwrap().is_finite()));
}

#[test]
fn oracle_prints_value_then_json() {
    let o = cfvimp(&["oracle", "--dgp", "experiment3", "--target", "X2", "--n-mc", "2000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let (first, rest) = stdout.split_once('\n').unwrap();
    let v: f64 = first.parse().unwrap();
    assert!(v.abs() < 1e-12, "X2 is outside the heterogeneity set, got {v}");
    let json: serde_json::Value = serde_json::from_str(rest).unwrap();
    assert_eq!(json["columns"], serde_json::json!(["X2"]));
}

fn assert_error(o: &Output, code: i32, kind: &str) {
    assert_eq!(o.status.code(), Some(code), "{}", stderr(&o));
    let err = stderr(o);
    assert!(err.starts_with(&format!("error kind={kind} ")), "{err}");
}

#[test]
fn missing_treatment_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulate(dir.path(), "experiment3", "50");
    assert_error(&cfvimp(&["importance", "--input", &input, "--outcome", "y"]), 2, "config");
}

#[test]
fn unknown_dgp_is_a_config_error() {
    assert_error(&cfvimp(&["importance", "--dgp", "experiment9"]), 2, "config");
    assert_error(&cfvimp(&["oracle", "--dgp", "nope", "--target", "1"]), 2, "config");
}

#[test]
fn zero_rows_is_a_config_error() {
    assert_error(&cfvimp(&["importance", "--dgp", "experiment1", "--n", "0"]), 2, "config");
}

#[test]
fn usage_errors_exit_two() {
    assert_error(&cfvimp(&["importance", "--trees", "many"]), 2, "config");
    assert_error(&cfvimp(&["frobnicate"]), 2, "config");
}

#[test]
fn bad_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "X1,y,w\n1,2,1\n2,oops,0\n").unwrap();
    let o = cfvimp(&["importance", "--input", input.to_str().unwrap(), "--outcome", "y", "--treatment", "w"]);
    assert_error(&o, 3, "data");
}

#[test]
fn help_exits_zero() {
    assert!(cfvimp(&["--help"]).status.success());
    assert!(cfvimp(&["importance", "--help"]).status.success());
}
