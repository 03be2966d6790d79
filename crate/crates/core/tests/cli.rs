use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_demcoh"))
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> (i32, Value, Output) {
    let out = bin().args(args).output().expect("binary runs");
    let json = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (out.status.code().unwrap_or(-1), json, out)
}

fn audit(config: &Path, extra: &[&str]) -> (i32, Value, Output) {
    let mut args = vec!["audit", "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn assert_schema_valid(report: &Value) {
    let schema_path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("schema/audit-report.schema.json");
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(schema_path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(report).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "schema violations: {errors:#?}");
}

#[test]
fn constant_learner_passes() {
    let (code, report, _) = audit(&fixture("constant.json"), &[]);
    assert_eq!(code, 0);
    assert_eq!(report["verdict"], "pass");
    assert_eq!(report["estimate"]["estimate"], 0.0);
    assert_schema_valid(&report);
}

#[test]
fn memorizing_fails_with_exit_two() {
    let (code, report, _) = audit(&fixture("memorizing.json"), &[]);
    assert_eq!(code, 2);
    assert_eq!(report["verdict"], "fail");
    assert_eq!(report["estimate"]["estimate"], 1.0);
    assert_schema_valid(&report);
}

#[test]
fn report_without_bounds_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(fixture("memorizing.json")).unwrap()).unwrap();
    cfg.as_object_mut().unwrap().remove("bounds");
    cfg["dataset"] = Value::String(fixture("distinct200.csv").to_string_lossy().into_owned());
    let path = dir.path().join("c.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let (code, report, _) = audit(&path, &["--trials", "1e1"]);
    assert_eq!(code, 0);
    assert_eq!(report["verdict"], "inconclusive");
    assert_eq!(report["bound"], Value::Null);
    assert_eq!(report["config"]["trials"], 10);
    assert_schema_valid(&report);
}

#[test]
fn randomized_response_report_is_schema_valid() {
    let (code, report, _) = audit(&fixture("randomized_response.json"), &["--trials", "20"]);
    assert_eq!(code, 0);
    assert_eq!(report["config"]["gamma_spec"], "from-bounds");
    assert!(report["config"]["gamma"].as_u64().unwrap() >= 80);
    assert_schema_valid(&report);
}

#[test]
fn fixed_seed_gives_identical_bytes() {
    let cfg = fixture("constant.json");
    let (_, _, a) = audit(&cfg, &["--threads", "1"]);
    let (_, _, b) = audit(&cfg, &["--threads", "1"]);
    let (_, _, c) = audit(&cfg, &["--threads", "8"]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    let (_, _, d) = audit(&cfg, &["--seed", "8"]);
    assert_ne!(a.stdout, d.stdout);
}

#[test]
fn out_flag_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let (code, _, out) = audit(&fixture("constant.json"), &["--out", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.stdout.is_empty());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(report["version"], 1);
}

#[test]
fn from_bounds_without_bounds_is_a_config_error() {
    let (code, err, _) = audit(&fixture("constant.json"), &["--gamma", "from-bounds", "--trials", "2"]);
    // constant.json has a bounds section, so this resolves
    assert_eq!(code, 0, "{err}");

    let dir = tempfile::tempdir().unwrap();
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(fixture("constant.json")).unwrap()).unwrap();
    cfg.as_object_mut().unwrap().remove("bounds");
    cfg["gamma"] = Value::String("from-bounds".into());
    cfg["dataset"] = Value::String(fixture("distinct200.csv").to_string_lossy().into_owned());
    let path = dir.path().join("c.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let (code, err, _) = audit(&path, &[]);
    assert_eq!(code, 1);
    assert_eq!(err["error"]["kind"], "config");
}

#[test]
fn csv_errors_surface_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "a,b\n1,2\n3\n").unwrap();
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(fixture("constant.json")).unwrap()).unwrap();
    cfg["dataset"] = Value::String("bad.csv".into());
    cfg["subpopulations"] = Value::Array(vec![]);
    let path = dir.path().join("c.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let (code, err, _) = audit(&path, &[]);
    assert_eq!(code, 1);
    assert_eq!(err["error"]["kind"], "ragged-row");
    assert_eq!(err["error"]["line"], 3);

    std::fs::write(&csv, "a,a\n1,2\n").unwrap();
    assert_eq!(audit(&path, &[]).1["error"]["kind"], "duplicate-header");
    std::fs::write(&csv, "").unwrap();
    assert_eq!(audit(&path, &[]).1["error"]["kind"], "empty-csv");
}

#[test]
fn odd_dataset_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("odd.csv"), "x\n1\n2\n3\n").unwrap();
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(fixture("constant.json")).unwrap()).unwrap();
    cfg["dataset"] = Value::String("odd.csv".into());
    cfg["subpopulations"] = Value::Array(vec![]);
    cfg["gamma"] = 1.into();
    let path = dir.path().join("c.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let (code, err, _) = audit(&path, &[]);
    assert_eq!(code, 1);
    assert_eq!(err["error"]["kind"], "odd-dataset");
}

#[test]
fn bounds_floor_example() {
    let (code, v, _) = run(&["bounds", "--zeta", "0", "--alpha", "1", "--beta", "0.16", "--collection-size", "1"]);
    assert_eq!(code, 0);
    assert_eq!(v["gamma"], 80.0);
    assert_eq!(v["active_term"], "floor");
}

#[test]
fn bounds_approx_above_ceiling_echoes_it() {
    let (code, v, _) = run(&[
        "bounds", "--regime", "approx", "--epsilon", "0.01", "--delta", "1e-15", "--n", "1000", "--alpha", "1",
        "--beta", "0.1",
    ]);
    assert_eq!(code, 1);
    assert_eq!(v["error"]["kind"], "delta-above-ceiling");
    let ceiling = v["error"]["ceiling"].as_f64().unwrap();
    assert!((ceiling - 0.01f64.powi(2) * 0.01 / (120.0f64 * 1000.0).powi(2)).abs() < 1e-30);
}

#[test]
fn bounds_invert_routes_to_max_epsilon() {
    let (code, v, _) = run(&[
        "bounds", "--regime", "pure", "--invert", "--target-gamma", "5e3", "--n", "1e4", "--alpha", "0.5", "--beta",
        "0.1",
    ]);
    assert_eq!(code, 0);
    let p = demcoh::bounds::CoherenceParams::new(0.5, 0.1, 1, 10_000);
    let want = demcoh::bounds::max_epsilon_for(5000.0, &p, demcoh::bounds::DpRegime::Pure).unwrap();
    assert_eq!(v["epsilon"].as_f64().unwrap(), want.epsilon);
    assert_eq!(v["target_gamma"], 5000.0);
}

#[test]
fn bounds_infeasible_target_names_the_blocking_term() {
    let (code, v, _) = run(&[
        "bounds", "--regime", "pure", "--invert", "--target-gamma", "50", "--n", "1000", "--alpha", "1", "--beta", "0.5",
    ]);
    assert_eq!(code, 1);
    assert_eq!(v["error"]["kind"], "infeasible");
    assert_eq!(v["error"]["blocking_term"], "floor 80");
}

#[test]
fn oracle_hypergeom_pmf() {
    let (code, v, _) = run(&["oracle", "hypergeom", "--b", "10", "--a", "5", "--s", "5"]);
    assert_eq!(code, 0);
    let p5 = v["pmf"].as_array().unwrap().iter().find(|e| e["k"] == 5).unwrap()["p"].as_f64().unwrap();
    assert!((p5 - 1.0 / 252.0).abs() < 1e-15);
}

#[test]
fn oracle_maxinfo_identity_is_ln_two() {
    let table = fixture("identity_2x2.json");
    let (code, v, _) = run(&["oracle", "maxinfo-exact", "--table", table.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!((v["max_information"].as_f64().unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn oracle_w1_distance_two() {
    let (code, v, _) = run(&["oracle", "w1", "--p", "-1", "--q", "1"]);
    assert_eq!(code, 0);
    assert_eq!(v["distance"], 2.0);
    assert_eq!(v["transport"], 2.0);
}

#[test]
fn oracle_tail_bounds() {
    let (code, v, _) = run(&["oracle", "mcdiarmid", "--n", "100", "--m", "50", "--sensitivity", "1", "--t", "5"]);
    assert_eq!(code, 0);
    assert!((v["half_split"]["probability"].as_f64().unwrap() - (-1.0f64).exp()).abs() < 1e-12);
    let (code, v, _) = run(&["oracle", "azuma", "--n", "100", "--step", "1", "--t", "2"]);
    assert_eq!(code, 0);
    assert_eq!(v["threshold"], 20.0);
    let (code, v, _) = run(&["oracle", "claim2", "--m", "500", "--alpha", "0.3"]);
    assert_eq!(code, 0);
    assert!(v["bound"]["probability"].as_f64().unwrap() < 0.1);
    let (code, v, _) = run(&["oracle", "claim2", "--m", "20", "--alpha", "0.3", "--mu", "0.1"]);
    assert_eq!(code, 1);
    assert_eq!(v["error"]["kind"], "hypothesis");
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let (code, v, _) = run(&["oracle", "nope"]);
    assert_eq!(code, 1);
    assert_eq!(v["error"]["kind"], "usage");
    let (code, _, _) = run(&["bounds", "--alpha", "x", "--beta", "0.1"]);
    assert_eq!(code, 1);
}
