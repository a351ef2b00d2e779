use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tripleiv_core::estimand::triple_wald_did;
use tripleiv_core::inference::with_influence_inference;
use tripleiv_core::panel::{load_panel, write_panel, LoadOptions, Mode};
use tripleiv_core::report::Document;
use tripleiv_core::simulation::{generate, DgpSpec};
use tripleiv_core::staggered::{candidate_targets, ControlPolicy};

const SEED: u64 = 20261014;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tripleiv"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn spec_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("specs").join(format!("{name}.toml"))
}

/// Draws a panel from a bundled spec and writes it with the default columns.
fn simulated_csv(dir: &Path, name: &str, n: usize) -> (PathBuf, Mode) {
    let spec = DgpSpec::from_toml_str(&fs::read_to_string(spec_path(name)).unwrap()).unwrap();
    let (ds, _) = generate(&spec, n, SEED).unwrap();
    let path = dir.join(format!("{name}.csv"));
    write_panel(&ds, fs::File::create(&path).unwrap(), &LoadOptions::new(spec.mode)).unwrap();
    (path, spec.mode)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const NON_MONOTONE: &str = "\
unit,time,y,d,z,a,cohort
u1,1,0,0,0,1,2
u1,2,1,1,1,1,2
u1,3,1,1,0,1,2
u2,1,0,0,0,0,2
u2,2,0,0,0,0,2
u2,3,0,0,0,0,2
u3,1,0,0,0,1,inf
u3,2,0,0,0,1,inf
u3,3,0,0,0,1,inf
";

#[test]
fn validate_conforming_panel_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, _) = simulated_csv(dir.path(), "staggered", 200);
    let out = dir.path().join("v");
    let o = run(&["validate", s(&csv), "--mode", "staggered", "--col-z", "z", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o), "");
    assert_eq!(fs::read_to_string(out.join("validation.txt")).unwrap(), "");
    assert!(out.join("manifest.json").exists());
}

#[test]
fn validate_reports_switch_off_with_unit_and_period() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(&csv, NON_MONOTONE).unwrap();
    let o = run(&["validate", s(&csv), "--mode", "staggered", "--col-z", "z"]);
    assert_eq!(code(&o), 1);
    assert_eq!(stdout(&o), "NonMonotoneInstrument unit=u1 t=3\n");
}

#[test]
fn estimate_refuses_invalid_design() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(&csv, NON_MONOTONE).unwrap();
    let o = run(&["estimate", s(&csv), "--mode", "staggered", "--col-z", "z"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("NonMonotoneInstrument unit=u1 t=3"));
}

#[test]
fn io_and_usage_errors_exit_two() {
    assert_eq!(code(&run(&["validate", "/definitely/not/here.csv"])), 2);
    assert_eq!(code(&run(&["estimate", "x.csv", "--no-such-flag"])), 2);
    assert_eq!(code(&run(&["estimate", "x.csv", "--engine", "magic"])), 2);
    assert_eq!(code(&run(&["simulate", "--spec", "/definitely/not/here.toml", "--out", "/tmp/x"])), 2);

    let dir = tempfile::tempdir().unwrap();
    let (csv, _) = simulated_csv(dir.path(), "two_period", 200);
    // bootstrap-only flags without the bootstrap, and a staggered-only flag
    assert_eq!(code(&run(&["estimate", s(&csv), "--boot-reps", "200"])), 2);
    assert_eq!(code(&run(&["estimate", s(&csv), "--control", "last"])), 2);
    assert_eq!(code(&run(&["estimate", s(&csv), "--variance", "bootstrap", "--boot-reps", "10"])), 2);
    assert_eq!(code(&run(&["estimate", s(&csv), "--ci-level", "1.5"])), 2);
}

#[test]
fn two_period_report_matches_library_and_engines_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, mode) = simulated_csv(dir.path(), "two_period", 1500);
    let out = dir.path().join("e");
    let o = run(&["estimate", s(&csv), "--engine", "both", "--out", s(&out), "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let doc = Document::parse(&fs::read_to_string(out.join("report.txt")).unwrap()).unwrap();
    let ds = load_panel(fs::File::open(&csv).unwrap(), &LoadOptions::new(mode)).unwrap();
    let lib = with_influence_inference(&ds, triple_wald_did(&ds).unwrap(), 0.95).unwrap();
    assert_eq!(doc.get_f64("estimate").unwrap().to_bits(), lib.estimate.to_bits());
    assert_eq!(doc.get_f64("se").unwrap().to_bits(), lib.se().unwrap().to_bits());
    assert!(doc.get_f64("engine_gap").unwrap() <= 1e-10);
    assert_eq!(doc.get("engines_agree"), Some("true"));

    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["result"]["estimate"]["estimate"].as_f64().unwrap(), lib.estimate);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["engine"], "both");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn json_goes_to_stdout_without_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, _) = simulated_csv(dir.path(), "two_period", 400);
    let o = run(&["estimate", s(&csv), "--json", "--engine", "iv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(json["mode"], "two-period");
    assert!(json["result"]["iv"]["beta_iv"].is_number());
}

#[test]
fn staggered_prints_one_block_per_target() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, mode) = simulated_csv(dir.path(), "staggered", 1200);
    let ds = load_panel(fs::File::open(&csv).unwrap(), &LoadOptions::new(mode)).unwrap();
    for (flag, policy) in [("never", ControlPolicy::NeverExposed), ("last", ControlPolicy::LastExposed)] {
        let o = run(&["estimate", s(&csv), "--mode", "staggered", "--control", flag, "--engine", "both"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let text = stdout(&o);
        let targets = candidate_targets(&ds, policy).unwrap();
        assert!(!targets.is_empty());
        for t in &targets {
            assert_eq!(text.matches(&format!("[{t}]\n")).count(), 1, "{t}");
            assert!(text.contains(&format!("\n{t} est=")), "{t}");
        }
        assert_eq!(text.matches("engines_agree = true").count(), targets.len());
    }
}

#[test]
fn last_exposed_control_needs_two_finite_cohorts() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("one.csv");
    fs::write(&csv, NON_MONOTONE.replace("u1,3,1,1,0,1,2", "u1,3,1,1,1,1,2")).unwrap();
    assert_eq!(code(&run(&["validate", s(&csv), "--mode", "staggered", "--col-z", "z"])), 0);
    let o = run(&["estimate", s(&csv), "--mode", "staggered", "--control", "last"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("no control cohort"), "{}", stderr(&o));
}

#[test]
fn custom_columns_and_tab_delimiter() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, _) = simulated_csv(dir.path(), "two_period", 300);
    let renamed: String = fs::read_to_string(&csv)
        .unwrap()
        .lines()
        .enumerate()
        .map(|(i, l)| if i == 0 { "id\tperiod\toutcome\ttreat\tinst\tgroup\tcoh\n".to_string() } else { l.replace(',', "\t") + "\n" })
        .collect();
    let tsv = dir.path().join("p.tsv");
    fs::write(&tsv, renamed).unwrap();
    let base = run(&["estimate", s(&csv)]);
    let cols = [
        "--delimiter", "tab", "--col-unit", "id", "--col-time", "period", "--col-y", "outcome", "--col-d", "treat",
        "--col-z", "inst", "--col-a", "group", "--col-cohort", "coh",
    ];
    let mut args = vec!["estimate", s(&tsv)];
    args.extend(cols);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o), stdout(&base));
}

#[test]
fn bootstrap_is_reproducible_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, _) = simulated_csv(dir.path(), "two_period", 500);
    let args = ["estimate", s(&csv), "--variance", "bootstrap", "--boot-reps", "200", "--seed", "3"];
    let a = run(&args);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&run(&args)));
    assert!(stdout(&a).contains("variance_estimator = bootstrap"));
}

#[test]
fn compare_shows_plain_and_triple() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, _) = simulated_csv(dir.path(), "trend_bias", 800);
    let o = run(&["compare", s(&csv)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("target"));
    let row: Vec<&str> = text.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(row[0], "two_period");
    let (triple, plain): (f64, f64) = (row[1].parse().unwrap(), row[3].parse().unwrap());
    assert!((triple - plain).abs() > 0.3, "trend bias should separate them: {triple} vs {plain}");
}

#[test]
fn simulate_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_path("staggered");
    let go = |name: &str| {
        let out = dir.path().join(name);
        let o = run(&["simulate", "--spec", s(&spec), "--n", "300", "--reps", "20", "--seed", "11", "--out", s(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    };
    let (a, b) = (go("a"), go("b"));
    for f in ["dataset.csv", "oracle.txt", "monte_carlo.txt", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["effective_seed"], 11);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);

    // the written dataset is the one the library draws for the seed
    let text = fs::read_to_string(&spec).unwrap();
    let (ds, _) = generate(&DgpSpec::from_toml_str(&text).unwrap(), 300, 11).unwrap();
    let mut expected = Vec::new();
    write_panel(&ds, &mut expected, &LoadOptions::new(Mode::Staggered)).unwrap();
    assert_eq!(fs::read(a.join("dataset.csv")).unwrap(), expected);
}

#[test]
fn simulate_rejects_single_replication_and_bad_specs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("one");
    let o = run(&["simulate", "--spec", s(&spec_path("two_period")), "--reps", "1", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(!out.join("dataset.csv").exists());

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "version = 1\nmode = \"two_period\"\ncohorts = []\n").unwrap();
    let o = run(&["simulate", "--spec", s(&bad), "--out", s(&dir.path().join("bad"))]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}
