use std::path::Path;
use std::process::Command;

use rand::Rng;

use trace_forms_cli::{derive_streams, emit_reports, run_experiment, CliError, ExperimentConfig, Kind, Status};

const SMALL_MC: &str = r#"
[samples]
feller_paths = 200
feller_horizon = 200.0
feller_finite_paths = 20000
supplementary_paths = 20000
levy_paths = 20000
curve_paths = 20000
curve_t = [0.1, 0.05, 0.025]
"#;

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text).unwrap()
}

fn run_to_dir(cfg: &ExperimentConfig, dir: &Path) -> Status {
    let b = run_experiment(cfg).unwrap();
    emit_reports(&b, dir).unwrap();
    b.status
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn chain_verify_c1_passes_with_small_residuals() {
    let b = run_experiment(&config("seed = 1\nkind = \"chain-verify\"\n")).unwrap();
    assert_eq!(b.status, Status::Pass);
    for c in &b.checks {
        assert!(c.value <= 1e-10, "{} = {}", c.name, c.value);
    }
    let u = &b.data["feller_u"];
    assert!((u[0][1].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn sphere_verify_low_degrees_pass() {
    let b = run_experiment(&config("seed = 1\nkind = \"sphere-verify\"\n[sphere]\nmax_degree = 3\n")).unwrap();
    assert_eq!(b.status, Status::Pass);
    // constant plus 3 + 5 + 7 harmonics
    assert_eq!(b.checks.len(), 16);
}

#[test]
fn prototype_passes() {
    let b = run_experiment(&config("seed = 1\nkind = \"prototype\"\n")).unwrap();
    assert_eq!(b.status, Status::Pass);
}

#[test]
fn missing_chain_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 1\n[chain]\nfile = \"nowhere.chain\"\n").unwrap();
    let e = ExperimentConfig::load(&cfg).unwrap_err();
    assert!(matches!(e, CliError::Config(_)));
    assert!(e.to_string().contains("nowhere.chain"), "{e}");
    assert_eq!(e.exit_code(), 3);
}

#[test]
fn chain_mc_report_has_z_scores() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&format!("seed = 5\nkind = \"chain-mc\"\n[chain]\nfixture = \"c2\"\n{SMALL_MC}"));
    let status = run_to_dir(&cfg, dir.path());
    assert_ne!(status, Status::Fail);
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "report.json")).unwrap();
    let est = report["estimators"].as_array().unwrap();
    assert!(!est.is_empty());
    for e in est {
        assert!(e["z_score"].is_f64(), "{e}");
        assert!(e["passed"].as_bool().unwrap(), "{e}");
    }
    assert!(dir.path().join("feller_pairs.csv").is_file());
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let base = format!("seed = 11\nkind = \"chain-mc\"\n[chain]\nfixture = \"c2\"\n{SMALL_MC}");
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let mut one = config(&base);
    one.workers = 1;
    let mut four = one.clone();
    four.workers = 4;
    run_to_dir(&one, dirs[0].path());
    run_to_dir(&one, dirs[1].path());
    run_to_dir(&four, dirs[2].path());
    for name in ["report.json", "summary.txt", "feller_pairs.csv"] {
        let a = read(dirs[0].path(), name);
        assert_eq!(a, read(dirs[1].path(), name), "{name} differs between reruns");
        assert_eq!(a, read(dirs[2].path(), name), "{name} differs between 1 and 4 workers");
    }
}

#[test]
fn empty_histogram_writes_no_csv_and_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&format!("seed = 3\nkind = \"chain-mc\"\n[chain]\ntrace = [1]\n{SMALL_MC}"));
    let status = run_to_dir(&cfg, dir.path());
    assert_eq!(status, Status::Inconclusive);
    assert!(!dir.path().join("feller_pairs.csv").exists());
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "report.json")).unwrap();
    let names: Vec<_> = report["inconclusive"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["name"].as_str().unwrap().to_string())
        .collect();
    assert!(names.contains(&"feller_offdiagonal".to_string()), "{names:?}");
}

#[test]
fn kind_on_command_line_fills_a_config_without_one() {
    let cfg = config("seed = 1\n");
    assert!(run_experiment(&cfg).is_err());
    let mut cfg = cfg;
    cfg.kind = Some(Kind::ChainVerify);
    assert_eq!(run_experiment(&cfg).unwrap().status, Status::Pass);
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trace-forms"))
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "seed = 2\n").unwrap();
    let out = dir.path().join("out");
    let ok = binary()
        .args(["chain-verify", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(out.join("report.json").is_file());
    assert!(out.join("summary.txt").is_file());

    let missing = binary()
        .args(["chain-verify", "--config"])
        .arg(dir.path().join("absent.toml"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("absent.toml"));

    let usage = binary().args(["no-such-kind", "--config", "x"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(3));

    std::fs::write(&cfg, "seed = 2\nkind = \"prototype\"\n").unwrap();
    let mismatch = binary().args(["chain-verify", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(mismatch.status.code(), Some(3));
}

#[test]
fn stream_derivation() {
    let first = |seed: u64, n: usize| -> Vec<u64> {
        derive_streams(seed, n).iter().map(|s| s.rng().random::<u64>()).collect()
    };
    let s = first(42, 4);
    assert_eq!(s.len(), 4);
    for i in 0..4 {
        for j in 0..i {
            assert_ne!(s[i], s[j]);
        }
    }
    assert_eq!(s, first(42, 4));
    assert_eq!(first(42, 1)[0], s[0]);
    assert_ne!(first(43, 1)[0], s[0]);
}
