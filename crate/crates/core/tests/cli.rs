use std::path::Path;
use std::process::{Command, Output};

use quench_tomography::ensembles::instantiate_model;
use quench_tomography::harness::{load_emitted_config, ExperimentConfig, Protocol};
use quench_tomography::linear::{build_constraint_matrix, sample_pairs};
use quench_tomography::quantum::diagonalize_spec;
use quench_tomography::NumericalPolicy;

fn qtomo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qtomo")).args(args).output().expect("qtomo runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let text = ExperimentConfig::template(Protocol::MultiQuench)
        .replace("realizations = 200", "realizations = 6")
        .replace("sites = 8", "sites = 4")
        .replace("t = [1.0]", "t = [0.5, 2.0]");
    let path = dir.join("small.toml");
    std::fs::write(&path, text).unwrap();
    path
}

/// Drops the timestamp header and the trailing wall-time column.
fn stable_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with("# timestamp:"))
        .map(|l| if l.starts_with('#') { l.to_string() } else { l.rsplit_once(',').unwrap().0.to_string() })
        .collect()
}

#[test]
fn template_is_a_valid_config() {
    for protocol in ["multi-quench", "time-slice-baseline", "single-quench", "robustness", "gap-sweep", "spectrum"] {
        let out = qtomo(&["emit-config-template", "--protocol", protocol]);
        assert_eq!(code(&out), 0);
        ExperimentConfig::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
    }
}

#[test]
fn reruns_are_identical_apart_from_timing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("a.csv");
    let mut runs = Vec::new();
    for workers in ["1", "3"] {
        let r = qtomo(&["run", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap(), "--workers", workers]);
        assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
        runs.push(stable_lines(&out));
    }
    let (la, lb) = (&runs[0], &runs[1]);
    assert_eq!(la.len(), 5);
    assert_eq!(la, lb);
}

#[test]
fn seed_flag_changes_results_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("s.json");
    let r = qtomo(&["run", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap(), "--seed", "99"]);
    assert_eq!(code(&r), 0);
    let loaded = load_emitted_config(&out).unwrap();
    assert_eq!(loaded.master_seed, 99);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn format_flag_overrides_the_extension() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("r.txt");
    let r = qtomo(&["run", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&r), 0);
    assert!(std::fs::read_to_string(&out).unwrap().starts_with('{'));
}

#[test]
fn invalid_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let text = std::fs::read_to_string(&cfg).unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, text.replace("realizations = 6", "realizations = 0\nbogus = 1")).unwrap();
    let r = qtomo(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&r), 1);
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("bogus"), "{err}");
    assert_eq!(code(&qtomo(&["run", "--config", cfg.to_str().unwrap(), "--format", "xml"])), 1);
    assert_eq!(code(&qtomo(&["frobnicate"])), 1);
    assert_eq!(code(&qtomo(&["--help"])), 0);
}

#[test]
fn capacity_errors_exit_with_two_and_name_the_point() {
    let dir = tempfile::tempdir().unwrap();
    let text = ExperimentConfig::template(Protocol::SingleQuench).replace("sites = 4", "sites = 8");
    let cfg = dir.path().join("big.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("big.csv");
    let r = qtomo(&["run", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(code(&r), 2);
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("sweep point 0") && err.contains("capacity"), "{err}");
}

#[test]
fn ingest_reconstructs_from_a_written_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = small_config(dir.path());
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    let h = instantiate_model(&cfg.model).unwrap();
    let eig = diagonalize_spec(&h, &NumericalPolicy::default()).unwrap();
    let pairs = sample_pairs(&eig, &cfg.ensemble, 0, 3 * h.basis().len(), 1.0).unwrap();
    let data = dir.path().join("lab.csv");
    build_constraint_matrix(h.basis(), &pairs).unwrap().write_csv(&data).unwrap();

    let out = dir.path().join("fit.json");
    let r = qtomo(&["ingest", data.to_str().unwrap(), "--config", cfg_path.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let est: Vec<f64> = doc["estimate"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let fid = est.iter().zip(h.couplings()).map(|(a, b)| a * b).sum::<f64>().abs() / h.coupling_norm();
    assert!(fid > 1.0 - 1e-9, "fidelity {fid}");

    let text = std::fs::read_to_string(&data).unwrap();
    let corrupt = dir.path().join("corrupt.csv");
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let last = lines.len() - 1;
    let rest = lines[last].split_once(',').unwrap().1.to_string();
    lines[last] = format!("7.5,{rest}");
    std::fs::write(&corrupt, lines.join("\n")).unwrap();
    let r = qtomo(&["ingest", corrupt.to_str().unwrap(), "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(code(&r), 1, "{}", String::from_utf8_lossy(&r.stderr));
}
