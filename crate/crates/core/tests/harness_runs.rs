use quench_tomography::harness::{run, ExperimentConfig, Protocol, RunOptions};
use quench_tomography::NumericalPolicy;

fn config(protocol: Protocol, edits: &[(&str, &str)]) -> ExperimentConfig {
    let mut text = ExperimentConfig::template(protocol);
    for (from, to) in edits {
        assert!(text.contains(from), "template lacks {from:?}");
        text = text.replacen(from, to, 1);
    }
    ExperimentConfig::parse(&text).unwrap()
}

#[test]
fn gap_sweep_increases_with_p() {
    let cfg = config(Protocol::GapSweep, &[("realizations = 20", "realizations = 5")]);
    let out = run(&cfg, RunOptions::default(), &NumericalPolicy::default()).unwrap();
    let gaps: Vec<f64> = out.rows.iter().map(|r| r.gap_mean).collect();
    assert_eq!(gaps.len(), 4);
    assert!(gaps.windows(2).all(|w| w[1] > w[0]), "{gaps:?}");
}

#[test]
fn noiseless_error_sweep_is_flat_at_zero() {
    let cfg = config(
        Protocol::MultiQuench,
        &[
            ("realizations = 200", "realizations = 10"),
            ("sites = 8", "sites = 6"),
            ("sites = 8", "sites = 6"),
            ("p = [2]", "p = [1, 2, 4]"),
            ("epsilon = [0.1]", "epsilon = [0.0]"),
        ],
    );
    let out = run(&cfg, RunOptions::default(), &NumericalPolicy::default()).unwrap();
    for r in &out.rows {
        assert!(r.e_mean < 1e-7, "{}: E = {}", r.point.label(), r.e_mean);
    }
}

#[test]
fn fidelity_rises_from_the_random_guess_level() {
    let cfg = config(
        Protocol::MultiQuench,
        &[
            ("realizations = 200", "realizations = 40"),
            ("sites = 8", "sites = 6"),
            ("sites = 8", "sites = 6"),
            ("t = [1.0]", "t = [0.0, 0.05, 1.0, 4.0]"),
        ],
    );
    let out = run(&cfg, RunOptions::default(), &NumericalPolicy::default()).unwrap();
    let f: Vec<f64> = out.rows.iter().map(|r| r.f_mean).collect();
    assert!(f[0] < 0.4 && f[1] < 0.4, "{f:?}");
    assert!(f[2] > 0.9 && f[3] > 0.9, "{f:?}");
    for r in &out.rows {
        assert!((0.0..=1.0).contains(&r.f_mean) && (0.0..=1.0).contains(&r.e_mean));
        assert!(r.f_std >= 0.0 && r.e_std >= 0.0);
    }
}
