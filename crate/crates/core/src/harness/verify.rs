//! Fast property checks at small sizes, run by `qtomo verify`.

use rand::Rng;
use serde::Serialize;

use super::config::{ExperimentConfig, Protocol};
use super::run::{run, RunOptions};
use crate::ensembles::{instantiate_model, perturb_state, Boundary, EnsembleKind, EnsembleSpec, ModelFamily, ModelSpec};
use crate::error::Result;
use crate::linear::{build_constraint_matrix, reconstruct, sample_pairs};
use crate::moments::{moment_closure_with, recover_scale, ScaleOptions};
use crate::pauli::{PauliString, Phase};
use crate::policy::NumericalPolicy;
use crate::quantum::{diagonalize_spec, moment_expectation, HamiltonianSpec, QuenchPair};
use crate::rng::{stream_rng, Stream};
use crate::spectral::{
    covariance_estimate, ensemble_law_check, expand_basis, haar_reference, product_weight, symmetric_eigen,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn(&NumericalPolicy, u64) -> Result<(bool, String)>;

const CHECKS: [(&str, Check); 10] = [
    ("pauli_algebra", pauli_algebra),
    ("zero_noise_exactness", zero_noise_exactness),
    ("moment_conservation", moment_conservation),
    ("closure_detection", closure_detection),
    ("scale_recovery", scale_recovery),
    ("ensemble_law", ensemble_law),
    ("haar_bound", haar_bound),
    ("covariance_zero_mode", covariance_zero_mode),
    ("expansion_normalization", expansion_normalization),
    ("worker_determinism", worker_determinism),
];

/// Runs every check; an error inside a check counts as a failure.
pub fn verify_suite(policy: &NumericalPolicy, seed: u64) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|(name, check)| match check(policy, seed) {
            Ok((passed, detail)) => CheckResult { name, passed, detail },
            Err(e) => CheckResult {
                name,
                passed: false,
                detail: format!("error: {e}"),
            },
        })
        .collect()
}

fn random_local(sites: usize, seed: u64) -> Result<HamiltonianSpec> {
    instantiate_model(&ModelSpec::new(ModelFamily::RandomLocal, sites, Boundary::Open, seed))
}

fn pauli_algebra(policy: &NumericalPolicy, seed: u64) -> Result<(bool, String)> {
    let mut rng = stream_rng(seed, Stream::Realization, 0);
    let sites = 3;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let mut draw = || PauliString::from_masks(sites, rng.random_range(0..8), rng.random_range(0..8), Phase::default());
        let (a, b) = (draw(), draw());
        let ab = a.multiply(&b)?.to_matrix(policy)?;
        let direct = a.to_matrix(policy)?.dot(&b.to_matrix(policy)?);
        worst = worst.max((&ab - &direct).iter().map(|v| v.norm()).fold(0.0, f64::max));
    }
    Ok((worst < 1e-12, format!("max product mismatch {worst:.2e}")))
}

fn zero_noise_exactness(policy: &NumericalPolicy, seed: u64) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for r in 0..5 {
        let h = random_local(4, seed + r)?;
        let eig = diagonalize_spec(&h, policy)?;
        let ens = EnsembleSpec::new(EnsembleKind::BlochProduct, seed + r, 4);
        let pairs = sample_pairs(&eig, &ens, 0, 2 * h.basis().len(), 1.0)?;
        let m = build_constraint_matrix(h.basis(), &pairs)?;
        worst = worst.max(reconstruct(&m, h.couplings())?.error);
    }
    Ok((worst < 1e-7, format!("largest E {worst:.2e} over 5 realizations")))
}

fn moment_conservation(policy: &NumericalPolicy, seed: u64) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for r in 0..5 {
        let h = random_local(4, seed + r)?;
        let mat = h.assemble(policy)?;
        let eig = diagonalize_spec(&h, policy)?;
        let psi = EnsembleSpec::new(EnsembleKind::Haar, seed + r, 4).sample_state(0)?;
        let pair = QuenchPair::simulate(psi, &eig, 1.7)?;
        for m in 1..=6 {
            let a = moment_expectation(&pair.initial, &mat, m)?;
            let b = moment_expectation(&pair.final_state, &mat, m)?;
            worst = worst.max((a - b).abs() / (1.0 + a.abs()));
        }
    }
    Ok((worst < 1e-8, format!("largest relative moment drift {worst:.2e}")))
}

fn closure_detection(policy: &NumericalPolicy, seed: u64) -> Result<(bool, String)> {
    let h = random_local(3, seed)?;
    let eig = diagonalize_spec(&h, policy)?;
    let ens = EnsembleSpec::new(EnsembleKind::BlochProduct, seed, 3);
    let (mut valid, mut detected) = (0, 0);
    let trials = 20;
    for k in 0..trials {
        let pair = QuenchPair::simulate(ens.sample_state(k)?, &eig, 1.1)?;
        valid += moment_closure_with(&eig, &pair)?.holds as usize;
        let bad = perturb_state(&pair.final_state, 1e-2, seed, k)?;
        let corrupted = QuenchPair::new(pair.initial.clone(), bad, pair.time)?;
        detected += !moment_closure_with(&eig, &corrupted)?.holds as usize;
    }
    let ok = valid == trials as usize && detected * 10 > 9 * trials as usize;
    Ok((ok, format!("{valid}/{trials} valid pairs accepted, {detected}/{trials} corruptions detected")))
}

fn scale_recovery(policy: &NumericalPolicy, seed: u64) -> Result<(bool, String)> {
    let mut rng = stream_rng(seed, Stream::Realization, 1);
    let mut ok = 0;
    let total = 5;
    for r in 0..total {
        let base = random_local(3, seed + r)?;
        let dir: Vec<f64> = base.couplings().iter().map(|c| c / base.coupling_norm()).collect();
        let s_true = rng.random_range(0.5..4.0);
        let spec = HamiltonianSpec::new(base.basis().clone(), dir.iter().map(|d| d * s_true).collect())?;
        let eig = diagonalize_spec(&spec, policy)?;
        let psi = EnsembleSpec::new(EnsembleKind::BlochProduct, seed + r, 3).sample_state(0)?;
        let pair = QuenchPair::simulate(psi, &eig, 0.7)?;
        if let Ok(rec) = recover_scale(&dir, spec.basis(), &pair, &ScaleOptions::default(), policy) {
            ok += ((rec.scale - s_true).abs() < 1e-6 * s_true) as usize;
        }
    }
    Ok((ok == total as usize, format!("{ok}/{total} scales recovered")))
}

fn ensemble_law(_policy: &NumericalPolicy, seed: u64) -> Result<(bool, String)> {
    let ens = EnsembleSpec::new(EnsembleKind::BlochProduct, seed, 2);
    let r = ensemble_law_check(&ens, 20_000, product_weight)?;
    Ok((
        r.within_3sigma >= 0.99 && r.max_z < 5.0,
        format!(
            "{:.1}% of {} moments within 3 sigma, largest deviation {:.2} sigma",
            100.0 * r.within_3sigma,
            r.entries,
            r.max_z
        ),
    ))
}

fn haar_bound(policy: &NumericalPolicy, seed: u64) -> Result<(bool, String)> {
    let h = random_local(4, seed)?;
    let eig = diagonalize_spec(&h, policy)?;
    let r = haar_reference(h.basis(), &eig, 10.0, 2000, seed)?;
    let worst = r.variances.iter().cloned().fold(0.0, f64::max);
    Ok((r.within_bound(3.0), format!("largest variance {worst:.4} vs bound {:.4}", r.bound)))
}

fn covariance_zero_mode(policy: &NumericalPolicy, seed: u64) -> Result<(bool, String)> {
    let h = random_local(4, seed)?;
    let eig = diagonalize_spec(&h, policy)?;
    let ens = EnsembleSpec::new(EnsembleKind::BlochProduct, seed, 4);
    let cov = covariance_estimate(h.basis(), &eig, 10.0, &ens, 4000)?;
    let (vals, vecs) = symmetric_eigen(&cov.matrix)?;
    let mode = vecs.column(0);
    let c = h.couplings();
    let fid = mode.iter().zip(c).map(|(a, b)| a * b).sum::<f64>().abs() / h.coupling_norm();
    Ok((
        vals[0] > -1e-10 && fid > 0.999,
        format!("min eigenvalue {:.2e}, zero-mode fidelity {fid:.6}", vals[0]),
    ))
}

fn expansion_normalization(policy: &NumericalPolicy, seed: u64) -> Result<(bool, String)> {
    let h = random_local(3, seed)?;
    let eig = diagonalize_spec(&h, policy)?;
    let exps = expand_basis(h.basis(), &eig, 2.0, policy)?;
    let mut worst: f64 = 0.0;
    for (a, ea) in exps.iter().enumerate() {
        for (b, eb) in exps.iter().enumerate() {
            worst = worst.max((ea.dot(eb) - if a == b { 1.0 } else { 0.0 }).abs());
        }
    }
    Ok((worst < 1e-8, format!("largest Gram deviation {worst:.2e}")))
}

fn worker_determinism(policy: &NumericalPolicy, seed: u64) -> Result<(bool, String)> {
    let text = ExperimentConfig::template(Protocol::MultiQuench)
        .replace("sites = 8", "sites = 3")
        .replace("realizations = 200", "realizations = 4")
        .replace("master_seed = 1", &format!("master_seed = {seed}"));
    let cfg = ExperimentConfig::parse(&text)?;
    let one = run(&cfg, RunOptions { workers: Some(1) }, policy)?;
    let many = run(&cfg, RunOptions { workers: Some(3) }, policy)?;
    let worst = one
        .rows
        .iter()
        .zip(&many.rows)
        .map(|(a, b)| (a.e_mean - b.e_mean).abs().max((a.f_std - b.f_std).abs()))
        .fold(0.0, f64::max);
    Ok((worst <= 1e-12, format!("largest difference between 1 and 3 workers {worst:.2e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let results = verify_suite(&NumericalPolicy::default(), 1);
        assert_eq!(results.len(), CHECKS.len());
        for r in &results {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
