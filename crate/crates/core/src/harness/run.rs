use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Protocol, SweepPoint};
use crate::ensembles::{extra_local_terms, instantiate_model, EnsembleSpec};
use crate::error::{Error, Result};
use crate::linear::{
    build_constraint_matrix, error_bound_report, inject_error, reconstruct, robustness_experiment, sample_pairs,
    score, time_slice_baseline, AnsatzSplit, ConstraintMatrix, ErrorModel,
};
use crate::moments::{build_moment_tensors, solve_system, SolverOptions};
use crate::policy::NumericalPolicy;
use crate::quantum::{diagonalize_spec, HamiltonianSpec, QuenchPair};
use crate::rng::{mix, realization_seed, stream_rng, Stream};
use crate::spectral::{covariance_from_rows, spectrum_summary, GapReport, Histogram};

/// Outcome of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub fidelity: f64,
    pub error: f64,
    pub gap: f64,
    pub aux: f64,
    pub eigenvalues: Vec<f64>,
}

/// Statistics of one sweep point over its realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub point: SweepPoint,
    pub realizations: usize,
    pub f_mean: f64,
    pub f_std: f64,
    pub e_mean: f64,
    pub e_std: f64,
    pub gap_mean: f64,
    pub aux_mean: f64,
    pub wall_time_s: f64,
}

/// Independent seeds of one realization, all derived from its coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RealizationSeeds {
    pub couplings: u64,
    pub ensemble: u64,
    pub error: u64,
    pub solver: u64,
    pub extra: u64,
}

impl RealizationSeeds {
    pub fn derive(cfg: &ExperimentConfig, point: usize, realization: usize) -> Self {
        let base = realization_seed(cfg.master_seed, point as u64, realization as u64);
        Self {
            couplings: mix(&[base, cfg.model.coupling_seed, Stream::Couplings as u64]),
            ensemble: mix(&[base, cfg.ensemble.seed, Stream::InitialState as u64]),
            error: mix(&[base, Stream::MeasurementError as u64]),
            solver: mix(&[base, Stream::SolverStarts as u64]),
            extra: mix(&[base, Stream::ExtraTerms as u64]),
        }
    }
}

/// Options that affect scheduling only, never results.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Thread count for the realization pool; `None` uses the global pool.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    /// Eigenvalue histogram over all realizations, for the spectrum protocol.
    pub histogram: Option<Histogram>,
}

/// Runs every sweep point, calling `on_row` as soon as each one finishes.
pub fn run_with(
    cfg: &ExperimentConfig,
    opts: RunOptions,
    policy: &NumericalPolicy,
    mut on_row: impl FnMut(&ResultRow) -> Result<()>,
) -> Result<RunOutput> {
    cfg.validate()?;
    let points = cfg.sweep_points()?;
    let pool = match opts.workers {
        Some(0) => return Err(Error::Validation("workers must be at least 1".into())),
        Some(w) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Validation(format!("cannot start {w} workers: {e}")))?,
        ),
        None => None,
    };
    let mut rows = Vec::with_capacity(points.len());
    let mut eigenvalues = Vec::new();
    for point in &points {
        let started = Instant::now();
        let work = || -> Result<Vec<Trial>> {
            (0..cfg.realizations)
                .into_par_iter()
                .map(|r| run_trial(cfg, point, RealizationSeeds::derive(cfg, point.index, r), policy))
                .collect()
        };
        let trials = match &pool {
            Some(p) => p.install(work),
            None => work(),
        }
        .map_err(|e| Error::SweepPoint {
            index: point.index,
            label: point.label(),
            source: Box::new(e),
        })?;
        let row = aggregate(*point, &trials, started.elapsed().as_secs_f64());
        on_row(&row)?;
        rows.push(row);
        eigenvalues.extend(trials.into_iter().flat_map(|t| t.eigenvalues));
    }
    let histogram = if cfg.protocol == Protocol::Spectrum {
        let (lo, hi) = cfg.options.histogram_range;
        Some(Histogram::new(&eigenvalues, cfg.options.histogram_bins, lo, hi)?)
    } else {
        None
    };
    Ok(RunOutput { rows, histogram })
}

pub fn run(cfg: &ExperimentConfig, opts: RunOptions, policy: &NumericalPolicy) -> Result<RunOutput> {
    run_with(cfg, opts, policy, |_| Ok(()))
}

/// Mean and sample standard deviation, summed in index order.
fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    let std = if n > 1.0 {
        (v.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

fn aggregate(point: SweepPoint, trials: &[Trial], wall_time_s: f64) -> ResultRow {
    let (f_mean, f_std) = mean_std(trials.iter().map(|t| t.fidelity));
    let (e_mean, e_std) = mean_std(trials.iter().map(|t| t.error));
    let (gap_mean, _) = mean_std(trials.iter().map(|t| t.gap));
    let (aux_mean, _) = mean_std(trials.iter().map(|t| t.aux));
    ResultRow {
        point,
        realizations: trials.len(),
        f_mean,
        f_std,
        e_mean,
        e_std,
        gap_mean,
        aux_mean,
        wall_time_s,
    }
}

fn noisy(m: ConstraintMatrix, epsilon: f64, seed: u64) -> Result<ConstraintMatrix> {
    if epsilon == 0.0 {
        return Ok(m);
    }
    Ok(inject_error(&m, &ErrorModel::uniform(epsilon, seed)?))
}

/// One realization of the configured protocol at one sweep point.
pub fn run_trial(
    cfg: &ExperimentConfig,
    point: &SweepPoint,
    seeds: RealizationSeeds,
    policy: &NumericalPolicy,
) -> Result<Trial> {
    let model = cfg.model.with_seed(seeds.couplings);
    let h = instantiate_model(&model)?;
    let ensemble = EnsembleSpec {
        seed: seeds.ensemble,
        ..cfg.ensemble
    };
    let basis = h.basis();
    let truth = h.couplings();
    match cfg.protocol {
        Protocol::MultiQuench | Protocol::GapSweep => {
            let eig = diagonalize_spec(&h, policy)?;
            let pairs = sample_pairs(&eig, &ensemble, 0, point.p, point.t)?;
            let m = noisy(build_constraint_matrix(basis, &pairs)?, point.epsilon, seeds.error)?;
            let r = reconstruct(&m, truth)?;
            let aux = if cfg.protocol == Protocol::GapSweep {
                r.singular_values.last().copied().unwrap_or(0.0) / (point.p as f64).sqrt()
            } else {
                error_bound_report(r.error, r.gap, point.epsilon, basis.len(), point.p)
                    .bound
                    .unwrap_or(f64::INFINITY)
            };
            Ok(Trial {
                fidelity: r.fidelity,
                error: r.error,
                gap: r.gap,
                aux,
                eigenvalues: Vec::new(),
            })
        }
        Protocol::TimeSliceBaseline => {
            let eig = diagonalize_spec(&h, policy)?;
            let initial = ensemble.sample_state(0)?;
            let m = time_slice_baseline(basis, &eig, &initial, point.t, point.p)?;
            let m = noisy(m, point.epsilon, seeds.error)?;
            let r = reconstruct(&m, truth)?;
            let aux = error_bound_report(r.error, r.gap, point.epsilon, basis.len(), point.p)
                .bound
                .unwrap_or(f64::INFINITY);
            Ok(Trial {
                fidelity: r.fidelity,
                error: r.error,
                gap: r.gap,
                aux,
                eigenvalues: Vec::new(),
            })
        }
        Protocol::SingleQuench => single_quench_trial(cfg, point, &h, &ensemble, seeds, policy),
        Protocol::Robustness => {
            let o = &cfg.options;
            let count = o.extra_terms.unwrap_or(cfg.model.sites);
            let extra_basis = extra_local_terms(cfg.model.sites, count, o.extra_body, seeds.extra, basis)?;
            let mut rng = stream_rng(seeds.extra, Stream::Perturbation, 0);
            let extra_c: Vec<f64> = (0..extra_basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let split = AnsatzSplit::new(basis.clone(), truth.to_vec(), extra_basis, extra_c)?
                .with_relative_strength(o.relative_strength);
            let full = split.full_hamiltonian()?;
            let eig = diagonalize_spec(&full, policy)?;
            let pairs = sample_pairs(&eig, &ensemble, 0, point.p, point.t)?;
            let em = if point.epsilon > 0.0 {
                Some(ErrorModel::uniform(point.epsilon, seeds.error)?)
            } else {
                None
            };
            let rec = robustness_experiment(&split, &pairs, em.as_ref())?;
            Ok(Trial {
                fidelity: (1.0 - rec.error * rec.error).max(0.0).sqrt(),
                error: rec.error,
                gap: rec.gap,
                aux: if rec.bound_holds { 1.0 } else { 0.0 },
                eigenvalues: Vec::new(),
            })
        }
        Protocol::Spectrum => {
            let eig = diagonalize_spec(&h, policy)?;
            let pairs = sample_pairs(&eig, &ensemble, 0, point.p, point.t)?;
            let m = noisy(build_constraint_matrix(basis, &pairs)?, point.epsilon, seeds.error)?;
            let cov = covariance_from_rows(m.entries())?;
            let report = GapReport::new(cov.matrix, None, basis.max_size())?;
            let sc = score(&report.zero_mode()?, truth)?;
            let summary = spectrum_summary(&report.eigenvalues, cfg.options.outlier_cut, &[], 0.0);
            Ok(Trial {
                fidelity: sc.fidelity,
                error: sc.error,
                gap: report.gap,
                aux: summary.below_cut as f64,
                eigenvalues: report.eigenvalues,
            })
        }
    }
}

fn single_quench_trial(
    cfg: &ExperimentConfig,
    point: &SweepPoint,
    h: &HamiltonianSpec,
    ensemble: &EnsembleSpec,
    seeds: RealizationSeeds,
    policy: &NumericalPolicy,
) -> Result<Trial> {
    let basis = h.basis();
    let eig = diagonalize_spec(h, policy)?;
    let pair = QuenchPair::simulate(ensemble.sample_state(0)?, &eig, point.t)?;
    let orders = cfg
        .options
        .orders
        .clone()
        .unwrap_or_else(|| (1..=basis.len()).collect());
    let tensors = build_moment_tensors(&orders, basis, &pair, policy)?;
    let opts = SolverOptions {
        starts: cfg.options.solver_starts,
        seed: seeds.solver,
        ..SolverOptions::default()
    };
    let outcome = solve_system(&tensors, &opts, Some(h.couplings()))?;
    let (fidelity, error) = match outcome.clusters.first() {
        Some(c) => {
            let sc = score(&c.representative, h.couplings())?;
            (sc.fidelity, sc.error)
        }
        None => (0.0, 1.0),
    };
    Ok(Trial {
        fidelity,
        error,
        gap: f64::NAN,
        aux: outcome.clusters.len() as f64,
        eigenvalues: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(protocol: Protocol, edit: impl Fn(String) -> String) -> ExperimentConfig {
        let text = ExperimentConfig::template(protocol);
        ExperimentConfig::parse(&edit(text)).unwrap()
    }

    fn small(text: String) -> String {
        text.replace("sites = 8", "sites = 4")
            .replace("sites = 6", "sites = 4")
            .replace("realizations = 200", "realizations = 6")
            .replace("realizations = 50", "realizations = 6")
            .replace("realizations = 20", "realizations = 6")
    }

    #[test]
    fn noiseless_multi_quench_is_exact() {
        let cfg = config(Protocol::MultiQuench, |t| small(t).replace("epsilon = [0.1]", "epsilon = [0.0]"));
        let out = run(&cfg, RunOptions::default(), &NumericalPolicy::default()).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert!(out.rows[0].e_mean < 1e-7, "{:?}", out.rows[0]);
        assert!(out.histogram.is_none());
    }

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let cfg = config(Protocol::MultiQuench, small);
        let policy = NumericalPolicy::default();
        let one = run(&cfg, RunOptions { workers: Some(1) }, &policy).unwrap();
        let many = run(&cfg, RunOptions { workers: Some(4) }, &policy).unwrap();
        for (a, b) in one.rows.iter().zip(&many.rows) {
            assert_eq!(a.point, b.point);
            assert!((a.f_mean - b.f_mean).abs() < 1e-12);
            assert!((a.e_std - b.e_std).abs() < 1e-12);
            assert!((a.gap_mean - b.gap_mean).abs() < 1e-12);
        }
    }

    #[test]
    fn seeds_are_pure_functions_of_coordinates() {
        let cfg = config(Protocol::MultiQuench, small);
        assert_eq!(RealizationSeeds::derive(&cfg, 2, 3), RealizationSeeds::derive(&cfg, 2, 3));
        assert_ne!(RealizationSeeds::derive(&cfg, 2, 3), RealizationSeeds::derive(&cfg, 3, 2));
    }

    #[test]
    fn every_protocol_runs_at_small_size() {
        let policy = NumericalPolicy::default();
        for p in Protocol::ALL {
            let cfg = config(p, |t| {
                small(t)
                    .replace("p = [15000]", "p = [200]")
                    .replace("p = [1, 2, 4, 8]", "p = [1, 4]")
                    .replace("p = [2, 4, 8]", "p = [2]")
                    .replace("realizations = 5", "realizations = 2")
                    .replace("solver_starts = 500", "solver_starts = 40")
                    .replace("sites = 4", "sites = 3")
            });
            let out = run(&cfg, RunOptions::default(), &policy).unwrap_or_else(|e| panic!("{p:?}: {e}"));
            for row in &out.rows {
                assert!((0.0..=1.0).contains(&row.f_mean), "{p:?} {row:?}");
                assert!((0.0..=1.0).contains(&row.e_mean), "{p:?} {row:?}");
                assert!(row.f_std >= 0.0 && row.e_std >= 0.0);
            }
            assert_eq!(out.histogram.is_some(), p == Protocol::Spectrum);
        }
    }

    #[test]
    fn capacity_errors_name_the_sweep_point() {
        let cfg = config(Protocol::MultiQuench, small);
        let policy = NumericalPolicy {
            memory_budget_bytes: 16,
            ..NumericalPolicy::default()
        };
        let err = run(&cfg, RunOptions::default(), &policy).unwrap_err();
        match err {
            Error::SweepPoint { index, source, .. } => {
                assert_eq!(index, 0);
                assert!(matches!(*source, Error::Capacity { .. }));
            }
            other => panic!("unexpected {other}"),
        }
    }
}
