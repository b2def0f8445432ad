use quench_tomography::ensembles::{instantiate_model, Boundary, EnsembleKind, EnsembleSpec, ModelFamily, ModelSpec};
use quench_tomography::linear::{build_constraint_matrix, sample_pairs, singular_gap};
use quench_tomography::quantum::{diagonalize_spec, EigenSystem, HamiltonianSpec, HeisenbergFrame};
use quench_tomography::spectral::{
    covariance_estimate, eth_late_time_matrix, expand_basis, fluctuation_check, haar_reference,
    late_time_average, product_weight, structural_decomposition, symmetric_eigen, ensemble_variances, GapReport,
};
use quench_tomography::NumericalPolicy;

fn system(sites: usize, seed: u64) -> (HamiltonianSpec, EigenSystem) {
    let h = instantiate_model(&ModelSpec::new(ModelFamily::RandomLocal, sites, Boundary::Open, seed)).unwrap();
    let eig = diagonalize_spec(&h, &NumericalPolicy::default()).unwrap();
    (h, eig)
}

fn bloch(seed: u64, sites: usize) -> EnsembleSpec {
    EnsembleSpec::new(EnsembleKind::BlochProduct, seed, sites)
}

#[test]
fn late_time_correlation_approaches_the_eth_projector() {
    let (h, eig) = system(8, 1);
    let avg = late_time_average(h.basis(), &eig, &NumericalPolicy::default()).unwrap();
    let c0 = eth_late_time_matrix(h.couplings()).unwrap();
    let worst = (&avg.mean - &c0).iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!(worst < 3.0 / 8.0, "max deviation {worst}");
    let fl = fluctuation_check(&avg, eig.dim());
    assert!(fl.holds, "temporal variance {} above {}", fl.max_variance, fl.bound);
}

#[test]
fn correlation_decays_towards_the_projector() {
    let (h, eig) = system(8, 2);
    let frame = HeisenbergFrame::new(h.basis(), &eig, &NumericalPolicy::default()).unwrap();
    let c0 = eth_late_time_matrix(h.couplings()).unwrap();
    let dist: Vec<f64> = (0..=20)
        .map(|t| (&frame.correlation(t as f64) - &c0).iter().map(|v| v.abs()).fold(0.0, f64::max))
        .collect();
    let mut floor = f64::INFINITY;
    for (t, d) in dist.iter().enumerate() {
        assert!(*d <= floor + 0.1, "distance rose to {d} at t = {t}: {dist:?}");
        floor = floor.min(*d);
    }
    assert!(dist[20] < dist[0]);
}

#[test]
fn measured_gap_respects_the_correlation_bound() {
    let (h, eig) = system(8, 3);
    let p = NumericalPolicy::default();
    let cov = covariance_estimate(h.basis(), &eig, 10.0, &bloch(3, 8), 15_000).unwrap();
    let c = HeisenbergFrame::new(h.basis(), &eig, &p).unwrap().correlation(10.0);
    let report = GapReport::new(cov.matrix, Some(&c), 2).unwrap();
    let bound = report.lower_bound.unwrap();
    assert!(report.gap >= bound - 0.05, "gap {} vs bound {bound}", report.gap);
    assert!(bound <= report.eth_gap_floor + 1e-12);
}

#[test]
fn gap_grows_with_the_number_of_quenches() {
    for seed in 0..4 {
        let (h, eig) = system(6, seed);
        let n = h.basis().len();
        let gap = |p: usize| {
            let pairs = sample_pairs(&eig, &bloch(seed, 6), 0, p, 10.0).unwrap();
            singular_gap(&build_constraint_matrix(h.basis(), &pairs).unwrap()).unwrap()
        };
        let (small, large) = (gap(n), gap(4 * n));
        assert!(large >= small, "seed {seed}: gap {small} at p = n, {large} at p = 4n");
    }
}

#[test]
fn covariance_zero_mode_is_the_coupling_direction() {
    for (sites, seed) in [(5, 0), (6, 1)] {
        let (h, eig) = system(sites, seed);
        let cov = covariance_estimate(h.basis(), &eig, 10.0, &bloch(seed, sites), 10_000).unwrap();
        let mode = GapReport::new(cov.matrix, None, 2).unwrap().zero_mode().unwrap();
        let fid = mode.iter().zip(h.couplings()).map(|(a, b)| a * b).sum::<f64>().abs() / h.coupling_norm();
        assert!(fid > 0.999, "L = {sites}: fidelity {fid}");
    }
}

#[test]
fn independent_batches_agree_within_sampling_error() {
    let (h, eig) = system(4, 5);
    let a = covariance_estimate(h.basis(), &eig, 3.0, &bloch(11, 4), 4_000).unwrap();
    let b = covariance_estimate(h.basis(), &eig, 3.0, &bloch(12, 4), 16_000).unwrap();
    let z: Vec<f64> = a
        .matrix
        .iter()
        .zip(b.matrix.iter())
        .zip(a.standard_errors.iter().zip(b.standard_errors.iter()))
        .map(|((x, y), (sx, sy))| (x - y).abs() / (sx * sx + sy * sy).sqrt().max(1e-15))
        .collect();
    let within = z.iter().filter(|v| **v <= 3.0).count() as f64 / z.len() as f64;
    let worst = z.iter().cloned().fold(0.0, f64::max);
    assert!(within >= 0.99 && worst < 5.0, "{within} within 3 sigma, max {worst}");
}

#[test]
fn structural_decomposition_matches_a_large_sample() {
    let (h, eig) = system(5, 7);
    let p = NumericalPolicy::default();
    let exps = expand_basis(h.basis(), &eig, 2.0, &p).unwrap();
    let d = structural_decomposition(&exps, h.basis(), product_weight).unwrap();
    for m in [&d.a, &d.a_tilde] {
        let (vals, _) = symmetric_eigen(m).unwrap();
        assert!(vals[0] > -1e-10);
    }
    let cov = covariance_estimate(h.basis(), &eig, 2.0, &bloch(7, 5), 100_000).unwrap();
    let exact = d.covariance();
    for ((x, y), se) in exact.iter().zip(cov.matrix.iter()).zip(cov.standard_errors.iter()) {
        assert!((x - y).abs() < 5.0 * se.max(1e-12), "{x} vs {y} (se {se})");
    }
}

#[test]
fn haar_states_stay_below_the_dimension_bound() {
    let (h, eig) = system(4, 0);
    let r = haar_reference(h.basis(), &eig, 10.0, 4_000, 0).unwrap();
    assert!(r.within_bound(3.0));
    let zero = haar_reference(h.basis(), &eig, 0.0, 50, 0).unwrap();
    assert!(zero.variances.iter().all(|v| v.abs() < 1e-20));
}

#[test]
fn product_states_beat_haar_states_by_an_order_of_magnitude() {
    let (h, eig) = system(8, 4);
    let (product, _) = ensemble_variances(h.basis(), &eig, 10.0, &bloch(4, 8), 2_000).unwrap();
    let haar = haar_reference(h.basis(), &eig, 10.0, 2_000, 4).unwrap();
    let better = product.iter().zip(&haar.variances).filter(|(b, r)| **b >= 10.0 * **r).count();
    assert!(2 * better >= product.len(), "{better} of {} operators", product.len());
}
