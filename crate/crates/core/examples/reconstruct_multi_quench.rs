//! Multi-quench reconstruction of a random 2-local chain with measurement noise.
//!
//! `cargo run --release --example reconstruct_multi_quench`

use quench_tomography::ensembles::{instantiate_model, Boundary, EnsembleKind, EnsembleSpec, ModelFamily, ModelSpec};
use quench_tomography::linear::{build_constraint_matrix, error_bound_report, inject_error, reconstruct, sample_pairs, ErrorModel};
use quench_tomography::quantum::diagonalize_spec;
use quench_tomography::{NumericalPolicy, Result};

fn main() -> Result<()> {
    let policy = NumericalPolicy::default();
    let h = instantiate_model(&ModelSpec::new(ModelFamily::RandomLocal, 6, Boundary::Open, 7))?;
    let n = h.basis().len();
    println!("random 2-local chain, L = 6, n = {n} operators");

    let eig = diagonalize_spec(&h, &policy)?;
    let ensemble = EnsembleSpec::new(EnsembleKind::BlochProduct, 7, 6);
    let pairs = sample_pairs(&eig, &ensemble, 0, 2 * n, 1.0)?;
    let clean = build_constraint_matrix(h.basis(), &pairs)?;

    println!("{:>8} {:>10} {:>10} {:>10}", "epsilon", "F", "E", "E bound");
    for eps in [0.0, 1e-3, 1e-2, 0.1] {
        let m = inject_error(&clean, &ErrorModel::uniform(eps, 1)?);
        let r = reconstruct(&m, h.couplings())?;
        let bound = error_bound_report(r.error, r.gap, eps, n, pairs.len()).bound;
        let bound = bound.map_or("n/a".to_string(), |b| format!("{b:.2e}"));
        println!("{eps:>8} {:>10.6} {:>10.2e} {bound:>10}", r.fidelity, r.error);
    }
    Ok(())
}
