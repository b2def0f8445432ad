//! Many independent quenches against snapshots of one trajectory.
//!
//! `cargo run --release --example time_slice_baseline`

use quench_tomography::ensembles::{instantiate_model, Boundary, EnsembleKind, EnsembleSpec, ModelFamily, ModelSpec};
use quench_tomography::linear::{build_constraint_matrix, inject_error, reconstruct, sample_pairs, time_slice_baseline, ErrorModel};
use quench_tomography::quantum::diagonalize_spec;
use quench_tomography::{NumericalPolicy, Result};

fn main() -> Result<()> {
    let h = instantiate_model(&ModelSpec::new(ModelFamily::RandomLocal, 6, Boundary::Open, 3))?;
    let eig = diagonalize_spec(&h, &NumericalPolicy::default())?;
    let n = h.basis().len();
    let ensemble = EnsembleSpec::new(EnsembleKind::BlochProduct, 3, 6);
    let noise = ErrorModel::uniform(0.01, 5)?;

    let multi = build_constraint_matrix(h.basis(), &sample_pairs(&eig, &ensemble, 0, 2 * n, 1.0)?)?;
    let single = time_slice_baseline(h.basis(), &eig, &ensemble.sample_state(0)?, 1.0, 2 * n)?;

    for (name, m) in [("independent quenches", multi), ("one trajectory", single)] {
        let r = reconstruct(&inject_error(&m, &noise), h.couplings())?;
        println!("{name:>22}: F = {:.6}, E = {:.3e}, gap = {:.3e}", r.fidelity, r.error, r.gap);
    }
    Ok(())
}
