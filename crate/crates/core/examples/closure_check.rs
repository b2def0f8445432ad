//! Detecting a corrupted final state through the moment closure test.
//!
//! `cargo run --release --example closure_check`

use quench_tomography::ensembles::{instantiate_model, perturb_state, Boundary, EnsembleKind, EnsembleSpec, ModelFamily, ModelSpec};
use quench_tomography::moments::moment_closure_with;
use quench_tomography::quantum::diagonalize_spec;
use quench_tomography::{NumericalPolicy, QuenchPair, Result};

fn main() -> Result<()> {
    let h = instantiate_model(&ModelSpec::new(ModelFamily::RandomLocal, 3, Boundary::Open, 4))?;
    let eig = diagonalize_spec(&h, &NumericalPolicy::default())?;
    let psi = EnsembleSpec::new(EnsembleKind::Haar, 4, 3).sample_state(0)?;
    let pair = QuenchPair::simulate(psi, &eig, 2.3)?;

    let report = moment_closure_with(&eig, &pair)?;
    println!("valid pair:     holds = {}, low = {:.1e}, high = {:.1e}", report.holds, report.low_max, report.high_max);

    for magnitude in [1e-6, 1e-4, 1e-2] {
        let bad = perturb_state(&pair.final_state, magnitude, 4, 0)?;
        let corrupted = QuenchPair::new(pair.initial.clone(), bad, pair.time)?;
        let r = moment_closure_with(&eig, &corrupted)?;
        println!("noise {magnitude:.0e}:    holds = {}, low = {:.1e}, high = {:.1e}", r.holds, r.low_max, r.high_max);
    }
    Ok(())
}
