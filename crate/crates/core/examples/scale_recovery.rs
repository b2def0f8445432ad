//! Recovering the overall energy scale once the coupling direction is known.
//!
//! `cargo run --release --example scale_recovery`

use quench_tomography::ensembles::{instantiate_model, Boundary, EnsembleKind, EnsembleSpec, ModelFamily, ModelSpec};
use quench_tomography::moments::{recover_scale, ScaleOptions};
use quench_tomography::quantum::diagonalize_spec;
use quench_tomography::{HamiltonianSpec, NumericalPolicy, QuenchPair, Result};

fn main() -> Result<()> {
    let policy = NumericalPolicy::default();
    let base = instantiate_model(&ModelSpec::new(ModelFamily::RandomLocal, 4, Boundary::Open, 9))?;
    let direction: Vec<f64> = base.couplings().iter().map(|c| c / base.coupling_norm()).collect();

    for s_true in [0.6, 1.7, 3.2, 4.9] {
        let h = HamiltonianSpec::new(base.basis().clone(), direction.iter().map(|d| d * s_true).collect())?;
        let eig = diagonalize_spec(&h, &policy)?;
        let psi = EnsembleSpec::new(EnsembleKind::BlochProduct, 9, 4).sample_state(0)?;
        let pair = QuenchPair::simulate(psi, &eig, 0.7)?;
        let rec = recover_scale(&direction, h.basis(), &pair, &ScaleOptions::default(), &policy)?;
        println!(
            "true scale {s_true:.3}, recovered {:.9} (phase residual {:.1e}, {} candidates)",
            rec.scale, rec.phase_residual, rec.candidates_tried
        );
    }
    Ok(())
}
