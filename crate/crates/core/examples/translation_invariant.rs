//! Short-time linearised moment equations for a translation-invariant chain.
//!
//! `cargo run --release --example translation_invariant`

use quench_tomography::ensembles::{instantiate_model, translated_sum_basis, Boundary, EnsembleKind, EnsembleSpec, ModelFamily, ModelSpec};
use quench_tomography::moments::{linearized_tensor, solve_system, SolverOptions};
use quench_tomography::{NumericalPolicy, Result, StateVector};

fn main() -> Result<()> {
    let policy = NumericalPolicy::default();
    let spec = ModelSpec::new(ModelFamily::TfimYy, 6, Boundary::Periodic, 1);
    let groups = translated_sum_basis(&spec)?;
    let h = instantiate_model(&spec)?;
    println!("true couplings {:?}", groups.couplings);

    let site = EnsembleSpec::new(EnsembleKind::BlochProduct, 1, 1).sample_state(0)?;
    let spinor = [site.amplitudes()[0], site.amplitudes()[1]];
    let state = StateVector::product(&vec![spinor; 6])?;
    for orders in [vec![1, 2], vec![1, 2, 3]] {
        let tensors = orders
            .iter()
            .map(|&m| linearized_tensor(m, &groups.groups, &h, &state, 1.0, &policy))
            .collect::<Result<Vec<_>>>()?;
        let out = solve_system(&tensors, &SolverOptions { seed: 1, ..SolverOptions::default() }, Some(&groups.couplings))?;
        println!("orders {orders:?}: {} cluster(s)", out.clusters.len());
        for c in &out.clusters {
            println!("   {:?} truth: {:?}", c.representative.iter().map(|v| format!("{v:+.4}")).collect::<Vec<_>>(), c.matches_truth);
        }
    }
    Ok(())
}
