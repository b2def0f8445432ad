//! Reconstruction when the ansatz omits some weak terms of the true Hamiltonian.
//!
//! `cargo run --release --example robustness`

use quench_tomography::ensembles::{extra_local_terms, instantiate_model, Boundary, EnsembleKind, EnsembleSpec, ModelFamily, ModelSpec};
use quench_tomography::linear::{robustness_experiment, sample_pairs, AnsatzSplit};
use quench_tomography::quantum::diagonalize_spec;
use quench_tomography::{NumericalPolicy, Result};

fn main() -> Result<()> {
    let h = instantiate_model(&ModelSpec::new(ModelFamily::RandomLocal, 6, Boundary::Open, 5))?;
    let extra = extra_local_terms(6, 6, 3, 5, h.basis())?;
    println!("omitted terms: {}", extra.names().join(", "));
    let weights = vec![1.0; extra.len()];
    let split = AnsatzSplit::new(h.basis().clone(), h.couplings().to_vec(), extra, weights)?;

    println!("{:>9} {:>10} {:>10} {:>8}", "strength", "E", "bound", "holds");
    for ratio in [0.01, 0.05, 0.2] {
        let split = split.clone().with_relative_strength(ratio);
        let eig = diagonalize_spec(&split.full_hamiltonian()?, &NumericalPolicy::default())?;
        let ensemble = EnsembleSpec::new(EnsembleKind::BlochProduct, 5, 6);
        let pairs = sample_pairs(&eig, &ensemble, 0, 2 * h.basis().len(), 2.0)?;
        let r = robustness_experiment(&split, &pairs, None)?;
        println!("{ratio:>9} {:>10.3e} {:>10.3e} {:>8}", r.error, r.bound, r.bound_holds);
    }
    Ok(())
}
