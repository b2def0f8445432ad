//! Reconstructing couplings from a CSV of measured expectation differences.
//!
//! The CSV has one column per basis operator, named in Pauli notation
//! (`Z0 Z1`, `X2`, ...), and one row per quench. Here the data are simulated
//! and written first; point `ingest_external` at a real file instead.
//!
//! `cargo run --release --example ingest_lab_data`

use quench_tomography::ensembles::{instantiate_model, Boundary, EnsembleKind, EnsembleSpec, ModelFamily, ModelSpec};
use quench_tomography::harness::{ingest_external, DEFAULT_SLACK};
use quench_tomography::linear::{build_constraint_matrix, inject_error, sample_pairs, score, solve_kernel, ErrorModel};
use quench_tomography::quantum::diagonalize_spec;
use quench_tomography::{NumericalPolicy, Result};

fn main() -> Result<()> {
    let h = instantiate_model(&ModelSpec::new(ModelFamily::Heisenberg, 5, Boundary::Open, 2))?;
    let eig = diagonalize_spec(&h, &NumericalPolicy::default())?;
    let pairs = sample_pairs(&eig, &EnsembleSpec::new(EnsembleKind::XyzProduct, 2, 5), 0, 60, 1.5)?;
    let measured = inject_error(&build_constraint_matrix(h.basis(), &pairs)?, &ErrorModel::uniform(0.005, 3)?);
    let path = std::env::temp_dir().join("quench_lab_data.csv");
    measured.write_csv(&path)?;
    println!("wrote {} rows to {}", measured.pair_count(), path.display());

    let m = ingest_external(&path, h.basis(), DEFAULT_SLACK)?;
    let sol = solve_kernel(&m)?;
    for (name, v) in m.columns().iter().zip(&sol.estimate) {
        println!("{name:>10}: {v:+.5}");
    }
    println!("fidelity against the simulated truth: {:.6}", score(&sol.estimate, h.couplings())?.fidelity);
    Ok(())
}
