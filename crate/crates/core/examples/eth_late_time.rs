//! Late-time correlations against the rank-one prediction `c c^T / |c|^2`.
//!
//! `cargo run --release --example eth_late_time`

use quench_tomography::ensembles::{instantiate_model, Boundary, ModelFamily, ModelSpec};
use quench_tomography::quantum::{diagonalize_spec, HeisenbergFrame};
use quench_tomography::spectral::{eth_late_time_matrix, fluctuation_check, gap_lower_bound, late_time_average};
use quench_tomography::{NumericalPolicy, Result};

fn main() -> Result<()> {
    let policy = NumericalPolicy::default();
    let floor = 1.0f64 / 3.0;
    for sites in [4, 6, 8] {
        let h = instantiate_model(&ModelSpec::new(ModelFamily::RandomLocal, sites, Boundary::Open, 0))?;
        let eig = diagonalize_spec(&h, &policy)?;
        let avg = late_time_average(h.basis(), &eig, &policy)?;
        let c0 = eth_late_time_matrix(h.couplings())?;
        let dev = (&avg.mean - &c0).iter().map(|v| v.abs()).fold(0.0, f64::max);
        let fl = fluctuation_check(&avg, eig.dim());
        let c10 = HeisenbergFrame::new(h.basis(), &eig, &policy)?.correlation(10.0);
        println!(
            "L = {sites}: max |<C> - C0| = {dev:.3}, temporal variance {:.1e} (bound {:.1e}), gap bound at t = 10: {:.3} (floor {floor:.3})",
            fl.max_variance,
            fl.bound,
            gap_lower_bound(&c10, 2)?
        );
    }
    Ok(())
}
