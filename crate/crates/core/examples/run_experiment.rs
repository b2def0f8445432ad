//! Running a declarative sweep and writing the result table.
//!
//! `cargo run --release --example run_experiment`

use quench_tomography::harness::{emit, run, ExperimentConfig, Format, Protocol, RunOptions};
use quench_tomography::{NumericalPolicy, Result};

fn main() -> Result<()> {
    let text = ExperimentConfig::template(Protocol::MultiQuench)
        .replace("realizations = 200", "realizations = 20")
        .replace("sites = 8", "sites = 6")
        .replace("t = [1.0]", "t = [0.05, 0.25, 0.5, 1.0, 2.0]");
    let cfg = ExperimentConfig::parse(&text)?;
    let out = run(&cfg, RunOptions::default(), &NumericalPolicy::default())?;
    println!("{:>6} {:>8} {:>8} {:>8}", "t", "F", "E", "gap");
    for r in &out.rows {
        println!("{:>6} {:>8.4} {:>8.4} {:>8.4}", r.point.t, r.f_mean, r.e_mean, r.gap_mean);
    }
    let path = std::env::temp_dir().join("fidelity_vs_time.json");
    emit(&out.rows, &cfg, &path, Format::Json)?;
    println!("wrote {}", path.display());
    Ok(())
}
