use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use quench_tomography::harness::{
    ingest_external, run_with, verify_suite, ExperimentConfig, Format, Protocol, ResultWriter, RunOptions,
    DEFAULT_SLACK,
};
use quench_tomography::linear::solve_kernel;
use quench_tomography::{Error, NumericalPolicy, Result};

#[derive(Parser)]
#[command(name = "qtomo", version, about = "Hamiltonian tomography from quantum quenches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Csv => Format::Csv,
            OutputFormat::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    MultiQuench,
    TimeSliceBaseline,
    SingleQuench,
    Robustness,
    GapSweep,
    Spectrum,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::MultiQuench => Protocol::MultiQuench,
            ProtocolArg::TimeSliceBaseline => Protocol::TimeSliceBaseline,
            ProtocolArg::SingleQuench => Protocol::SingleQuench,
            ProtocolArg::Robustness => Protocol::Robustness,
            ProtocolArg::GapSweep => Protocol::GapSweep,
            ProtocolArg::Spectrum => Protocol::Spectrum,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write one row per sweep point.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides output_path from the config.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Overrides master_seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to the output file extension.
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
    },
    /// Run the property suite at small sizes.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
        /// Write the check results here as well as printing them.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutputFormat,
    },
    /// Reconstruct couplings from an external CSV of expectation differences.
    Ingest {
        /// CSV with one column per basis operator.
        input: PathBuf,
        /// Experiment config whose model defines the operator basis.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, value_enum, default_value = "json")]
        format: OutputFormat,
        /// Allowed excess beyond the physical range [-2, 2].
        #[arg(long, default_value_t = DEFAULT_SLACK)]
        slack: f64,
    },
    /// Print a commented config for a protocol.
    EmitConfigTemplate {
        #[arg(long, value_enum, default_value = "multi-quench")]
        protocol: ProtocolArg,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn set_workers(workers: Option<usize>) -> Result<()> {
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::Validation("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Error::Validation(format!("cannot start {w} workers: {e}")))?;
    }
    Ok(())
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    let io = |p: &Path, e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    };
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| io(Path::new("<stdout>"), e)),
    }
}

fn dispatch(cmd: Command) -> Result<u8> {
    let policy = NumericalPolicy::default();
    match cmd {
        Command::Run {
            config,
            output,
            workers,
            seed,
            format,
        } => {
            set_workers(workers)?;
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(o) = output {
                cfg.output_path = o;
            }
            let format = format.map(Format::from).unwrap_or_else(|| Format::from_path(&cfg.output_path));
            let points = cfg.sweep_points()?.len();
            let mut writer = ResultWriter::create(&cfg.output_path, format, &cfg)?;
            let out = run_with(&cfg, RunOptions { workers }, &policy, |row| {
                eprintln!(
                    "[{}/{points}] {}: F = {:.4}, E = {:.4}, {:.1}s",
                    row.point.index + 1,
                    row.point.label(),
                    row.f_mean,
                    row.e_mean,
                    row.wall_time_s
                );
                writer.push(row)
            })?;
            if let Some(h) = out.histogram {
                let path = cfg.output_path.with_extension("hist.csv");
                h.write_csv(&path)?;
                eprintln!("histogram written to {}", path.display());
            }
            eprintln!("results written to {}", cfg.output_path.display());
            Ok(0)
        }
        Command::Verify {
            seed,
            workers,
            output,
            format,
        } => {
            set_workers(workers)?;
            let results = verify_suite(&policy, seed);
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            if let Some(path) = output {
                let text = match Format::from(format) {
                    Format::Json => serde_json::to_string_pretty(&results).expect("results serialise") + "\n",
                    Format::Csv => {
                        let mut s = String::from("check,passed,detail\n");
                        for r in &results {
                            s += &format!("{},{},\"{}\"\n", r.name, r.passed, r.detail.replace('"', "'"));
                        }
                        s
                    }
                };
                write_text(Some(&path), &text)?;
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                eprintln!("{failed} of {} checks failed", results.len());
                Ok(2)
            } else {
                Ok(0)
            }
        }
        Command::Ingest {
            input,
            config,
            output,
            workers,
            format,
            slack,
        } => {
            set_workers(workers)?;
            let cfg = ExperimentConfig::load(&config)?;
            let basis = cfg.model.basis()?;
            let m = ingest_external(&input, &basis, slack)?;
            let sol = solve_kernel(&m)?;
            for w in &sol.warnings {
                eprintln!("warning: {w}");
            }
            let text = match Format::from(format) {
                Format::Json => serde_json::to_string_pretty(&serde_json::json!({
                    "pairs": m.pair_count(),
                    "operators": m.columns(),
                    "estimate": sol.estimate,
                    "singular_values": sol.singular_values,
                    "gap": sol.gap,
                    "warnings": sol.warnings,
                }))
                .expect("solution serialises")
                    + "\n",
                Format::Csv => {
                    let mut s = String::from("operator,coupling\n");
                    for (name, v) in m.columns().iter().zip(&sol.estimate) {
                        s += &format!("{name},{v:.11e}\n");
                    }
                    s
                }
            };
            write_text(output.as_deref(), &text)?;
            Ok(0)
        }
        Command::EmitConfigTemplate { protocol, output } => {
            write_text(output.as_deref(), &ExperimentConfig::template(protocol.into()))?;
            Ok(0)
        }
    }
}
