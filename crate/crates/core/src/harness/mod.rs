//! Declarative experiments: configuration, seeded sweeps, tabular output,
//! ingestion of external data and the headless property suite.

pub mod config;
pub mod emit;
pub mod ingest;
pub mod run;
pub mod verify;

pub use config::{ExperimentConfig, Protocol, ProtocolOptions, Sweep, SweepPoint};
pub use emit::{emit, load_emitted_config, Format, ResultWriter, ARTIFACT_VERSION};
pub use ingest::{ingest_external, DEFAULT_SLACK};
pub use run::{run, run_with, ResultRow, RunOptions, RunOutput};
pub use verify::{verify_suite, CheckResult};
