//! Configuration ingestion, single runs, parameter sweeps, toy-model
//! decoding, the analytic calculator and CSV persistence.

mod config;
mod decode;
mod report;
mod run;
mod sweep;

pub use config::{ExperimentConfig, OracleKind, Regime, DEFAULT_VOCAB};
pub use decode::{decode, DecodeReport};
pub use report::analytic_report;
pub use run::{
    analytic_speedup, execute, run, write_rows, write_rows_to_path, ResultRow, RunOutcome, ALPHA_PROBE_PREFIXES,
    RESULT_HEADER,
};
pub use sweep::{sweep, SweepAxis, SweepParam, SweepRow, SweepSpec, MAX_SWEEP_CELLS};
