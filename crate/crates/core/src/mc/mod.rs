//! Monte Carlo harness for the simulation experiments: presets, a
//! parallel replication runner with per-replication random streams, and
//! aggregated tables joined with the theoretical reference.

mod config;
mod run;

pub use config::{grid, ExperimentConfig, Preset, Procedure, ThresholdMode};
pub use run::{
    run_experiment, theory_overlay, theory_spec, worker_count, write_manifest, write_rows,
    OverlayPoint, ResultRow, RunManifest, RunOutput, CSV_HEADER, QUANTILE_LEVELS, THREADS_ENV,
};
