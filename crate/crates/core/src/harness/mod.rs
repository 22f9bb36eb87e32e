//! Experiment configs, reproducible runs and reports.
//!
//! A run reads a TOML [`ExperimentConfig`], writes CSV tables (first line
//! `# trapfield <schema> v1`), SVG charts, a copy of the config and a JSON
//! [`RunManifest`] into one directory. All randomness is derived from the
//! master seed, so the same config reproduces every CSV byte for byte.

mod config;
mod output;
mod report;
mod run;

pub use config::{ExperimentConfig, ExperimentKind, FinSettings, FkeSettings};
pub use output::{num, Chart, Check, ReplicaFailure, ReplicaSeed, RunManifest, Series, Table, CSV_VERSION};
pub use report::{report_convergence, ConvergenceReport};
pub use run::{
    cosine_amplitude, estimate_d_eff, frequency_duality_mean, frequency_reference, msd_slope, output_dir,
    run_experiment,
};
