//! Experiment harness: TOML-configured sweeps, CSV and JSON persistence,
//! log-log rate fitting and end-to-end privacy audits.

pub mod audit;
pub mod config;
pub mod error;
pub mod fit;
pub mod stats;
pub mod sweep;

pub use audit::{privacy_audit, AuditConfig, AuditRow, Pipeline};
pub use config::{Algorithm, ExperimentConfig};
pub use error::{HarnessError, Result};
pub use fit::{fit_rate, Axis, RateFit};
pub use sweep::{run_sweep, summarize, Summary, TrialRecord, CSV_COLUMNS};
