//! Experiment harness for the streamckpt simulator: config files, metric
//! reports, sustainable-throughput search, sweeps and trace oracles.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod mst;
pub mod oracle;
pub mod report;
pub mod srclog;

use std::path::{Path, PathBuf};

use streamckpt_core::sim::{SimError, TraceParseError};
use thiserror::Error;

pub use config::{ExperimentConfig, CONFIG_HEADER};
pub use experiment::{run_experiment, run_sweep, Prepared};
pub use metrics::{compute_report, MetricsReport};
pub use mst::{measure_mst, MstResult};
pub use oracle::{check_trace, replay_trace, OracleSummary};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("no rate in the search range is sustainable (tried down to {0})")]
    NeverSustainable(f64),
    #[error("trace: {0}")]
    Trace(#[from] TraceParseError),
    #[error("source log line {line}: {msg}")]
    SourceLog { line: usize, msg: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }

    /// 1 for bad input, 2 for an invariant violation found while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Sim(SimError::Protocol(_) | SimError::Recovery(_)) | HarnessError::Invariant(_) => 2,
            _ => 1,
        }
    }
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(|e| HarnessError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}
