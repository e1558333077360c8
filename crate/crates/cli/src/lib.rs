//! Experiment harness behind the `ifo-lab` binary: configuration, single
//! runs, multi-seed sweeps and report aggregation.

pub mod cli;
pub mod config;
pub mod report;
pub mod run;
pub mod sweep;

use std::path::{Path, PathBuf};

pub use config::{Algorithm, EnvId, ExperimentConfig};
pub use report::{aggregate, AggregateRow, RunSummary};
pub use run::{config_hash, run_dir, run_one, RunOutcome};
pub use sweep::{run_sweep, SweepCell, SweepTable};

use ifo_core::envs::EnvError;
use ifo_core::imitation::ImitationError;
use ifo_core::numkit::NumError;
use ifo_core::trpo::TrpoError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: malformed run summary: {reason}")]
    Summary { path: String, reason: String },
    #[error(transparent)]
    Imitation(#[from] ImitationError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Trpo(#[from] TrpoError),
    #[error(transparent)]
    Num(#[from] NumError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Stable tag for the machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::MissingFile(_) => "missing-file",
            HarnessError::Io { .. } => "io",
            HarnessError::Summary { .. } => "summary",
            HarnessError::Imitation(ImitationError::Diverged { .. }) => "diverged",
            HarnessError::Imitation(_) => "imitation",
            HarnessError::Env(_) => "env",
            HarnessError::Trpo(_) => "trpo",
            HarnessError::Num(_) => "numeric",
        }
    }
}
