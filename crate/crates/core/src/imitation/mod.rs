//! Expert training, demonstration recording, adversarial imitation from
//! observation and its baselines, and scaled-score evaluation.

mod adversarial;
mod bco;
mod demos;
mod eval;
mod learner;
pub mod oracles;
pub mod presets;
mod report;

pub use adversarial::{gaifo_train, gail_train, AdversarialConfig, AdversarialOutcome};
pub use bco::{bco_train, exploration_data, inverse_accuracy_ceiling, BcoConfig, BcoOutcome, InverseModel};
pub use demos::{
    record_action_demonstrations, record_demonstrations, ActionDemonstrationSet, DemonstrationSet,
    ACTION_DEMO_MAGIC, DEMO_MAGIC, DEMO_VERSION,
};
pub use eval::{evaluate, evaluate_source, random_baseline, scaled_score, EvalResult, ScoreBaseline};
pub use learner::{train_expert, PolicyLearner};
pub use report::{EarlyStopConfig, EarlyStopper, IterationRecord, TrainReport, CSV_HEADER};

use std::path::Path;

use crate::adversary::AdversaryError;
use crate::envs::EnvError;
use crate::numkit::NumError;
use crate::occupancy::OccupancyError;
use crate::trpo::{StochasticPolicy, TrpoError};

#[derive(Debug, thiserror::Error)]
pub enum ImitationError {
    #[error("demonstration format: {0}")]
    Format(String),
    #[error("{0}")]
    Mismatch(String),
    #[error("no data: {0}")]
    NoData(String),
    #[error("scaled score is undefined when expert and random returns coincide ({0})")]
    DegenerateScore(f64),
    #[error("training diverged at iteration {iteration}: {reason}")]
    Diverged {
        iteration: usize,
        reason: String,
        /// Last policy with finite parameters.
        last_good: Option<Box<StochasticPolicy>>,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Trpo(#[from] TrpoError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error(transparent)]
    Occupancy(#[from] OccupancyError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Num(#[from] NumError),
}

impl ImitationError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ImitationError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
