//! Seedable desk-scale environments behind a uniform stepping interface.
//!
//! Every environment emits `Vec<f64>` observations. Tabular environments
//! encode their state as a one-hot vector and expose the underlying
//! [`TabularMDP`] so that exact occupancy oracles can be computed.

mod gridworld;
mod pendulum;
mod point_mass;
mod rollout;
mod stack;
mod tabular;

pub use gridworld::{GridAction, Gridworld, GridworldConfig, PatrolConfig};
pub use pendulum::{Pendulum, PendulumConfig};
pub use point_mass::{PointMass, PointMassConfig, ACTION_COST};
pub use rollout::{
    collect_steps, rollout, run_episode, ActionSource, DeterministicActions, RandomActions,
    Trajectory, Transition,
};
pub use stack::StackedEnv;
pub use tabular::{TabularEnv, TabularMDP, TabularPolicy};
pub(crate) use tabular::sample_index;

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("step called on a finished episode")]
    StepAfterDone,
    #[error("step called before reset")]
    NotReset,
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("invalid environment: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionSpace {
    Discrete(usize),
    Box { low: Vec<f64>, high: Vec<f64> },
}

impl ActionSpace {
    /// Dimension of the action's feature encoding (one-hot for discrete).
    pub fn feature_dim(&self) -> usize {
        match self {
            ActionSpace::Discrete(n) => *n,
            ActionSpace::Box { low, .. } => low.len(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionSpace::Discrete(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    /// Feature encoding used by state-action discriminators and inverse models.
    pub fn features(&self, space: &ActionSpace) -> Vec<f64> {
        match (self, space) {
            (Action::Discrete(a), ActionSpace::Discrete(n)) => {
                let mut v = vec![0.0; *n];
                if *a < *n {
                    v[*a] = 1.0;
                }
                v
            }
            (Action::Continuous(a), _) => a.clone(),
            (Action::Discrete(a), ActionSpace::Box { .. }) => vec![*a as f64],
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Action::Discrete(_) => true,
            Action::Continuous(a) => a.iter().all(|v| v.is_finite()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub id: String,
    pub obs_dim: usize,
    /// Number of states for tabular environments.
    pub state_count: Option<usize>,
    pub action: ActionSpace,
    pub horizon: usize,
    pub gamma: f64,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.horizon == 0 {
            return Err(EnvError::Invalid("horizon must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(EnvError::Invalid(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

pub trait Env: Send + Sync {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode, seeding all environment randomness.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    fn step(&mut self, action: &Action) -> Result<StepResult, EnvError>;

    fn clone_box(&self) -> Box<dyn Env>;

    /// Tabular state index of an observation, when the environment is tabular.
    fn state_index(&self, _obs: &[f64]) -> Option<usize> {
        None
    }

    /// Underlying tabular model, when available.
    fn tabular_mdp(&self) -> Option<&TabularMDP> {
        None
    }

    /// Per-dimension observation bounds used for diagnostic binning.
    fn obs_bounds(&self) -> Vec<(f64, f64)> {
        vec![(-1.0, 1.0); self.spec().obs_dim]
    }
}

impl Clone for Box<dyn Env> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

pub(crate) fn clip_action(action: &Action, space: &ActionSpace) -> Result<Vec<f64>, EnvError> {
    match (action, space) {
        (Action::Continuous(a), ActionSpace::Box { low, high }) => {
            if a.len() != low.len() {
                return Err(EnvError::InvalidAction(format!(
                    "expected {} action dims, got {}",
                    low.len(),
                    a.len()
                )));
            }
            if !action.is_finite() {
                return Err(EnvError::InvalidAction("non-finite action".into()));
            }
            Ok(a.iter()
                .zip(low.iter().zip(high))
                .map(|(&v, (&lo, &hi))| v.clamp(lo, hi))
                .collect())
        }
        _ => Err(EnvError::InvalidAction(
            "continuous environment received a discrete action".into(),
        )),
    }
}

pub(crate) fn one_hot(index: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[index] = 1.0;
    v
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(i, _)| i)
}
