//! Stochastic policies, generalized advantage estimation, conjugate gradient,
//! Fisher-vector products and the KL-constrained policy update.

mod batch;
mod cg;
mod policy;
mod update;
mod value;

pub use batch::{compute_advantages, RolloutBatch};
pub use cg::{conjugate_gradient, conjugate_gradient_traced, CgResult};
pub use policy::{
    fisher_vector_product, kl_grad, mean_kl, Greedy, PolicyKind, StochasticPolicy, LOG_STD_MAX,
    LOG_STD_MIN,
};
pub use update::{surrogate, trpo_update, TrpoConfig, TrpoDiagnostics, UpdateStatus};
pub use value::{ValueConfig, ValueFunction};

use crate::numkit::NumError;

#[derive(Debug, thiserror::Error)]
pub enum TrpoError {
    #[error("action does not match the policy: {0}")]
    Action(String),
    #[error("policies are not comparable: {0}")]
    Mismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Num(#[from] NumError),
}
