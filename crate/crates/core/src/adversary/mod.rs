//! Transition discriminator, its cross-entropy loss and policy reward, and
//! the generative-adversarial regularizer with conjugacy verification.

mod conjugate;
mod discriminator;

pub use conjugate::{
    analytic_optimal_cost, conjugacy_definition_check, conjugate_objective, g_fn,
    optimal_discriminator, psi_ga, psi_ga_conjugate_closed, psi_ga_conjugate_numeric,
    psi_ga_weighted, ConjugacyReport, CostFunction, Extended,
};
pub use discriminator::{pair_features, Discriminator, DiscriminatorConfig, InputMode};

use crate::numkit::NumError;

#[derive(Debug, thiserror::Error)]
pub enum AdversaryError {
    #[error("discriminator expects input of dim {expected}, got {got}")]
    Dim { expected: usize, got: usize },
    #[error("discriminator batches must be nonempty")]
    EmptyBatch,
    #[error("occupancy masses must be nonnegative")]
    NegativeMass,
    #[error("support: {0}")]
    Support(String),
    #[error(transparent)]
    Num(#[from] NumError),
}
