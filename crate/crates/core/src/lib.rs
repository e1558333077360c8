//! Generative adversarial imitation from observation at desk scale.
//!
//! The crate is organized bottom-up:
//!
//! - [`numkit`]: dense linear algebra, MLPs with manual backprop, Adam,
//!   finite-difference oracles and checkpoints.
//! - [`envs`]: tabular and continuous environments, observation stacking,
//!   rollouts.
//! - [`occupancy`]: exact and empirical state-transition occupancy measures.
//! - [`adversary`]: the transition discriminator, its loss and reward, and
//!   the generative-adversarial regularizer with its convex conjugate.
//! - [`trpo`]: stochastic policies, GAE, conjugate gradient, Fisher-vector
//!   products and the trust-region update.
//! - [`imitation`]: expert training, demonstration recording, GAIfO, GAIL,
//!   BCO and scaled-score evaluation.
//! - [`verify`]: the oracle suite behind `ifo-lab verify`.

pub mod envs;
pub mod numkit;
pub mod rng;
pub mod adversary;
pub mod occupancy;
pub mod trpo;
pub mod imitation;
pub mod verify;
