//! Desk-scale settings shared by the acceptance tests, the CLI defaults and
//! the benches.

use super::{
    gaifo_train, record_action_demonstrations, record_demonstrations, train_expert, ActionDemonstrationSet,
    AdversarialConfig, AdversarialOutcome, BcoConfig, DemonstrationSet, ImitationError,
};
use crate::envs::{Gridworld, GridworldConfig, PointMass, PointMassConfig, TabularEnv};
use crate::numkit::AdamConfig;
use crate::rng::derive_seed;
use crate::trpo::{StochasticPolicy, TrpoConfig};

pub const DESK_HIDDEN: [usize; 2] = [32, 32];

/// TRPO defaults with smaller networks and half the batch.
pub fn desk_trpo() -> TrpoConfig {
    let mut cfg = TrpoConfig {
        batch_steps: 1024,
        policy_hidden: DESK_HIDDEN.to_vec(),
        ..TrpoConfig::default()
    };
    cfg.value.hidden = DESK_HIDDEN.to_vec();
    cfg
}

/// Five discriminator steps at a larger rate per policy update. With one
/// step at 3e-4 the policy can outrun a weak early discriminator and drift
/// off toward states it extrapolates as expert-like.
pub fn desk_adversarial(iterations: usize) -> AdversarialConfig {
    let mut cfg = AdversarialConfig {
        iterations,
        trpo: desk_trpo(),
        d_steps: 5,
        ..AdversarialConfig::default()
    };
    cfg.discriminator.hidden = DESK_HIDDEN.to_vec();
    cfg.discriminator.adam = AdamConfig::with_alpha(1e-3);
    cfg
}

/// Iterations of [`desk_trpo`] used to train the point-mass expert.
pub const POINT_MASS_EXPERT_ITERATIONS: usize = 300;

/// Demonstrations on the default point mass: an expert trained for
/// [`POINT_MASS_EXPERT_ITERATIONS`] and `n` greedy episodes from it, both
/// state-only and with actions (same episodes).
pub fn point_mass_demos(
    n: usize,
    seed: u64,
) -> Result<(PointMass, DemonstrationSet, ActionDemonstrationSet), ImitationError> {
    let env = PointMass::new(PointMassConfig::default())?;
    let (expert, _) = train_expert(&env, &desk_trpo(), POINT_MASS_EXPERT_ITERATIONS, derive_seed(seed, 0xE1))?;
    let demos = record_demonstrations(&expert, &env, n, derive_seed(seed, 0xE2))?;
    let action_demos = record_action_demonstrations(&expert, &env, n, derive_seed(seed, 0xE2))?;
    Ok((env, demos, action_demos))
}

/// BCO with the desk network sizes and the full exploration budget.
pub fn desk_bco() -> BcoConfig {
    BcoConfig {
        inverse_hidden: DESK_HIDDEN.to_vec(),
        policy_hidden: DESK_HIDDEN.to_vec(),
        ..BcoConfig::default()
    }
}

/// Gridworld used for imitation. The goal is not absorbing: a positive
/// per-step reward such as `−log D` would otherwise pay the imitator for
/// avoiding it. With `γ = 0.9` the mass beyond the 50-step horizon is
/// `0.9⁵⁰ ≈ 0.5%` of the total.
pub fn gaifo_gridworld() -> Result<TabularEnv, ImitationError> {
    Ok(Gridworld::build(&GridworldConfig {
        terminal_goal: false,
        gamma: 0.9,
        horizon: 50,
        ..GridworldConfig::default()
    })?)
}

pub const GRIDWORLD_EXPERT_ITERATIONS: usize = 60;

/// Expert for [`gaifo_gridworld`] and `n` greedy demonstrations from it.
pub fn gridworld_demos(
    env: &TabularEnv,
    n: usize,
    seed: u64,
) -> Result<(StochasticPolicy, DemonstrationSet), ImitationError> {
    let mut cfg = desk_trpo();
    cfg.gamma = 0.9;
    let (expert, _) = train_expert(env, &cfg, GRIDWORLD_EXPERT_ITERATIONS, derive_seed(seed, 0xE1))?;
    let demos = record_demonstrations(&expert, env, n, derive_seed(seed, 0xE2))?;
    Ok((expert, demos))
}

/// GAIfO on [`gaifo_gridworld`] from 10 demonstrations with the occupancy
/// diagnostic on every row and no early stop.
pub fn gaifo_gridworld_run(
    env: &TabularEnv,
    demos: &DemonstrationSet,
    iterations: usize,
    seed: u64,
) -> Result<AdversarialOutcome, ImitationError> {
    let mut cfg = desk_adversarial(iterations);
    cfg.trpo.gamma = 0.9;
    cfg.early_stop = None;
    gaifo_train(env, demos, &cfg, seed)
}
