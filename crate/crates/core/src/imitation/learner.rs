use std::time::Instant;

use super::{evaluate, ImitationError, IterationRecord, TrainReport};
use crate::envs::{collect_steps, Env, Trajectory};
use crate::rng::{derive_seed, seeded, Rng};
use crate::trpo::{
    compute_advantages, trpo_update, RolloutBatch, StochasticPolicy, TrpoConfig, TrpoDiagnostics,
    ValueFunction,
};

/// Seed streams shared by the training loops.
pub(crate) mod streams {
    pub const POLICY_INIT: u64 = 1;
    pub const VALUE_INIT: u64 = 2;
    pub const DISCRIMINATOR_INIT: u64 = 3;
    pub const UPDATE_RNG: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const EXPLORATION: u64 = 6;
    pub const ROLLOUT_BASE: u64 = 1 << 32;
}

/// Policy, value baseline and the randomness driving their updates.
#[derive(Debug, Clone)]
pub struct PolicyLearner {
    pub policy: StochasticPolicy,
    pub value: ValueFunction,
    config: TrpoConfig,
    seed: u64,
    rng: Rng,
}

impl PolicyLearner {
    pub fn new(env: &dyn Env, config: &TrpoConfig, seed: u64) -> Result<Self, ImitationError> {
        let spec = env.spec();
        let policy = StochasticPolicy::for_spec(
            spec,
            &config.policy_hidden,
            config.activation,
            config.init_log_std,
            &mut seeded(derive_seed(seed, streams::POLICY_INIT)),
        )?;
        let value = ValueFunction::new(
            spec.obs_dim,
            config.value.clone(),
            &mut seeded(derive_seed(seed, streams::VALUE_INIT)),
        )?;
        Ok(Self {
            policy,
            value,
            config: config.clone(),
            seed,
            rng: seeded(derive_seed(seed, streams::UPDATE_RNG)),
        })
    }

    pub fn config(&self) -> &TrpoConfig {
        &self.config
    }

    /// Samples at least `batch_steps` transitions with the current policy.
    pub fn collect(
        &self,
        env: &dyn Env,
        iteration: usize,
    ) -> Result<(Vec<Trajectory>, RolloutBatch), ImitationError> {
        let seed = derive_seed(self.seed, streams::ROLLOUT_BASE + iteration as u64);
        let trajs = collect_steps(&self.policy, env, self.config.batch_steps, seed);
        let batch = RolloutBatch::from_trajectories(&trajs, &self.policy, env.spec().horizon)?;
        Ok((trajs, batch))
    }

    /// GAE on the batch rewards, then one trust-region step and a value refit.
    pub fn update(&mut self, batch: &mut RolloutBatch, iteration: usize) -> Result<TrpoDiagnostics, ImitationError> {
        compute_advantages(batch, &self.value, self.config.gamma, self.config.lambda)?;
        let last_good = self.policy.clone();
        let (policy, diag) = match trpo_update(&self.policy, &mut self.value, batch, &self.config, &mut self.rng) {
            Ok(out) => out,
            Err(e) => {
                return Err(ImitationError::Diverged {
                    iteration,
                    reason: e.to_string(),
                    last_good: Some(Box::new(last_good)),
                })
            }
        };
        if policy.flat_params().iter().any(|p| !p.is_finite()) {
            return Err(ImitationError::Diverged {
                iteration,
                reason: "non-finite policy parameters".into(),
                last_good: Some(Box::new(last_good)),
            });
        }
        self.policy = policy;
        Ok(diag)
    }
}

/// TRPO on the environment's own reward.
pub fn train_expert(
    env: &dyn Env,
    config: &TrpoConfig,
    iterations: usize,
    seed: u64,
) -> Result<(StochasticPolicy, TrainReport), ImitationError> {
    let start = Instant::now();
    let mut learner = PolicyLearner::new(env, config, seed)?;
    let mut report = TrainReport::new("expert");
    let eval_seed = derive_seed(seed, streams::EVAL);
    report.push(IterationRecord::initial(evaluate(&learner.policy, env, 5, eval_seed)?.mean, None));
    for it in 1..=iterations {
        let (_, mut batch) = learner.collect(env, it)?;
        let diag = learner.update(&mut batch, it)?;
        report.push(IterationRecord {
            iteration: it,
            mean_return: batch.mean_episode_return(),
            eval_return: f64::NAN,
            disc_loss: f64::NAN,
            mean_reward: batch.rewards.iter().sum::<f64>() / batch.len() as f64,
            kl: diag.kl,
            surrogate_gain: diag.improvement(),
            accepted: diag.accepted(),
            occupancy_l1: None,
        });
    }
    let final_eval = evaluate(&learner.policy, env, 5, eval_seed)?.mean;
    if let Some(last) = report.rows.last_mut() {
        last.eval_return = final_eval;
    }
    report.final_eval_return = final_eval;
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok((learner.policy, report))
}
