use std::time::Instant;

use rand::Rng as _;

use super::learner::streams;
use super::{
    evaluate, random_baseline, ActionDemonstrationSet, DemonstrationSet, EarlyStopConfig,
    EarlyStopper, ImitationError, IterationRecord, PolicyLearner, ScoreBaseline, TrainReport,
};
use crate::adversary::{pair_features, Discriminator, DiscriminatorConfig, InputMode};
use crate::envs::{Action, ActionSpace, Env, Trajectory};
use crate::occupancy::{
    empirical_occupancy, empirical_occupancy_from_states, exact_occupancy, occupancy_distance,
    DistanceMetric, GridBinning, StateTransitionOccupancy, Support,
};
use crate::rng::{derive_seed, seeded, Rng};
use crate::trpo::{RolloutBatch, StochasticPolicy, TrpoConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialConfig {
    pub iterations: usize,
    pub trpo: TrpoConfig,
    pub discriminator: DiscriminatorConfig,
    /// Discriminator Adam steps per iteration.
    pub d_steps: usize,
    /// Samples drawn uniformly with replacement from each side per step;
    /// 0 uses both full sets.
    pub d_minibatch: usize,
    pub eval_episodes: usize,
    pub early_stop: Option<EarlyStopConfig>,
    /// Bins per observation dimension for the occupancy diagnostic on
    /// non-tabular environments; 0 disables it there.
    pub occupancy_bins: usize,
    /// Overrides the random/expert returns used for the final scaled score.
    pub baseline: Option<ScoreBaseline>,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            trpo: TrpoConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            d_steps: 1,
            d_minibatch: 0,
            eval_episodes: 10,
            early_stop: Some(EarlyStopConfig::default()),
            occupancy_bins: 0,
            baseline: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdversarialOutcome {
    pub policy: StochasticPolicy,
    pub discriminator: Discriminator,
    pub report: TrainReport,
}

/// Imitation from state-only demonstrations: the discriminator sees
/// `(s, s')` and the policy is rewarded with `−log D(s, s')`.
pub fn gaifo_train(
    env: &dyn Env,
    demos: &DemonstrationSet,
    config: &AdversarialConfig,
    seed: u64,
) -> Result<AdversarialOutcome, ImitationError> {
    demos.check_env(env)?;
    let expert: Vec<Vec<f64>> = demos.transitions().map(|(s, n)| pair_features(s, n)).collect();
    run(env, demos, InputMode::StateTransition, expert, config, seed, "gaifo")
}

/// The action-aware baseline: the discriminator sees `(s, a)`.
pub fn gail_train(
    env: &dyn Env,
    demos: &ActionDemonstrationSet,
    config: &AdversarialConfig,
    seed: u64,
) -> Result<AdversarialOutcome, ImitationError> {
    demos.states().check_env(env)?;
    if demos.action_space() != &env.spec().action {
        return Err(ImitationError::Mismatch("demonstration action space differs from the environment's".into()));
    }
    let space = &env.spec().action;
    let expert: Vec<Vec<f64>> = demos
        .state_actions()
        .map(|(s, a)| pair_features(s, &action_features(a, space)))
        .collect();
    run(env, demos.states(), InputMode::StateAction, expert, config, seed, "gail")
}

/// One-hot for discrete actions; continuous actions clipped to the box the
/// environment applies.
fn action_features(a: &Action, space: &ActionSpace) -> Vec<f64> {
    match (a, space) {
        (Action::Continuous(v), ActionSpace::Box { low, high }) => v
            .iter()
            .zip(low.iter().zip(high))
            .map(|(&x, (&lo, &hi))| x.clamp(lo, hi))
            .collect(),
        _ => a.features(space),
    }
}

fn batch_features(batch: &RolloutBatch, mode: InputMode, space: &ActionSpace) -> Vec<Vec<f64>> {
    match mode {
        InputMode::StateTransition => batch
            .states
            .iter()
            .zip(&batch.next_states)
            .map(|(s, n)| pair_features(s, n))
            .collect(),
        InputMode::StateAction => batch
            .states
            .iter()
            .zip(&batch.actions)
            .map(|(s, a)| pair_features(s, &action_features(a, space)))
            .collect(),
    }
}

fn minibatch(data: &[Vec<f64>], size: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    if size == 0 {
        return data.to_vec();
    }
    (0..size).map(|_| data[rng.random_range(0..data.len())].clone()).collect()
}

/// Occupancy distance diagnostic against the demonstrations.
struct OccupancyProbe {
    support: Support,
    gamma: f64,
    expert: StateTransitionOccupancy,
}

impl OccupancyProbe {
    fn new(env: &dyn Env, demos: &DemonstrationSet, bins: usize) -> Result<Option<Self>, ImitationError> {
        let support = match (env.spec().state_count, env.tabular_mdp()) {
            (Some(n), Some(_)) => Support::Tabular(n),
            _ if bins > 0 => Support::Grid(GridBinning::for_env(env, bins)?),
            _ => return Ok(None),
        };
        let gamma = env.spec().gamma;
        let expert = empirical_occupancy_from_states(demos.trajectories(), gamma, &support)?;
        Ok(Some(Self {
            support,
            gamma,
            expert,
        }))
    }

    /// Exact for tabular environments, otherwise from the sampled episodes.
    fn distance(
        &self,
        env: &dyn Env,
        policy: &StochasticPolicy,
        sampled: &[Trajectory],
    ) -> Result<f64, ImitationError> {
        let occ = match (&self.support, env.tabular_mdp()) {
            (Support::Tabular(n), Some(mdp)) => exact_occupancy(mdp, &policy.tabular_probs(*n)?, self.gamma)?,
            _ => empirical_occupancy(sampled, self.gamma, &self.support)?,
        };
        Ok(occupancy_distance(&occ, &self.expert, DistanceMetric::L1)?)
    }
}

fn run(
    env: &dyn Env,
    demos: &DemonstrationSet,
    mode: InputMode,
    expert: Vec<Vec<f64>>,
    config: &AdversarialConfig,
    seed: u64,
    algorithm: &str,
) -> Result<AdversarialOutcome, ImitationError> {
    let start = Instant::now();
    if expert.is_empty() {
        return Err(ImitationError::NoData("demonstrations contain no transitions".into()));
    }
    let space = env.spec().action.clone();
    let mut learner = PolicyLearner::new(env, &config.trpo, seed)?;
    let mut disc = Discriminator::new(
        mode,
        expert[0].len(),
        &config.discriminator,
        &mut seeded(derive_seed(seed, streams::DISCRIMINATOR_INIT)),
    )?;
    let mut rng = seeded(derive_seed(seed, streams::DISCRIMINATOR_INIT + 100));
    let eval_seed = derive_seed(seed, streams::EVAL);
    let eval_episodes = config.eval_episodes.max(1);
    let probe = OccupancyProbe::new(env, demos, config.occupancy_bins)?;
    let mut stopper = config.early_stop.map(EarlyStopper::new);
    let mut report = TrainReport::new(algorithm);

    let initial_occ = match &probe {
        Some(p) if env.tabular_mdp().is_some() => {
            Some(p.distance(env, &learner.policy, &[])?)
        }
        Some(p) => {
            let (trajs, _) = learner.collect(env, 0)?;
            Some(p.distance(env, &learner.policy, &trajs)?)
        }
        None => None,
    };
    let initial_eval = evaluate(&learner.policy, env, eval_episodes, eval_seed)?.mean;
    report.push(IterationRecord::initial(initial_eval, initial_occ));

    for it in 1..=config.iterations {
        let (trajs, mut batch) = learner.collect(env, it)?;
        let imitator = batch_features(&batch, mode, &space);
        let mut d_loss = 0.0;
        let steps = config.d_steps.max(1);
        for _ in 0..steps {
            let mi = minibatch(&imitator, config.d_minibatch, &mut rng);
            let me = minibatch(&expert, config.d_minibatch, &mut rng);
            d_loss += disc.update(&mi, &me)?;
        }
        d_loss /= steps as f64;
        if !d_loss.is_finite() || disc.net().flat_params().iter().any(|p| !p.is_finite()) {
            return Err(ImitationError::Diverged {
                iteration: it,
                reason: format!("discriminator loss {d_loss}"),
                last_good: Some(Box::new(learner.policy.clone())),
            });
        }
        let rewards = disc.policy_rewards(&imitator)?;
        let mean_reward = rewards.iter().sum::<f64>() / rewards.len() as f64;
        batch.set_rewards(rewards)?;
        let diag = learner.update(&mut batch, it)?;
        let eval_return = evaluate(&learner.policy, env, eval_episodes, eval_seed)?.mean;
        let occupancy_l1 = match &probe {
            Some(p) => Some(p.distance(env, &learner.policy, &trajs)?),
            None => None,
        };
        report.push(IterationRecord {
            iteration: it,
            mean_return: batch.mean_episode_return(),
            eval_return,
            disc_loss: d_loss,
            mean_reward,
            kl: diag.kl,
            surrogate_gain: diag.improvement(),
            accepted: diag.accepted(),
            occupancy_l1,
        });
        if let Some(s) = stopper.as_mut() {
            if s.observe(eval_return) {
                report.stopped_early = true;
                break;
            }
        }
    }

    report.final_eval_return = report.rows.last().map_or(initial_eval, |r| r.eval_return);
    let baseline = match config.baseline {
        Some(b) => b,
        None => ScoreBaseline {
            random_mean: random_baseline(env, eval_episodes, eval_seed)?.mean,
            expert_mean: demos.expert_mean_return(),
        },
    };
    match baseline.score(report.final_eval_return) {
        Ok(s) => report.final_scaled_score = Some(s),
        Err(e) => report.warnings.push(e.to_string()),
    }
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(AdversarialOutcome {
        policy: learner.policy,
        discriminator: disc,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{PointMass, PointMassConfig};

    fn tiny_config(iterations: usize) -> AdversarialConfig {
        let mut cfg = AdversarialConfig {
            iterations,
            eval_episodes: 2,
            early_stop: None,
            ..AdversarialConfig::default()
        };
        cfg.trpo.batch_steps = 200;
        cfg.trpo.policy_hidden = vec![8];
        cfg.trpo.value.hidden = vec![8];
        cfg.discriminator.hidden = vec![8];
        cfg
    }

    fn demos(env: &PointMass) -> (DemonstrationSet, ActionDemonstrationSet) {
        let mut rng = seeded(9);
        let expert = StochasticPolicy::for_spec(env.spec(), &[8], crate::numkit::Activation::Tanh, -0.5, &mut rng).unwrap();
        (
            super::super::record_demonstrations(&expert, env, 2, 1).unwrap(),
            super::super::record_action_demonstrations(&expert, env, 2, 1).unwrap(),
        )
    }

    #[test]
    fn zero_iterations_keep_initial_policy() {
        let env = PointMass::new(PointMassConfig::default()).unwrap();
        let (d, _) = demos(&env);
        let cfg = tiny_config(0);
        let out = gaifo_train(&env, &d, &cfg, 4).unwrap();
        assert_eq!(out.policy, PolicyLearner::new(&env, &cfg.trpo, 4).unwrap().policy);
        assert_eq!(out.report.rows.len(), 1);
    }

    #[test]
    fn reports_are_reproducible() {
        let env = PointMass::new(PointMassConfig::default()).unwrap();
        let (d, ad) = demos(&env);
        let cfg = tiny_config(3);
        let a = gaifo_train(&env, &d, &cfg, 5).unwrap();
        let b = gaifo_train(&env, &d, &cfg, 5).unwrap();
        assert_eq!(a.report.to_csv(), b.report.to_csv());
        assert_eq!(a.report.rows.len(), 4);
        let g = gail_train(&env, &ad, &cfg, 5).unwrap();
        assert_eq!(g.discriminator.mode(), InputMode::StateAction);
        assert_eq!(g.report.algorithm, "gail");
    }

    #[test]
    fn env_mismatch_rejected() {
        let env = PointMass::new(PointMassConfig::default()).unwrap();
        let (d, _) = demos(&env);
        let other = PointMass::new(PointMassConfig {
            dim: 3,
            target: vec![0.0; 3],
            ..PointMassConfig::default()
        })
        .unwrap();
        assert!(gaifo_train(&other, &d, &tiny_config(1), 1).is_err());
    }

    #[test]
    fn action_features_clip_to_bounds() {
        let space = ActionSpace::Box {
            low: vec![-1.0],
            high: vec![1.0],
        };
        assert_eq!(action_features(&Action::Continuous(vec![3.0]), &space), vec![1.0]);
    }
}
