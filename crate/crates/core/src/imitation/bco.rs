use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;

use super::learner::streams;
use super::{evaluate, random_baseline, DemonstrationSet, ImitationError, IterationRecord, ScoreBaseline, TrainReport};
use crate::envs::{argmax, collect_steps, Action, ActionSpace, Env, RandomActions};
use crate::numkit::{Activation, AdamConfig, AdamState, InitScale, Mlp, OutputTransform};
use crate::rng::{derive_seed, seeded, Rng};
use crate::trpo::StochasticPolicy;

#[derive(Debug, Clone, PartialEq)]
pub struct BcoConfig {
    /// Random-policy transitions used to fit the inverse model.
    pub exploration_steps: usize,
    pub inverse_hidden: Vec<usize>,
    pub inverse_activation: Activation,
    pub inverse_epochs: usize,
    pub inverse_minibatch: usize,
    pub inverse_adam: AdamConfig,
    pub holdout_fraction: f64,
    /// Held-out accuracy below which a warning is recorded (discrete).
    pub min_accuracy: f64,
    /// Held-out relative RMSE above which a warning is recorded (continuous).
    pub max_relative_rmse: f64,
    pub policy_hidden: Vec<usize>,
    pub policy_activation: Activation,
    pub init_log_std: f64,
    pub bc_epochs: usize,
    pub bc_minibatch: usize,
    pub bc_adam: AdamConfig,
    pub eval_episodes: usize,
    pub baseline: Option<ScoreBaseline>,
}

impl Default for BcoConfig {
    fn default() -> Self {
        Self {
            exploration_steps: 50_000,
            inverse_hidden: vec![64, 64],
            inverse_activation: Activation::Tanh,
            inverse_epochs: 20,
            inverse_minibatch: 128,
            inverse_adam: AdamConfig::with_alpha(1e-3),
            holdout_fraction: 0.1,
            min_accuracy: 0.95,
            max_relative_rmse: 0.1,
            policy_hidden: vec![64, 64],
            policy_activation: Activation::Tanh,
            init_log_std: -0.5,
            bc_epochs: 30,
            bc_minibatch: 64,
            bc_adam: AdamConfig::with_alpha(1e-3),
            eval_episodes: 10,
            baseline: None,
        }
    }
}

/// Predicts the action that produced `s → s'` from `[s, s' − s]`.
/// Classification for discrete actions, regression for continuous ones.
#[derive(Debug, Clone)]
pub struct InverseModel {
    net: Mlp,
    space: ActionSpace,
}

fn inverse_input(s: &[f64], s_next: &[f64]) -> Vec<f64> {
    let mut v = s.to_vec();
    v.extend(s_next.iter().zip(s).map(|(b, a)| b - a));
    v
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|&v| (v - m).exp()).collect();
    let t: f64 = e.iter().sum();
    e.into_iter().map(|v| v / t).collect()
}

impl InverseModel {
    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn infer(&self, s: &[f64], s_next: &[f64]) -> Result<Action, ImitationError> {
        let out = self.net.predict(&inverse_input(s, s_next))?;
        Ok(match &self.space {
            ActionSpace::Discrete(_) => Action::Discrete(argmax(&out)),
            ActionSpace::Box { low, high } => Action::Continuous(
                out.iter()
                    .zip(low.iter().zip(high))
                    .map(|(&x, (&lo, &hi))| x.clamp(lo, hi))
                    .collect(),
            ),
        })
    }

    /// Accuracy (discrete) or RMSE relative to the RMS target (continuous).
    pub fn score(&self, data: &[(Vec<f64>, Vec<f64>, Action)]) -> Result<f64, ImitationError> {
        if data.is_empty() {
            return Err(ImitationError::NoData("no held-out transitions".into()));
        }
        match &self.space {
            ActionSpace::Discrete(_) => {
                let mut hits = 0usize;
                for (s, n, a) in data {
                    hits += usize::from(&self.infer(s, n)? == a);
                }
                Ok(hits as f64 / data.len() as f64)
            }
            ActionSpace::Box { .. } => {
                let (mut err, mut norm) = (0.0, 0.0);
                for (s, n, a) in data {
                    let (Action::Continuous(p), Action::Continuous(t)) = (self.infer(s, n)?, a) else {
                        return Err(ImitationError::Mismatch("continuous model given a discrete action".into()));
                    };
                    err += p.iter().zip(t).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
                    norm += t.iter().map(|y| y * y).sum::<f64>();
                }
                Ok((err / norm.max(f64::MIN_POSITIVE)).sqrt())
            }
        }
    }

    fn fit(
        space: &ActionSpace,
        train: &[(Vec<f64>, Vec<f64>, Action)],
        config: &BcoConfig,
        rng: &mut Rng,
    ) -> Result<Self, ImitationError> {
        let in_dim = 2 * train[0].0.len();
        let mut dims = vec![in_dim];
        dims.extend(&config.inverse_hidden);
        dims.push(space.feature_dim());
        let mut net = Mlp::random(&dims, config.inverse_activation, OutputTransform::Identity, InitScale::default(), rng)?;
        let mut adam = AdamState::new(net.param_count(), config.inverse_adam);
        let inputs: Vec<Vec<f64>> = train.iter().map(|(s, n, _)| inverse_input(s, n)).collect();
        let targets: Vec<Vec<f64>> = train.iter().map(|(_, _, a)| a.features(space)).collect();
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut grads = vec![0.0; net.param_count()];
        for _ in 0..config.inverse_epochs {
            order.shuffle(rng);
            for chunk in order.chunks(config.inverse_minibatch.max(1)) {
                grads.iter_mut().for_each(|g| *g = 0.0);
                let w = 1.0 / chunk.len() as f64;
                for &i in chunk {
                    let cache = net.forward(&inputs[i])?;
                    let out = cache.output();
                    let g: Vec<f64> = match space {
                        ActionSpace::Discrete(_) => softmax(out).iter().zip(&targets[i]).map(|(p, t)| w * (p - t)).collect(),
                        ActionSpace::Box { .. } => out.iter().zip(&targets[i]).map(|(p, t)| w * (p - t)).collect(),
                    };
                    net.backward_accumulate(&cache, &g, &mut grads)?;
                }
                let mut params = net.flat_params();
                adam.step(&mut params, &grads)?;
                net.set_flat_params(&params)?;
            }
        }
        Ok(Self {
            net,
            space: space.clone(),
        })
    }
}

/// The `(s, s', a)` triples [`bco_train`] collects for a given seed, in
/// collection order.
pub fn exploration_data(env: &dyn Env, steps: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>, Action)> {
    let explore = collect_steps(
        &RandomActions(env.spec().action.clone()),
        env,
        steps,
        derive_seed(seed, streams::EXPLORATION),
    );
    explore
        .iter()
        .flat_map(|t| t.transitions.iter())
        .take(steps)
        .map(|t| (t.s.clone(), t.s_next.clone(), t.a.clone()))
        .collect()
}

/// Best accuracy any inverse model can reach on `data`: each distinct
/// `(s, s')` pair is credited with its most frequent action. Discrete
/// actions only; `None` for an empty set or continuous actions.
pub fn inverse_accuracy_ceiling(data: &[(Vec<f64>, Vec<f64>, Action)]) -> Option<f64> {
    let mut counts: HashMap<(Vec<u64>, usize), usize> = HashMap::new();
    for (s, n, a) in data {
        let Action::Discrete(a) = a else { return None };
        let key: Vec<u64> = s.iter().chain(n).map(|v| v.to_bits()).collect();
        *counts.entry((key, *a)).or_default() += 1;
    }
    if data.is_empty() {
        return None;
    }
    let mut best: HashMap<&[u64], usize> = HashMap::new();
    for ((key, _), &c) in &counts {
        let b = best.entry(key.as_slice()).or_default();
        *b = (*b).max(c);
    }
    Some(best.values().sum::<usize>() as f64 / data.len() as f64)
}

#[derive(Debug, Clone)]
pub struct BcoOutcome {
    pub policy: StochasticPolicy,
    pub inverse: InverseModel,
    /// Held-out accuracy or relative RMSE of the inverse model.
    pub holdout_metric: f64,
    /// Demonstration transitions with their inferred actions.
    pub inferred: Vec<(Vec<f64>, Action)>,
    pub report: TrainReport,
}

/// Behavioral cloning from observation: fit an inverse dynamics model on
/// random exploration, label the demonstrations with it, then clone.
pub fn bco_train(
    env: &dyn Env,
    demos: &DemonstrationSet,
    config: &BcoConfig,
    seed: u64,
) -> Result<BcoOutcome, ImitationError> {
    let start = Instant::now();
    demos.check_env(env)?;
    if config.exploration_steps == 0 {
        return Err(ImitationError::NoData("exploration budget is zero".into()));
    }
    let space = env.spec().action.clone();
    let mut rng = seeded(derive_seed(seed, streams::EXPLORATION + 100));
    let mut data = exploration_data(env, config.exploration_steps, seed);
    data.shuffle(&mut rng);
    if data.len() < 2 {
        return Err(ImitationError::NoData("exploration produced fewer than two transitions".into()));
    }
    let n_hold = ((data.len() as f64 * config.holdout_fraction).round() as usize).clamp(1, data.len() - 1);
    let holdout = data.split_off(data.len() - n_hold);
    let inverse = InverseModel::fit(&space, &data, config, &mut rng)?;
    let holdout_metric = inverse.score(&holdout)?;

    let mut report = TrainReport::new("bco");
    let failed = match space {
        ActionSpace::Discrete(_) => holdout_metric < config.min_accuracy,
        ActionSpace::Box { .. } => holdout_metric > config.max_relative_rmse,
    };
    if failed {
        report.warnings.push(format!("inverse model held-out metric {holdout_metric:.4} misses its threshold"));
    }

    let mut inferred = Vec::with_capacity(demos.transition_count());
    for (s, n) in demos.transitions() {
        inferred.push((s.to_vec(), inverse.infer(s, n)?));
    }

    let mut policy = StochasticPolicy::for_spec(
        env.spec(),
        &config.policy_hidden,
        config.policy_activation,
        config.init_log_std,
        &mut seeded(derive_seed(seed, streams::POLICY_INIT)),
    )?;
    let eval_seed = derive_seed(seed, streams::EVAL);
    let eval_episodes = config.eval_episodes.max(1);
    report.push(IterationRecord::initial(evaluate(&policy, env, eval_episodes, eval_seed)?.mean, None));
    let mut adam = AdamState::new(policy.param_count(), config.bc_adam);
    let mut order: Vec<usize> = (0..inferred.len()).collect();
    let mut grads = vec![0.0; policy.param_count()];
    for epoch in 1..=config.bc_epochs {
        order.shuffle(&mut rng);
        let mut nll = 0.0;
        for chunk in order.chunks(config.bc_minibatch.max(1)) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let w = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let (s, a) = &inferred[i];
                // Descending on −log π, so accumulate the negated gradient.
                nll -= policy.log_prob_grad_accumulate(s, a, -w, &mut grads)?;
            }
            let mut params = policy.flat_params();
            adam.step(&mut params, &grads)?;
            policy.set_flat_params(&params)?;
        }
        report.push(IterationRecord {
            iteration: epoch,
            mean_return: f64::NAN,
            eval_return: evaluate(&policy, env, eval_episodes, eval_seed)?.mean,
            disc_loss: f64::NAN,
            mean_reward: -nll / inferred.len() as f64,
            kl: f64::NAN,
            surrogate_gain: f64::NAN,
            accepted: false,
            occupancy_l1: None,
        });
    }

    report.final_eval_return = report.rows.last().map_or(f64::NAN, |r| r.eval_return);
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
    Ok(BcoOutcome {
        policy,
        inverse,
        holdout_metric,
        inferred,
        report,
    })
}
