use super::{StochasticPolicy, TrpoError, ValueFunction};
use crate::envs::{Action, Trajectory};

/// On-policy transitions flattened across episodes, in episode order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBatch {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    pub next_states: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    /// The step entered a true terminal state; no value is bootstrapped.
    pub terminal: Vec<bool>,
    /// Last recorded step of its episode (terminal, time limit or abort).
    pub episode_end: Vec<bool>,
    /// `log π_old(a|s)`, recorded when the batch is built.
    pub old_log_probs: Vec<f64>,
    /// GAE advantages normalized to mean 0, std 1.
    pub advantages: Vec<f64>,
    pub raw_advantages: Vec<f64>,
    /// Discounted returns-to-go, bootstrapped at time-limit cuts.
    pub returns: Vec<f64>,
    /// Undiscounted environment return of each episode.
    pub episode_returns: Vec<f64>,
}

impl RolloutBatch {
    /// Flattens trajectories and records old log-probabilities under
    /// `policy`. Episodes that end before `horizon` with `done` set are
    /// treated as terminal.
    pub fn from_trajectories(
        trajectories: &[Trajectory],
        policy: &StochasticPolicy,
        horizon: usize,
    ) -> Result<Self, TrpoError> {
        let mut b = Self::default();
        for traj in trajectories.iter().filter(|t| !t.is_empty()) {
            let n = traj.len();
            let last = &traj.transitions[n - 1];
            let terminal_end = last.done && !traj.aborted && n < horizon;
            for (k, t) in traj.transitions.iter().enumerate() {
                let end = k + 1 == n;
                b.old_log_probs.push(policy.log_prob(&t.s, &t.a)?);
                b.states.push(t.s.clone());
                b.actions.push(t.a.clone());
                b.next_states.push(t.s_next.clone());
                b.rewards.push(t.reward);
                b.terminal.push(end && terminal_end);
                b.episode_end.push(end);
            }
            b.episode_returns.push(traj.total_return);
        }
        if b.states.is_empty() {
            return Err(TrpoError::EmptyBatch);
        }
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Replaces per-step rewards (e.g. with discriminator rewards) and clears
    /// any previously computed advantages.
    pub fn set_rewards(&mut self, rewards: Vec<f64>) -> Result<(), TrpoError> {
        if rewards.len() != self.len() {
            return Err(TrpoError::Mismatch(format!(
                "{} rewards for {} steps",
                rewards.len(),
                self.len()
            )));
        }
        self.rewards = rewards;
        self.advantages.clear();
        self.raw_advantages.clear();
        self.returns.clear();
        Ok(())
    }

    pub fn mean_episode_return(&self) -> f64 {
        self.episode_returns.iter().sum::<f64>() / self.episode_returns.len().max(1) as f64
    }
}

/// Generalized advantage estimation with episode boundaries, plus discounted
/// return targets for the value regression.
pub fn compute_advantages(
    batch: &mut RolloutBatch,
    value_fn: &ValueFunction,
    gamma: f64,
    lambda: f64,
) -> Result<(), TrpoError> {
    let values = value_fn.values(&batch.states)?;
    let next_values = value_fn.values(&batch.next_states)?;
    advantages_from_values(batch, &values, &next_values, gamma, lambda)
}

pub(crate) fn advantages_from_values(
    batch: &mut RolloutBatch,
    values: &[f64],
    next_values: &[f64],
    gamma: f64,
    lambda: f64,
) -> Result<(), TrpoError> {
    let n = batch.len();
    if n == 0 {
        return Err(TrpoError::EmptyBatch);
    }
    if values.len() != n || next_values.len() != n || batch.rewards.len() != n {
        return Err(TrpoError::Mismatch("rewards and values are not aligned".into()));
    }
    let mut adv = vec![0.0; n];
    let mut ret = vec![0.0; n];
    let (mut next_adv, mut next_ret) = (0.0, 0.0);
    for t in (0..n).rev() {
        let bootstrap = if batch.terminal[t] { 0.0 } else { next_values[t] };
        if batch.episode_end[t] {
            next_adv = 0.0;
            next_ret = bootstrap;
        }
        let delta = batch.rewards[t] + gamma * bootstrap - values[t];
        adv[t] = delta + gamma * lambda * next_adv;
        ret[t] = batch.rewards[t] + gamma * next_ret;
        next_adv = adv[t];
        next_ret = ret[t];
    }
    if adv.iter().chain(&ret).any(|v| !v.is_finite()) {
        return Err(TrpoError::NonFinite("advantages".into()));
    }
    let mean = adv.iter().sum::<f64>() / n as f64;
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    batch.advantages = if std > 1e-12 {
        adv.iter().map(|a| (a - mean) / std).collect()
    } else {
        vec![0.0; n]
    };
    batch.raw_advantages = adv;
    batch.returns = ret;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn synthetic(rewards: Vec<f64>, ends: &[(usize, bool)]) -> RolloutBatch {
        let n = rewards.len();
        let mut b = RolloutBatch {
            states: vec![vec![0.0]; n],
            next_states: vec![vec![0.0]; n],
            actions: vec![Action::Discrete(0); n],
            rewards,
            terminal: vec![false; n],
            episode_end: vec![false; n],
            old_log_probs: vec![0.0; n],
            ..RolloutBatch::default()
        };
        for &(t, term) in ends {
            b.episode_end[t] = true;
            b.terminal[t] = term;
        }
        b
    }

    /// Σ_l (γλ)^l δ_{t+l} summed directly over the rest of the episode.
    fn brute_force(b: &RolloutBatch, v: &[f64], vn: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
        let n = b.len();
        (0..n)
            .map(|t| {
                let mut acc = 0.0;
                let mut k = t;
                loop {
                    let boot = if b.terminal[k] { 0.0 } else { vn[k] };
                    let delta = b.rewards[k] + gamma * boot - v[k];
                    acc += (gamma * lambda).powi((k - t) as i32) * delta;
                    if b.episode_end[k] {
                        break;
                    }
                    k += 1;
                }
                acc
            })
            .collect()
    }

    #[test]
    fn lambda_zero_is_one_step_td() {
        let mut b = synthetic(vec![1.0, 2.0, 3.0], &[(2, true)]);
        let v = [0.5, -1.0, 2.0];
        let vn = [-1.0, 2.0, 7.0];
        advantages_from_values(&mut b, &v, &vn, 0.9, 0.0).unwrap();
        let want = [1.0 + 0.9 * -1.0 - 0.5, 2.0 + 0.9 * 2.0 + 1.0, 3.0 - 2.0];
        for (a, w) in b.raw_advantages.iter().zip(want) {
            assert!((a - w).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_values_lambda_one_is_return_to_go() {
        let mut b = synthetic(vec![1.0, 1.0, 1.0, 5.0, 1.0], &[(2, false), (4, true)]);
        advantages_from_values(&mut b, &[0.0; 5], &[0.0; 5], 0.5, 1.0).unwrap();
        let want = [1.75, 1.5, 1.0, 5.5, 1.0];
        for ((a, r), w) in b.raw_advantages.iter().zip(&b.returns).zip(want) {
            assert!((a - w).abs() < 1e-12 && (r - w).abs() < 1e-12);
        }
    }

    #[test]
    fn truncated_returns_bootstrap() {
        let mut b = synthetic(vec![1.0, 1.0], &[(1, false)]);
        advantages_from_values(&mut b, &[0.0, 0.0], &[0.0, 10.0], 0.5, 1.0).unwrap();
        assert!((b.returns[1] - 6.0).abs() < 1e-12);
        assert!((b.returns[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn constant_advantages_normalize_to_zero() {
        let mut b = synthetic(vec![1.0; 4], &[(0, true), (1, true), (2, true), (3, true)]);
        advantages_from_values(&mut b, &[0.0; 4], &[0.0; 4], 0.9, 0.9).unwrap();
        assert_eq!(b.advantages, vec![0.0; 4]);
    }

    #[test]
    fn misaligned_values_rejected() {
        let mut b = synthetic(vec![1.0; 3], &[(2, true)]);
        assert!(advantages_from_values(&mut b, &[0.0; 2], &[0.0; 3], 0.9, 0.9).is_err());
    }

    proptest! {
        #[test]
        fn matches_brute_force(seed in 0u64..10_000, n in 1usize..40, gamma in 0.0f64..0.999, lambda in 0.0f64..1.0) {
            let mut rng = seeded(seed);
            let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut ends = Vec::new();
            for t in 0..n - 1 {
                if rng.random_bool(0.2) {
                    ends.push((t, rng.random_bool(0.5)));
                }
            }
            ends.push((n - 1, rng.random_bool(0.5)));
            let mut b = synthetic(rewards, &ends);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let vn: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            advantages_from_values(&mut b, &v, &vn, gamma, lambda).unwrap();
            let want = brute_force(&b, &v, &vn, gamma, lambda);
            for (a, w) in b.raw_advantages.iter().zip(&want) {
                prop_assert!((a - w).abs() < 1e-10);
            }
            let mean = b.advantages.iter().sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-9);
        }
    }
}
