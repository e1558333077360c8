use super::ImitationError;
use crate::envs::{rollout, ActionSource, Env, RandomActions};
use crate::rng::derive_seed;
use crate::trpo::{Greedy, StochasticPolicy};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub mean: f64,
    /// Population standard deviation of episode returns.
    pub std: f64,
    pub returns: Vec<f64>,
}

/// Random-policy and expert mean returns defining the scaled score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreBaseline {
    pub random_mean: f64,
    pub expert_mean: f64,
}

impl ScoreBaseline {
    pub fn score(&self, mean: f64) -> Result<f64, ImitationError> {
        scaled_score(mean, self.random_mean, self.expert_mean)
    }
}

/// Returns of `n_episodes` episodes under any action source.
pub fn evaluate_source(
    source: &dyn ActionSource,
    env: &dyn Env,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalResult, ImitationError> {
    if n_episodes == 0 {
        return Err(ImitationError::NoData("evaluation needs at least one episode".into()));
    }
    let trajs = rollout(source, env, n_episodes, derive_seed(seed, 0xE7A1));
    let returns: Vec<f64> = trajs.iter().map(|t| t.total_return).collect();
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let std = (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(EvalResult { mean, std, returns })
}

/// Deterministic-mode evaluation: Gaussian policies act at their mean,
/// categorical ones at their most probable action.
pub fn evaluate(
    policy: &StochasticPolicy,
    env: &dyn Env,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalResult, ImitationError> {
    evaluate_source(&Greedy(policy), env, n_episodes, seed)
}

/// Mean return of uniformly random actions.
pub fn random_baseline(env: &dyn Env, n_episodes: usize, seed: u64) -> Result<EvalResult, ImitationError> {
    evaluate_source(&RandomActions(env.spec().action.clone()), env, n_episodes, seed)
}

/// `(mean − random_mean) / (expert_mean − random_mean)`.
pub fn scaled_score(mean: f64, random_mean: f64, expert_mean: f64) -> Result<f64, ImitationError> {
    let denom = expert_mean - random_mean;
    if !(denom.abs() > 1e-12 * expert_mean.abs().max(random_mean.abs()).max(1.0)) {
        return Err(ImitationError::DegenerateScore(expert_mean));
    }
    Ok((mean - random_mean) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{run_episode, Action, DeterministicActions, Gridworld, GridworldConfig, PointMass, PointMassConfig};

    #[test]
    fn scaled_score_fixed_points() {
        assert_eq!(scaled_score(-10.0, -50.0, -10.0).unwrap(), 1.0);
        assert_eq!(scaled_score(-50.0, -50.0, -10.0).unwrap(), 0.0);
        assert_eq!(scaled_score(-30.0, -50.0, -10.0).unwrap(), 0.5);
        assert!(scaled_score(1.0, 2.0, 2.0).is_err());
    }

    #[test]
    fn deterministic_policy_on_deterministic_env_has_zero_std() {
        let env = Gridworld::build(&GridworldConfig::default()).unwrap();
        let right = DeterministicActions(|_: &[f64]| Action::Discrete(0));
        let r = evaluate_source(&right, &env, 5, 1).unwrap();
        assert_eq!(r.std, 0.0);
    }

    #[test]
    fn single_episode_equals_rollout_return() {
        let env = PointMass::new(PointMassConfig::default()).unwrap();
        let source = RandomActions(env.spec().action.clone());
        let r = evaluate_source(&source, &env, 1, 7).unwrap();
        let mut e = env.clone();
        let ep_seed = derive_seed(derive_seed(7, 0xE7A1), 0);
        let t = run_episode(&source, &mut e, ep_seed);
        assert_eq!(r.mean, t.total_return);
        assert_eq!(r.std, 0.0);
    }

    #[test]
    fn zero_episodes_rejected() {
        let env = PointMass::new(PointMassConfig::default()).unwrap();
        assert!(random_baseline(&env, 0, 1).is_err());
    }
}
