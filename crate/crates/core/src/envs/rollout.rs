use rand::Rng as _;
use rayon::prelude::*;

use super::{Action, ActionSpace, Env};
use crate::rng::{derive_seed, seeded, Rng};

/// Anything that picks actions from observations.
pub trait ActionSource: Sync {
    fn act(&self, obs: &[f64], rng: &mut Rng) -> Action;
}

/// Uniformly random actions over the action space.
#[derive(Debug, Clone)]
pub struct RandomActions(pub ActionSpace);

impl ActionSource for RandomActions {
    fn act(&self, _obs: &[f64], rng: &mut Rng) -> Action {
        match &self.0 {
            ActionSpace::Discrete(n) => Action::Discrete(rng.random_range(0..*n)),
            ActionSpace::Box { low, high } => Action::Continuous(
                low.iter()
                    .zip(high)
                    .map(|(&lo, &hi)| rng.random_range(lo..=hi))
                    .collect(),
            ),
        }
    }
}

/// Wraps a closure as a deterministic controller.
pub struct DeterministicActions<F>(pub F);

impl<F> ActionSource for DeterministicActions<F>
where
    F: Fn(&[f64]) -> Action + Sync,
{
    fn act(&self, obs: &[f64], _rng: &mut Rng) -> Action {
        (self.0)(obs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Action,
    pub s_next: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    pub seed: u64,
    pub total_return: f64,
    /// Set when the policy emitted a non-finite action and the episode was cut.
    pub aborted: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Ordered states `s₀, s₁, ..., s_T`.
    pub fn states(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = self.transitions.iter().map(|t| t.s.clone()).collect();
        if let Some(last) = self.transitions.last() {
            out.push(last.s_next.clone());
        }
        out
    }
}

/// Runs one episode on `env`, reset with `seed`. Action noise uses a stream
/// derived from the same seed.
pub fn run_episode(policy: &dyn ActionSource, env: &mut dyn Env, seed: u64) -> Trajectory {
    let mut rng = seeded(derive_seed(seed, 0xAC7));
    let mut obs = env.reset(seed);
    let mut transitions = Vec::with_capacity(env.spec().horizon);
    let mut total = 0.0;
    let mut aborted = false;
    loop {
        let action = policy.act(&obs, &mut rng);
        if !action.is_finite() {
            aborted = true;
            break;
        }
        let step = match env.step(&action) {
            Ok(step) => step,
            Err(_) => {
                aborted = true;
                break;
            }
        };
        total += step.reward;
        let done = step.done;
        transitions.push(Transition {
            s: std::mem::replace(&mut obs, step.obs.clone()),
            a: action,
            s_next: step.obs,
            reward: step.reward,
            done,
        });
        if done {
            break;
        }
    }
    Trajectory {
        transitions,
        seed,
        total_return: total,
        aborted,
    }
}

/// `n_episodes` episodes whose seeds derive from `seed` and the episode
/// index. Episodes run in parallel on independent environment clones; the
/// output is in episode order.
pub fn rollout(
    policy: &dyn ActionSource,
    env: &dyn Env,
    n_episodes: usize,
    seed: u64,
) -> Vec<Trajectory> {
    episode_range(policy, env, 0, n_episodes, seed)
}

fn episode_range(
    policy: &dyn ActionSource,
    env: &dyn Env,
    start: usize,
    end: usize,
    seed: u64,
) -> Vec<Trajectory> {
    (start..end)
        .into_par_iter()
        .map(|i| {
            let mut e = env.clone_box();
            run_episode(policy, e.as_mut(), derive_seed(seed, i as u64))
        })
        .collect()
}

/// Collects whole episodes until at least `min_steps` transitions exist.
/// Equivalent to a prefix of `rollout(policy, env, ∞, seed)`.
pub fn collect_steps(
    policy: &dyn ActionSource,
    env: &dyn Env,
    min_steps: usize,
    seed: u64,
) -> Vec<Trajectory> {
    let horizon = env.spec().horizon.max(1);
    let mut out: Vec<Trajectory> = Vec::new();
    let mut steps = 0;
    while steps < min_steps {
        let chunk = (min_steps - steps).div_ceil(horizon).max(1);
        let start = out.len();
        for traj in episode_range(policy, env, start, start + chunk, seed) {
            if steps >= min_steps {
                break;
            }
            steps += traj.len().max(1);
            out.push(traj);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Gridworld, GridworldConfig, PointMass, PointMassConfig};

    #[test]
    fn deterministic_policy_repeats() {
        let env = PointMass::new(PointMassConfig::default()).unwrap();
        let ctrl = DeterministicActions(|obs: &[f64]| {
            Action::Continuous(vec![-obs[0] - obs[2], -obs[1] - obs[3]])
        });
        let a = rollout(&ctrl, &env, 4, 11);
        let b = rollout(&ctrl, &env, 4, 11);
        assert_eq!(a, b);
        assert!(a.iter().all(|t| t.len() <= env.spec().horizon));
    }

    #[test]
    fn random_policy_is_seeded() {
        let env = Gridworld::build(&GridworldConfig::default()).unwrap();
        let pol = RandomActions(env.spec().action.clone());
        assert_eq!(rollout(&pol, &env, 5, 3), rollout(&pol, &env, 5, 3));
        assert_ne!(rollout(&pol, &env, 5, 3), rollout(&pol, &env, 5, 4));
    }

    #[test]
    fn done_only_at_end() {
        let env = Gridworld::build(&GridworldConfig::default()).unwrap();
        let pol = RandomActions(env.spec().action.clone());
        for traj in rollout(&pol, &env, 20, 0) {
            let n = traj.len();
            for (i, t) in traj.transitions.iter().enumerate() {
                assert_eq!(t.done, i + 1 == n);
            }
        }
    }

    #[test]
    fn non_finite_actions_abort() {
        let env = PointMass::new(PointMassConfig::default()).unwrap();
        let bad = DeterministicActions(|_: &[f64]| Action::Continuous(vec![f64::NAN, 0.0]));
        let trajs = rollout(&bad, &env, 2, 0);
        assert!(trajs.iter().all(|t| t.aborted && t.is_empty()));
    }

    #[test]
    fn collect_steps_is_prefix_of_rollout() {
        let env = Gridworld::build(&GridworldConfig::default()).unwrap();
        let pol = RandomActions(env.spec().action.clone());
        let batch = collect_steps(&pol, &env, 300, 8);
        let total: usize = batch.iter().map(Trajectory::len).sum();
        assert!(total >= 300);
        let reference = rollout(&pol, &env, batch.len(), 8);
        assert_eq!(batch, reference);
    }
}
