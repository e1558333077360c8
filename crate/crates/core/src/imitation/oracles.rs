//! Hand-derived reference controllers used to check trained experts.

use crate::envs::{Action, ActionSource, PointMassConfig, TabularMDP, TabularPolicy};
use crate::rng::Rng;

/// Discounted LQR feedback gains `(k_pos, k_vel)` for one axis of the point
/// mass, ignoring action clipping. Per axis the dynamics are linear in
/// `(x, v, a)` and the step cost is `x'² + 0.01 a²` on the post-step position.
pub fn lqr_gains(cfg: &PointMassConfig) -> (f64, f64) {
    let dt = cfg.dt;
    let decay = 1.0 - dt * cfg.damping;
    // s' = A s + B a with s = (x, v).
    let a = [[1.0, dt * decay], [0.0, decay]];
    let b = [dt * dt * cfg.force, dt * cfg.force];
    let rho = crate::envs::ACTION_COST;
    let mut p = [[0.0f64; 2]; 2];
    let mut k = [0.0; 2];
    for _ in 0..10_000 {
        // M = Q + γ P with Q = e₁e₁ᵀ applied to the post-step state.
        let m = [[1.0 + cfg.gamma * p[0][0], cfg.gamma * p[0][1]], [cfg.gamma * p[1][0], cfg.gamma * p[1][1]]];
        let mb = [m[0][0] * b[0] + m[0][1] * b[1], m[1][0] * b[0] + m[1][1] * b[1]];
        let bmb = b[0] * mb[0] + b[1] * mb[1] + rho;
        // Bᵀ M A
        let bma = [mb[0] * a[0][0] + mb[1] * a[1][0], mb[0] * a[0][1] + mb[1] * a[1][1]];
        let k_new = [bma[0] / bmb, bma[1] / bmb];
        let mut p_new = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let mut ama = 0.0;
                for r in 0..2 {
                    for c in 0..2 {
                        ama += a[r][i] * m[r][c] * a[c][j];
                    }
                }
                p_new[i][j] = ama - bma[i] * k_new[j];
            }
        }
        let change = (0..2).map(|i| (k_new[i] - k[i]).abs()).fold(0.0, f64::max);
        p = p_new;
        k = k_new;
        if change < 1e-13 {
            break;
        }
    }
    (k[0], k[1])
}

/// Linear state feedback `a = −k_pos (x − target) − k_vel v`, clipped by the
/// environment.
#[derive(Debug, Clone, PartialEq)]
pub struct PdController {
    pub k_pos: f64,
    pub k_vel: f64,
    pub target: Vec<f64>,
}

impl PdController {
    pub fn lqr(cfg: &PointMassConfig) -> Self {
        let (k_pos, k_vel) = lqr_gains(cfg);
        Self {
            k_pos,
            k_vel,
            target: cfg.target.clone(),
        }
    }
}

impl ActionSource for PdController {
    fn act(&self, obs: &[f64], _rng: &mut Rng) -> Action {
        let d = self.target.len();
        Action::Continuous(
            (0..d)
                .map(|i| -self.k_pos * (obs[i] - self.target[i]) - self.k_vel * obs[d + i])
                .collect(),
        )
    }
}

/// Optimal state values and a greedy optimal policy by value iteration.
/// Terminal states have value 0.
pub fn value_iteration(mdp: &TabularMDP, gamma: f64, tol: f64) -> (Vec<f64>, TabularPolicy) {
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    let q = |v: &[f64], s: usize, a: usize| {
        mdp.reward(s, a)
            + gamma
                * mdp
                    .next_dist(s, a)
                    .iter()
                    .zip(v)
                    .map(|(p, x)| p * x)
                    .sum::<f64>()
    };
    let mut v = vec![0.0; n];
    loop {
        let mut delta = 0.0f64;
        let mut next = vec![0.0; n];
        for s in 0..n {
            if !mdp.is_terminal(s) {
                next[s] = (0..na).map(|a| q(&v, s, a)).fold(f64::NEG_INFINITY, f64::max);
            }
            delta = delta.max((next[s] - v[s]).abs());
        }
        v = next;
        if delta < tol {
            break;
        }
    }
    let actions: Vec<usize> = (0..n)
        .map(|s| {
            let qs: Vec<f64> = (0..na).map(|a| q(&v, s, a)).collect();
            crate::envs::argmax(&qs)
        })
        .collect();
    (v, TabularPolicy::deterministic(&actions, na))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{rollout, Env, Gridworld, GridworldConfig, PointMass};
    use crate::imitation::evaluate_source;

    #[test]
    fn lqr_beats_scaled_gains() {
        let cfg = PointMassConfig::default();
        let env = PointMass::new(cfg.clone()).unwrap();
        let lqr = PdController::lqr(&cfg);
        let base = evaluate_source(&lqr, &env, 20, 1).unwrap().mean;
        for scale in [0.5, 2.0] {
            let other = PdController {
                k_pos: lqr.k_pos * scale,
                k_vel: lqr.k_vel * scale,
                target: cfg.target.clone(),
            };
            assert!(evaluate_source(&other, &env, 20, 1).unwrap().mean < base);
        }
    }

    #[test]
    fn gridworld_optimal_policy_reaches_goal() {
        let env = Gridworld::build(&GridworldConfig::default()).unwrap();
        let (v, pi) = value_iteration(env.tabular_mdp().unwrap(), 0.99, 1e-12);
        assert!(v.iter().all(|x| x.is_finite()));
        let trajs = rollout(&pi, &env, 10, 3);
        for t in trajs {
            // Manhattan distance from (0, 0) to (4, 4).
            assert_eq!(t.len(), 8);
            assert_eq!(t.total_return, 1.0);
        }
    }

    #[test]
    fn value_iteration_on_two_state_chain() {
        // State 0 pays 1 for staying; state 1 pays nothing.
        let mdp = TabularMDP::new(
            2,
            2,
            vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0],
            None,
        )
        .unwrap();
        let (v, pi) = value_iteration(&mdp, 0.5, 1e-14);
        assert!((v[0] - 2.0).abs() < 1e-12);
        assert!((v[1] - 1.0).abs() < 1e-12);
        assert_eq!(pi.probs(0), &[1.0, 0.0]);
        assert_eq!(pi.probs(1), &[0.0, 1.0]);
    }
}
