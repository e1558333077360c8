//! State-transition occupancy measures
//! `ρ(sᵢ, sⱼ) = Σ_a P(sⱼ | sᵢ, a) π(a | sᵢ) Σ_t γᵗ P(s_t = sᵢ | π)`.
//!
//! The exact oracle solves the discounted visitation system for tabular
//! MDPs. The empirical estimator bins rollout transitions and weights the
//! transition at step `t` by `γᵗ`. Episodic rollouts truncate the infinite
//! sum at the horizon `H`, biasing the estimate by at most
//! [`truncation_bound`] in total mass.
//!
//! Terminal states are absorbing: they receive visitation mass but emit no
//! transitions, so the total-mass identity `Σρ = 1/(1 − γ)` only holds for
//! MDPs without terminals.

use std::collections::BTreeMap;
use std::io::Write;

use crate::envs::{Env, TabularMDP, TabularPolicy, Trajectory};
use crate::numkit::{DenseMatrix, NumError};

#[derive(Debug, thiserror::Error)]
pub enum OccupancyError {
    #[error("gamma must lie in [0, 1), got {0}")]
    Gamma(f64),
    #[error("policy covers {policy_states}x{policy_actions}, mdp is {mdp_states}x{mdp_actions}")]
    PolicyShape {
        policy_states: usize,
        policy_actions: usize,
        mdp_states: usize,
        mdp_actions: usize,
    },
    #[error("visitation system is singular")]
    Singular,
    #[error("empirical occupancy needs at least one trajectory")]
    Empty,
    #[error("occupancies have incompatible supports: {0}")]
    Incompatible(String),
    #[error("occupancy has zero total mass")]
    ZeroMass,
    #[error("binning: {0}")]
    Binning(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<NumError> for OccupancyError {
    fn from(e: NumError) -> Self {
        match e {
            NumError::Singular => OccupancyError::Singular,
            NumError::Io(io) => OccupancyError::Io(io),
            other => OccupancyError::Binning(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OccupancyMode {
    ExactTabular,
    Empirical,
}

/// Uniform grid over a box, `bins` cells per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GridBinning {
    pub bounds: Vec<(f64, f64)>,
    pub bins: usize,
}

pub const DEFAULT_BINS: usize = 16;

impl GridBinning {
    pub fn new(bounds: Vec<(f64, f64)>, bins: usize) -> Result<Self, OccupancyError> {
        if bins == 0 || bounds.is_empty() {
            return Err(OccupancyError::Binning("need at least one bin and one dim".into()));
        }
        if bounds.iter().any(|&(lo, hi)| !(hi > lo)) {
            return Err(OccupancyError::Binning("each bound needs hi > lo".into()));
        }
        let cells = (bins as u128).checked_pow(bounds.len() as u32);
        if cells.is_none_or(|c| c > u64::MAX as u128) {
            return Err(OccupancyError::Binning(format!(
                "{bins}^{} cells overflow the bin index",
                bounds.len()
            )));
        }
        Ok(Self { bounds, bins })
    }

    pub fn for_env(env: &dyn Env, bins: usize) -> Result<Self, OccupancyError> {
        Self::new(env.obs_bounds(), bins)
    }

    /// Mixed-radix cell index; values outside the bounds land in edge cells.
    pub fn index(&self, x: &[f64]) -> usize {
        let mut idx = 0usize;
        for (&v, &(lo, hi)) in x.iter().zip(&self.bounds) {
            let pos = ((v - lo) / (hi - lo) * self.bins as f64).floor();
            let b = if pos.is_nan() {
                0
            } else {
                (pos.max(0.0) as usize).min(self.bins - 1)
            };
            idx = idx * self.bins + b;
        }
        idx
    }
}

/// How states are mapped to occupancy indices.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    /// One-hot tabular observations over `n` states.
    Tabular(usize),
    Grid(GridBinning),
}

impl Support {
    pub fn index(&self, obs: &[f64]) -> usize {
        match self {
            Support::Tabular(_) => crate::envs::argmax(obs),
            Support::Grid(g) => g.index(obs),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Mass {
    Dense(DenseMatrix),
    Sparse(BTreeMap<(usize, usize), f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateTransitionOccupancy {
    mode: OccupancyMode,
    support: Support,
    gamma: f64,
    mass: Mass,
}

impl StateTransitionOccupancy {
    /// Builds a tabular occupancy from an explicit `n × n` mass matrix.
    pub fn from_dense(mass: DenseMatrix, gamma: f64) -> Result<Self, OccupancyError> {
        if mass.rows() != mass.cols() {
            return Err(OccupancyError::Incompatible("mass matrix must be square".into()));
        }
        if mass.data().iter().any(|&m| m < 0.0) {
            return Err(OccupancyError::Incompatible("masses must be nonnegative".into()));
        }
        Ok(Self {
            mode: OccupancyMode::ExactTabular,
            support: Support::Tabular(mass.rows()),
            gamma,
            mass: Mass::Dense(mass),
        })
    }

    pub fn mode(&self) -> OccupancyMode {
        self.mode
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.mass {
            Mass::Dense(m) => {
                if i < m.rows() && j < m.cols() {
                    m.get(i, j)
                } else {
                    0.0
                }
            }
            Mass::Sparse(map) => map.get(&(i, j)).copied().unwrap_or(0.0),
        }
    }

    /// Nonzero entries in `(i, j)` order.
    pub fn entries(&self) -> Vec<((usize, usize), f64)> {
        match &self.mass {
            Mass::Dense(m) => {
                let n = m.cols();
                m.data()
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(k, &v)| ((k / n, k % n), v))
                    .collect()
            }
            Mass::Sparse(map) => map.iter().map(|(&k, &v)| (k, v)).collect(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        match &self.mass {
            Mass::Dense(m) => m.data().iter().sum(),
            Mass::Sparse(map) => map.values().sum(),
        }
    }

    /// Mass function rescaled to sum to one.
    pub fn normalized(&self) -> Result<BTreeMap<(usize, usize), f64>, OccupancyError> {
        let total = self.total_mass();
        if !(total > 0.0) {
            return Err(OccupancyError::ZeroMass);
        }
        Ok(self
            .entries()
            .into_iter()
            .map(|(k, v)| (k, v / total))
            .collect())
    }

    /// Dense `n × n` view for tabular supports.
    pub fn to_dense(&self) -> Option<DenseMatrix> {
        let Support::Tabular(n) = self.support else {
            return None;
        };
        match &self.mass {
            Mass::Dense(m) => Some(m.clone()),
            Mass::Sparse(map) => {
                let mut m = DenseMatrix::zeros(n, n);
                for (&(i, j), &v) in map {
                    m.set(i, j, v);
                }
                Some(m)
            }
        }
    }

    /// Writes `i,j,mass` rows (with header) for every nonzero entry.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<(), OccupancyError> {
        writeln!(w, "i,j,mass")?;
        for ((i, j), v) in self.entries() {
            writeln!(w, "{i},{j},{v:e}")?;
        }
        Ok(())
    }
}

/// Discounted state visitation `d = (I − γ P_πᵀ)⁻¹ p₀`, with terminal rows of
/// `P_π` zeroed.
pub fn discounted_visitation(
    mdp: &TabularMDP,
    policy: &TabularPolicy,
    gamma: f64,
) -> Result<Vec<f64>, OccupancyError> {
    let p_pi = policy_transition_matrix(mdp, policy, gamma)?;
    let n = mdp.n_states();
    let mut system = DenseMatrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            // (I − γ P_πᵀ)[j][i] = δ − γ P_π[i][j]
            let v = system.get(j, i) - gamma * p_pi.get(i, j);
            system.set(j, i, v);
        }
    }
    Ok(system.solve(mdp.initial())?)
}

fn policy_transition_matrix(
    mdp: &TabularMDP,
    policy: &TabularPolicy,
    gamma: f64,
) -> Result<DenseMatrix, OccupancyError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(OccupancyError::Gamma(gamma));
    }
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(OccupancyError::PolicyShape {
            policy_states: policy.n_states(),
            policy_actions: policy.n_actions(),
            mdp_states: mdp.n_states(),
            mdp_actions: mdp.n_actions(),
        });
    }
    let n = mdp.n_states();
    let mut p_pi = DenseMatrix::zeros(n, n);
    for s in 0..n {
        if mdp.is_terminal(s) {
            continue;
        }
        for (a, &pa) in policy.probs(s).iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for (j, &p) in mdp.next_dist(s, a).iter().enumerate() {
                if p != 0.0 {
                    p_pi.set(s, j, p_pi.get(s, j) + pa * p);
                }
            }
        }
    }
    Ok(p_pi)
}

/// Exact `ρ(sᵢ, sⱼ) = d(sᵢ) Σ_a π(a|sᵢ) P(sⱼ|sᵢ, a)`.
pub fn exact_occupancy(
    mdp: &TabularMDP,
    policy: &TabularPolicy,
    gamma: f64,
) -> Result<StateTransitionOccupancy, OccupancyError> {
    let mut p_pi = policy_transition_matrix(mdp, policy, gamma)?;
    let d = discounted_visitation(mdp, policy, gamma)?;
    let n = mdp.n_states();
    for i in 0..n {
        for j in 0..n {
            p_pi.set(i, j, (d[i] * p_pi.get(i, j)).max(0.0));
        }
    }
    StateTransitionOccupancy::from_dense(p_pi, gamma)
}

/// Upper bound `γᴴ / (1 − γ)` on the mass lost by truncating at horizon `H`.
pub fn truncation_bound(gamma: f64, horizon: usize) -> f64 {
    gamma.powi(horizon as i32) / (1.0 - gamma)
}

/// Per-episode discounted transition counts averaged over episodes.
pub fn empirical_occupancy(
    trajectories: &[Trajectory],
    gamma: f64,
    support: &Support,
) -> Result<StateTransitionOccupancy, OccupancyError> {
    if trajectories.is_empty() {
        return Err(OccupancyError::Empty);
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(OccupancyError::Gamma(gamma));
    }
    let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let scale = 1.0 / trajectories.len() as f64;
    for traj in trajectories {
        let mut w = scale;
        for t in &traj.transitions {
            let key = (support.index(&t.s), support.index(&t.s_next));
            *map.entry(key).or_insert(0.0) += w;
            w *= gamma;
        }
    }
    Ok(StateTransitionOccupancy {
        mode: OccupancyMode::Empirical,
        support: support.clone(),
        gamma,
        mass: Mass::Sparse(map),
    })
}

/// Same as [`empirical_occupancy`] over state sequences (demonstrations).
pub fn empirical_occupancy_from_states(
    episodes: &[Vec<Vec<f64>>],
    gamma: f64,
    support: &Support,
) -> Result<StateTransitionOccupancy, OccupancyError> {
    if episodes.is_empty() {
        return Err(OccupancyError::Empty);
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(OccupancyError::Gamma(gamma));
    }
    let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let scale = 1.0 / episodes.len() as f64;
    for states in episodes {
        let mut w = scale;
        for pair in states.windows(2) {
            let key = (support.index(&pair[0]), support.index(&pair[1]));
            *map.entry(key).or_insert(0.0) += w;
            w *= gamma;
        }
    }
    Ok(StateTransitionOccupancy {
        mode: OccupancyMode::Empirical,
        support: support.clone(),
        gamma,
        mass: Mass::Sparse(map),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMetric {
    /// `Σ |â − b̂|` on unit-mass normalizations, in `[0, 2]`.
    L1,
    /// Half the normalized L1, in `[0, 1]`.
    TotalVariation,
}

pub fn occupancy_distance(
    a: &StateTransitionOccupancy,
    b: &StateTransitionOccupancy,
    metric: DistanceMetric,
) -> Result<f64, OccupancyError> {
    if a.support != b.support {
        return Err(OccupancyError::Incompatible(format!(
            "{:?} vs {:?}",
            a.support, b.support
        )));
    }
    let na = a.normalized()?;
    let nb = b.normalized()?;
    let mut l1 = 0.0;
    for (k, &va) in &na {
        l1 += (va - nb.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, &vb) in &nb {
        if !na.contains_key(k) {
            l1 += vb.abs();
        }
    }
    Ok(match metric {
        DistanceMetric::L1 => l1,
        DistanceMetric::TotalVariation => 0.5 * l1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Action, TabularEnv, Transition};
    use crate::rng::seeded;

    fn alternation() -> TabularMDP {
        // s0 → s1 → s0 deterministically, single action.
        TabularMDP::new(2, 1, vec![0.0, 1.0, 1.0, 0.0], vec![0.0; 2], vec![1.0, 0.0], None)
            .unwrap()
    }

    #[test]
    fn self_loop_geometric_series() {
        let mdp = TabularMDP::new(1, 1, vec![1.0], vec![0.0], vec![1.0], None).unwrap();
        let occ = exact_occupancy(&mdp, &TabularPolicy::uniform(1, 1), 0.9).unwrap();
        assert!((occ.get(0, 0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn two_state_alternation() {
        let occ = exact_occupancy(&alternation(), &TabularPolicy::uniform(2, 1), 0.5).unwrap();
        assert!((occ.get(0, 1) - 4.0 / 3.0).abs() < 1e-12);
        assert!((occ.get(1, 0) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(occ.get(0, 0), 0.0);
        assert_eq!(occ.get(1, 1), 0.0);
    }

    #[test]
    fn gamma_one_rejected() {
        let err = exact_occupancy(&alternation(), &TabularPolicy::uniform(2, 1), 1.0);
        assert!(matches!(err, Err(OccupancyError::Gamma(_))));
    }

    #[test]
    fn policy_shape_checked() {
        let err = exact_occupancy(&alternation(), &TabularPolicy::uniform(3, 1), 0.5);
        assert!(matches!(err, Err(OccupancyError::PolicyShape { .. })));
    }

    #[test]
    fn terminal_rows_emit_no_mass() {
        // s0 → s1 (terminal).
        let mdp = TabularMDP::new(
            2,
            1,
            vec![0.0, 1.0, 0.0, 1.0],
            vec![0.0; 2],
            vec![1.0, 0.0],
            Some(vec![false, true]),
        )
        .unwrap();
        let occ = exact_occupancy(&mdp, &TabularPolicy::uniform(2, 1), 0.9).unwrap();
        assert!((occ.get(0, 1) - 1.0).abs() < 1e-12);
        assert_eq!(occ.get(1, 1), 0.0);
        assert!((occ.total_mass() - 1.0).abs() < 1e-12);
    }

    fn traj(pairs: &[(usize, usize)], n: usize) -> Trajectory {
        let oh = |i: usize| crate::envs::one_hot(i, n);
        Trajectory {
            transitions: pairs
                .iter()
                .map(|&(s, s2)| Transition {
                    s: oh(s),
                    a: Action::Discrete(0),
                    s_next: oh(s2),
                    reward: 0.0,
                    done: false,
                })
                .collect(),
            seed: 0,
            total_return: 0.0,
            aborted: false,
        }
    }

    #[test]
    fn single_step_episode_is_unit_mass() {
        let occ = empirical_occupancy(&[traj(&[(0, 1)], 2)], 0.37, &Support::Tabular(2)).unwrap();
        assert_eq!(occ.get(0, 1), 1.0);
        assert_eq!(occ.total_mass(), 1.0);
    }

    #[test]
    fn duplicate_episodes_average_out() {
        let t = traj(&[(0, 1), (1, 0), (0, 1)], 2);
        let one = empirical_occupancy(std::slice::from_ref(&t), 0.9, &Support::Tabular(2)).unwrap();
        let two = empirical_occupancy(&[t.clone(), t], 0.9, &Support::Tabular(2)).unwrap();
        for ((i, j), v) in one.entries() {
            assert!((two.get(i, j) - v).abs() < 1e-15);
        }
        assert_eq!(one.entries().len(), two.entries().len());
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(
            empirical_occupancy(&[], 0.9, &Support::Tabular(2)),
            Err(OccupancyError::Empty)
        ));
    }

    #[test]
    fn distance_identity_and_disjoint() {
        let a = empirical_occupancy(&[traj(&[(0, 1)], 2)], 0.9, &Support::Tabular(2)).unwrap();
        let b = empirical_occupancy(&[traj(&[(1, 0)], 2)], 0.9, &Support::Tabular(2)).unwrap();
        assert_eq!(occupancy_distance(&a, &a, DistanceMetric::L1).unwrap(), 0.0);
        assert_eq!(
            occupancy_distance(&a, &b, DistanceMetric::TotalVariation).unwrap(),
            1.0
        );
    }

    #[test]
    fn alternation_versus_uniform_by_hand() {
        // Normalized alternation: (0,1) = 2/3, (1,0) = 1/3; uniform: 1/4 each.
        // L1 = 1/4 + (2/3 − 1/4) + (1/3 − 1/4) + 1/4 = 1.
        let alt = exact_occupancy(&alternation(), &TabularPolicy::uniform(2, 1), 0.5).unwrap();
        let uniform =
            StateTransitionOccupancy::from_dense(DenseMatrix::from_vec(2, 2, vec![1.0; 4]).unwrap(), 0.5)
                .unwrap();
        let d = occupancy_distance(&alt, &uniform, DistanceMetric::L1).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn incompatible_supports_rejected() {
        let a = empirical_occupancy(&[traj(&[(0, 1)], 2)], 0.9, &Support::Tabular(2)).unwrap();
        let b = empirical_occupancy(&[traj(&[(0, 1)], 3)], 0.9, &Support::Tabular(3)).unwrap();
        assert!(occupancy_distance(&a, &b, DistanceMetric::L1).is_err());
    }

    #[test]
    fn relabeled_actions_give_identical_occupancy() {
        // Swapping action labels in both the MDP and the policy induces the
        // same Markov chain.
        let mut rng = seeded(21);
        let mdp = TabularMDP::random(4, 2, &mut rng);
        let mut p = Vec::new();
        let mut r = Vec::new();
        for s in 0..4 {
            for a in [1, 0] {
                p.extend_from_slice(mdp.next_dist(s, a));
                r.push(mdp.reward(s, a));
            }
        }
        let swapped = TabularMDP::new(4, 2, p, r, mdp.initial().to_vec(), None).unwrap();
        let probs = vec![0.2, 0.8, 0.6, 0.4, 1.0, 0.0, 0.5, 0.5];
        let swapped_probs: Vec<f64> = probs.chunks(2).flat_map(|c| [c[1], c[0]]).collect();
        let a = exact_occupancy(&mdp, &TabularPolicy::new(4, 2, probs).unwrap(), 0.9).unwrap();
        let b = exact_occupancy(&swapped, &TabularPolicy::new(4, 2, swapped_probs).unwrap(), 0.9)
            .unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((a.get(i, j) - b.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grid_binning_clamps_to_edges() {
        let g = GridBinning::new(vec![(0.0, 1.0), (0.0, 1.0)], 4).unwrap();
        assert_eq!(g.index(&[0.0, 0.0]), 0);
        assert_eq!(g.index(&[0.99, 0.0]), 12);
        assert_eq!(g.index(&[5.0, -3.0]), 12);
        assert_eq!(g.index(&[0.3, 0.6]), 4 + 2);
    }

    #[test]
    fn csv_export_lists_nonzero_entries() {
        let occ = exact_occupancy(&alternation(), &TabularPolicy::uniform(2, 1), 0.5).unwrap();
        let mut buf = Vec::new();
        occ.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "i,j,mass");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,1,"));
    }

    #[test]
    fn empirical_matches_exact_on_small_chain() {
        let env = TabularEnv::new("alt", alternation(), 60, 0.5).unwrap();
        let pol = TabularPolicy::uniform(2, 1);
        let trajs = crate::envs::rollout(&pol, &env, 10, 0);
        let emp = empirical_occupancy(&trajs, 0.5, &Support::Tabular(2)).unwrap();
        let exact = exact_occupancy(env.mdp(), &pol, 0.5).unwrap();
        assert!(occupancy_distance(&emp, &exact, DistanceMetric::L1).unwrap() < 1e-12);
    }
}
