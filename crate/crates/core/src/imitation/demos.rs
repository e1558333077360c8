//! Demonstration files.
//!
//! State-only layout (little-endian):
//!
//! ```text
//! magic        8 bytes  "IFODEMO\0"
//! version      u32      currently 1
//! env id       u32 byte length + UTF-8
//! state dim    u64
//! count        u64      number of trajectories
//! seed         u64      recording seed
//! expert mean  f64      mean return of the recorded episodes
//! per trajectory:
//!     len      u64      number of states
//!     states   len × state dim × f64
//! ```
//!
//! The action-retaining variant uses magic `"IFOADEM\0"`, adds
//! `action kind u32 (0 discrete, 1 continuous)` and `action dim u64` after the
//! expert mean, and stores `len − 1` action vectors after each trajectory's
//! states. Discrete actions are stored as their index.

use std::io::{Read, Write};
use std::path::Path;

use super::ImitationError;
use crate::envs::{rollout, Action, ActionSpace, Env, Trajectory};
use crate::numkit::checkpoint::{
    read_f64s, read_str, read_u32, read_u64, write_f64s, write_str, write_u32, write_u64,
};
use crate::numkit::NumError;
use crate::rng::{derive_seed, seeded};
use crate::trpo::{Greedy, StochasticPolicy};

pub const DEMO_MAGIC: &[u8; 8] = b"IFODEMO\0";
pub const ACTION_DEMO_MAGIC: &[u8; 8] = b"IFOADEM\0";
pub const DEMO_VERSION: u32 = 1;

/// Guards allocation when reading corrupt headers.
const MAX_ELEMENTS: u64 = 1 << 28;

/// Expert state trajectories. The type holds no actions.
#[derive(Debug, Clone, PartialEq)]
pub struct DemonstrationSet {
    env_id: String,
    state_dim: usize,
    seed: u64,
    expert_mean_return: f64,
    trajectories: Vec<Vec<Vec<f64>>>,
}

impl DemonstrationSet {
    pub fn new(
        env_id: &str,
        state_dim: usize,
        seed: u64,
        expert_mean_return: f64,
        trajectories: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self, ImitationError> {
        for (k, traj) in trajectories.iter().enumerate() {
            if traj.len() < 2 {
                return Err(ImitationError::Format(format!(
                    "trajectory {k} has {} states; at least one transition is needed",
                    traj.len()
                )));
            }
            if let Some(bad) = traj.iter().find(|s| s.len() != state_dim) {
                return Err(ImitationError::Format(format!(
                    "trajectory {k} contains a state of dim {}, expected {state_dim}",
                    bad.len()
                )));
            }
        }
        Ok(Self {
            env_id: env_id.to_string(),
            state_dim,
            seed,
            expert_mean_return,
            trajectories,
        })
    }

    pub fn env_id(&self) -> &str {
        &self.env_id
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn expert_mean_return(&self) -> f64 {
        self.expert_mean_return
    }

    pub fn trajectories(&self) -> &[Vec<Vec<f64>>] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn transition_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.len() - 1).sum()
    }

    /// Every consecutive `(s, s')` pair across all trajectories.
    pub fn transitions(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.trajectories
            .iter()
            .flat_map(|t| t.windows(2).map(|w| (w[0].as_slice(), w[1].as_slice())))
    }

    /// The first `n` trajectories. The expert mean is kept from the full set.
    pub fn take(&self, n: usize) -> Result<Self, ImitationError> {
        if n == 0 || n > self.len() {
            return Err(ImitationError::Mismatch(format!(
                "cannot take {n} of {} trajectories",
                self.len()
            )));
        }
        let mut out = self.clone();
        out.trajectories.truncate(n);
        Ok(out)
    }

    pub fn check_env(&self, env: &dyn Env) -> Result<(), ImitationError> {
        check_env(&self.env_id, self.state_dim, env)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), ImitationError> {
        write_header(w, DEMO_MAGIC, &self.env_id, self.state_dim, self.len(), self.seed, self.expert_mean_return)?;
        for traj in &self.trajectories {
            write_states(w, traj)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, ImitationError> {
        let h = read_header(r, DEMO_MAGIC)?;
        let mut trajectories = Vec::with_capacity(h.count.min(1024));
        for _ in 0..h.count {
            trajectories.push(read_states(r, h.state_dim)?);
        }
        expect_eof(r)?;
        Self::new(&h.env_id, h.state_dim, h.seed, h.expert_mean, trajectories)
    }

    pub fn save(&self, path: &Path) -> Result<(), ImitationError> {
        save_with(path, |w| self.write_to(w))
    }

    pub fn load(path: &Path) -> Result<Self, ImitationError> {
        let bytes = std::fs::read(path).map_err(|e| ImitationError::io(path, e))?;
        Self::read_from(&mut bytes.as_slice())
    }
}

/// Expert trajectories with their actions, for the action-aware baseline
/// only.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDemonstrationSet {
    states: DemonstrationSet,
    action_space: ActionSpace,
    /// Per trajectory, one action per transition.
    actions: Vec<Vec<Action>>,
}

impl ActionDemonstrationSet {
    pub fn new(
        states: DemonstrationSet,
        action_space: ActionSpace,
        actions: Vec<Vec<Action>>,
    ) -> Result<Self, ImitationError> {
        if actions.len() != states.len() {
            return Err(ImitationError::Format("one action sequence per trajectory is required".into()));
        }
        for (k, (acts, traj)) in actions.iter().zip(states.trajectories()).enumerate() {
            if acts.len() + 1 != traj.len() {
                return Err(ImitationError::Format(format!(
                    "trajectory {k} has {} states but {} actions",
                    traj.len(),
                    acts.len()
                )));
            }
            if acts.iter().any(|a| !action_fits(a, &action_space)) {
                return Err(ImitationError::Format(format!(
                    "trajectory {k} has actions outside {action_space:?}"
                )));
            }
        }
        Ok(Self {
            states,
            action_space,
            actions,
        })
    }

    pub fn states(&self) -> &DemonstrationSet {
        &self.states
    }

    pub fn action_space(&self) -> &ActionSpace {
        &self.action_space
    }

    pub fn actions(&self) -> &[Vec<Action>] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Every `(s, a)` pair across all trajectories.
    pub fn state_actions(&self) -> impl Iterator<Item = (&[f64], &Action)> {
        self.states
            .trajectories()
            .iter()
            .zip(&self.actions)
            .flat_map(|(t, acts)| t.iter().map(Vec::as_slice).zip(acts))
    }

    pub fn take(&self, n: usize) -> Result<Self, ImitationError> {
        let states = self.states.take(n)?;
        Ok(Self {
            states,
            action_space: self.action_space.clone(),
            actions: self.actions[..n].to_vec(),
        })
    }

    /// Same states with every action replaced by a uniform random one.
    pub fn with_random_actions(&self, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let source = crate::envs::RandomActions(self.action_space.clone());
        let actions = self
            .actions
            .iter()
            .map(|acts| {
                acts.iter()
                    .map(|_| crate::envs::ActionSource::act(&source, &[], &mut rng))
                    .collect()
            })
            .collect();
        Self {
            states: self.states.clone(),
            action_space: self.action_space.clone(),
            actions,
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), ImitationError> {
        let s = &self.states;
        write_header(w, ACTION_DEMO_MAGIC, s.env_id(), s.state_dim(), s.len(), s.seed(), s.expert_mean_return())?;
        let (kind, dim) = match &self.action_space {
            ActionSpace::Discrete(n) => (0, *n),
            ActionSpace::Box { low, .. } => (1, low.len()),
        };
        write_u32(w, kind)?;
        write_u64(w, dim as u64)?;
        if let ActionSpace::Box { low, high } = &self.action_space {
            write_f64s(w, low)?;
            write_f64s(w, high)?;
        }
        for (traj, acts) in s.trajectories().iter().zip(&self.actions) {
            write_states(w, traj)?;
            for a in acts {
                match a {
                    Action::Discrete(i) => write_f64s(w, &[*i as f64])?,
                    Action::Continuous(v) => write_f64s(w, v)?,
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, ImitationError> {
        let h = read_header(r, ACTION_DEMO_MAGIC)?;
        let kind = read_u32(r)?;
        let dim = read_len(r)?;
        let space = match kind {
            0 => ActionSpace::Discrete(dim),
            1 => ActionSpace::Box {
                low: read_f64s(r, dim)?,
                high: read_f64s(r, dim)?,
            },
            other => return Err(ImitationError::Format(format!("unknown action kind {other}"))),
        };
        let width = if kind == 0 { 1 } else { dim };
        let mut trajectories = Vec::new();
        let mut actions = Vec::new();
        for _ in 0..h.count {
            let traj = read_states(r, h.state_dim)?;
            let mut acts = Vec::with_capacity(traj.len().saturating_sub(1));
            for _ in 1..traj.len() {
                let v = read_f64s(r, width)?;
                acts.push(if kind == 0 {
                    if v[0] < 0.0 || v[0].fract() != 0.0 {
                        return Err(ImitationError::Format(format!("bad discrete action {}", v[0])));
                    }
                    Action::Discrete(v[0] as usize)
                } else {
                    Action::Continuous(v)
                });
            }
            trajectories.push(traj);
            actions.push(acts);
        }
        expect_eof(r)?;
        let states = DemonstrationSet::new(&h.env_id, h.state_dim, h.seed, h.expert_mean, trajectories)?;
        Self::new(states, space, actions)
    }

    pub fn save(&self, path: &Path) -> Result<(), ImitationError> {
        save_with(path, |w| self.write_to(w))
    }

    pub fn load(path: &Path) -> Result<Self, ImitationError> {
        let bytes = std::fs::read(path).map_err(|e| ImitationError::io(path, e))?;
        Self::read_from(&mut bytes.as_slice())
    }
}

fn action_fits(a: &Action, space: &ActionSpace) -> bool {
    match (a, space) {
        (Action::Discrete(i), ActionSpace::Discrete(n)) => i < n,
        (Action::Continuous(v), ActionSpace::Box { low, .. }) => v.len() == low.len(),
        _ => false,
    }
}

pub(crate) fn check_env(env_id: &str, state_dim: usize, env: &dyn Env) -> Result<(), ImitationError> {
    let spec = env.spec();
    if spec.id != env_id || spec.obs_dim != state_dim {
        return Err(ImitationError::Mismatch(format!(
            "demonstrations are for `{env_id}` (state dim {state_dim}), environment is `{}` (obs dim {})",
            spec.id, spec.obs_dim
        )));
    }
    Ok(())
}

struct Header {
    env_id: String,
    state_dim: usize,
    count: usize,
    seed: u64,
    expert_mean: f64,
}

fn write_header<W: Write>(
    w: &mut W,
    magic: &[u8; 8],
    env_id: &str,
    state_dim: usize,
    count: usize,
    seed: u64,
    expert_mean: f64,
) -> Result<(), NumError> {
    w.write_all(magic)?;
    w.write_all(&DEMO_VERSION.to_le_bytes())?;
    write_str(w, env_id)?;
    write_u64(w, state_dim as u64)?;
    write_u64(w, count as u64)?;
    write_u64(w, seed)?;
    write_f64s(w, &[expert_mean])
}

fn read_header<R: Read>(r: &mut R, magic: &[u8; 8]) -> Result<Header, ImitationError> {
    let mut m = [0u8; 8];
    r.read_exact(&mut m).map_err(NumError::from)?;
    if &m != magic {
        return Err(ImitationError::Format("not a demonstration file of this kind".into()));
    }
    let version = read_u32(r)?;
    if version != DEMO_VERSION {
        return Err(ImitationError::Format(format!("unsupported demonstration version {version}")));
    }
    let env_id = read_str(r)?;
    let state_dim = read_len(r)?;
    let count = read_len(r)?;
    let seed = read_u64(r)?;
    let expert_mean = read_f64s(r, 1)?[0];
    Ok(Header {
        env_id,
        state_dim,
        count,
        seed,
        expert_mean,
    })
}

fn read_len<R: Read>(r: &mut R) -> Result<usize, ImitationError> {
    let v = read_u64(r)?;
    if v > MAX_ELEMENTS {
        return Err(ImitationError::Format(format!("implausible length {v}")));
    }
    Ok(v as usize)
}

fn write_states<W: Write>(w: &mut W, traj: &[Vec<f64>]) -> Result<(), NumError> {
    write_u64(w, traj.len() as u64)?;
    for s in traj {
        write_f64s(w, s)?;
    }
    Ok(())
}

fn read_states<R: Read>(r: &mut R, dim: usize) -> Result<Vec<Vec<f64>>, ImitationError> {
    let len = read_len(r)?;
    if (len as u64) * (dim as u64) > MAX_ELEMENTS {
        return Err(ImitationError::Format("trajectory too large".into()));
    }
    let flat = read_f64s(r, len * dim)?;
    Ok(if dim == 0 {
        vec![Vec::new(); len]
    } else {
        flat.chunks(dim).map(<[f64]>::to_vec).collect()
    })
}

fn expect_eof<R: Read>(r: &mut R) -> Result<(), ImitationError> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe).map_err(NumError::from)? {
        0 => Ok(()),
        _ => Err(ImitationError::Format("trailing bytes after demonstrations".into())),
    }
}

fn save_with<F>(path: &Path, write: F) -> Result<(), ImitationError>
where
    F: FnOnce(&mut Vec<u8>) -> Result<(), ImitationError>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    std::fs::write(path, buf).map_err(|e| ImitationError::io(path, e))
}

fn expert_episodes(expert: &StochasticPolicy, env: &dyn Env, n: usize, seed: u64) -> Result<Vec<Trajectory>, ImitationError> {
    if n == 0 {
        return Err(ImitationError::NoData("at least one demonstration is required".into()));
    }
    let trajs = rollout(&Greedy(expert), env, n, derive_seed(seed, 0xDE30));
    if let Some(t) = trajs.iter().find(|t| t.aborted || t.is_empty()) {
        return Err(ImitationError::Diverged {
            iteration: 0,
            reason: format!("expert episode with seed {} aborted", t.seed),
            last_good: None,
        });
    }
    Ok(trajs)
}

fn mean_return(trajs: &[Trajectory]) -> f64 {
    trajs.iter().map(|t| t.total_return).sum::<f64>() / trajs.len() as f64
}

/// Runs the expert greedily for `n` episodes and keeps only the states.
pub fn record_demonstrations(
    expert: &StochasticPolicy,
    env: &dyn Env,
    n_trajectories: usize,
    seed: u64,
) -> Result<DemonstrationSet, ImitationError> {
    let trajs = expert_episodes(expert, env, n_trajectories, seed)?;
    let spec = env.spec();
    let mean = mean_return(&trajs);
    let states = trajs.into_iter().map(|t| t.states()).collect();
    DemonstrationSet::new(&spec.id, spec.obs_dim, seed, mean, states)
}

/// Action-retaining recording for the action-aware baseline. States are
/// identical to [`record_demonstrations`] with the same arguments.
pub fn record_action_demonstrations(
    expert: &StochasticPolicy,
    env: &dyn Env,
    n_trajectories: usize,
    seed: u64,
) -> Result<ActionDemonstrationSet, ImitationError> {
    let trajs = expert_episodes(expert, env, n_trajectories, seed)?;
    let spec = env.spec();
    let mean = mean_return(&trajs);
    let actions = trajs
        .iter()
        .map(|t| t.transitions.iter().map(|tr| tr.a.clone()).collect())
        .collect();
    let states = trajs.iter().map(Trajectory::states).collect();
    let states = DemonstrationSet::new(&spec.id, spec.obs_dim, seed, mean, states)?;
    ActionDemonstrationSet::new(states, spec.action.clone(), actions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Gridworld, GridworldConfig, PointMass, PointMassConfig};
    use crate::numkit::Activation;

    fn point_mass_expert() -> (PointMass, StochasticPolicy) {
        let env = PointMass::new(PointMassConfig::default()).unwrap();
        let mut rng = seeded(1);
        let policy = StochasticPolicy::for_spec(env.spec(), &[8], Activation::Tanh, -0.5, &mut rng).unwrap();
        (env, policy)
    }

    #[test]
    fn single_trajectory() {
        let (env, expert) = point_mass_expert();
        let demos = record_demonstrations(&expert, &env, 1, 3).unwrap();
        assert_eq!(demos.len(), 1);
        assert_eq!(demos.trajectories()[0].len(), env.spec().horizon + 1);
        assert_eq!(demos.transition_count(), env.spec().horizon);
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let (env, expert) = point_mass_expert();
        let demos = record_demonstrations(&expert, &env, 3, 4).unwrap();
        let mut buf = Vec::new();
        demos.write_to(&mut buf).unwrap();
        let back = DemonstrationSet::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, demos);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn action_round_trip_and_shared_states() {
        let (env, expert) = point_mass_expert();
        let with_actions = record_action_demonstrations(&expert, &env, 2, 5).unwrap();
        let states_only = record_demonstrations(&expert, &env, 2, 5).unwrap();
        assert_eq!(with_actions.states(), &states_only);
        let mut buf = Vec::new();
        with_actions.write_to(&mut buf).unwrap();
        assert_eq!(ActionDemonstrationSet::read_from(&mut buf.as_slice()).unwrap(), with_actions);

        let grid = Gridworld::build(&GridworldConfig::default()).unwrap();
        let mut rng = seeded(2);
        let cat = StochasticPolicy::for_spec(grid.spec(), &[8], Activation::Tanh, 0.0, &mut rng).unwrap();
        let d = record_action_demonstrations(&cat, &grid, 2, 6).unwrap();
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        assert_eq!(ActionDemonstrationSet::read_from(&mut buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn state_only_reader_rejects_action_files() {
        let (env, expert) = point_mass_expert();
        let d = record_action_demonstrations(&expert, &env, 1, 5).unwrap();
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        assert!(DemonstrationSet::read_from(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn corrupt_files_rejected() {
        let (env, expert) = point_mass_expert();
        let demos = record_demonstrations(&expert, &env, 2, 4).unwrap();
        let mut buf = Vec::new();
        demos.write_to(&mut buf).unwrap();
        let mut short = buf.clone();
        short.truncate(buf.len() - 3);
        assert!(DemonstrationSet::read_from(&mut short.as_slice()).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(DemonstrationSet::read_from(&mut long.as_slice()).is_err());
        let mut magic = buf;
        magic[0] = b'X';
        assert!(DemonstrationSet::read_from(&mut magic.as_slice()).is_err());
    }

    #[test]
    fn zero_demonstrations_rejected() {
        let (env, expert) = point_mass_expert();
        assert!(record_demonstrations(&expert, &env, 0, 1).is_err());
    }

    #[test]
    fn take_and_env_check() {
        let (env, expert) = point_mass_expert();
        let demos = record_demonstrations(&expert, &env, 4, 4).unwrap();
        assert_eq!(demos.take(2).unwrap().trajectories(), &demos.trajectories()[..2]);
        assert!(demos.take(5).is_err());
        assert!(demos.check_env(&env).is_ok());
        let grid = Gridworld::build(&GridworldConfig::default()).unwrap();
        assert!(demos.check_env(&grid).is_err());
    }

    #[test]
    fn randomized_actions_keep_states() {
        let (env, expert) = point_mass_expert();
        let d = record_action_demonstrations(&expert, &env, 2, 5).unwrap();
        let r = d.with_random_actions(9);
        assert_eq!(r.states(), d.states());
        assert_ne!(r.actions(), d.actions());
    }
}
