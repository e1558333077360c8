use super::{one_hot, Action, ActionSpace, Env, EnvError, EnvSpec, StepResult};
use crate::rng::{seeded, Rng};

const ROW_TOL: f64 = 1e-12;

/// Finite MDP with transition tensor `P[s][a][s']`, rewards `R[s][a]`, an
/// initial distribution and optional absorbing terminal states.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMDP {
    n_states: usize,
    n_actions: usize,
    /// Flat `[s][a][s']`.
    p: Vec<f64>,
    /// Flat `[s][a]`.
    r: Vec<f64>,
    p0: Vec<f64>,
    terminal: Vec<bool>,
}

impl TabularMDP {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        p: Vec<f64>,
        r: Vec<f64>,
        p0: Vec<f64>,
        terminal: Option<Vec<bool>>,
    ) -> Result<Self, EnvError> {
        if n_states == 0 || n_actions == 0 {
            return Err(EnvError::Invalid("need at least one state and action".into()));
        }
        if p.len() != n_states * n_actions * n_states {
            return Err(EnvError::Invalid(format!(
                "transition tensor has {} entries, expected {}",
                p.len(),
                n_states * n_actions * n_states
            )));
        }
        if r.len() != n_states * n_actions {
            return Err(EnvError::Invalid("reward table has wrong size".into()));
        }
        if p0.len() != n_states {
            return Err(EnvError::Invalid("initial distribution has wrong size".into()));
        }
        let terminal = terminal.unwrap_or_else(|| vec![false; n_states]);
        if terminal.len() != n_states {
            return Err(EnvError::Invalid("terminal flags have wrong size".into()));
        }
        if p.iter().chain(&p0).any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(EnvError::Invalid("probabilities must be finite and nonnegative".into()));
        }
        for (k, row) in p.chunks(n_states).enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_TOL {
                return Err(EnvError::Invalid(format!(
                    "P[{}][{}] sums to {s}",
                    k / n_actions,
                    k % n_actions
                )));
            }
        }
        if (p0.iter().sum::<f64>() - 1.0).abs() > ROW_TOL {
            return Err(EnvError::Invalid("initial distribution does not sum to 1".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            p,
            r,
            p0,
            terminal,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Distribution over next states for `(s, a)`.
    pub fn next_dist(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.p[start..start + self.n_states]
    }

    pub fn prob(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.next_dist(s, a)[s_next]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.r[s * self.n_actions + a]
    }

    pub fn initial(&self) -> &[f64] {
        &self.p0
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn has_terminals(&self) -> bool {
        self.terminal.iter().any(|&t| t)
    }

    /// Random MDP with Dirichlet-like rows and no terminal states.
    pub fn random<R: rand::Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> Self {
        let mut p = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            let row: Vec<f64> = (0..n_states).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
            let total: f64 = row.iter().sum();
            p.extend(row.iter().map(|x| x / total));
        }
        fix_rows(&mut p, n_states);
        let r = (0..n_states * n_actions).map(|_| rng.random::<f64>()).collect();
        let mut p0: Vec<f64> = (0..n_states).map(|_| rng.random::<f64>() + 0.01).collect();
        let total: f64 = p0.iter().sum();
        p0.iter_mut().for_each(|x| *x /= total);
        fix_rows(&mut p0, n_states);
        Self::new(n_states, n_actions, p, r, p0, None).expect("random MDP is valid")
    }
}

/// Pushes rounding residue of each row onto its largest entry.
pub(crate) fn fix_rows(p: &mut [f64], width: usize) {
    for row in p.chunks_mut(width) {
        let s: f64 = row.iter().sum();
        let k = super::argmax(row);
        row[k] += 1.0 - s;
    }
}

/// Tabular stochastic policy `π[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    n_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self, EnvError> {
        if probs.len() != n_states * n_actions {
            return Err(EnvError::Invalid("policy table has wrong size".into()));
        }
        for (s, row) in probs.chunks(n_actions).enumerate() {
            if row.iter().any(|&x| !(x >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(EnvError::Invalid(format!("policy row {s} is not a distribution")));
            }
        }
        Ok(Self { n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn deterministic(actions: &[usize], n_actions: usize) -> Self {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * n_actions + a] = 1.0;
        }
        Self { n_actions, probs }
    }

    pub fn n_states(&self) -> usize {
        self.probs.len() / self.n_actions
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn probs(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        sample_index(self.probs(s), rng)
    }
}

impl super::ActionSource for TabularPolicy {
    fn act(&self, obs: &[f64], rng: &mut Rng) -> Action {
        Action::Discrete(self.sample(super::argmax(obs), rng))
    }
}

pub(crate) fn sample_index<R: rand::Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// A [`TabularMDP`] run as an episodic environment with one-hot observations.
///
/// Episodes end on entering a terminal state or after `horizon` steps.
#[derive(Debug, Clone)]
pub struct TabularEnv {
    mdp: TabularMDP,
    spec: EnvSpec,
    state: Option<usize>,
    t: usize,
    done: bool,
    rng: Rng,
}

impl TabularEnv {
    pub fn new(id: &str, mdp: TabularMDP, horizon: usize, gamma: f64) -> Result<Self, EnvError> {
        let spec = EnvSpec {
            id: id.to_string(),
            obs_dim: mdp.n_states(),
            state_count: Some(mdp.n_states()),
            action: ActionSpace::Discrete(mdp.n_actions()),
            horizon,
            gamma,
        };
        spec.validate()?;
        Ok(Self {
            mdp,
            spec,
            state: None,
            t: 0,
            done: false,
            rng: seeded(0),
        })
    }

    pub fn mdp(&self) -> &TabularMDP {
        &self.mdp
    }

    pub fn state(&self) -> Option<usize> {
        self.state
    }
}

impl Env for TabularEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = seeded(seed);
        let s = sample_index(self.mdp.initial(), &mut self.rng);
        self.state = Some(s);
        self.t = 0;
        self.done = false;
        one_hot(s, self.mdp.n_states())
    }

    fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        let s = self.state.ok_or(EnvError::NotReset)?;
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        let a = match action {
            Action::Discrete(a) if *a < self.mdp.n_actions() => *a,
            other => {
                return Err(EnvError::InvalidAction(format!(
                    "{other:?} outside Discrete({})",
                    self.mdp.n_actions()
                )))
            }
        };
        let s_next = sample_index(self.mdp.next_dist(s, a), &mut self.rng);
        // Sampled counterpart of R(s, a): the table stores the expected value.
        let reward = self.mdp.reward(s, a);
        self.state = Some(s_next);
        self.t += 1;
        self.done = self.mdp.is_terminal(s_next) || self.t >= self.spec.horizon;
        Ok(StepResult {
            obs: one_hot(s_next, self.mdp.n_states()),
            reward,
            done: self.done,
        })
    }

    fn clone_box(&self) -> Box<dyn Env> {
        Box::new(self.clone())
    }

    fn state_index(&self, obs: &[f64]) -> Option<usize> {
        Some(super::argmax(obs))
    }

    fn tabular_mdp(&self) -> Option<&TabularMDP> {
        Some(&self.mdp)
    }

    fn obs_bounds(&self) -> Vec<(f64, f64)> {
        vec![(0.0, 1.0); self.spec.obs_dim]
    }
}
