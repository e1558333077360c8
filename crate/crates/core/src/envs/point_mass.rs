use rand::Rng as _;

use super::{clip_action, Action, ActionSpace, Env, EnvError, EnvSpec, StepResult};
use crate::rng::{seeded, Rng};

/// Double integrator driven toward a fixed target.
///
/// Observation is `[position (dim), velocity (dim)]`. With `dt` the step,
/// semi-implicit Euler gives
/// `v ← v + dt (force · a − damping · v)` then `x ← x + dt v`.
/// Reward is `−‖x − target‖² − 0.01 ‖a‖²` on the post-step position and the
/// clipped action. Initial positions are uniform in the box
/// `[−init_radius, init_radius]^dim`, velocities zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMassConfig {
    pub dim: usize,
    pub target: Vec<f64>,
    pub init_radius: f64,
    pub dt: f64,
    pub force: f64,
    pub damping: f64,
    pub horizon: usize,
    pub gamma: f64,
}

impl Default for PointMassConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            target: vec![0.0; 2],
            init_radius: 1.0,
            dt: 0.05,
            force: 4.0,
            damping: 1.0,
            horizon: 100,
            gamma: 0.99,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointMass {
    cfg: PointMassConfig,
    spec: EnvSpec,
    pos: Vec<f64>,
    vel: Vec<f64>,
    t: usize,
    started: bool,
    done: bool,
    rng: Rng,
}

pub const ACTION_COST: f64 = 0.01;

impl PointMass {
    pub fn new(cfg: PointMassConfig) -> Result<Self, EnvError> {
        if cfg.dim == 0 || cfg.target.len() != cfg.dim {
            return Err(EnvError::Invalid(format!(
                "point mass of dim {} needs a target of the same length",
                cfg.dim
            )));
        }
        if !(cfg.init_radius >= 0.0) || !(cfg.dt > 0.0) {
            return Err(EnvError::Invalid("init_radius must be >= 0 and dt > 0".into()));
        }
        let spec = EnvSpec {
            id: "point_mass".into(),
            obs_dim: 2 * cfg.dim,
            state_count: None,
            action: ActionSpace::Box {
                low: vec![-1.0; cfg.dim],
                high: vec![1.0; cfg.dim],
            },
            horizon: cfg.horizon,
            gamma: cfg.gamma,
        };
        spec.validate()?;
        Ok(Self {
            pos: vec![0.0; cfg.dim],
            vel: vec![0.0; cfg.dim],
            cfg,
            spec,
            t: 0,
            started: false,
            done: false,
            rng: seeded(0),
        })
    }

    pub fn config(&self) -> &PointMassConfig {
        &self.cfg
    }

    fn obs(&self) -> Vec<f64> {
        self.pos.iter().chain(&self.vel).copied().collect()
    }
}

impl Env for PointMass {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = seeded(seed);
        let r = self.cfg.init_radius;
        for x in &mut self.pos {
            *x = if r > 0.0 {
                self.rng.random_range(-r..=r)
            } else {
                0.0
            };
        }
        self.vel.iter_mut().for_each(|v| *v = 0.0);
        self.t = 0;
        self.started = true;
        self.done = false;
        self.obs()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        if !self.started {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        let a = clip_action(action, &self.spec.action)?;
        let dt = self.cfg.dt;
        let mut dist2 = 0.0;
        for i in 0..self.cfg.dim {
            self.vel[i] += dt * (self.cfg.force * a[i] - self.cfg.damping * self.vel[i]);
            self.pos[i] += dt * self.vel[i];
            let d = self.pos[i] - self.cfg.target[i];
            dist2 += d * d;
        }
        let effort: f64 = a.iter().map(|x| x * x).sum();
        self.t += 1;
        self.done = self.t >= self.spec.horizon;
        Ok(StepResult {
            obs: self.obs(),
            reward: -dist2 - ACTION_COST * effort,
            done: self.done,
        })
    }

    fn clone_box(&self) -> Box<dyn Env> {
        Box::new(self.clone())
    }

    fn obs_bounds(&self) -> Vec<(f64, f64)> {
        let span = 2.0 * self.cfg.init_radius.max(0.5);
        let vmax = self.cfg.force / self.cfg.damping.max(0.5);
        let mut b: Vec<(f64, f64)> = self
            .cfg
            .target
            .iter()
            .map(|&t| (t - span, t + span))
            .collect();
        b.extend(std::iter::repeat_n((-vmax, vmax), self.cfg.dim));
        b
    }
}
