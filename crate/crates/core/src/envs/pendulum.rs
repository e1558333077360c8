use rand::Rng as _;

use super::{clip_action, Action, ActionSpace, Env, EnvError, EnvSpec, StepResult};
use crate::rng::{seeded, Rng};

/// Torque-limited pendulum swing-up.
///
/// The angle `θ` is measured from upright, so the pendulum starts hanging at
/// `θ ≈ π`. Dynamics (unit-free parameters `m`, `l`, `g`, damping `b`):
///
/// ```text
/// ω̇ = (g / l) sin θ − b ω + u / (m l²)
/// ```
///
/// integrated with semi-implicit Euler (`ω` first, then `θ`). The mechanical
/// energy `E = ½ m l² ω² + m g l cos θ` changes over one step by
/// `dt · (u ω − b m l² ω²)` plus an O(dt²) integration term. Observation is
/// `[cos θ, sin θ, ω]`, reward `cos θ` after the step. No early termination.
#[derive(Debug, Clone, PartialEq)]
pub struct PendulumConfig {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub damping: f64,
    pub max_torque: f64,
    pub dt: f64,
    /// Initial angle is `π + U(−init_noise, init_noise)`.
    pub init_noise: f64,
    pub horizon: usize,
    pub gamma: f64,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            mass: 1.0,
            length: 1.0,
            gravity: 9.81,
            damping: 0.1,
            max_torque: 2.0,
            dt: 0.05,
            init_noise: 0.1,
            horizon: 200,
            gamma: 0.99,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pendulum {
    cfg: PendulumConfig,
    spec: EnvSpec,
    theta: f64,
    omega: f64,
    t: usize,
    started: bool,
    done: bool,
    rng: Rng,
}

impl Pendulum {
    pub fn new(cfg: PendulumConfig) -> Result<Self, EnvError> {
        if !(cfg.mass > 0.0 && cfg.length > 0.0 && cfg.dt > 0.0 && cfg.max_torque >= 0.0) {
            return Err(EnvError::Invalid("pendulum parameters must be positive".into()));
        }
        let spec = EnvSpec {
            id: "pendulum_swingup".into(),
            obs_dim: 3,
            state_count: None,
            action: ActionSpace::Box {
                low: vec![-cfg.max_torque],
                high: vec![cfg.max_torque],
            },
            horizon: cfg.horizon,
            gamma: cfg.gamma,
        };
        spec.validate()?;
        Ok(Self {
            cfg,
            spec,
            theta: std::f64::consts::PI,
            omega: 0.0,
            t: 0,
            started: false,
            done: false,
            rng: seeded(0),
        })
    }

    pub fn angle(&self) -> f64 {
        self.theta
    }

    pub fn angular_velocity(&self) -> f64 {
        self.omega
    }

    pub fn config(&self) -> &PendulumConfig {
        &self.cfg
    }

    /// Places the pendulum at an explicit state (used by tests and tools).
    pub fn set_state(&mut self, theta: f64, omega: f64) {
        self.theta = theta;
        self.omega = omega;
        self.t = 0;
        self.started = true;
        self.done = false;
    }

    pub fn energy(&self) -> f64 {
        let c = &self.cfg;
        0.5 * c.mass * c.length * c.length * self.omega * self.omega
            + c.mass * c.gravity * c.length * self.theta.cos()
    }

    /// Continuous-time angular acceleration.
    pub fn acceleration(cfg: &PendulumConfig, theta: f64, omega: f64, torque: f64) -> f64 {
        cfg.gravity / cfg.length * theta.sin() - cfg.damping * omega
            + torque / (cfg.mass * cfg.length * cfg.length)
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.omega]
    }
}

impl Env for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = seeded(seed);
        let n = self.cfg.init_noise;
        let jitter = if n > 0.0 { self.rng.random_range(-n..=n) } else { 0.0 };
        self.set_state(std::f64::consts::PI + jitter, 0.0);
        self.obs()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        if !self.started {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        let u = clip_action(action, &self.spec.action)?[0];
        self.omega += self.cfg.dt * Self::acceleration(&self.cfg, self.theta, self.omega, u);
        self.theta += self.cfg.dt * self.omega;
        self.t += 1;
        self.done = self.t >= self.spec.horizon;
        Ok(StepResult {
            obs: self.obs(),
            reward: self.theta.cos(),
            done: self.done,
        })
    }

    fn clone_box(&self) -> Box<dyn Env> {
        Box::new(self.clone())
    }

    fn obs_bounds(&self) -> Vec<(f64, f64)> {
        vec![(-1.0, 1.0), (-1.0, 1.0), (-8.0, 8.0)]
    }
}
