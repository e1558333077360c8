//! Experiment configuration, read from TOML. Unknown keys anywhere are
//! errors.
//!
//! ```toml
//! algorithm = "gaifo"          # expert | gaifo | gail | bco
//! seeds = [0, 1, 2]            # default 0..10
//! iterations = 200
//! demos = "demos/pm.ifodemo"   # state-only demonstrations
//! action_demos = "demos/pm.ifoadem"  # GAIL only
//! demo_count = 10              # use the first n trajectories
//! out = "runs"
//!
//! [env]
//! id = "point_mass"            # point_mass | gridworld | patrol | pendulum
//! horizon = 100
//! stack = 1                    # observation history length
//!
//! [trpo]
//! delta = 0.01
//! batch_steps = 1024
//! hidden = [32, 32]
//!
//! [discriminator]
//! hidden = [32, 32]
//! learning_rate = 1e-3
//! steps = 5
//!
//! [sweep]
//! algorithms = ["gaifo", "gail", "bco"]
//! demo_counts = [1, 5, 10, 20]
//! ```
//!
//! Every section and key is optional except `algorithm`. Omitted
//! environment keys take the environment's defaults; `trpo.gamma` defaults
//! to the environment's discount.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ifo_core::envs::{
    Env, Gridworld, GridworldConfig, PatrolConfig, Pendulum, PendulumConfig, PointMass, PointMassConfig,
    StackedEnv,
};
use ifo_core::imitation::{presets, AdversarialConfig, BcoConfig, EarlyStopConfig};
use ifo_core::numkit::{Activation, AdamConfig};
use ifo_core::trpo::TrpoConfig;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Expert,
    Gaifo,
    Gail,
    Bco,
}

impl Algorithm {
    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Expert => "expert",
            Algorithm::Gaifo => "gaifo",
            Algorithm::Gail => "gail",
            Algorithm::Bco => "bco",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "expert" => Ok(Algorithm::Expert),
            "gaifo" => Ok(Algorithm::Gaifo),
            "gail" => Ok(Algorithm::Gail),
            "bco" => Ok(Algorithm::Bco),
            other => Err(HarnessError::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    PointMass,
    Gridworld,
    Patrol,
    Pendulum,
}

fn activation_tag<S: serde::Serializer>(a: &Activation, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(a.tag())
}

fn parse_activation<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Activation, D::Error> {
    let tag = String::deserialize(d)?;
    Activation::from_tag(&tag).ok_or_else(|| serde::de::Error::custom(format!("unknown activation {tag:?}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub id: EnvId,
    pub horizon: Option<usize>,
    pub gamma: Option<f64>,
    /// Point mass dimension.
    pub dim: Option<usize>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub slip_prob: Option<f64>,
    /// Gridworld only. Defaults to a non-absorbing goal.
    pub terminal_goal: Option<bool>,
    #[serde(default = "one")]
    pub stack: usize,
}

fn one() -> usize {
    1
}

impl Default for EnvSection {
    fn default() -> Self {
        Self {
            id: EnvId::PointMass,
            horizon: None,
            gamma: None,
            dim: None,
            width: None,
            height: None,
            slip_prob: None,
            terminal_goal: None,
            stack: 1,
        }
    }
}

impl EnvSection {
    pub fn build(&self) -> Result<Box<dyn Env>, HarnessError> {
        let unused = |name: &str, set: bool| {
            if set {
                Err(HarnessError::Config(format!("env key {name:?} does not apply to {:?}", self.id)))
            } else {
                Ok(())
            }
        };
        let env: Box<dyn Env> = match self.id {
            EnvId::PointMass => {
                unused("width", self.width.is_some())?;
                unused("height", self.height.is_some())?;
                unused("slip_prob", self.slip_prob.is_some())?;
                unused("terminal_goal", self.terminal_goal.is_some())?;
                let d = PointMassConfig::default();
                let dim = self.dim.unwrap_or(d.dim);
                Box::new(PointMass::new(PointMassConfig {
                    dim,
                    target: vec![0.0; dim],
                    horizon: self.horizon.unwrap_or(d.horizon),
                    gamma: self.gamma.unwrap_or(d.gamma),
                    ..d
                })?)
            }
            EnvId::Gridworld => {
                unused("dim", self.dim.is_some())?;
                let d = GridworldConfig {
                    terminal_goal: false,
                    gamma: 0.9,
                    ..GridworldConfig::default()
                };
                let width = self.width.unwrap_or(d.width);
                let height = self.height.unwrap_or(d.height);
                Box::new(Gridworld::build(&GridworldConfig {
                    width,
                    height,
                    goal: (width.saturating_sub(1), height.saturating_sub(1)),
                    slip_prob: self.slip_prob.unwrap_or(d.slip_prob),
                    terminal_goal: self.terminal_goal.unwrap_or(d.terminal_goal),
                    horizon: self.horizon.unwrap_or(d.horizon),
                    gamma: self.gamma.unwrap_or(d.gamma),
                    ..d
                })?)
            }
            EnvId::Patrol => {
                unused("dim", self.dim.is_some())?;
                unused("terminal_goal", self.terminal_goal.is_some())?;
                let d = PatrolConfig::default();
                let width = self.width.unwrap_or(d.width);
                let height = self.height.unwrap_or(d.height);
                Box::new(Gridworld::patrol(&PatrolConfig {
                    width,
                    height,
                    goals: [(width.saturating_sub(1), 0), (0, height.saturating_sub(1))],
                    slip_prob: self.slip_prob.unwrap_or(d.slip_prob),
                    horizon: self.horizon.unwrap_or(d.horizon),
                    gamma: self.gamma.unwrap_or(d.gamma),
                    ..d
                })?)
            }
            EnvId::Pendulum => {
                for (name, set) in [
                    ("dim", self.dim.is_some()),
                    ("width", self.width.is_some()),
                    ("height", self.height.is_some()),
                    ("slip_prob", self.slip_prob.is_some()),
                    ("terminal_goal", self.terminal_goal.is_some()),
                ] {
                    unused(name, set)?;
                }
                let d = PendulumConfig::default();
                Box::new(Pendulum::new(PendulumConfig {
                    horizon: self.horizon.unwrap_or(d.horizon),
                    gamma: self.gamma.unwrap_or(d.gamma),
                    ..d
                })?)
            }
        };
        match self.stack {
            0 => Err(HarnessError::Config("env.stack must be at least 1".into())),
            1 => Ok(env),
            k => Ok(Box::new(StackedEnv::new(env, k)?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrpoSection {
    pub delta: f64,
    pub cg_iters: usize,
    pub damping: f64,
    pub backtracks: usize,
    pub gamma: Option<f64>,
    pub lambda: f64,
    pub batch_steps: usize,
    pub hidden: Vec<usize>,
    #[serde(serialize_with = "activation_tag", deserialize_with = "parse_activation")]
    pub activation: Activation,
    pub init_log_std: f64,
    pub value_hidden: Vec<usize>,
    pub value_epochs: usize,
    pub value_learning_rate: f64,
}

impl Default for TrpoSection {
    fn default() -> Self {
        let t = presets::desk_trpo();
        Self {
            delta: t.delta,
            cg_iters: t.cg_iters,
            damping: t.damping,
            backtracks: t.backtracks,
            gamma: None,
            lambda: t.lambda,
            batch_steps: t.batch_steps,
            hidden: t.policy_hidden,
            activation: t.activation,
            init_log_std: t.init_log_std,
            value_hidden: t.value.hidden,
            value_epochs: t.value.epochs,
            value_learning_rate: t.value.adam.alpha,
        }
    }
}

impl TrpoSection {
    pub fn to_config(&self, env_gamma: f64) -> TrpoConfig {
        let mut t = presets::desk_trpo();
        t.delta = self.delta;
        t.cg_iters = self.cg_iters;
        t.damping = self.damping;
        t.backtracks = self.backtracks;
        t.gamma = self.gamma.unwrap_or(env_gamma);
        t.lambda = self.lambda;
        t.batch_steps = self.batch_steps;
        t.policy_hidden = self.hidden.clone();
        t.activation = self.activation;
        t.init_log_std = self.init_log_std;
        t.value.hidden = self.value_hidden.clone();
        t.value.epochs = self.value_epochs;
        t.value.adam = AdamConfig::with_alpha(self.value_learning_rate);
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorSection {
    pub hidden: Vec<usize>,
    #[serde(serialize_with = "activation_tag", deserialize_with = "parse_activation")]
    pub activation: Activation,
    pub learning_rate: f64,
    /// Adam steps per policy update.
    pub steps: usize,
    /// Per-side sample size per step; 0 uses the full sets.
    pub minibatch: usize,
}

impl Default for DiscriminatorSection {
    fn default() -> Self {
        let a = presets::desk_adversarial(0);
        Self {
            hidden: a.discriminator.hidden,
            activation: a.discriminator.activation,
            learning_rate: a.discriminator.adam.alpha,
            steps: a.d_steps,
            minibatch: a.d_minibatch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BcoSection {
    pub exploration_steps: usize,
    pub inverse_hidden: Vec<usize>,
    pub inverse_epochs: usize,
    pub bc_epochs: usize,
}

impl Default for BcoSection {
    fn default() -> Self {
        let b = BcoConfig::default();
        Self {
            exploration_steps: b.exploration_steps,
            inverse_hidden: b.inverse_hidden,
            inverse_epochs: b.inverse_epochs,
            bc_epochs: b.bc_epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub episodes: usize,
    /// Moving-average early stop; off runs the full budget.
    pub early_stop: bool,
    /// Bins per observation dimension for the occupancy diagnostic on
    /// continuous environments; 0 disables it.
    pub occupancy_bins: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            episodes: 10,
            early_stop: true,
            occupancy_bins: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub algorithms: Vec<Algorithm>,
    pub demo_counts: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            algorithms: vec![Algorithm::Gaifo, Algorithm::Gail, Algorithm::Bco],
            demo_counts: vec![1, 5, 10, 20],
        }
    }
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_iterations() -> usize {
    200
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    pub demos: Option<PathBuf>,
    pub action_demos: Option<PathBuf>,
    pub demo_count: Option<usize>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub env: EnvSection,
    #[serde(default)]
    pub trpo: TrpoSection,
    #[serde(default)]
    pub discriminator: DiscriminatorSection,
    #[serde(default)]
    pub bco: BcoSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

impl ExperimentConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            seeds: default_seeds(),
            iterations: default_iterations(),
            demos: None,
            action_demos: None,
            demo_count: None,
            out: default_out(),
            env: EnvSection::default(),
            trpo: TrpoSection::default(),
            discriminator: DiscriminatorSection::default(),
            bco: BcoSection::default(),
            eval: EvalSection::default(),
            sweep: SweepSection::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Reads a config; relative demo paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.demos, &mut cfg.action_demos].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks everything the selected algorithm needs before any training.
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.validate_for(self.algorithm)
    }

    pub fn validate_for(&self, algorithm: Algorithm) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seeds must be nonempty".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(HarnessError::Config(format!("seeds must be distinct: {:?}", self.seeds)));
        }
        if self.eval.episodes == 0 {
            return Err(HarnessError::Config("eval.episodes must be at least 1".into()));
        }
        if self.demo_count == Some(0) {
            return Err(HarnessError::Config("demo_count must be at least 1".into()));
        }
        let need = |key: &str, p: &Option<PathBuf>| -> Result<(), HarnessError> {
            match p {
                None => Err(HarnessError::Config(format!("{algorithm} needs `{key}`"))),
                Some(p) if !p.is_file() => Err(HarnessError::MissingFile(p.clone())),
                Some(_) => Ok(()),
            }
        };
        match algorithm {
            Algorithm::Expert => Ok(()),
            Algorithm::Gaifo | Algorithm::Bco => need("demos", &self.demos),
            Algorithm::Gail => need("action_demos", &self.action_demos),
        }
    }

    pub fn build_env(&self) -> Result<Box<dyn Env>, HarnessError> {
        self.env.build()
    }

    pub fn trpo_config(&self, env: &dyn Env) -> TrpoConfig {
        self.trpo.to_config(env.spec().gamma)
    }

    pub fn adversarial_config(&self, env: &dyn Env) -> AdversarialConfig {
        let mut a = presets::desk_adversarial(self.iterations);
        a.trpo = self.trpo_config(env);
        a.discriminator.hidden = self.discriminator.hidden.clone();
        a.discriminator.activation = self.discriminator.activation;
        a.discriminator.adam = AdamConfig::with_alpha(self.discriminator.learning_rate);
        a.d_steps = self.discriminator.steps;
        a.d_minibatch = self.discriminator.minibatch;
        a.eval_episodes = self.eval.episodes;
        a.early_stop = self.eval.early_stop.then(EarlyStopConfig::default);
        a.occupancy_bins = self.eval.occupancy_bins;
        a
    }

    pub fn bco_config(&self) -> BcoConfig {
        BcoConfig {
            exploration_steps: self.bco.exploration_steps,
            inverse_hidden: self.bco.inverse_hidden.clone(),
            inverse_epochs: self.bco.inverse_epochs,
            bc_epochs: self.bco.bc_epochs,
            policy_hidden: self.trpo.hidden.clone(),
            policy_activation: self.trpo.activation,
            init_log_std: self.trpo.init_log_std,
            eval_episodes: self.eval.episodes,
            ..BcoConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::parse("algorithm = \"expert\"").unwrap();
        assert_eq!(cfg, ExperimentConfig::new(Algorithm::Expert));
        assert_eq!(cfg.seeds.len(), 10);
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(ExperimentConfig::parse("algorithm = \"gaifo\"\nitertions = 3").is_err());
        assert!(ExperimentConfig::parse("algorithm = \"gaifo\"\n[trpo]\ndelta = 0.02\nfoo = 1").is_err());
        assert!(ExperimentConfig::parse("algorithm = \"ppo\"").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = ExperimentConfig::new(Algorithm::Gail);
        cfg.env.id = EnvId::Gridworld;
        cfg.trpo.activation = Activation::Relu;
        cfg.demos = Some("d.bin".into());
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn seeds_must_be_distinct_and_nonempty() {
        let mut cfg = ExperimentConfig::new(Algorithm::Expert);
        cfg.seeds = vec![];
        assert!(cfg.validate().is_err());
        cfg.seeds = vec![1, 1];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn missing_demo_file_names_the_path() {
        let mut cfg = ExperimentConfig::new(Algorithm::Gaifo);
        cfg.demos = Some("/nonexistent/demos.bin".into());
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("/nonexistent/demos.bin"));
    }

    #[test]
    fn inapplicable_env_keys_rejected() {
        let mut cfg = ExperimentConfig::new(Algorithm::Expert);
        cfg.env.slip_prob = Some(0.1);
        assert!(cfg.build_env().is_err());
        cfg.env.id = EnvId::Gridworld;
        assert_eq!(cfg.build_env().unwrap().spec().id, "gridworld");
    }

    #[test]
    fn trpo_gamma_follows_env() {
        let mut cfg = ExperimentConfig::new(Algorithm::Expert);
        cfg.env.id = EnvId::Gridworld;
        let env = cfg.build_env().unwrap();
        assert_eq!(cfg.trpo_config(env.as_ref()).gamma, 0.9);
    }
}
