//! One training run per `(config, seed)`, persisted under a directory named
//! by the config hash so reruns never collide and completed runs are reused.

use std::fs;
use std::path::{Path, PathBuf};

use ifo_core::envs::Env;
use ifo_core::imitation::{
    bco_train, gaifo_train, gail_train, train_expert, ActionDemonstrationSet, DemonstrationSet, TrainReport,
};
use ifo_core::trpo::StochasticPolicy;
use sha2::{Digest, Sha256};

use crate::config::{Algorithm, ExperimentConfig};
use crate::report::RunSummary;
use crate::HarnessError;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const POLICY_FILE: &str = "policy.ckpt";
pub const CONFIG_FILE: &str = "config.toml";

fn file_digest(path: &Path) -> Result<String, HarnessError> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// First 16 hex digits of SHA-256 over the config with `seeds` and `out`
/// blanked, followed by the digests of the referenced demonstration files.
pub fn config_hash(config: &ExperimentConfig) -> Result<String, HarnessError> {
    let mut canonical = config.clone();
    canonical.seeds.clear();
    canonical.out = PathBuf::new();
    let mut hasher = Sha256::new();
    hasher.update(canonical.to_toml().as_bytes());
    for p in [&config.demos, &config.action_demos].into_iter().flatten() {
        if p.is_file() {
            hasher.update(file_digest(p)?.as_bytes());
        }
    }
    Ok(hex::encode(hasher.finalize())[..16].to_string())
}

/// `<out>/<algorithm>-<hash>/seed-<seed>`.
pub fn run_dir(config: &ExperimentConfig, seed: u64) -> Result<PathBuf, HarnessError> {
    Ok(config
        .out
        .join(format!("{}-{}", config.algorithm, config_hash(config)?))
        .join(format!("seed-{seed}")))
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: RunSummary,
    /// The run had already completed and was read back from disk.
    pub resumed: bool,
}

fn load_states(config: &ExperimentConfig) -> Result<DemonstrationSet, HarnessError> {
    let path = config.demos.as_ref().ok_or_else(|| HarnessError::Config("no `demos` file".into()))?;
    let demos = DemonstrationSet::load(path)?;
    Ok(match config.demo_count {
        Some(n) => demos.take(n)?,
        None => demos,
    })
}

fn load_actions(config: &ExperimentConfig) -> Result<ActionDemonstrationSet, HarnessError> {
    let path = config
        .action_demos
        .as_ref()
        .ok_or_else(|| HarnessError::Config("no `action_demos` file".into()))?;
    let demos = ActionDemonstrationSet::load(path)?;
    Ok(match config.demo_count {
        Some(n) => demos.take(n)?,
        None => demos,
    })
}

fn train(
    config: &ExperimentConfig,
    env: &dyn Env,
    seed: u64,
) -> Result<(StochasticPolicy, TrainReport, Option<usize>), HarnessError> {
    Ok(match config.algorithm {
        Algorithm::Expert => {
            let (p, r) = train_expert(env, &config.trpo_config(env), config.iterations, seed)?;
            (p, r, None)
        }
        Algorithm::Gaifo => {
            let demos = load_states(config)?;
            let out = gaifo_train(env, &demos, &config.adversarial_config(env), seed)?;
            (out.policy, out.report, Some(demos.len()))
        }
        Algorithm::Gail => {
            let demos = load_actions(config)?;
            let out = gail_train(env, &demos, &config.adversarial_config(env), seed)?;
            (out.policy, out.report, Some(demos.len()))
        }
        Algorithm::Bco => {
            let demos = load_states(config)?;
            let out = bco_train(env, &demos, &config.bco_config(), seed)?;
            (out.policy, out.report, Some(demos.len()))
        }
    })
}

/// Trains `config.algorithm` with `seed`, or reads back a completed run.
/// The summary file is written last and marks completion.
pub fn run_one(config: &ExperimentConfig, seed: u64) -> Result<RunOutcome, HarnessError> {
    config.validate()?;
    let dir = run_dir(config, seed)?;
    let summary_path = dir.join(SUMMARY_FILE);
    if summary_path.is_file() {
        return Ok(RunOutcome {
            summary: RunSummary::load(&summary_path)?,
            dir,
            resumed: true,
        });
    }
    let env = config.build_env()?;
    let (policy, report, demo_count) = train(config, env.as_ref(), seed)?;
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let mut resolved = config.clone();
    resolved.seeds = vec![seed];
    let cfg_path = dir.join(CONFIG_FILE);
    fs::write(&cfg_path, resolved.to_toml()).map_err(|e| HarnessError::io(&cfg_path, e))?;
    report.save_csv(&dir.join(REPORT_FILE))?;
    policy.to_checkpoint().save(&dir.join(POLICY_FILE))?;
    let summary = RunSummary::from_report(config.algorithm, &env.spec().id, seed, demo_count, &report);
    summary.save(&summary_path)?;
    Ok(RunOutcome {
        dir,
        summary,
        resumed: false,
    })
}
