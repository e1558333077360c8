//! Argument parsing and subcommand dispatch for `ifo-lab`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ifo_core::imitation::{
    evaluate, random_baseline, record_action_demonstrations, record_demonstrations, DemonstrationSet, ScoreBaseline,
};
use ifo_core::numkit::Checkpoint;
use ifo_core::trpo::StochasticPolicy;

use crate::config::{Algorithm, ExperimentConfig};
use crate::report::{aggregate, render_aggregate_csv};
use crate::run::run_one;
use crate::sweep::{pool_size_from_env, run_sweep};
use crate::HarnessError;

#[derive(Debug, Parser)]
#[command(name = "ifo-lab", version, about = "Imitation from observation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated seeds; overrides the config.
    #[arg(long, alias = "seed", value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Output root; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Demonstration file; overrides the config.
    #[arg(long)]
    pub demos: Option<PathBuf>,
    /// Use only the first N demonstration trajectories.
    #[arg(long)]
    pub count: Option<usize>,
    /// Iteration budget (epochs for BCO is set in the config).
    #[arg(long)]
    pub iterations: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an expert with TRPO on the true reward.
    TrainExpert(TrainArgs),
    /// Record greedy demonstrations from an expert checkpoint.
    RecordDemos {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Expert policy checkpoint.
        #[arg(long)]
        expert: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// State-only demonstration file to write.
        #[arg(long)]
        out: PathBuf,
        /// Also write the same episodes with actions, for the GAIL baseline.
        #[arg(long)]
        actions_out: Option<PathBuf>,
    },
    /// Adversarial imitation from state-only demonstrations.
    TrainGaifo(TrainArgs),
    /// Adversarial imitation from state-action demonstrations.
    TrainGail(TrainArgs),
    /// Behavioral cloning from observation.
    TrainBco(TrainArgs),
    /// Evaluate a policy checkpoint deterministically.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Demonstrations whose expert mean defines the scaled score.
        #[arg(long)]
        demos: Option<PathBuf>,
    },
    /// Run the oracle suite and print a pass/fail table.
    Verify,
    /// Aggregate run summaries into mean and std scaled scores.
    Report {
        #[arg(long)]
        runs: PathBuf,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the sweep algorithms at every demonstration count and seed.
    Sweep {
        #[command(flatten)]
        train: TrainArgs,
        /// Comma-separated demonstration counts; overrides the config.
        #[arg(long, value_delimiter = ',')]
        counts: Vec<usize>,
    },
}

fn load_config(path: Option<&Path>, algorithm: Algorithm) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match path {
        Some(p) if !p.is_file() => return Err(HarnessError::MissingFile(p.to_path_buf())),
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::new(algorithm),
    };
    cfg.algorithm = algorithm;
    Ok(cfg)
}

fn apply(args: &TrainArgs, algorithm: Algorithm) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = load_config(args.config.as_deref(), algorithm)?;
    if !args.seeds.is_empty() {
        cfg.seeds = args.seeds.clone();
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(d) = &args.demos {
        match algorithm {
            Algorithm::Gail => cfg.action_demos = Some(d.clone()),
            _ => cfg.demos = Some(d.clone()),
        }
    }
    if args.count.is_some() {
        cfg.demo_count = args.count;
    }
    if let Some(n) = args.iterations {
        cfg.iterations = n;
    }
    Ok(cfg)
}

fn load_policy(path: &Path) -> Result<StochasticPolicy, HarnessError> {
    if !path.is_file() {
        return Err(HarnessError::MissingFile(path.to_path_buf()));
    }
    Ok(StochasticPolicy::from_checkpoint(&Checkpoint::load(path)?)?)
}

fn train(args: &TrainArgs, algorithm: Algorithm, out: &mut dyn Write) -> Result<(), HarnessError> {
    let cfg = apply(args, algorithm)?;
    cfg.validate()?;
    for &seed in &cfg.seeds {
        let run = run_one(&cfg, seed)?;
        let score = run.summary.final_scaled_score.map_or("n/a".into(), |s| format!("{s:.4}"));
        writeln!(
            out,
            "{algorithm} seed {seed}: eval return {:.4}, scaled score {score}{} -> {}",
            run.summary.final_eval_return,
            if run.resumed { " (existing run)" } else { "" },
            run.dir.display()
        )
        .ok();
    }
    Ok(())
}

pub fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<bool, HarnessError> {
    match cli.command {
        Command::TrainExpert(a) => train(&a, Algorithm::Expert, out)?,
        Command::TrainGaifo(a) => train(&a, Algorithm::Gaifo, out)?,
        Command::TrainGail(a) => train(&a, Algorithm::Gail, out)?,
        Command::TrainBco(a) => train(&a, Algorithm::Bco, out)?,
        Command::RecordDemos {
            config,
            expert,
            count,
            seed,
            out: path,
            actions_out,
        } => {
            let cfg = load_config(config.as_deref(), Algorithm::Expert)?;
            let env = cfg.build_env()?;
            let policy = load_policy(&expert)?;
            let demos = record_demonstrations(&policy, env.as_ref(), count, seed)?;
            demos.save(&path)?;
            writeln!(
                out,
                "{} trajectories, expert mean return {:.4} -> {}",
                demos.len(),
                demos.expert_mean_return(),
                path.display()
            )
            .ok();
            if let Some(apath) = actions_out {
                record_action_demonstrations(&policy, env.as_ref(), count, seed)?.save(&apath)?;
                writeln!(out, "with actions -> {}", apath.display()).ok();
            }
        }
        Command::Eval {
            config,
            policy,
            episodes,
            seed,
            demos,
        } => {
            let cfg = load_config(config.as_deref(), Algorithm::Expert)?;
            let env = cfg.build_env()?;
            let policy = load_policy(&policy)?;
            let r = evaluate(&policy, env.as_ref(), episodes, seed)?;
            writeln!(out, "mean_return,std_return,episodes\n{},{},{episodes}", r.mean, r.std).ok();
            if let Some(d) = demos {
                if !d.is_file() {
                    return Err(HarnessError::MissingFile(d));
                }
                let demos = DemonstrationSet::load(&d)?;
                let baseline = ScoreBaseline {
                    random_mean: random_baseline(env.as_ref(), episodes, seed)?.mean,
                    expert_mean: demos.expert_mean_return(),
                };
                writeln!(out, "scaled_score,{}", baseline.score(r.mean)?).ok();
            }
        }
        Command::Verify => {
            let results = ifo_core::verify::run_suite();
            write!(out, "{}", ifo_core::verify::render_table(&results)).ok();
            return Ok(results.iter().all(|r| r.passed));
        }
        Command::Report { runs, out: path } => {
            if !runs.is_dir() {
                return Err(HarnessError::MissingFile(runs));
            }
            let csv = render_aggregate_csv(&aggregate(&runs)?);
            match path {
                Some(p) => std::fs::write(&p, csv).map_err(|e| HarnessError::io(&p, e))?,
                None => write!(out, "{csv}").map_err(|e| HarnessError::io(Path::new("<stdout>"), e))?,
            }
        }
        Command::Sweep { train, counts } => {
            let mut cfg = apply(&train, Algorithm::Gaifo)?;
            if !counts.is_empty() {
                cfg.sweep.demo_counts = counts;
            }
            let counts = cfg.sweep.demo_counts.clone();
            let table = run_sweep(&cfg, &counts, pool_size_from_env()?)?;
            write!(out, "{}", table.render(&cfg.sweep.algorithms)).ok();
            for c in table.failures() {
                writeln!(
                    out,
                    "failed: {} count {} seed {}: {}",
                    c.algorithm,
                    c.demo_count,
                    c.seed,
                    c.result.as_ref().unwrap_err()
                )
                .ok();
            }
            writeln!(out, "table -> {}", table.csv_path.display()).ok();
        }
    }
    Ok(true)
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
/// Errors print one `error: <kind>: <message>` line on stderr.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let mut stdout = std::io::stdout();
    match dispatch(cli, &mut stdout) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {}: {e}", e.kind());
            ExitCode::from(if matches!(e, HarnessError::Config(_) | HarnessError::MissingFile(_)) { 2 } else { 1 })
        }
    }
}
