//! Demonstration-count sweeps: every `(count, algorithm, seed)` cell is an
//! independent [`run_one`], run on a bounded worker pool.

use std::fs;
use std::path::PathBuf;

use ifo_core::imitation::{ActionDemonstrationSet, DemonstrationSet};
use rayon::prelude::*;

use crate::config::{Algorithm, ExperimentConfig};
use crate::report::{aggregate_summaries, render_aggregate_csv, AggregateRow, RunSummary};
use crate::run::{config_hash, run_one};
use crate::HarnessError;

pub const THREADS_VAR: &str = "IFO_LAB_THREADS";

/// Worker count from `IFO_LAB_THREADS`, defaulting to the available cores.
pub fn pool_size_from_env() -> Result<usize, HarnessError> {
    match std::env::var(THREADS_VAR) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(HarnessError::Config(format!("{THREADS_VAR} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub demo_count: usize,
    pub algorithm: Algorithm,
    pub seed: u64,
    /// Failure message when the cell did not complete.
    pub result: Result<RunSummary, String>,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
    pub rows: Vec<AggregateRow>,
    pub csv_path: PathBuf,
}

impl SweepTable {
    pub fn failures(&self) -> impl Iterator<Item = &SweepCell> {
        self.cells.iter().filter(|c| c.result.is_err())
    }

    /// Rows are demo counts, columns algorithms, cells `mean ± std`.
    pub fn render(&self, algorithms: &[Algorithm]) -> String {
        let mut out = format!("{:>6}", "demos");
        for a in algorithms {
            out.push_str(&format!("  {:>18}", a.tag()));
        }
        out.push('\n');
        let mut counts: Vec<usize> = self.cells.iter().map(|c| c.demo_count).collect();
        counts.sort_unstable();
        counts.dedup();
        for n in counts {
            out.push_str(&format!("{n:>6}"));
            for &a in algorithms {
                let cell = match self.rows.iter().find(|r| r.demo_count == Some(n) && r.algorithm == a) {
                    Some(r) if r.scored > 0 => format!("{:.3} ± {:.3} ({})", r.mean, r.std, r.scored),
                    _ => "n/a".to_string(),
                };
                out.push_str(&format!("  {cell:>18}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Trains every algorithm in `config.sweep.algorithms` at every demo count
/// and seed. Cell failures are recorded and the sweep carries on; the
/// aggregate table goes to `<out>/sweep-<hash>.csv`.
pub fn run_sweep(config: &ExperimentConfig, demo_counts: &[usize], workers: usize) -> Result<SweepTable, HarnessError> {
    if demo_counts.is_empty() || demo_counts.contains(&0) {
        return Err(HarnessError::Config("demo counts must be nonempty and positive".into()));
    }
    let algorithms = &config.sweep.algorithms;
    if algorithms.is_empty() || algorithms.contains(&Algorithm::Expert) {
        return Err(HarnessError::Config("sweep algorithms must be a nonempty subset of gaifo, gail, bco".into()));
    }
    let max = *demo_counts.iter().max().expect("nonempty");
    for &a in algorithms {
        config.validate_for(a)?;
        let pool = match a {
            Algorithm::Gail => ActionDemonstrationSet::load(config.action_demos.as_ref().expect("validated"))?.len(),
            _ => DemonstrationSet::load(config.demos.as_ref().expect("validated"))?.len(),
        };
        if pool < max {
            return Err(HarnessError::Config(format!(
                "{a} demonstration pool has {pool} trajectories, sweep needs {max}"
            )));
        }
    }

    let mut jobs = Vec::new();
    for &n in demo_counts {
        for &a in algorithms {
            for &seed in &config.seeds {
                jobs.push((n, a, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    let cells: Vec<SweepCell> = pool.install(|| {
        jobs.par_iter()
            .map(|&(demo_count, algorithm, seed)| {
                let mut cell_cfg = config.clone();
                cell_cfg.algorithm = algorithm;
                cell_cfg.demo_count = Some(demo_count);
                let result = run_one(&cell_cfg, seed).map(|o| o.summary).map_err(|e| e.to_string());
                SweepCell {
                    demo_count,
                    algorithm,
                    seed,
                    result,
                }
            })
            .collect()
    });

    let done: Vec<RunSummary> = cells.iter().filter_map(|c| c.result.clone().ok()).collect();
    let rows = aggregate_summaries(&done);
    fs::create_dir_all(&config.out).map_err(|e| HarnessError::io(&config.out, e))?;
    let mut key = config.clone();
    key.sweep.demo_counts = demo_counts.to_vec();
    let csv_path = config.out.join(format!("sweep-{}.csv", config_hash(&key)?));
    fs::write(&csv_path, render_aggregate_csv(&rows)).map_err(|e| HarnessError::io(&csv_path, e))?;
    Ok(SweepTable { cells, rows, csv_path })
}
