//! Per-run summaries and their aggregation. Aggregation is a pure function
//! of the summary files found under a directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ifo_core::imitation::TrainReport;

use crate::config::Algorithm;
use crate::run::SUMMARY_FILE;
use crate::HarnessError;

pub const SUMMARY_HEADER: &str =
    "algorithm,env,seed,demo_count,iterations,final_eval_return,final_scaled_score,stopped_early,wall_clock_secs,warnings";

pub const AGGREGATE_HEADER: &str = "demo_count,algorithm,runs,scored,mean_scaled_score,std_scaled_score";

/// One line of `summary.csv`. Empty `demo_count` / `final_scaled_score`
/// fields mean "not applicable".
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub env: String,
    pub seed: u64,
    pub demo_count: Option<usize>,
    pub iterations: usize,
    pub final_eval_return: f64,
    pub final_scaled_score: Option<f64>,
    pub stopped_early: bool,
    pub wall_clock_secs: f64,
    pub warnings: usize,
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

impl RunSummary {
    pub fn from_report(
        algorithm: Algorithm,
        env: &str,
        seed: u64,
        demo_count: Option<usize>,
        report: &TrainReport,
    ) -> Self {
        Self {
            algorithm,
            env: env.to_string(),
            seed,
            demo_count,
            iterations: report.iterations(),
            final_eval_return: report.final_eval_return,
            final_scaled_score: report.final_scaled_score,
            stopped_early: report.stopped_early,
            wall_clock_secs: report.wall_clock_secs,
            warnings: report.warnings.len(),
        }
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.algorithm,
            self.env,
            self.seed,
            opt(&self.demo_count),
            self.iterations,
            self.final_eval_return,
            opt(&self.final_scaled_score),
            self.stopped_early,
            self.wall_clock_secs,
            self.warnings
        )
    }

    pub fn parse_row(line: &str) -> Result<Self, String> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 10 {
            return Err(format!("expected 10 fields, got {}", f.len()));
        }
        fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, String> {
            s.parse().map_err(|_| format!("bad {what} {s:?}"))
        }
        fn maybe<T: std::str::FromStr>(s: &str, what: &str) -> Result<Option<T>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s, what).map(Some)
            }
        }
        Ok(Self {
            algorithm: f[0].parse().map_err(|e: HarnessError| e.to_string())?,
            env: f[1].to_string(),
            seed: num(f[2], "seed")?,
            demo_count: maybe(f[3], "demo_count")?,
            iterations: num(f[4], "iterations")?,
            final_eval_return: num(f[5], "final_eval_return")?,
            final_scaled_score: maybe(f[6], "final_scaled_score")?,
            stopped_early: num(f[7], "stopped_early")?,
            wall_clock_secs: num(f[8], "wall_clock_secs")?,
            warnings: num(f[9], "warnings")?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let tmp = path.with_extension("csv.tmp");
        fs::write(&tmp, format!("{SUMMARY_HEADER}\n{}\n", self.to_csv_row())).map_err(|e| HarnessError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let bad = |reason: String| HarnessError::Summary {
            path: path.display().to_string(),
            reason,
        };
        let mut lines = text.lines();
        if lines.next() != Some(SUMMARY_HEADER) {
            return Err(bad("unexpected header".into()));
        }
        let row = lines.next().ok_or_else(|| bad("no data row".into()))?;
        Self::parse_row(row).map_err(bad)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub demo_count: Option<usize>,
    pub algorithm: Algorithm,
    pub runs: usize,
    /// Runs with a defined scaled score.
    pub scored: usize,
    pub mean: f64,
    /// Population standard deviation over the scored runs.
    pub std: f64,
}

impl AggregateRow {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            opt(&self.demo_count),
            self.algorithm,
            self.runs,
            self.scored,
            self.mean,
            self.std
        )
    }
}

/// Groups by `(demo_count, algorithm)`; rows come out in that order.
pub fn aggregate_summaries(summaries: &[RunSummary]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(Option<usize>, Algorithm), (usize, Vec<f64>)> = BTreeMap::new();
    for s in summaries {
        let g = groups.entry((s.demo_count, s.algorithm)).or_default();
        g.0 += 1;
        g.1.extend(s.final_scaled_score);
    }
    groups
        .into_iter()
        .map(|((demo_count, algorithm), (runs, scores))| {
            let n = scores.len() as f64;
            let mean = if scores.is_empty() { f64::NAN } else { scores.iter().sum::<f64>() / n };
            let std = if scores.is_empty() {
                f64::NAN
            } else {
                (scores.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
            };
            AggregateRow {
                demo_count,
                algorithm,
                runs,
                scored: scores.len(),
                mean,
                std,
            }
        })
        .collect()
}

pub fn render_aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = format!("{AGGREGATE_HEADER}\n");
    for r in rows {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

fn find_summaries(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    let entries = fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| HarnessError::io(dir, e))?.path();
        if path.is_dir() {
            find_summaries(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == SUMMARY_FILE) {
            out.push(path);
        }
    }
    Ok(())
}

/// Every `summary.csv` under `runs`, in path order.
pub fn collect_summaries(runs: &Path) -> Result<Vec<RunSummary>, HarnessError> {
    let mut paths = Vec::new();
    find_summaries(runs, &mut paths)?;
    paths.sort();
    paths.iter().map(|p| RunSummary::load(p)).collect()
}

pub fn aggregate(runs: &Path) -> Result<Vec<AggregateRow>, HarnessError> {
    Ok(aggregate_summaries(&collect_summaries(runs)?))
}
