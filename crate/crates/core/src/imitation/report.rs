use std::io::Write;
use std::path::Path;

use super::ImitationError;

/// Column schema of [`TrainReport::write_csv`].
///
/// - `iteration`: 0 is the initial policy, `k` the policy after `k` updates
/// - `mean_return`: mean environment return of the sampled (stochastic) batch
/// - `eval_return`: deterministic-mode evaluation return
/// - `disc_loss`: discriminator loss averaged over the iteration's steps
/// - `mean_reward`: mean per-step training reward fed to the policy update
/// - `kl`: measured mean KL of the accepted step, 0 when unchanged
/// - `surrogate_gain`: surrogate improvement of the accepted step
/// - `accepted`: 1 if the trust-region step was accepted
/// - `occupancy_l1`: normalized L1 occupancy distance to the expert, when
///   available
///
/// Missing values are written as `nan`.
pub const CSV_HEADER: &str =
    "iteration,mean_return,eval_return,disc_loss,mean_reward,kl,surrogate_gain,accepted,occupancy_l1";

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mean_return: f64,
    pub eval_return: f64,
    pub disc_loss: f64,
    pub mean_reward: f64,
    pub kl: f64,
    pub surrogate_gain: f64,
    pub accepted: bool,
    pub occupancy_l1: Option<f64>,
}

impl IterationRecord {
    /// Row for the untrained policy: only evaluation fields are set.
    pub fn initial(eval_return: f64, occupancy_l1: Option<f64>) -> Self {
        Self {
            iteration: 0,
            mean_return: f64::NAN,
            eval_return,
            disc_loss: f64::NAN,
            mean_reward: f64::NAN,
            kl: 0.0,
            surrogate_gain: 0.0,
            accepted: false,
            occupancy_l1,
        }
    }

    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.iteration,
            fmt(self.mean_return),
            fmt(self.eval_return),
            fmt(self.disc_loss),
            fmt(self.mean_reward),
            fmt(self.kl),
            fmt(self.surrogate_gain),
            u8::from(self.accepted),
            self.occupancy_l1.map_or_else(|| "nan".to_string(), fmt)
        )
    }
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        // Shortest representation that round-trips.
        format!("{v:?}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub algorithm: String,
    pub rows: Vec<IterationRecord>,
    /// Deterministic evaluation of the returned policy.
    pub final_eval_return: f64,
    pub final_scaled_score: Option<f64>,
    pub stopped_early: bool,
    pub warnings: Vec<String>,
    /// Not part of the CSV, so reports from equal seeds compare equal there.
    pub wall_clock_secs: f64,
}

impl TrainReport {
    pub fn new(algorithm: &str) -> Self {
        Self {
            algorithm: algorithm.to_string(),
            rows: Vec::new(),
            final_eval_return: f64::NAN,
            final_scaled_score: None,
            stopped_early: false,
            warnings: Vec::new(),
            wall_clock_secs: 0.0,
        }
    }

    pub fn push(&mut self, row: IterationRecord) {
        debug_assert!(self.rows.last().is_none_or(|r| r.iteration < row.iteration));
        self.rows.push(row);
    }

    /// Updates performed, excluding the initial row.
    pub fn iterations(&self) -> usize {
        self.rows.last().map_or(0, |r| r.iteration)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), ImitationError> {
        std::fs::write(path, self.to_csv()).map_err(|e| ImitationError::io(path, e))
    }

    /// Occupancy distance of the first and last rows, when both exist.
    pub fn occupancy_endpoints(&self) -> Option<(f64, f64)> {
        Some((self.rows.first()?.occupancy_l1?, self.rows.last()?.occupancy_l1?))
    }
}

/// Stop once the mean evaluation return over consecutive non-overlapping
/// windows fails to beat the best window so far by a relative margin,
/// `patience` windows in a row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStopConfig {
    pub window: usize,
    pub min_relative_gain: f64,
    pub patience: usize,
}

impl Default for EarlyStopConfig {
    fn default() -> Self {
        Self {
            window: 20,
            min_relative_gain: 0.01,
            patience: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EarlyStopper {
    config: EarlyStopConfig,
    current: Vec<f64>,
    best: Option<f64>,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(config: EarlyStopConfig) -> Self {
        Self {
            config,
            current: Vec::new(),
            best: None,
            stale: 0,
        }
    }

    /// Feeds one evaluation return; true when training should stop.
    pub fn observe(&mut self, value: f64) -> bool {
        self.current.push(value);
        if self.current.len() < self.config.window.max(1) {
            return false;
        }
        let mean = self.current.iter().sum::<f64>() / self.current.len() as f64;
        self.current.clear();
        match self.best {
            Some(best) if mean <= best + self.config.min_relative_gain * best.abs() => {
                self.stale += 1;
            }
            _ => {
                self.best = Some(mean);
                self.stale = 0;
            }
        }
        self.stale >= self.config.patience
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_one_row_per_iteration() {
        let mut r = TrainReport::new("gaifo");
        r.push(IterationRecord::initial(-3.0, Some(1.5)));
        r.push(IterationRecord {
            iteration: 1,
            mean_return: -2.5,
            eval_return: -2.0,
            disc_loss: 1.3,
            mean_reward: 0.7,
            kl: 0.009,
            surrogate_gain: 0.01,
            accepted: true,
            occupancy_l1: None,
        });
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "0,nan,-3.0,nan,nan,0.0,0.0,0,1.5");
        assert_eq!(lines[2], "1,-2.5,-2.0,1.3,0.7,0.009,0.01,1,nan");
        assert_eq!(r.iterations(), 1);
    }

    #[test]
    fn early_stop_after_flat_windows() {
        let mut s = EarlyStopper::new(EarlyStopConfig {
            window: 2,
            min_relative_gain: 0.01,
            patience: 3,
        });
        let values = [1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 2.01, 2.01];
        let stops: Vec<bool> = values.iter().map(|&v| s.observe(v)).collect();
        assert!(!stops[..7].iter().any(|&b| b));
        assert!(!stops[7]);
        assert!(!s.observe(2.0));
        assert!(s.observe(2.0));
    }

    #[test]
    fn improving_returns_never_stop() {
        let mut s = EarlyStopper::new(EarlyStopConfig::default());
        for k in 0..500 {
            assert!(!s.observe(-100.0 + k as f64 * 0.1));
        }
    }
}
