//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs the full desk-scale experiments, roughly 20 minutes on one
//! core.

use std::process::ExitCode;
use std::time::Instant;

use ifo_core::envs::{Action, ActionSpace, Env};
use ifo_core::imitation::presets::{
    desk_adversarial, desk_bco, gaifo_gridworld, gaifo_gridworld_run, gridworld_demos, point_mass_demos,
};
use ifo_core::imitation::{
    bco_train, exploration_data, gaifo_train, gail_train, inverse_accuracy_ceiling, AdversarialOutcome, BcoConfig,
    IterationRecord,
};
use ifo_core::trpo::TrpoConfig;
use ifo_core::verify::{self, CheckOutcome};

const SEEDS: u64 = 10;
const ITERATIONS: usize = 200;
const GRID_ITERATIONS: usize = 50;

struct Line {
    id: usize,
    name: &'static str,
    passed: bool,
    seconds: f64,
    detail: String,
}

fn from_check(id: usize, name: &'static str, c: CheckOutcome, limit: f64) -> Line {
    Line {
        id,
        name,
        passed: c.passed && c.seconds < limit,
        seconds: c.seconds,
        detail: format!("{} [limit {limit:.0}s]", c.detail),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn scores(runs: &[AdversarialOutcome]) -> Vec<f64> {
    runs.iter().map(|r| r.report.final_scaled_score.unwrap_or(f64::NAN)).collect()
}

fn fmt_scores(v: &[f64]) -> String {
    v.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>().join(" ")
}

fn run() -> Result<Vec<Line>, String> {
    let err = |e: ifo_core::imitation::ImitationError| e.to_string();
    let mut lines = vec![
        from_check(1, "gradient exactness", verify::check_gradients(), 60.0),
        from_check(2, "occupancy oracle", verify::check_occupancy_identity(20), 10.0),
        from_check(3, "estimator consistency", verify::check_estimator(&[1_000, 5_000, 20_000]), 120.0),
        from_check(4, "conjugacy", verify::check_conjugacy(100), 60.0),
    ];
    let trpo_check = verify::check_trpo(50);

    // Criterion 6: point-mass and gridworld GAIfO.
    let start = Instant::now();
    let (env, demos, action_demos) = point_mass_demos(10, 1).map_err(err)?;
    let mut cfg = desk_adversarial(ITERATIONS);
    cfg.early_stop = None;
    let gaifo: Vec<AdversarialOutcome> =
        (0..SEEDS).map(|s| gaifo_train(&env, &demos, &cfg, s)).collect::<Result<_, _>>().map_err(err)?;
    let grid = gaifo_gridworld().map_err(err)?;
    let (_, grid_demos) = gridworld_demos(&grid, 10, 1).map_err(err)?;
    let mut drops = Vec::new();
    for s in 0..SEEDS {
        let out = gaifo_gridworld_run(&grid, &grid_demos, GRID_ITERATIONS, s).map_err(err)?;
        let (a, b) = out.report.occupancy_endpoints().ok_or("gridworld run without occupancy rows")?;
        drops.push(1.0 - b / a);
    }
    let c6_secs = start.elapsed().as_secs_f64();
    let gaifo_scores = scores(&gaifo);
    let gaifo_mean = mean(&gaifo_scores);
    let halved = drops.iter().filter(|&&d| d >= 0.5).count();

    // Criterion 7: GAIL with the same budget and seeds.
    let start = Instant::now();
    let gail: Vec<AdversarialOutcome> =
        (0..SEEDS).map(|s| gail_train(&env, &action_demos, &cfg, s)).collect::<Result<_, _>>().map_err(err)?;
    let c7_secs = start.elapsed().as_secs_f64();
    let gail_scores = scores(&gail);
    let gail_mean = mean(&gail_scores);

    // Criterion 5 also covers every point-mass imitation update above.
    let delta = TrpoConfig::default().delta;
    let runs = || gaifo.iter().chain(&gail).map(|r| &r.report.rows[1..]);
    let bad: usize = runs().map(|rows| verify::trust_region_violations(rows, delta).len()).sum();
    let updates: usize = runs().map(<[IterationRecord]>::len).sum();
    let accepted = runs().flatten().filter(|r| r.accepted).count();
    lines.push(Line {
        id: 5,
        name: "trpo contract",
        passed: trpo_check.passed && trpo_check.seconds < 300.0 && bad == 0,
        seconds: trpo_check.seconds,
        detail: format!(
            "{} [limit 300s]; point-mass runs: {accepted}/{updates} accepted, {bad} violations",
            trpo_check.detail
        ),
    });
    lines.push(Line {
        id: 6,
        name: "end-to-end gaifo",
        passed: gaifo_mean >= 0.7 && halved >= 9 && c6_secs < 900.0,
        seconds: c6_secs,
        detail: format!(
            "point-mass mean {gaifo_mean:.3} (>= 0.7) over [{}]; gridworld L1 halved in {halved}/{SEEDS} (drops {}) [limit 900s]",
            fmt_scores(&gaifo_scores),
            fmt_scores(&drops)
        ),
    });
    lines.push(Line {
        id: 7,
        name: "comparability",
        passed: (gaifo_mean - gail_mean).abs() <= 0.15,
        seconds: c7_secs,
        detail: format!(
            "gaifo {gaifo_mean:.3}, gail {gail_mean:.3}, gap {:.3} (<= 0.15); gail [{}]",
            (gaifo_mean - gail_mean).abs(),
            fmt_scores(&gail_scores)
        ),
    });

    // Criterion 8: BCO inverse model and per-seed scores.
    let start = Instant::now();
    let bco_cfg = BcoConfig::default();
    let grid_bco = bco_train(&grid, &grid_demos, &bco_cfg, 0).map_err(err)?;
    let ceiling = inverse_accuracy_ceiling(&exploration_data(&grid, bco_cfg.exploration_steps, 0))
        .ok_or("no ceiling for discrete exploration data")?;
    let ActionSpace::Box { low, high } = env.spec().action.clone() else {
        return Err("point mass has discrete actions".into());
    };
    let mut bco_scores = Vec::new();
    let mut action_rms = Vec::new();
    for s in 0..SEEDS {
        let out = bco_train(&env, &demos, &desk_bco(), s).map_err(err)?;
        bco_scores.push(out.report.final_scaled_score);
        let (mut e, mut n) = (0.0, 0.0);
        for ((_, got), want) in out.inferred.iter().zip(action_demos.actions().iter().flatten()) {
            if let (Action::Continuous(g), Action::Continuous(w)) = (got, want) {
                for (i, (a, b)) in g.iter().zip(w).enumerate() {
                    let b = b.clamp(low[i], high[i]);
                    e += (a - b).powi(2);
                    n += b * b;
                }
            }
        }
        action_rms.push((e / n).sqrt());
    }
    let reported = bco_scores.iter().all(Option::is_some);
    let shown: Vec<f64> = bco_scores.iter().map(|s| s.unwrap_or(f64::NAN)).collect();
    lines.push(Line {
        id: 8,
        name: "baseline integrity",
        passed: grid_bco.holdout_metric >= 0.95 && reported,
        seconds: start.elapsed().as_secs_f64(),
        detail: format!(
            "gridworld inverse accuracy {:.4} (>= 0.95, ceiling {ceiling:.4}); point-mass bco scores [{}], mean {:.3}; inferred-action rel. RMS max {:.3}",
            grid_bco.holdout_metric,
            fmt_scores(&shown),
            mean(&shown),
            action_rms.iter().cloned().fold(0.0, f64::max)
        ),
    });
    lines.sort_by_key(|l| l.id);
    Ok(lines)
}

fn main() -> ExitCode {
    match run() {
        Ok(lines) => {
            for l in &lines {
                println!(
                    "{} criterion {}: {} ({:.1}s) {}",
                    if l.passed { "PASS" } else { "FAIL" },
                    l.id,
                    l.name,
                    l.seconds,
                    l.detail
                );
            }
            if lines.iter().all(|l| l.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            println!("FAIL acceptance suite aborted: {e}");
            ExitCode::FAILURE
        }
    }
}
