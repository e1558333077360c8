//! The oracle suite: analytic gradients against finite differences, the
//! occupancy identities, conjugacy of the adversarial regularizer and the
//! trust-region contract.
//!
//! Each check returns a [`CheckOutcome`]; [`run_suite`] runs all of them and
//! [`render_table`] formats the results.

use std::time::Instant;

use rand::Rng as _;

use crate::adversary::{
    analytic_optimal_cost, conjugacy_definition_check, conjugate_objective, psi_ga_conjugate_closed,
    psi_ga_conjugate_numeric, CostFunction, Discriminator, DiscriminatorConfig, InputMode,
};
use crate::envs::{rollout, Action, Env, Gridworld, GridworldConfig, TabularEnv, TabularMDP, TabularPolicy};
use crate::imitation::{presets, IterationRecord};
use crate::numkit::{finite_diff_grad, relative_error, Activation, DenseMatrix, InitScale, Layer, Mlp, OutputTransform};
use crate::occupancy::{empirical_occupancy, exact_occupancy, occupancy_distance, DistanceMetric, Support};
use crate::rng::{derive_seed, seeded, Rng};
use crate::trpo::{
    compute_advantages, kl_grad, trpo_update, PolicyKind, RolloutBatch, StochasticPolicy, TrpoConfig,
    ValueConfig, ValueFunction,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn timed(name: &str, f: impl FnOnce() -> Result<(bool, String), String>) -> CheckOutcome {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckOutcome {
        name: name.to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Largest entrywise relative error between two gradients. Entries where
/// both sides are below `floor` in magnitude compare against `floor`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &b)| relative_error(a, b, floor))
        .fold(0.0, f64::max)
}

const FD_STEP: f64 = 1e-5;
const FD_FLOOR: f64 = 1e-6;
pub const GRADIENT_TOL: f64 = 1e-4;

fn random_vec(n: usize, scale: f64, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..=scale)).collect()
}

/// Squared-error and cross-entropy losses through every activation, output
/// transform and depth in the test matrix, plus the policy log-likelihoods,
/// the policy KL and the discriminator loss. Returns the worst relative
/// error per case.
pub fn gradient_cases(seed: u64) -> Result<Vec<(String, f64)>, String> {
    let mut rng = seeded(seed);
    let mut out = Vec::new();
    let shapes: [&[usize]; 3] = [&[3, 2], &[3, 5, 2], &[4, 6, 5, 3]];
    let acts = [Activation::Tanh, Activation::Relu, Activation::LeakyRelu];
    for &act in &acts {
        for shape in shapes {
            for transform in [OutputTransform::Identity, OutputTransform::Sigmoid] {
                let net = Mlp::random(shape, act, transform, InitScale::default(), &mut rng).map_err(|e| e.to_string())?;
                let inputs: Vec<Vec<f64>> = (0..4).map(|_| random_vec(shape[0], 1.0, &mut rng)).collect();
                let targets: Vec<Vec<f64>> = (0..4).map(|_| random_vec(*shape.last().unwrap(), 1.0, &mut rng)).collect();
                let loss = |p: &[f64]| {
                    let mut n = net.clone();
                    n.set_flat_params(p).unwrap();
                    inputs
                        .iter()
                        .zip(&targets)
                        .map(|(x, y)| {
                            let o = n.predict(x).unwrap();
                            0.5 * o.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                        })
                        .sum::<f64>()
                };
                let mut analytic = vec![0.0; net.param_count()];
                for (x, y) in inputs.iter().zip(&targets) {
                    let cache = net.forward(x).map_err(|e| e.to_string())?;
                    let g: Vec<f64> = cache.output().iter().zip(y).map(|(a, b)| a - b).collect();
                    net.backward_accumulate(&cache, &g, &mut analytic).map_err(|e| e.to_string())?;
                }
                let numeric = finite_diff_grad(loss, &net.flat_params(), FD_STEP).map_err(|e| e.to_string())?;
                out.push((
                    format!("mse {} {:?} {}", act.tag(), shape, transform.tag()),
                    max_relative_error(&analytic, &numeric, FD_FLOOR),
                ));
            }
        }
    }

    for &act in &acts {
        let disc = Discriminator::new(
            InputMode::StateTransition,
            4,
            &DiscriminatorConfig {
                hidden: vec![6, 5],
                activation: act,
                ..DiscriminatorConfig::default()
            },
            &mut rng,
        )
        .map_err(|e| e.to_string())?;
        let imitator: Vec<Vec<f64>> = (0..5).map(|_| random_vec(4, 1.0, &mut rng)).collect();
        let expert: Vec<Vec<f64>> = (0..3).map(|_| random_vec(4, 1.0, &mut rng)).collect();
        let (_, analytic) = disc.loss_and_grad(&imitator, &expert).map_err(|e| e.to_string())?;
        let numeric = finite_diff_grad(
            |p| {
                let mut d = disc.clone();
                d.net_mut().set_flat_params(p).unwrap();
                d.loss(&imitator, &expert).unwrap()
            },
            &disc.net().flat_params(),
            FD_STEP,
        )
        .map_err(|e| e.to_string())?;
        out.push((format!("discriminator {}", act.tag()), max_relative_error(&analytic, &numeric, FD_FLOOR)));
    }

    for &act in &acts {
        let policies = [
            StochasticPolicy::categorical(3, 4, &[5], act, &mut rng).map_err(|e| e.to_string())?,
            StochasticPolicy::gaussian(3, 2, &[5], act, -0.3, &mut rng).map_err(|e| e.to_string())?,
        ];
        for policy in policies {
            // Larger output weights so the cases are not near-uniform.
            let mut params = policy.flat_params();
            for p in params.iter_mut() {
                *p += rng.random_range(-0.5..=0.5);
            }
            let policy = policy.with_flat_params(&params).map_err(|e| e.to_string())?;
            let states: Vec<Vec<f64>> = (0..4).map(|_| random_vec(3, 1.0, &mut rng)).collect();
            let kind = match policy.kind() {
                PolicyKind::Categorical => "categorical",
                PolicyKind::Gaussian => "gaussian",
            };
            for s in &states {
                let a = policy.sample(s, &mut rng).map_err(|e| e.to_string())?;
                let (_, analytic) = policy.log_prob_grad(s, &a).map_err(|e| e.to_string())?;
                let numeric = finite_diff_grad(
                    |p| policy.with_flat_params(p).unwrap().log_prob(s, &a).unwrap(),
                    &params,
                    FD_STEP,
                )
                .map_err(|e| e.to_string())?;
                out.push((format!("log_prob {kind} {}", act.tag()), max_relative_error(&analytic, &numeric, FD_FLOOR)));
            }
            let mut shifted = params.clone();
            for p in shifted.iter_mut() {
                *p += rng.random_range(-0.2..=0.2);
            }
            let new = policy.with_flat_params(&shifted).map_err(|e| e.to_string())?;
            let (_, analytic) = kl_grad(&policy, &new, &states).map_err(|e| e.to_string())?;
            let numeric = finite_diff_grad(
                |p| crate::trpo::mean_kl(&policy, &policy.with_flat_params(p).unwrap(), &states).unwrap(),
                &shifted,
                FD_STEP,
            )
            .map_err(|e| e.to_string())?;
            out.push((format!("kl {kind} {}", act.tag()), max_relative_error(&analytic, &numeric, FD_FLOOR)));
        }
    }
    Ok(out)
}

pub fn check_gradients() -> CheckOutcome {
    timed("gradient exactness", || {
        let cases = gradient_cases(11)?;
        let (worst_name, worst) = cases
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .cloned()
            .unwrap_or_default();
        Ok((
            worst < GRADIENT_TOL,
            format!("{} cases, max rel err {worst:.2e} ({worst_name})", cases.len()),
        ))
    })
}

/// Two states that swap deterministically, starting in state 0.
pub fn alternation_mdp() -> TabularMDP {
    TabularMDP::new(2, 1, vec![0.0, 1.0, 1.0, 0.0], vec![0.0; 2], vec![1.0, 0.0], None).expect("valid chain")
}

fn random_policy(n_states: usize, n_actions: usize, rng: &mut Rng) -> TabularPolicy {
    let mut probs = Vec::with_capacity(n_states * n_actions);
    for _ in 0..n_states {
        let row: Vec<f64> = (0..n_actions).map(|_| rng.random_range(0.05..1.0)).collect();
        let t: f64 = row.iter().sum();
        probs.extend(row.into_iter().map(|p| p / t));
    }
    TabularPolicy::new(n_states, n_actions, probs).expect("rows normalized")
}

pub fn check_occupancy_identity(n_mdps: usize) -> CheckOutcome {
    timed("occupancy identity", || {
        let mut rng = seeded(21);
        let mut worst = 0.0f64;
        for k in 0..n_mdps {
            let n = 2 + k % 7;
            let na = 1 + k % 3;
            let gamma = [0.5, 0.9, 0.99][k % 3];
            let mdp = TabularMDP::random(n, na, &mut rng);
            let pi = random_policy(n, na, &mut rng);
            let occ = exact_occupancy(&mdp, &pi, gamma).map_err(|e| e.to_string())?;
            let target = 1.0 / (1.0 - gamma);
            worst = worst.max((occ.total_mass() - target).abs() / target.max(1.0));
        }
        let alt = exact_occupancy(&alternation_mdp(), &TabularPolicy::uniform(2, 1), 0.5).map_err(|e| e.to_string())?;
        let hand = (alt.get(0, 1) - 4.0 / 3.0).abs().max((alt.get(1, 0) - 2.0 / 3.0).abs());
        Ok((
            worst <= 1e-9 && hand <= 1e-12 && alt.get(0, 0) == 0.0 && alt.get(1, 1) == 0.0,
            format!("{n_mdps} MDPs, worst mass error {worst:.1e}; alternation error {hand:.1e}"),
        ))
    })
}

/// Gridworld and fixed stochastic policy for the estimator check. The
/// horizon is long enough that truncation mass is below 1e-8.
pub fn estimator_setup() -> (TabularEnv, TabularPolicy) {
    let env = Gridworld::build(&GridworldConfig {
        horizon: 200,
        gamma: 0.9,
        ..GridworldConfig::default()
    })
    .expect("valid grid");
    let pi = random_policy(25, 4, &mut seeded(31));
    (env, pi)
}

/// Normalized L1 between empirical and exact occupancy at each episode count.
pub fn estimator_distances(episodes: &[usize], seed: u64) -> Result<Vec<f64>, String> {
    let (env, pi) = estimator_setup();
    let gamma = env.spec().gamma;
    let exact = exact_occupancy(env.mdp(), &pi, gamma).map_err(|e| e.to_string())?;
    episodes
        .iter()
        .map(|&n| {
            let trajs = rollout(&pi, &env, n, derive_seed(seed, n as u64));
            let emp = empirical_occupancy(&trajs, gamma, &Support::Tabular(25)).map_err(|e| e.to_string())?;
            occupancy_distance(&emp, &exact, DistanceMetric::L1).map_err(|e| e.to_string())
        })
        .collect()
}

pub fn check_estimator(episodes: &[usize]) -> CheckOutcome {
    timed("estimator consistency", || {
        let d = estimator_distances(episodes, 41)?;
        let monotone = d.windows(2).all(|w| w[1] < w[0]);
        let last = *d.last().ok_or("no episode counts")?;
        Ok((last <= 0.05 && monotone, format!("L1 over {episodes:?} episodes: {d:.4?}")))
    })
}

fn occupancy_matrix(mdp: &TabularMDP, pi: &TabularPolicy, gamma: f64) -> Result<DenseMatrix, String> {
    exact_occupancy(mdp, pi, gamma)
        .map_err(|e| e.to_string())?
        .to_dense()
        .ok_or_else(|| "tabular occupancy has no dense form".to_string())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugacyStats {
    pub grid_gap: f64,
    pub substitution_gap: f64,
    pub violations: usize,
    pub samples: usize,
}

/// Closed-form conjugate against grid search and the analytic optimal cost,
/// and the sup-definition against random strictly negative costs.
pub fn conjugacy_stats(pairs: usize, cost_samples: usize, seed: u64) -> Result<ConjugacyStats, String> {
    let mut rng = seeded(seed);
    let mut stats = ConjugacyStats {
        grid_gap: 0.0,
        substitution_gap: 0.0,
        violations: 0,
        samples: 0,
    };
    for k in 0..pairs {
        let n = 2 + k % 3;
        let gamma = 0.5;
        let mdp = TabularMDP::random(n, 2, &mut rng);
        let rho_pi = occupancy_matrix(&mdp, &random_policy(n, 2, &mut rng), gamma)?;
        let rho_e = occupancy_matrix(&mdp, &random_policy(n, 2, &mut rng), gamma)?;
        let closed = psi_ga_conjugate_closed(&rho_pi, &rho_e).map_err(|e| e.to_string())?;
        let grid = psi_ga_conjugate_numeric(&rho_pi, &rho_e, 1e-5).map_err(|e| e.to_string())?;
        stats.grid_gap = stats.grid_gap.max((closed - grid).abs());
        let c_star = analytic_optimal_cost(&rho_pi, &rho_e).map_err(|e| e.to_string())?;
        let sub = conjugate_objective(&rho_pi, &rho_e, &c_star).map_err(|e| e.to_string())?;
        stats.substitution_gap = stats.substitution_gap.max((closed - sub).abs());
        let samples: Vec<CostFunction> = (0..cost_samples)
            .map(|_| {
                let data = (0..n * n).map(|_| rng.random_range(f64::MIN_POSITIVE..1.0).ln()).collect();
                CostFunction::new(DenseMatrix::from_vec(n, n, data).expect("square")).expect("negative costs")
            })
            .collect();
        let report = conjugacy_definition_check(&rho_pi, &rho_e, &samples).map_err(|e| e.to_string())?;
        stats.violations += report.violations;
        stats.samples += report.samples;
    }
    Ok(stats)
}

pub fn check_conjugacy(pairs: usize) -> CheckOutcome {
    timed("conjugacy", || {
        let s = conjugacy_stats(pairs, 50, 51)?;
        Ok((
            s.grid_gap <= 1e-4 && s.substitution_gap <= 1e-6 && s.violations == 0,
            format!(
                "{pairs} pairs: grid gap {:.1e}, substitution gap {:.1e}, {} of {} samples above the sup",
                s.grid_gap, s.substitution_gap, s.violations, s.samples
            ),
        ))
    })
}

/// Probability of the rewarded action before and after one TRPO update on a
/// one-step, two-action bandit.
pub fn bandit_step(seed: u64) -> Result<(f64, f64), String> {
    let mut rng = seeded(seed);
    let layer = Layer {
        weight: DenseMatrix::zeros(2, 1),
        bias: vec![0.0, 0.0],
    };
    let net = Mlp::from_layers(vec![layer], vec![], OutputTransform::Identity).map_err(|e| e.to_string())?;
    let policy = StochasticPolicy::from_parts(PolicyKind::Categorical, net, vec![]).map_err(|e| e.to_string())?;
    let mut vf = ValueFunction::new(
        1,
        ValueConfig {
            hidden: vec![4],
            ..ValueConfig::default()
        },
        &mut rng,
    )
    .map_err(|e| e.to_string())?;
    let mut batch = RolloutBatch::default();
    for _ in 0..256 {
        let a = policy.sample(&[1.0], &mut rng).map_err(|e| e.to_string())?;
        batch.rewards.push(if a == Action::Discrete(0) { 1.0 } else { 0.0 });
        batch.old_log_probs.push(policy.log_prob(&[1.0], &a).map_err(|e| e.to_string())?);
        batch.states.push(vec![1.0]);
        batch.next_states.push(vec![1.0]);
        batch.actions.push(a);
        batch.terminal.push(true);
        batch.episode_end.push(true);
    }
    let cfg = TrpoConfig::default();
    compute_advantages(&mut batch, &vf, cfg.gamma, cfg.lambda).map_err(|e| e.to_string())?;
    let (new, _) = trpo_update(&policy, &mut vf, &batch, &cfg, &mut rng).map_err(|e| e.to_string())?;
    let p = |pol: &StochasticPolicy| pol.probs(&[1.0]).map(|v| v[0]).map_err(|e| e.to_string());
    Ok((p(&policy)?, p(&new)?))
}

/// Accepted rows with measured KL above `1.1 δ` or negative surrogate gain.
pub fn trust_region_violations(rows: &[IterationRecord], delta: f64) -> Vec<usize> {
    rows.iter()
        .filter(|r| r.accepted && (r.kl > 1.1 * delta || r.surrogate_gain < 0.0))
        .map(|r| r.iteration)
        .collect()
}

/// Trust-region contract over the updates of a short gridworld imitation run.
pub fn check_trpo(iterations: usize) -> CheckOutcome {
    timed("trpo contract", || {
        let (before, after) = bandit_step(61)?;
        let env = presets::gaifo_gridworld().map_err(|e| e.to_string())?;
        let (_, demos) = presets::gridworld_demos(&env, 10, 1).map_err(|e| e.to_string())?;
        let out = presets::gaifo_gridworld_run(&env, &demos, iterations, 1).map_err(|e| e.to_string())?;
        let rows = &out.report.rows[1..];
        let bad = trust_region_violations(rows, TrpoConfig::default().delta);
        let accepted = rows.iter().filter(|r| r.accepted).count();
        Ok((
            after > before && bad.is_empty() && rows.len() == iterations,
            format!(
                "bandit p0 {before:.4} -> {after:.4}; {accepted}/{} accepted, violations at {bad:?}",
                rows.len()
            ),
        ))
    })
}

pub fn run_suite() -> Vec<CheckOutcome> {
    vec![
        check_gradients(),
        check_occupancy_identity(20),
        check_estimator(&[1_000, 5_000, 20_000]),
        check_conjugacy(100),
        check_trpo(50),
    ]
}

pub fn render_table(results: &[CheckOutcome]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for r in results {
        out.push_str(&format!(
            "{:<width$}  {}  {:>7.2}s  {}\n",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.seconds,
            r.detail
        ));
    }
    out
}
