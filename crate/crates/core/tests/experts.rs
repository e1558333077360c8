use std::sync::OnceLock;

use ifo_core::envs::{rollout, Env, Gridworld, GridworldConfig, PointMass, PointMassConfig, TabularEnv};
use ifo_core::imitation::oracles::{value_iteration, PdController};
use ifo_core::imitation::presets::{desk_trpo, POINT_MASS_EXPERT_ITERATIONS};
use ifo_core::imitation::{evaluate, evaluate_source, record_demonstrations, train_expert, PolicyLearner};
use ifo_core::trpo::{Greedy, StochasticPolicy};

fn point_mass_expert() -> &'static (PointMass, StochasticPolicy) {
    static CELL: OnceLock<(PointMass, StochasticPolicy)> = OnceLock::new();
    CELL.get_or_init(|| {
        let env = PointMass::new(PointMassConfig::default()).unwrap();
        let (expert, _) = train_expert(&env, &desk_trpo(), POINT_MASS_EXPERT_ITERATIONS, 1).unwrap();
        (env, expert)
    })
}

#[test]
fn point_mass_expert_near_lqr() {
    let (env, expert) = point_mass_expert();
    let lqr = evaluate_source(&PdController::lqr(env.config()), env, 50, 9).unwrap().mean;
    let got = evaluate(expert, env, 50, 9).unwrap().mean;
    assert!(lqr < 0.0);
    assert!(got >= lqr * 1.1, "expert {got}, lqr {lqr}");
}

#[test]
fn recorded_return_matches_independent_evaluation() {
    let (env, expert) = point_mass_expert();
    let demos = record_demonstrations(expert, env, 10, 123).unwrap();
    let eval = evaluate(expert, env, 50, 456).unwrap();
    let gap = (demos.expert_mean_return() - eval.mean).abs();
    assert!(gap <= eval.std, "recorded {}, eval {} ± {}", demos.expert_mean_return(), eval.mean, eval.std);
}

fn slippery_grid() -> TabularEnv {
    Gridworld::build(&GridworldConfig {
        slip_prob: 0.1,
        ..GridworldConfig::default()
    })
    .unwrap()
}

fn goal_rate(env: &TabularEnv, trajs: &[ifo_core::envs::Trajectory]) -> f64 {
    let goal = 24;
    let hits = trajs
        .iter()
        .filter(|t| t.transitions.last().is_some_and(|tr| env.state_index(&tr.s_next) == Some(goal)))
        .count();
    hits as f64 / trajs.len() as f64
}

#[test]
fn gridworld_expert_reaches_goal() {
    let env = slippery_grid();
    let (_, optimal) = value_iteration(env.tabular_mdp().unwrap(), env.spec().gamma, 1e-12);
    let oracle = goal_rate(&env, &rollout(&optimal, &env, 200, 5));
    assert!(oracle >= 0.95, "value-iteration policy reaches goal at {oracle}");

    let (expert, _) = train_expert(&env, &desk_trpo(), 60, 2).unwrap();
    let rate = goal_rate(&env, &rollout(&Greedy(&expert), &env, 200, 5));
    assert!(rate >= 0.95, "expert reaches goal at {rate}, optimal at {oracle}");
}

#[test]
fn zero_iteration_expert_is_initial_policy() {
    let env = slippery_grid();
    let (trained, report) = train_expert(&env, &desk_trpo(), 0, 4).unwrap();
    let init = PolicyLearner::new(&env, &desk_trpo(), 4).unwrap().policy;
    assert_eq!(trained.flat_params(), init.flat_params());
    assert_eq!(report.rows.len(), 1);
}

#[test]
fn deterministic_evaluation_has_zero_spread() {
    let env = Gridworld::build(&GridworldConfig::default()).unwrap();
    let (expert, _) = train_expert(&env, &desk_trpo(), 0, 4).unwrap();
    let many = evaluate(&expert, &env, 5, 1).unwrap();
    assert_eq!(many.std, 0.0);
    let one = evaluate(&expert, &env, 1, 1).unwrap();
    assert_eq!(one.returns.len(), 1);
    assert_eq!(one.mean, one.returns[0]);
}
