use ifo_core::adversary::{
    conjugate_objective, g_fn, psi_ga_conjugate_closed, CostFunction, Discriminator, DiscriminatorConfig, InputMode,
};
use ifo_core::envs::{TabularMDP, TabularPolicy};
use ifo_core::imitation::{scaled_score, DemonstrationSet};
use ifo_core::numkit::{Activation, DenseMatrix, SIGMOID_EPS};
use ifo_core::occupancy::exact_occupancy;
use ifo_core::rng::seeded;
use ifo_core::trpo::{mean_kl, StochasticPolicy};
use proptest::prelude::*;
use rand::Rng;

fn random_policy(n: usize, na: usize, rng: &mut impl Rng) -> TabularPolicy {
    let mut probs = Vec::with_capacity(n * na);
    for _ in 0..n {
        let row: Vec<f64> = (0..na).map(|_| rng.random_range(0.05..1.0)).collect();
        let t: f64 = row.iter().sum();
        probs.extend(row.iter().map(|p| p / t));
    }
    TabularPolicy::new(n, na, probs).unwrap()
}

fn occupancy_pair(seed: u64, n: usize) -> (DenseMatrix, DenseMatrix) {
    let mut rng = seeded(seed);
    let mdp = TabularMDP::random(n, 2, &mut rng);
    let a = exact_occupancy(&mdp, &random_policy(n, 2, &mut rng), 0.5).unwrap().to_dense().unwrap();
    let b = exact_occupancy(&mdp, &random_policy(n, 2, &mut rng), 0.5).unwrap().to_dense().unwrap();
    (a, b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn occupancy_mass_and_sign(seed in any::<u64>(), n in 2usize..9, na in 1usize..4, gamma in 0.3f64..0.99) {
        let mut rng = seeded(seed);
        let mdp = TabularMDP::random(n, na, &mut rng);
        let occ = exact_occupancy(&mdp, &random_policy(n, na, &mut rng), gamma).unwrap();
        let target = 1.0 / (1.0 - gamma);
        prop_assert!((occ.total_mass() - target).abs() <= 1e-9 * target);
        let dense = occ.to_dense().unwrap();
        prop_assert!(dense.data().iter().all(|&m| m >= 0.0));
    }

    #[test]
    fn g_is_convex(a in -20.0f64..-1e-6, b in -20.0f64..-1e-6) {
        let g = |x: f64| g_fn(x).finite().unwrap();
        prop_assert!(g(0.5 * (a + b)) <= 0.5 * (g(a) + g(b)) + 1e-12);
    }

    #[test]
    fn g_infinite_off_domain(x in 0.0f64..100.0) {
        prop_assert!(g_fn(x).finite().is_none());
    }

    #[test]
    fn conjugate_within_jensen_shannon_bounds(seed in any::<u64>(), n in 2usize..5) {
        // ψ* = Σ a ln(a/(a+b)) + b ln(b/(a+b)) lies in [−ln 2 · Σ(a+b), 0],
        // reaching the lower end when the two occupancies coincide.
        let (a, b) = occupancy_pair(seed, n);
        let total: f64 = a.data().iter().chain(b.data()).sum();
        let v = psi_ga_conjugate_closed(&a, &b).unwrap();
        prop_assert!(v <= 1e-12);
        prop_assert!(v >= -std::f64::consts::LN_2 * total - 1e-9);
        let same = psi_ga_conjugate_closed(&a, &a).unwrap();
        prop_assert!((same + std::f64::consts::LN_2 * 2.0 * a.data().iter().sum::<f64>()).abs() < 1e-9);
    }

    #[test]
    fn sampled_costs_never_exceed_sup(seed in any::<u64>(), n in 2usize..5) {
        let (a, b) = occupancy_pair(seed, n);
        let sup = psi_ga_conjugate_closed(&a, &b).unwrap();
        let mut rng = seeded(seed ^ 0x5eed);
        for _ in 0..20 {
            let c: Vec<f64> = (0..n * n).map(|_| -rng.random_range(1e-6..10.0)).collect();
            let c = CostFunction::new(DenseMatrix::from_vec(n, n, c).unwrap()).unwrap();
            prop_assert!(conjugate_objective(&a, &b, &c).unwrap() <= sup + 1e-9);
        }
    }

    #[test]
    fn discriminator_output_stays_clamped(seed in any::<u64>(), x in prop::collection::vec(-1e4f64..1e4, 4)) {
        let cfg = DiscriminatorConfig { hidden: vec![8], ..DiscriminatorConfig::default() };
        let d = Discriminator::new(InputMode::StateTransition, 4, &cfg, &mut seeded(seed)).unwrap();
        let p = d.forward_features(&x).unwrap();
        prop_assert!((SIGMOID_EPS..=1.0 - SIGMOID_EPS).contains(&p));
    }

    #[test]
    fn scaled_score_is_affine(random in -100.0f64..0.0, gap in 0.1f64..100.0, t in -2.0f64..2.0) {
        let expert = random + gap;
        prop_assert!(scaled_score(random, random, expert).unwrap().abs() < 1e-12);
        prop_assert!((scaled_score(expert, random, expert).unwrap() - 1.0).abs() < 1e-12);
        let s = scaled_score(random + t * gap, random, expert).unwrap();
        prop_assert!((s - t).abs() < 1e-9);
    }

    #[test]
    fn demonstrations_round_trip(
        seed in any::<u64>(),
        lens in prop::collection::vec(2usize..6, 1..4),
        mean in -1e3f64..1e3,
    ) {
        let mut rng = seeded(seed);
        let trajs: Vec<Vec<Vec<f64>>> = lens
            .iter()
            .map(|&l| (0..l).map(|_| vec![rng.random::<f64>(), rng.random_range(-1e9..1e9)]).collect())
            .collect();
        let set = DemonstrationSet::new("point_mass", 2, seed, mean, trajs).unwrap();
        let mut buf = Vec::new();
        set.write_to(&mut buf).unwrap();
        let back = DemonstrationSet::read_from(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(&back, &set);
        prop_assert_eq!(back.transition_count(), lens.iter().map(|l| l - 1).sum::<usize>());
    }

    #[test]
    fn kl_nonnegative(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let p = StochasticPolicy::categorical(3, 4, &[6], Activation::Tanh, &mut rng).unwrap();
        let theta: Vec<f64> = p.flat_params().iter().map(|x| x + rng.random_range(-1.0..1.0)).collect();
        let q = p.with_flat_params(&theta).unwrap();
        let states: Vec<Vec<f64>> = (0..16).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        prop_assert!(mean_kl(&p, &q, &states).unwrap() >= 0.0);
        prop_assert!(mean_kl(&p, &p, &states).unwrap().abs() < 1e-12);
    }
}
