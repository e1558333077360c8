use super::policy::Fisher;
use super::{conjugate_gradient, mean_kl, RolloutBatch, StochasticPolicy, TrpoError, ValueConfig, ValueFunction};
use crate::numkit::{dot, norm, Activation};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TrpoConfig {
    /// Mean-KL trust-region radius.
    pub delta: f64,
    pub cg_iters: usize,
    pub cg_tol: f64,
    pub damping: f64,
    /// Maximum number of step halvings after the full step.
    pub backtracks: usize,
    pub gamma: f64,
    pub lambda: f64,
    /// Minimum transitions collected per iteration.
    pub batch_steps: usize,
    pub policy_hidden: Vec<usize>,
    pub activation: Activation,
    pub init_log_std: f64,
    pub value: ValueConfig,
}

impl Default for TrpoConfig {
    fn default() -> Self {
        Self {
            delta: 0.01,
            cg_iters: 10,
            cg_tol: 1e-10,
            damping: 0.1,
            backtracks: 10,
            gamma: 0.99,
            lambda: 0.97,
            batch_steps: 2048,
            policy_hidden: vec![64, 64],
            activation: Activation::Tanh,
            init_log_std: -0.5,
            value: ValueConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateStatus {
    Accepted,
    /// Surrogate gradient vanished; nothing to do.
    ZeroGradient,
    /// Natural-gradient direction had non-positive curvature.
    Degenerate,
    /// No backtracked step met both acceptance conditions.
    Rejected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrpoDiagnostics {
    pub status: UpdateStatus,
    pub surrogate_before: f64,
    pub surrogate_after: f64,
    /// Mean KL(old ‖ new) of the returned policy.
    pub kl: f64,
    pub grad_norm: f64,
    pub cg_iterations: usize,
    pub cg_residual: f64,
    /// Number of halvings applied to the accepted step.
    pub backtracks: usize,
    pub step_fraction: f64,
    pub value_loss: f64,
}

impl TrpoDiagnostics {
    pub fn accepted(&self) -> bool {
        self.status == UpdateStatus::Accepted
    }

    pub fn improvement(&self) -> f64 {
        self.surrogate_after - self.surrogate_before
    }
}

/// Importance-weighted surrogate `mean(π(a|s)/π_old(a|s) · A)`.
pub fn surrogate(policy: &StochasticPolicy, batch: &RolloutBatch) -> Result<f64, TrpoError> {
    check_batch(batch)?;
    let mut acc = 0.0;
    for ((s, a), (&old, &adv)) in batch
        .states
        .iter()
        .zip(&batch.actions)
        .zip(batch.old_log_probs.iter().zip(&batch.advantages))
    {
        acc += (policy.log_prob(s, a)? - old).exp() * adv;
    }
    Ok(acc / batch.len() as f64)
}

fn check_batch(batch: &RolloutBatch) -> Result<(), TrpoError> {
    if batch.is_empty() {
        return Err(TrpoError::EmptyBatch);
    }
    if batch.advantages.len() != batch.len() || batch.old_log_probs.len() != batch.len() {
        return Err(TrpoError::Mismatch("batch advantages have not been computed".into()));
    }
    Ok(())
}

/// One trust-region step on `batch`, followed by a value-function refit on
/// the batch returns. The returned policy equals `policy` unless a step was
/// accepted.
pub fn trpo_update(
    policy: &StochasticPolicy,
    value_fn: &mut ValueFunction,
    batch: &RolloutBatch,
    config: &TrpoConfig,
    rng: &mut Rng,
) -> Result<(StochasticPolicy, TrpoDiagnostics), TrpoError> {
    check_batch(batch)?;
    let n = batch.len() as f64;
    let mut grad = vec![0.0; policy.param_count()];
    let mut before = 0.0;
    for ((s, a), (&old, &adv)) in batch
        .states
        .iter()
        .zip(&batch.actions)
        .zip(batch.old_log_probs.iter().zip(&batch.advantages))
    {
        // ∇ exp(lp − old)·A = ratio·A·∇lp, with ratio = 1 on fresh batches.
        let lp = policy.log_prob(s, a)?;
        let ratio = (lp - old).exp();
        before += ratio * adv;
        policy.log_prob_grad_accumulate(s, a, ratio * adv / n, &mut grad)?;
    }
    before /= n;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(TrpoError::NonFinite("surrogate gradient".into()));
    }
    let mut diag = TrpoDiagnostics {
        status: UpdateStatus::ZeroGradient,
        surrogate_before: before,
        surrogate_after: before,
        kl: 0.0,
        grad_norm: norm(&grad),
        cg_iterations: 0,
        cg_residual: 0.0,
        backtracks: 0,
        step_fraction: 0.0,
        value_loss: f64::NAN,
    };
    let mut result = policy.clone();
    if diag.grad_norm > 0.0 {
        let fisher = Fisher::new(policy, &batch.states)?;
        let cg = conjugate_gradient(|v| fisher.apply(v, config.damping), &grad, config.cg_iters, config.cg_tol)?;
        diag.cg_iterations = cg.iterations;
        diag.cg_residual = cg.residual_norm;
        let shs = dot(&cg.x, &fisher.apply(&cg.x, config.damping)?);
        if !(shs > 0.0) || !shs.is_finite() {
            diag.status = UpdateStatus::Degenerate;
        } else {
            let scale = (2.0 * config.delta / shs).sqrt();
            let theta = policy.flat_params();
            diag.status = UpdateStatus::Rejected;
            let mut fraction = 1.0;
            for k in 0..=config.backtracks {
                let candidate: Vec<f64> = theta
                    .iter()
                    .zip(&cg.x)
                    .map(|(t, x)| t + fraction * scale * x)
                    .collect();
                let new = policy.with_flat_params(&candidate)?;
                if let (Ok(after), Ok(kl)) = (surrogate(&new, batch), mean_kl(policy, &new, &batch.states)) {
                    if after.is_finite() && kl.is_finite() && after - before >= 0.0 && kl <= config.delta {
                        diag.status = UpdateStatus::Accepted;
                        diag.surrogate_after = after;
                        diag.kl = kl;
                        diag.backtracks = k;
                        diag.step_fraction = fraction;
                        result = new;
                        break;
                    }
                }
                fraction *= 0.5;
            }
        }
    }
    if !batch.returns.is_empty() {
        diag.value_loss = value_fn.fit(&batch.states, &batch.returns, rng)?;
    }
    Ok((result, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Action;
    use crate::numkit::{DenseMatrix, Layer, Mlp, OutputTransform};
    use crate::rng::seeded;
    use crate::trpo::{PolicyKind, RolloutBatch};
    use rand::Rng as _;

    fn bandit_policy() -> StochasticPolicy {
        let layer = Layer {
            weight: DenseMatrix::zeros(2, 1),
            bias: vec![0.0, 0.0],
        };
        let net = Mlp::from_layers(vec![layer], vec![], OutputTransform::Identity).unwrap();
        StochasticPolicy::from_parts(PolicyKind::Categorical, net, vec![]).unwrap()
    }

    fn bandit_batch(policy: &StochasticPolicy, n: usize, rng: &mut Rng) -> RolloutBatch {
        let mut b = RolloutBatch::default();
        for _ in 0..n {
            let a = policy.sample(&[1.0], rng).unwrap();
            let r = if a == Action::Discrete(0) { 1.0 } else { 0.0 };
            b.old_log_probs.push(policy.log_prob(&[1.0], &a).unwrap());
            b.states.push(vec![1.0]);
            b.next_states.push(vec![1.0]);
            b.actions.push(a);
            b.rewards.push(r);
            b.terminal.push(true);
            b.episode_end.push(true);
        }
        b
    }

    fn small_value(rng: &mut Rng) -> ValueFunction {
        let cfg = ValueConfig {
            hidden: vec![4],
            ..ValueConfig::default()
        };
        ValueFunction::new(1, cfg, rng).unwrap()
    }

    #[test]
    fn bandit_update_favors_rewarded_action() {
        let mut rng = seeded(1);
        let policy = bandit_policy();
        let mut vf = small_value(&mut rng);
        let mut batch = bandit_batch(&policy, 256, &mut rng);
        crate::trpo::compute_advantages(&mut batch, &vf, 0.99, 0.97).unwrap();
        let cfg = TrpoConfig::default();
        let (new, diag) = trpo_update(&policy, &mut vf, &batch, &cfg, &mut rng).unwrap();
        assert!(diag.accepted(), "{diag:?}");
        assert!(new.probs(&[1.0]).unwrap()[0] > policy.probs(&[1.0]).unwrap()[0]);
        assert!(diag.kl <= 1.1 * cfg.delta);
        assert!(diag.improvement() >= 0.0);
    }

    #[test]
    fn zero_advantages_leave_policy_unchanged() {
        let mut rng = seeded(2);
        let policy = bandit_policy();
        let mut vf = small_value(&mut rng);
        let mut batch = bandit_batch(&policy, 32, &mut rng);
        batch.advantages = vec![0.0; batch.len()];
        let (new, diag) = trpo_update(&policy, &mut vf, &batch, &TrpoConfig::default(), &mut rng).unwrap();
        assert_eq!(new, policy);
        assert_eq!(diag.status, UpdateStatus::ZeroGradient);
    }

    #[test]
    fn missing_advantages_rejected() {
        let mut rng = seeded(3);
        let policy = bandit_policy();
        let mut vf = small_value(&mut rng);
        let batch = bandit_batch(&policy, 8, &mut rng);
        assert!(trpo_update(&policy, &mut vf, &batch, &TrpoConfig::default(), &mut rng).is_err());
    }

    #[test]
    fn accepted_steps_respect_trust_region() {
        let mut rng = seeded(4);
        let mut policy =
            StochasticPolicy::gaussian(2, 1, &[8], crate::numkit::Activation::Tanh, 0.0, &mut rng).unwrap();
        let mut vf = ValueFunction::new(2, ValueConfig { hidden: vec![4], ..ValueConfig::default() }, &mut rng).unwrap();
        let cfg = TrpoConfig::default();
        for it in 0..5 {
            let mut b = RolloutBatch::default();
            for _ in 0..128 {
                let s = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let a = policy.sample(&s, &mut rng).unwrap();
                let Action::Continuous(x) = &a else { panic!() };
                let r = -(x[0] - s[0]).powi(2);
                b.old_log_probs.push(policy.log_prob(&s, &a).unwrap());
                b.next_states.push(s.clone());
                b.states.push(s);
                b.actions.push(a);
                b.rewards.push(r);
                b.terminal.push(true);
                b.episode_end.push(true);
            }
            crate::trpo::compute_advantages(&mut b, &vf, 0.99, 0.97).unwrap();
            let (new, diag) = trpo_update(&policy, &mut vf, &b, &cfg, &mut rng).unwrap();
            if diag.accepted() {
                let kl = mean_kl(&policy, &new, &b.states).unwrap();
                assert!(kl <= 1.1 * cfg.delta, "iteration {it}: {kl}");
                assert!(surrogate(&new, &b).unwrap() >= surrogate(&policy, &b).unwrap());
            }
            policy = new;
        }
    }
}
