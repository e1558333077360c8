use rand::Rng as _;
use rand_distr::StandardNormal;

use super::TrpoError;
use crate::envs::{argmax, one_hot, sample_index, Action, ActionSource, ActionSpace, EnvSpec, TabularPolicy};
use crate::numkit::{Activation, Checkpoint, ForwardCache, InitScale, Mlp, NumError, OutputTransform};
use crate::rng::Rng;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Categorical,
    Gaussian,
}

impl PolicyKind {
    pub fn tag(self) -> &'static str {
        match self {
            PolicyKind::Categorical => "categorical",
            PolicyKind::Gaussian => "diagonal-gaussian",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "categorical" => Some(PolicyKind::Categorical),
            "diagonal-gaussian" => Some(PolicyKind::Gaussian),
            _ => None,
        }
    }
}

/// Softmax policy over discrete actions, or a diagonal Gaussian whose mean is
/// the network output and whose log standard deviation is a free vector.
///
/// Flat parameters are the network's followed by `log_std`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy {
    kind: PolicyKind,
    net: Mlp,
    log_std: Vec<f64>,
}

fn clamp_log_std(v: f64) -> f64 {
    v.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

fn policy_dims(obs_dim: usize, hidden: &[usize], out: usize) -> Vec<usize> {
    let mut dims = vec![obs_dim];
    dims.extend_from_slice(hidden);
    dims.push(out);
    dims
}

fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|&v| v - lse).collect()
}

impl StochasticPolicy {
    const INIT: InitScale = InitScale {
        hidden_gain: 1.0,
        output_gain: 0.01,
    };

    pub fn categorical(
        obs_dim: usize,
        n_actions: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut Rng,
    ) -> Result<Self, TrpoError> {
        let net = Mlp::random(
            &policy_dims(obs_dim, hidden, n_actions),
            activation,
            OutputTransform::Identity,
            Self::INIT,
            rng,
        )?;
        Self::from_parts(PolicyKind::Categorical, net, Vec::new())
    }

    pub fn gaussian(
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        activation: Activation,
        init_log_std: f64,
        rng: &mut Rng,
    ) -> Result<Self, TrpoError> {
        let net = Mlp::random(
            &policy_dims(obs_dim, hidden, action_dim),
            activation,
            OutputTransform::Identity,
            Self::INIT,
            rng,
        )?;
        Self::from_parts(PolicyKind::Gaussian, net, vec![init_log_std; action_dim])
    }

    /// Categorical for discrete action spaces, Gaussian for boxes.
    pub fn for_spec(
        spec: &EnvSpec,
        hidden: &[usize],
        activation: Activation,
        init_log_std: f64,
        rng: &mut Rng,
    ) -> Result<Self, TrpoError> {
        match &spec.action {
            ActionSpace::Discrete(n) => Self::categorical(spec.obs_dim, *n, hidden, activation, rng),
            ActionSpace::Box { low, .. } => {
                Self::gaussian(spec.obs_dim, low.len(), hidden, activation, init_log_std, rng)
            }
        }
    }

    pub fn from_parts(kind: PolicyKind, net: Mlp, log_std: Vec<f64>) -> Result<Self, TrpoError> {
        if net.output_transform() != OutputTransform::Identity {
            return Err(TrpoError::Mismatch("policy network must have identity output".into()));
        }
        let expected = match kind {
            PolicyKind::Categorical => 0,
            PolicyKind::Gaussian => net.output_dim(),
        };
        if log_std.len() != expected {
            return Err(TrpoError::Mismatch(format!(
                "{} policy needs {expected} log_std entries, got {}",
                kind.tag(),
                log_std.len()
            )));
        }
        if log_std.iter().any(|v| !v.is_finite()) {
            return Err(TrpoError::NonFinite("log_std".into()));
        }
        Ok(Self {
            kind,
            net,
            log_std: log_std.into_iter().map(clamp_log_std).collect(),
        })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    /// Number of discrete actions, or the action dimension.
    pub fn action_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count() + self.log_std.len()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = self.net.flat_params();
        out.extend_from_slice(&self.log_std);
        out
    }

    /// Sets all parameters; `log_std` entries are clamped into range.
    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<(), TrpoError> {
        if flat.len() != self.param_count() {
            return Err(NumError::Shape(format!(
                "policy has {} parameters, got {}",
                self.param_count(),
                flat.len()
            ))
            .into());
        }
        let n = self.net.param_count();
        self.net.set_flat_params(&flat[..n])?;
        for (dst, &src) in self.log_std.iter_mut().zip(&flat[n..]) {
            *dst = clamp_log_std(src);
        }
        Ok(())
    }

    pub fn with_flat_params(&self, flat: &[f64]) -> Result<Self, TrpoError> {
        let mut out = self.clone();
        out.set_flat_params(flat)?;
        Ok(out)
    }

    pub fn set_log_std(&mut self, value: f64) {
        self.log_std.iter_mut().for_each(|v| *v = clamp_log_std(value));
    }

    fn forward(&self, state: &[f64]) -> Result<ForwardCache, TrpoError> {
        Ok(self.net.forward(state)?)
    }

    /// Action probabilities (categorical only).
    pub fn probs(&self, state: &[f64]) -> Result<Vec<f64>, TrpoError> {
        if self.kind != PolicyKind::Categorical {
            return Err(TrpoError::Mismatch("probs of a gaussian policy".into()));
        }
        let cache = self.forward(state)?;
        Ok(log_softmax(cache.output()).into_iter().map(f64::exp).collect())
    }

    /// Mean action (gaussian) or logits (categorical).
    pub fn mean(&self, state: &[f64]) -> Result<Vec<f64>, TrpoError> {
        Ok(self.net.predict(state)?)
    }

    pub fn sample(&self, state: &[f64], rng: &mut Rng) -> Result<Action, TrpoError> {
        let out = self.mean(state)?;
        Ok(match self.kind {
            PolicyKind::Categorical => {
                let p: Vec<f64> = log_softmax(&out).into_iter().map(f64::exp).collect();
                Action::Discrete(sample_index(&p, rng))
            }
            PolicyKind::Gaussian => Action::Continuous(
                out.iter()
                    .zip(&self.log_std)
                    .map(|(&m, &ls)| {
                        let z: f64 = rng.sample(StandardNormal);
                        m + ls.exp() * z
                    })
                    .collect(),
            ),
        })
    }

    /// Deterministic action: the mean, or the most probable action.
    pub fn mode(&self, state: &[f64]) -> Result<Action, TrpoError> {
        let out = self.mean(state)?;
        Ok(match self.kind {
            PolicyKind::Categorical => Action::Discrete(argmax(&out)),
            PolicyKind::Gaussian => Action::Continuous(out),
        })
    }

    fn check_action<'a>(&self, action: &'a Action) -> Result<ActionRef<'a>, TrpoError> {
        match (self.kind, action) {
            (PolicyKind::Categorical, Action::Discrete(a)) if *a < self.action_dim() => {
                Ok(ActionRef::Discrete(*a))
            }
            (PolicyKind::Gaussian, Action::Continuous(a)) if a.len() == self.action_dim() => {
                Ok(ActionRef::Continuous(a))
            }
            _ => Err(TrpoError::Action(format!(
                "{action:?} for a {} policy with {} outputs",
                self.kind.tag(),
                self.action_dim()
            ))),
        }
    }

    fn log_prob_from_output(&self, out: &[f64], action: ActionRef<'_>) -> f64 {
        match action {
            ActionRef::Discrete(a) => log_softmax(out)[a],
            ActionRef::Continuous(a) => a
                .iter()
                .zip(out)
                .zip(&self.log_std)
                .map(|((&x, &m), &ls)| {
                    let z = (x - m) * (-ls).exp();
                    -0.5 * z * z - ls - 0.5 * LN_2PI
                })
                .sum(),
        }
    }

    pub fn log_prob(&self, state: &[f64], action: &Action) -> Result<f64, TrpoError> {
        let a = self.check_action(action)?;
        Ok(self.log_prob_from_output(&self.mean(state)?, a))
    }

    /// Log-probability and its gradient with respect to the flat parameters.
    pub fn log_prob_grad(&self, state: &[f64], action: &Action) -> Result<(f64, Vec<f64>), TrpoError> {
        let mut grad = vec![0.0; self.param_count()];
        let lp = self.log_prob_grad_accumulate(state, action, 1.0, &mut grad)?;
        Ok((lp, grad))
    }

    /// Adds `weight · ∇ log π(a|s)` into `grad` and returns `log π(a|s)`.
    pub(crate) fn log_prob_grad_accumulate(
        &self,
        state: &[f64],
        action: &Action,
        weight: f64,
        grad: &mut [f64],
    ) -> Result<f64, TrpoError> {
        let a = self.check_action(action)?;
        let cache = self.forward(state)?;
        let out = cache.output();
        let lp = self.log_prob_from_output(out, a);
        let n = self.net.param_count();
        let (net_grad, std_grad) = grad.split_at_mut(n);
        let out_grad: Vec<f64> = match a {
            ActionRef::Discrete(k) => log_softmax(out)
                .iter()
                .enumerate()
                .map(|(i, &l)| weight * (if i == k { 1.0 } else { 0.0 } - l.exp()))
                .collect(),
            ActionRef::Continuous(x) => {
                let mut g = Vec::with_capacity(x.len());
                for (j, ((&xj, &m), &ls)) in x.iter().zip(out).zip(&self.log_std).enumerate() {
                    let inv_var = (-2.0 * ls).exp();
                    let d = xj - m;
                    g.push(weight * d * inv_var);
                    std_grad[j] += weight * (d * d * inv_var - 1.0);
                }
                g
            }
        };
        self.net.backward_accumulate(&cache, &out_grad, net_grad)?;
        Ok(lp)
    }

    /// Per-state probability table, for tabular environments with one-hot
    /// observations.
    pub fn tabular_probs(&self, n_states: usize) -> Result<TabularPolicy, TrpoError> {
        if self.kind != PolicyKind::Categorical || self.obs_dim() != n_states {
            return Err(TrpoError::Mismatch(format!(
                "tabular probabilities need a categorical policy over {n_states} one-hot states"
            )));
        }
        let mut table = Vec::with_capacity(n_states * self.action_dim());
        for s in 0..n_states {
            table.extend(self.probs(&one_hot(s, n_states))?);
        }
        TabularPolicy::new(n_states, self.action_dim(), table)
            .map_err(|e| TrpoError::NonFinite(e.to_string()))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("policy");
        ck.tags.insert("policy_kind".into(), self.kind.tag().into());
        ck.vectors.insert("log_std".into(), self.log_std.clone());
        ck.nets.push(self.net.clone());
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, TrpoError> {
        if ck.kind != "policy" || ck.nets.len() != 1 {
            return Err(TrpoError::Checkpoint(format!(
                "expected a policy checkpoint, got `{}`",
                ck.kind
            )));
        }
        let tag = ck.tag("policy_kind")?;
        let kind = PolicyKind::from_tag(tag)
            .ok_or_else(|| TrpoError::Checkpoint(format!("unknown policy kind `{tag}`")))?;
        let log_std = ck
            .vectors
            .get("log_std")
            .cloned()
            .ok_or_else(|| TrpoError::Checkpoint("missing log_std".into()))?;
        Self::from_parts(kind, ck.nets[0].clone(), log_std)
    }
}

#[derive(Debug, Clone, Copy)]
enum ActionRef<'a> {
    Discrete(usize),
    Continuous(&'a [f64]),
}

impl ActionSource for StochasticPolicy {
    /// Malformed states yield a non-finite action, which ends the episode.
    fn act(&self, obs: &[f64], rng: &mut Rng) -> Action {
        self.sample(obs, rng)
            .unwrap_or_else(|_| Action::Continuous(vec![f64::NAN]))
    }
}

/// Evaluation wrapper acting with [`StochasticPolicy::mode`].
#[derive(Debug, Clone, Copy)]
pub struct Greedy<'a>(pub &'a StochasticPolicy);

impl ActionSource for Greedy<'_> {
    fn act(&self, obs: &[f64], _rng: &mut Rng) -> Action {
        self.0
            .mode(obs)
            .unwrap_or_else(|_| Action::Continuous(vec![f64::NAN]))
    }
}

fn check_comparable(old: &StochasticPolicy, new: &StochasticPolicy) -> Result<(), TrpoError> {
    if old.kind != new.kind || old.net.dims() != new.net.dims() {
        return Err(TrpoError::Mismatch(format!(
            "{} {:?} vs {} {:?}",
            old.kind.tag(),
            old.net.dims(),
            new.kind.tag(),
            new.net.dims()
        )));
    }
    Ok(())
}

/// Per-state KL(old ‖ new) and, if `grad` is given, its gradient with
/// respect to the new policy's parameters.
fn kl_state(
    old: &StochasticPolicy,
    new: &StochasticPolicy,
    state: &[f64],
    grad: Option<&mut [f64]>,
) -> Result<f64, TrpoError> {
    let out_old = old.mean(state)?;
    let cache = new.forward(state)?;
    let out_new = cache.output();
    let (kl, out_grad, std_grad) = match new.kind {
        PolicyKind::Categorical => {
            let lo = log_softmax(&out_old);
            let ln = log_softmax(out_new);
            let kl: f64 = lo.iter().zip(&ln).map(|(&a, &b)| a.exp() * (a - b)).sum();
            let g: Vec<f64> = lo.iter().zip(&ln).map(|(&a, &b)| b.exp() - a.exp()).collect();
            (kl, g, Vec::new())
        }
        PolicyKind::Gaussian => {
            let mut kl = 0.0;
            let mut g = Vec::with_capacity(out_new.len());
            let mut gs = Vec::with_capacity(out_new.len());
            for j in 0..out_new.len() {
                let (mo, mn) = (out_old[j], out_new[j]);
                let (lso, lsn) = (old.log_std[j], new.log_std[j]);
                let inv_var_n = (-2.0 * lsn).exp();
                let d = mn - mo;
                let ratio = ((2.0 * lso).exp() + d * d) * inv_var_n;
                kl += lsn - lso + 0.5 * ratio - 0.5;
                g.push(d * inv_var_n);
                gs.push(1.0 - ratio);
            }
            (kl, g, gs)
        }
    };
    if let Some(grad) = grad {
        let n = new.net.param_count();
        let (net_grad, tail) = grad.split_at_mut(n);
        new.net.backward_accumulate(&cache, &out_grad, net_grad)?;
        for (t, g) in tail.iter_mut().zip(std_grad) {
            *t += g;
        }
    }
    Ok(kl)
}

/// Mean over `states` of the closed-form KL(old ‖ new).
pub fn mean_kl(
    old: &StochasticPolicy,
    new: &StochasticPolicy,
    states: &[Vec<f64>],
) -> Result<f64, TrpoError> {
    check_comparable(old, new)?;
    if states.is_empty() {
        return Err(TrpoError::EmptyBatch);
    }
    let mut acc = 0.0;
    for s in states {
        acc += kl_state(old, new, s, None)?;
    }
    Ok(acc / states.len() as f64)
}

/// Mean KL(old ‖ new) and its gradient with respect to `new`'s parameters.
pub fn kl_grad(
    old: &StochasticPolicy,
    new: &StochasticPolicy,
    states: &[Vec<f64>],
) -> Result<(f64, Vec<f64>), TrpoError> {
    check_comparable(old, new)?;
    if states.is_empty() {
        return Err(TrpoError::EmptyBatch);
    }
    let mut grad = vec![0.0; new.param_count()];
    let mut acc = 0.0;
    for s in states {
        acc += kl_state(old, new, s, Some(&mut grad))?;
    }
    let n = states.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((acc / n, grad))
}

/// Fisher information of the policy at a fixed batch of states, with forward
/// passes cached so repeated products only cost a JVP and a backward pass.
pub(crate) struct Fisher<'a> {
    policy: &'a StochasticPolicy,
    caches: Vec<ForwardCache>,
    /// Action probabilities per state (categorical only).
    probs: Vec<Vec<f64>>,
}

impl<'a> Fisher<'a> {
    pub(crate) fn new(policy: &'a StochasticPolicy, states: &[Vec<f64>]) -> Result<Self, TrpoError> {
        if states.is_empty() {
            return Err(TrpoError::EmptyBatch);
        }
        let mut caches = Vec::with_capacity(states.len());
        let mut probs = Vec::new();
        for s in states {
            let cache = policy.forward(s)?;
            if policy.kind == PolicyKind::Categorical {
                probs.push(log_softmax(cache.output()).into_iter().map(f64::exp).collect());
            }
            caches.push(cache);
        }
        Ok(Self {
            policy,
            caches,
            probs,
        })
    }

    /// `(F + damping·I) v`.
    pub(crate) fn apply(&self, v: &[f64], damping: f64) -> Result<Vec<f64>, TrpoError> {
        let policy = self.policy;
        if v.len() != policy.param_count() {
            return Err(NumError::Shape(format!(
                "vector has {} entries, policy has {} parameters",
                v.len(),
                policy.param_count()
            ))
            .into());
        }
        let n = policy.net.param_count();
        let (v_net, v_std) = v.split_at(n);
        let mut out = vec![0.0; v.len()];
        for (k, cache) in self.caches.iter().enumerate() {
            let jv = policy.net.jvp(cache, v_net)?;
            let u: Vec<f64> = match policy.kind {
                PolicyKind::Categorical => {
                    let p = &self.probs[k];
                    let pj: f64 = p.iter().zip(&jv).map(|(a, b)| a * b).sum();
                    p.iter().zip(&jv).map(|(&pi, &ji)| pi * (ji - pj)).collect()
                }
                PolicyKind::Gaussian => jv
                    .iter()
                    .zip(&policy.log_std)
                    .map(|(&j, &ls)| j * (-2.0 * ls).exp())
                    .collect(),
            };
            policy.net.backward_accumulate(cache, &u, &mut out[..n])?;
        }
        let count = self.caches.len() as f64;
        for o in &mut out[..n] {
            *o /= count;
        }
        for (o, &vs) in out[n..].iter_mut().zip(v_std) {
            *o = 2.0 * vs;
        }
        for (o, &vi) in out.iter_mut().zip(v) {
            *o += damping * vi;
        }
        if out.iter().any(|x| !x.is_finite()) {
            return Err(TrpoError::NonFinite("fisher-vector product".into()));
        }
        Ok(out)
    }
}

/// `(H + damping·I) v` where `H` is the Hessian of `mean_kl(policy, ·)` at
/// `policy`, computed from exact per-distribution Fisher blocks.
pub fn fisher_vector_product(
    policy: &StochasticPolicy,
    states: &[Vec<f64>],
    v: &[f64],
    damping: f64,
) -> Result<Vec<f64>, TrpoError> {
    Fisher::new(policy, states)?.apply(v, damping)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{dot, finite_diff_grad, relative_error, DenseMatrix, Layer};
    use crate::rng::seeded;

    fn random_states(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = seeded(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    fn perturbed(p: &StochasticPolicy, scale: f64, seed: u64) -> StochasticPolicy {
        let mut rng = seeded(seed);
        let theta: Vec<f64> = p
            .flat_params()
            .iter()
            .map(|t| t + scale * rng.random_range(-1.0..1.0))
            .collect();
        p.with_flat_params(&theta).unwrap()
    }

    fn bias_only(kind: PolicyKind, bias: Vec<f64>, log_std: Vec<f64>) -> StochasticPolicy {
        let layer = Layer {
            weight: DenseMatrix::zeros(bias.len(), 1),
            bias,
        };
        let net = Mlp::from_layers(vec![layer], vec![], OutputTransform::Identity).unwrap();
        StochasticPolicy::from_parts(kind, net, log_std).unwrap()
    }

    #[test]
    fn uniform_categorical_log_prob() {
        let p = bias_only(PolicyKind::Categorical, vec![0.0; 4], vec![]);
        let lp = p.log_prob(&[0.3], &Action::Discrete(2)).unwrap();
        assert!((lp - 0.25f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn standard_normal_peak() {
        let p = bias_only(PolicyKind::Gaussian, vec![0.0], vec![0.0]);
        let lp = p.log_prob(&[0.0], &Action::Continuous(vec![0.0])).unwrap();
        assert!((lp + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn dominant_logit_is_always_chosen() {
        let p = bias_only(PolicyKind::Categorical, vec![0.0, 50.0, 0.0], vec![]);
        let mut rng = seeded(3);
        for _ in 0..1000 {
            assert_eq!(p.sample(&[0.0], &mut rng).unwrap(), Action::Discrete(1));
        }
        let probs = p.probs(&[0.0]).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn minimum_std_samples_near_mean() {
        let p = bias_only(PolicyKind::Gaussian, vec![0.7, -0.2], vec![-1e9, -1e9]);
        assert_eq!(p.log_std(), &[LOG_STD_MIN, LOG_STD_MIN]);
        let mut rng = seeded(4);
        let Action::Continuous(a) = p.sample(&[0.0], &mut rng).unwrap() else {
            panic!()
        };
        assert!((a[0] - 0.7).abs() < 0.05 && (a[1] + 0.2).abs() < 0.05);
    }

    #[test]
    fn log_std_is_clamped_on_update() {
        let mut p = bias_only(PolicyKind::Gaussian, vec![0.0], vec![0.0]);
        p.set_flat_params(&[0.0, 0.0, 9.0]).unwrap();
        assert_eq!(p.log_std(), &[LOG_STD_MAX]);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let mut rng = seeded(5);
        let p = StochasticPolicy::gaussian(3, 2, &[8], Activation::Tanh, -0.5, &mut rng).unwrap();
        let draw = |seed| {
            let mut rng = seeded(seed);
            (0..20)
                .map(|_| p.sample(&[0.1, 0.2, 0.3], &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
    }

    #[test]
    fn mismatched_actions_rejected() {
        let p = bias_only(PolicyKind::Categorical, vec![0.0; 3], vec![]);
        assert!(p.log_prob(&[0.0], &Action::Discrete(3)).is_err());
        assert!(p.log_prob(&[0.0], &Action::Continuous(vec![0.0])).is_err());
        assert!(bias_only(PolicyKind::Gaussian, vec![0.0], vec![0.0])
            .log_prob(&[0.0], &Action::Continuous(vec![0.0, 1.0]))
            .is_err());
    }

    fn check_log_prob_grad(p: &StochasticPolicy, state: &[f64], action: &Action) {
        let (_, grad) = p.log_prob_grad(state, action).unwrap();
        let fd = finite_diff_grad(
            |theta| p.with_flat_params(theta).unwrap().log_prob(state, action).unwrap(),
            &p.flat_params(),
            1e-5,
        )
        .unwrap();
        let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in grad.iter().zip(&fd) {
            assert!(relative_error(*a, *b, 1e-3 * scale.max(1.0)) < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn log_prob_gradient_matches_finite_differences() {
        let mut rng = seeded(6);
        for act in [Activation::Tanh, Activation::Relu, Activation::LeakyRelu] {
            let cat = perturbed(
                &StochasticPolicy::categorical(4, 3, &[6, 5], act, &mut rng).unwrap(),
                0.5,
                7,
            );
            check_log_prob_grad(&cat, &[0.3, -0.2, 0.8, 0.1], &Action::Discrete(1));
            let gauss = perturbed(
                &StochasticPolicy::gaussian(4, 2, &[6, 5], act, -0.3, &mut rng).unwrap(),
                0.5,
                8,
            );
            check_log_prob_grad(&gauss, &[0.3, -0.2, 0.8, 0.1], &Action::Continuous(vec![0.4, -1.1]));
        }
    }

    #[test]
    fn kl_of_identical_policies_is_zero() {
        let mut rng = seeded(9);
        let p = StochasticPolicy::gaussian(3, 2, &[8], Activation::Tanh, -0.5, &mut rng).unwrap();
        let states = random_states(10, 3, 1);
        assert_eq!(mean_kl(&p, &p, &states).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_kl_same_std_formula() {
        let sigma: f64 = 0.6;
        let a = bias_only(PolicyKind::Gaussian, vec![0.3], vec![sigma.ln()]);
        let b = bias_only(PolicyKind::Gaussian, vec![-0.9], vec![sigma.ln()]);
        let kl = mean_kl(&a, &b, &[vec![0.0], vec![1.0]]).unwrap();
        let want = (0.3f64 + 0.9).powi(2) / (2.0 * sigma * sigma);
        assert!((kl - want).abs() < 1e-12);
    }

    #[test]
    fn kl_nonnegative_on_random_pairs() {
        let mut rng = seeded(10);
        let states = random_states(16, 3, 2);
        for k in 0..20 {
            let cat = StochasticPolicy::categorical(3, 4, &[8], Activation::Tanh, &mut rng).unwrap();
            assert!(mean_kl(&perturbed(&cat, 1.0, k), &perturbed(&cat, 1.0, k + 100), &states).unwrap() >= 0.0);
            let g = StochasticPolicy::gaussian(3, 2, &[8], Activation::Tanh, 0.0, &mut rng).unwrap();
            assert!(mean_kl(&perturbed(&g, 1.0, k), &perturbed(&g, 1.0, k + 100), &states).unwrap() >= 0.0);
        }
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        let mut rng = seeded(11);
        let states = random_states(6, 3, 3);
        for act in [Activation::Tanh, Activation::LeakyRelu] {
            for base in [
                StochasticPolicy::categorical(3, 4, &[7], act, &mut rng).unwrap(),
                StochasticPolicy::gaussian(3, 2, &[7], act, -0.2, &mut rng).unwrap(),
            ] {
                let old = perturbed(&base, 0.5, 1);
                let new = perturbed(&base, 0.5, 2);
                let (_, grad) = kl_grad(&old, &new, &states).unwrap();
                let fd = finite_diff_grad(
                    |t| mean_kl(&old, &new.with_flat_params(t).unwrap(), &states).unwrap(),
                    &new.flat_params(),
                    1e-5,
                )
                .unwrap();
                let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for (a, b) in grad.iter().zip(&fd) {
                    assert!(relative_error(*a, *b, 1e-3 * scale) < 1e-4, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn fvp_of_zero_is_zero() {
        let mut rng = seeded(12);
        let p = StochasticPolicy::gaussian(3, 2, &[8], Activation::Tanh, -0.5, &mut rng).unwrap();
        let v = vec![0.0; p.param_count()];
        let out = fisher_vector_product(&p, &random_states(5, 3, 4), &v, 0.1).unwrap();
        assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn fvp_matches_finite_difference_hvp() {
        let mut rng = seeded(13);
        let states = random_states(8, 3, 5);
        for base in [
            StochasticPolicy::categorical(3, 4, &[7, 6], Activation::Tanh, &mut rng).unwrap(),
            StochasticPolicy::gaussian(3, 2, &[7, 6], Activation::Tanh, -0.2, &mut rng).unwrap(),
        ] {
            let p = perturbed(&base, 0.6, 3);
            let theta = p.flat_params();
            let v: Vec<f64> = (0..theta.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fvp = fisher_vector_product(&p, &states, &v, 0.0).unwrap();
            let eps = 1e-5;
            let shifted = |sign: f64| {
                let t: Vec<f64> = theta.iter().zip(&v).map(|(a, b)| a + sign * eps * b).collect();
                kl_grad(&p, &p.with_flat_params(&t).unwrap(), &states).unwrap().1
            };
            let (gp, gm) = (shifted(1.0), shifted(-1.0));
            let hvp: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
            let err = fvp
                .iter()
                .zip(&hvp)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let scale = hvp.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(err / scale < 1e-3, "{} relative error {}", p.kind().tag(), err / scale);
        }
    }

    #[test]
    fn fvp_respects_damping_bound() {
        let mut rng = seeded(14);
        let states = random_states(8, 3, 6);
        let p = StochasticPolicy::categorical(3, 3, &[8], Activation::Relu, &mut rng).unwrap();
        for _ in 0..10 {
            let v: Vec<f64> = (0..p.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let out = fisher_vector_product(&p, &states, &v, 0.1).unwrap();
            assert!(dot(&v, &out) >= 0.1 * dot(&v, &v) - 1e-12);
        }
    }

    #[test]
    fn tabular_probs_reads_one_hot_rows() {
        let mut rng = seeded(15);
        let p = StochasticPolicy::categorical(5, 4, &[8], Activation::Tanh, &mut rng).unwrap();
        let table = p.tabular_probs(5).unwrap();
        for s in 0..5 {
            assert_eq!(table.probs(s), p.probs(&one_hot(s, 5)).unwrap().as_slice());
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = seeded(16);
        let p = StochasticPolicy::gaussian(3, 2, &[8], Activation::Tanh, -0.7, &mut rng).unwrap();
        let mut buf = Vec::new();
        p.to_checkpoint().write_to(&mut buf).unwrap();
        let back = StochasticPolicy::from_checkpoint(&Checkpoint::read_from(&mut buf.as_slice()).unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
