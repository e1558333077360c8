use rayon::prelude::*;

use super::AdversaryError;
use crate::numkit::{
    Activation, AdamConfig, AdamState, Checkpoint, InitScale, Mlp, NumError, OutputTransform,
};
use crate::rng::Rng;

/// What the discriminator is fed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMode {
    /// `(s, s')`, state-only imitation.
    StateTransition,
    /// `(s, a)`, the action-aware baseline.
    StateAction,
}

impl InputMode {
    pub fn tag(self) -> &'static str {
        match self {
            InputMode::StateTransition => "state-transition",
            InputMode::StateAction => "state-action",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "state-transition" => Some(InputMode::StateTransition),
            "state-action" => Some(InputMode::StateAction),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub adam: AdamConfig,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            activation: Activation::LeakyRelu,
            adam: AdamConfig::with_alpha(3e-4),
        }
    }
}

/// Sigmoid MLP classifier trained to output ≈1 on imitator data and ≈0 on
/// expert data. Outputs are clamped to `[1e-8, 1 − 1e-8]`.
#[derive(Debug, Clone)]
pub struct Discriminator {
    net: Mlp,
    mode: InputMode,
    adam: AdamState,
}

/// Concatenates two feature vectors into one discriminator input.
pub fn pair_features(first: &[f64], second: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(first.len() + second.len());
    v.extend_from_slice(first);
    v.extend_from_slice(second);
    v
}

impl Discriminator {
    pub fn new(
        mode: InputMode,
        input_dim: usize,
        cfg: &DiscriminatorConfig,
        rng: &mut Rng,
    ) -> Result<Self, AdversaryError> {
        let mut dims = vec![input_dim];
        dims.extend(&cfg.hidden);
        dims.push(1);
        let net = Mlp::random(
            &dims,
            cfg.activation,
            OutputTransform::Sigmoid,
            InitScale::default(),
            rng,
        )?;
        Ok(Self::from_net(net, mode, cfg.adam)?)
    }

    pub fn from_net(net: Mlp, mode: InputMode, adam: AdamConfig) -> Result<Self, NumError> {
        if net.output_dim() != 1 || net.output_transform() != OutputTransform::Sigmoid {
            return Err(NumError::Shape(
                "discriminator needs a scalar sigmoid output".into(),
            ));
        }
        let adam = AdamState::new(net.param_count(), adam);
        Ok(Self { net, mode, adam })
    }

    pub fn mode(&self) -> InputMode {
        self.mode
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    /// `D(first, second)`: `(s, s')` or `(s, a)` depending on the mode.
    pub fn forward(&self, first: &[f64], second: &[f64]) -> Result<f64, AdversaryError> {
        self.forward_features(&pair_features(first, second))
    }

    pub fn forward_features(&self, features: &[f64]) -> Result<f64, AdversaryError> {
        if features.len() != self.input_dim() {
            return Err(AdversaryError::Dim {
                expected: self.input_dim(),
                got: features.len(),
            });
        }
        Ok(self.net.predict(features)?[0])
    }

    /// `−log D(first, second)`; finite thanks to the clamp.
    pub fn policy_reward(&self, first: &[f64], second: &[f64]) -> Result<f64, AdversaryError> {
        Ok(-self.forward(first, second)?.ln())
    }

    /// Rewards for a batch of concatenated inputs, evaluated in parallel.
    pub fn policy_rewards(&self, features: &[Vec<f64>]) -> Result<Vec<f64>, AdversaryError> {
        features
            .par_iter()
            .map(|f| self.forward_features(f).map(|d| -d.ln()))
            .collect()
    }

    /// `−(mean_imitator log D + mean_expert log(1 − D))`.
    pub fn loss(&self, imitator: &[Vec<f64>], expert: &[Vec<f64>]) -> Result<f64, AdversaryError> {
        check_batches(imitator, expert)?;
        let mi = mean_by(imitator, |f| self.forward_features(f).map(f64::ln))?;
        let me = mean_by(expert, |f| self.forward_features(f).map(|d| (1.0 - d).ln()))?;
        Ok(-(mi + me))
    }

    /// Loss and its exact gradient with respect to the flat parameters.
    pub fn loss_and_grad(
        &self,
        imitator: &[Vec<f64>],
        expert: &[Vec<f64>],
    ) -> Result<(f64, Vec<f64>), AdversaryError> {
        check_batches(imitator, expert)?;
        let mut grads = vec![0.0; self.net.param_count()];
        let mut loss = 0.0;
        let wi = 1.0 / imitator.len() as f64;
        for f in imitator {
            let cache = self.forward_cache(f)?;
            let d = cache.output()[0];
            loss -= wi * d.ln();
            self.net.backward_accumulate(&cache, &[-wi / d], &mut grads)?;
        }
        let we = 1.0 / expert.len() as f64;
        for f in expert {
            let cache = self.forward_cache(f)?;
            let d = cache.output()[0];
            loss -= we * (1.0 - d).ln();
            self.net
                .backward_accumulate(&cache, &[we / (1.0 - d)], &mut grads)?;
        }
        Ok((loss, grads))
    }

    fn forward_cache(&self, f: &[f64]) -> Result<crate::numkit::ForwardCache, AdversaryError> {
        if f.len() != self.input_dim() {
            return Err(AdversaryError::Dim {
                expected: self.input_dim(),
                got: f.len(),
            });
        }
        Ok(self.net.forward(f)?)
    }

    /// One Adam step on the loss; returns the loss before the step.
    pub fn update(&mut self, imitator: &[Vec<f64>], expert: &[Vec<f64>]) -> Result<f64, AdversaryError> {
        let (loss, grads) = self.loss_and_grad(imitator, expert)?;
        let mut params = self.net.flat_params();
        self.adam.step(&mut params, &grads)?;
        self.net.set_flat_params(&params)?;
        Ok(loss)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("discriminator");
        ck.tags.insert("input_mode".into(), self.mode.tag().into());
        ck.tags.insert("input_dim".into(), self.input_dim().to_string());
        ck.nets.push(self.net.clone());
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint, adam: AdamConfig) -> Result<Self, AdversaryError> {
        if ck.kind != "discriminator" || ck.nets.len() != 1 {
            return Err(NumError::Format(format!(
                "expected a discriminator checkpoint, got `{}`",
                ck.kind
            ))
            .into());
        }
        let tag = ck.tag("input_mode")?;
        let mode = InputMode::from_tag(tag)
            .ok_or_else(|| NumError::Format(format!("unknown input_mode `{tag}`")))?;
        Ok(Self::from_net(ck.nets[0].clone(), mode, adam)?)
    }
}

fn check_batches(imitator: &[Vec<f64>], expert: &[Vec<f64>]) -> Result<(), AdversaryError> {
    if imitator.is_empty() || expert.is_empty() {
        return Err(AdversaryError::EmptyBatch);
    }
    Ok(())
}

fn mean_by<F>(batch: &[Vec<f64>], f: F) -> Result<f64, AdversaryError>
where
    F: Fn(&[f64]) -> Result<f64, AdversaryError>,
{
    let mut acc = 0.0;
    for x in batch {
        acc += f(x)?;
    }
    Ok(acc / batch.len() as f64)
}
