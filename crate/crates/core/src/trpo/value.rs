use rand::seq::SliceRandom;

use super::TrpoError;
use crate::numkit::{Activation, AdamConfig, AdamState, Checkpoint, InitScale, Mlp, OutputTransform};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ValueConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub minibatch: usize,
    pub adam: AdamConfig,
}

impl Default for ValueConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            epochs: 5,
            minibatch: 64,
            adam: AdamConfig::with_alpha(1e-3),
        }
    }
}

/// State-value baseline `V(s)` fit by squared-error regression.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    net: Mlp,
    adam: AdamState,
    config: ValueConfig,
}

impl ValueFunction {
    pub fn new(obs_dim: usize, config: ValueConfig, rng: &mut Rng) -> Result<Self, TrpoError> {
        let mut dims = vec![obs_dim];
        dims.extend_from_slice(&config.hidden);
        dims.push(1);
        let net = Mlp::random(
            &dims,
            config.activation,
            OutputTransform::Identity,
            InitScale::default(),
            rng,
        )?;
        Ok(Self::from_net(net, config))
    }

    pub fn from_net(net: Mlp, config: ValueConfig) -> Self {
        let adam = AdamState::new(net.param_count(), config.adam);
        Self { net, adam, config }
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn config(&self) -> &ValueConfig {
        &self.config
    }

    pub fn value(&self, state: &[f64]) -> Result<f64, TrpoError> {
        let v = self.net.predict(state)?[0];
        if !v.is_finite() {
            return Err(TrpoError::NonFinite("value prediction".into()));
        }
        Ok(v)
    }

    pub fn values(&self, states: &[Vec<f64>]) -> Result<Vec<f64>, TrpoError> {
        states.iter().map(|s| self.value(s)).collect()
    }

    /// Mean squared error over the given targets.
    pub fn mse(&self, states: &[Vec<f64>], targets: &[f64]) -> Result<f64, TrpoError> {
        let mut acc = 0.0;
        for (s, &t) in states.iter().zip(targets) {
            acc += (self.value(s)? - t).powi(2);
        }
        Ok(acc / states.len().max(1) as f64)
    }

    /// Shuffled minibatch Adam on `½ (V(s) − target)²` for the configured
    /// number of epochs. Returns the final mean squared error.
    pub fn fit(&mut self, states: &[Vec<f64>], targets: &[f64], rng: &mut Rng) -> Result<f64, TrpoError> {
        if states.len() != targets.len() {
            return Err(TrpoError::Mismatch(format!(
                "{} states but {} targets",
                states.len(),
                targets.len()
            )));
        }
        if states.is_empty() {
            return Err(TrpoError::EmptyBatch);
        }
        let mut order: Vec<usize> = (0..states.len()).collect();
        let mb = self.config.minibatch.max(1);
        let mut grads = vec![0.0; self.net.param_count()];
        for _ in 0..self.config.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(mb) {
                grads.iter_mut().for_each(|g| *g = 0.0);
                for &i in chunk {
                    let cache = self.net.forward(&states[i])?;
                    let err = (cache.output()[0] - targets[i]) / chunk.len() as f64;
                    self.net.backward_accumulate(&cache, &[err], &mut grads)?;
                }
                let mut params = self.net.flat_params();
                self.adam.step(&mut params, &grads)?;
                self.net.set_flat_params(&params)?;
            }
        }
        self.mse(states, targets)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("value");
        ck.nets.push(self.net.clone());
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint, config: ValueConfig) -> Result<Self, TrpoError> {
        if ck.kind != "value" || ck.nets.len() != 1 {
            return Err(TrpoError::Checkpoint(format!(
                "expected a value checkpoint, got `{}`",
                ck.kind
            )));
        }
        Ok(Self::from_net(ck.nets[0].clone(), config))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn fits_a_linear_target() {
        let mut rng = seeded(1);
        let cfg = ValueConfig {
            hidden: vec![16],
            epochs: 200,
            minibatch: 16,
            adam: AdamConfig::with_alpha(1e-2),
            ..ValueConfig::default()
        };
        let mut vf = ValueFunction::new(2, cfg, &mut rng).unwrap();
        let states: Vec<Vec<f64>> = (0..64)
            .map(|i| vec![(i % 8) as f64 / 8.0, (i / 8) as f64 / 8.0])
            .collect();
        let targets: Vec<f64> = states.iter().map(|s| 2.0 * s[0] - s[1] + 0.5).collect();
        let before = vf.mse(&states, &targets).unwrap();
        let after = vf.fit(&states, &targets, &mut rng).unwrap();
        assert!(after < 1e-3 && after < before, "{before} -> {after}");
    }

    #[test]
    fn rejects_misaligned_targets() {
        let mut rng = seeded(2);
        let mut vf = ValueFunction::new(2, ValueConfig::default(), &mut rng).unwrap();
        assert!(vf.fit(&[vec![0.0, 0.0]], &[], &mut rng).is_err());
        assert!(matches!(vf.fit(&[], &[], &mut rng), Err(TrpoError::EmptyBatch)));
    }
}
