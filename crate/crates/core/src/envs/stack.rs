use std::collections::VecDeque;

use super::{Action, Env, EnvError, EnvSpec, StepResult};

/// Emits the concatenation of the last `k` raw observations, oldest first.
/// At the start of an episode the first observation fills every slot.
#[derive(Clone)]
pub struct StackedEnv {
    inner: Box<dyn Env>,
    k: usize,
    spec: EnvSpec,
    history: VecDeque<Vec<f64>>,
}

impl StackedEnv {
    pub fn new(inner: Box<dyn Env>, k: usize) -> Result<Self, EnvError> {
        if k == 0 {
            return Err(EnvError::Invalid("history length must be at least 1".into()));
        }
        let mut spec = inner.spec().clone();
        spec.obs_dim *= k;
        spec.id = format!("{}+stack{k}", spec.id);
        // Stacked observations are no longer one-hot tabular states.
        spec.state_count = None;
        Ok(Self {
            inner,
            k,
            spec,
            history: VecDeque::with_capacity(k),
        })
    }

    pub fn history_len(&self) -> usize {
        self.k
    }

    fn stacked(&self) -> Vec<f64> {
        self.history.iter().flatten().copied().collect()
    }
}

impl Env for StackedEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let first = self.inner.reset(seed);
        self.history.clear();
        for _ in 0..self.k {
            self.history.push_back(first.clone());
        }
        self.stacked()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        let step = self.inner.step(action)?;
        self.history.pop_front();
        self.history.push_back(step.obs);
        Ok(StepResult {
            obs: self.stacked(),
            reward: step.reward,
            done: step.done,
        })
    }

    fn clone_box(&self) -> Box<dyn Env> {
        Box::new(self.clone())
    }

    fn obs_bounds(&self) -> Vec<(f64, f64)> {
        let inner = self.inner.obs_bounds();
        (0..self.k).flat_map(|_| inner.iter().copied()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{PointMass, PointMassConfig};

    fn pm() -> Box<dyn Env> {
        Box::new(PointMass::new(PointMassConfig::default()).unwrap())
    }

    #[test]
    fn k1_is_identity() {
        let mut raw = pm();
        let mut wrapped = StackedEnv::new(pm(), 1).unwrap();
        assert_eq!(raw.reset(3), wrapped.reset(3));
        let a = Action::Continuous(vec![0.3, -0.2]);
        for _ in 0..5 {
            assert_eq!(raw.step(&a).unwrap(), wrapped.step(&a).unwrap());
        }
    }

    #[test]
    fn initial_frame_is_repeated() {
        let mut wrapped = StackedEnv::new(pm(), 3).unwrap();
        let mut raw = pm();
        let s0 = raw.reset(9);
        let obs = wrapped.reset(9);
        assert_eq!(obs.len(), 12);
        assert_eq!(obs, [s0.clone(), s0.clone(), s0].concat());
    }

    #[test]
    fn history_slides() {
        let mut wrapped = StackedEnv::new(pm(), 2).unwrap();
        let mut raw = pm();
        raw.reset(2);
        wrapped.reset(2);
        let a = Action::Continuous(vec![1.0, 0.5]);
        let s1 = raw.step(&a).unwrap().obs;
        let s2 = raw.step(&a).unwrap().obs;
        wrapped.step(&a).unwrap();
        let obs = wrapped.step(&a).unwrap().obs;
        assert_eq!(obs, [s1, s2].concat());
    }

    #[test]
    fn zero_history_rejected() {
        assert!(StackedEnv::new(pm(), 0).is_err());
    }
}
