//! Bias-corrected Adam. The update descends the supplied gradient; callers
//! that maximise an objective pass the gradient of its negation.

use crate::error::{Result, TensorError};
use crate::params::{ParamId, ParamStore};
use crate::real::Real;
use crate::tape::Gradients;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub first_moment: Vec<T>,
    pub second_moment: Vec<T>,
    pub step_count: u64,
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        AdamState {
            first_moment: vec![T::zero(); len],
            second_moment: vec![T::zero(); len],
            step_count: 0,
            learning_rate: T::from_f64_lossy(config.learning_rate),
            beta1: T::from_f64_lossy(config.beta1),
            beta2: T::from_f64_lossy(config.beta2),
            epsilon: T::from_f64_lossy(config.epsilon),
        }
    }
}

pub fn adam_step<T: Real>(params: &mut Tensor<T>, grads: &[T], state: &mut AdamState<T>) -> Result<()> {
    if grads.len() != params.numel() || state.first_moment.len() != params.numel() {
        return Err(TensorError::mismatch(
            "adam_step",
            "parameter length",
            params.numel(),
            grads.len(),
        ));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(TensorError::NonFinite { op: "adam_step" });
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let correction1 = T::one() - b1.powi(t);
    let correction2 = T::one() - b2.powi(t);
    let one = T::one();
    for (((p, &g), m), v) in params
        .data_mut()
        .iter_mut()
        .zip(grads)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        *p -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

/// Adam over a fixed set of parameters in a [`ParamStore`]. Parameters
/// outside the set are never touched.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    ids: Vec<ParamId>,
    states: Vec<AdamState<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(store: &ParamStore<T>, ids: &[ParamId], config: AdamConfig) -> Self {
        Adam {
            ids: ids.to_vec(),
            states: ids.iter().map(|&id| AdamState::new(store.get(id).numel(), config)).collect(),
        }
    }

    pub fn ids(&self) -> &[ParamId] {
        &self.ids
    }

    /// Applies one update from `grads`. Owned parameters that received no
    /// gradient on this tape are left alone.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>) -> Result<()> {
        for (&id, state) in self.ids.iter().zip(self.states.iter_mut()) {
            if let Some(g) = grads.param(id) {
                adam_step(store.get_mut(id), g, state)?;
            }
        }
        Ok(())
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        for s in &mut self.states {
            s.learning_rate = T::from_f64_lossy(lr);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Tensor::<f64>::new(vec![3], vec![1.0, -2.0, 3.0]).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(3, AdamConfig::default());
        adam_step(&mut p, &[0.0; 3], &mut st).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let cfg = AdamConfig::default();
        for g in [0.3f64, 5.0, 1e-3] {
            let mut p = Tensor::<f64>::scalar(1.0);
            let mut st = AdamState::new(1, cfg);
            adam_step(&mut p, &[g], &mut st).unwrap();
            let expected = 1.0 - cfg.learning_rate * g / (g + cfg.epsilon);
            assert!((p.item() - expected).abs() < 1e-15);
            assert!((1.0 - p.item() - cfg.learning_rate).abs() < cfg.learning_rate * 1e-4);
        }
    }

    #[test]
    fn deterministic_given_state() {
        let cfg = AdamConfig::default();
        let run = || {
            let mut p = Tensor::<f32>::new(vec![2], vec![0.5, -0.5]).unwrap();
            let mut st = AdamState::new(2, cfg);
            for _ in 0..2 {
                adam_step(&mut p, &[0.1, -0.2], &mut st).unwrap();
            }
            (p, st)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(sa, sb);
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut p = Tensor::<f64>::scalar(0.0);
        let mut st = AdamState::new(1, AdamConfig::default());
        assert!(adam_step(&mut p, &[f64::INFINITY], &mut st).is_err());
        assert_eq!(st.step_count, 0);
    }
}
