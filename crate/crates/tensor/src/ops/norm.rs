//! Per-channel batch normalization over `[N, C, ...]` inputs.

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    Train,
    Infer,
}

/// Running statistics of one batch-norm layer.
///
/// Updates follow `running = momentum * running + (1 - momentum) * batch`,
/// with the unbiased batch variance feeding `running_var`.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<T> {
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: T,
    pub eps: T,
}

impl<T: Real> BatchNormState<T> {
    pub const DEFAULT_MOMENTUM: f64 = 0.9;
    pub const DEFAULT_EPS: f64 = 1e-5;

    pub fn new(channels: usize) -> Self {
        BatchNormState {
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: T::from_f64_lossy(Self::DEFAULT_MOMENTUM),
            eps: T::from_f64_lossy(Self::DEFAULT_EPS),
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }
}

/// Values cached by the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    pub(crate) normalized: Vec<T>,
    pub(crate) inv_std: Vec<T>,
    pub(crate) mode: NormMode,
}

fn layout<T: Real>(x: &Tensor<T>, channels: usize) -> Result<(usize, usize)> {
    if x.rank() < 2 {
        return Err(TensorError::Rank {
            op: "batchnorm",
            expected: 2,
            shape: x.shape().to_vec(),
        });
    }
    if x.dim(1) != channels {
        return Err(TensorError::mismatch("batchnorm", "channels", channels, x.dim(1)));
    }
    let inner: usize = x.shape()[2..].iter().product();
    Ok((x.dim(0), inner))
}

pub fn batchnorm_forward<T: Real>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    state: &mut BatchNormState<T>,
    mode: NormMode,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let channels = state.channels();
    let (batch, inner) = layout(x, channels)?;
    if gamma.len() != channels || beta.len() != channels {
        return Err(TensorError::mismatch("batchnorm", "affine length", channels, gamma.len().min(beta.len())));
    }
    if mode == NormMode::Train && batch < 2 {
        return Err(TensorError::BatchTooSmall(batch));
    }
    let count = batch * inner;
    let count_t = T::from_usize(count).unwrap();
    let data = x.data();
    let idx = |n: usize, c: usize, i: usize| (n * channels + c) * inner + i;

    let mut normalized = vec![T::zero(); data.len()];
    let mut inv_std = vec![T::zero(); channels];
    for c in 0..channels {
        let (mean, var) = match mode {
            NormMode::Train => {
                let mut sum = T::zero();
                for n in 0..batch {
                    for i in 0..inner {
                        sum += data[idx(n, c, i)];
                    }
                }
                let mean = sum / count_t;
                let mut sq = T::zero();
                for n in 0..batch {
                    for i in 0..inner {
                        let d = data[idx(n, c, i)] - mean;
                        sq += d * d;
                    }
                }
                let var = sq / count_t;
                let unbiased = sq / T::from_usize(count - 1).unwrap();
                let m = state.momentum;
                state.running_mean[c] = m * state.running_mean[c] + (T::one() - m) * mean;
                state.running_var[c] = m * state.running_var[c] + (T::one() - m) * unbiased;
                (mean, var)
            }
            NormMode::Infer => (state.running_mean[c], state.running_var[c]),
        };
        let is = T::one() / (var + state.eps).sqrt();
        inv_std[c] = is;
        for n in 0..batch {
            for i in 0..inner {
                let j = idx(n, c, i);
                normalized[j] = (data[j] - mean) * is;
            }
        }
    }
    let mut out = vec![T::zero(); data.len()];
    for n in 0..batch {
        for c in 0..channels {
            for i in 0..inner {
                let j = idx(n, c, i);
                out[j] = gamma[c] * normalized[j] + beta[c];
            }
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), out)?,
        BatchNormCache {
            normalized,
            inv_std,
            mode,
        },
    ))
}

pub struct BatchNormGrads<T> {
    pub input: Option<Vec<T>>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

pub fn batchnorm_backward<T: Real>(
    shape: &[usize],
    gamma: &[T],
    cache: &BatchNormCache<T>,
    dy: &[T],
    want_input: bool,
) -> BatchNormGrads<T> {
    let channels = gamma.len();
    let batch = shape[0];
    let inner: usize = shape[2..].iter().product();
    let count = T::from_usize(batch * inner).unwrap();
    let idx = |n: usize, c: usize, i: usize| (n * channels + c) * inner + i;
    let mut dgamma = vec![T::zero(); channels];
    let mut dbeta = vec![T::zero(); channels];
    for c in 0..channels {
        for n in 0..batch {
            for i in 0..inner {
                let j = idx(n, c, i);
                dgamma[c] += dy[j] * cache.normalized[j];
                dbeta[c] += dy[j];
            }
        }
    }
    let input = want_input.then(|| {
        let mut dx = vec![T::zero(); dy.len()];
        for c in 0..channels {
            let scale = gamma[c] * cache.inv_std[c];
            for n in 0..batch {
                for i in 0..inner {
                    let j = idx(n, c, i);
                    dx[j] = match cache.mode {
                        NormMode::Infer => scale * dy[j],
                        NormMode::Train => {
                            scale * (dy[j] - dbeta[c] / count - cache.normalized[j] * dgamma[c] / count)
                        }
                    };
                }
            }
        }
        dx
    });
    BatchNormGrads {
        input,
        gamma: dgamma,
        beta: dbeta,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tensor<f64> {
        Tensor::from_fn(vec![4, 2, 5], |i| ((i * 13 % 7) as f64) * 0.7 - 1.0 + (i / 10) as f64)
    }

    #[test]
    fn train_mode_standardizes_each_channel() {
        let x = sample();
        let mut st = BatchNormState::new(2);
        let (y, _) = batchnorm_forward(&x, &[1.0, 1.0], &[0.0, 0.0], &mut st, NormMode::Train).unwrap();
        for c in 0..2 {
            let vals: Vec<f64> = (0..4).flat_map(|n| (0..5).map(move |i| (n, i))).map(|(n, i)| y.data()[(n * 2 + c) * 5 + i]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn constant_channel_maps_to_zero() {
        let x = Tensor::<f64>::full(vec![3, 2, 4], 5.0);
        let mut st = BatchNormState::new(2);
        let (y, _) = batchnorm_forward(&x, &[1.0, 1.0], &[0.0, 0.0], &mut st, NormMode::Train).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn running_mean_after_one_step() {
        let x = sample();
        let mut st = BatchNormState::<f64>::new(2);
        let (_, _) = batchnorm_forward(&x, &[1.0, 1.0], &[0.0, 0.0], &mut st, NormMode::Train).unwrap();
        for c in 0..2 {
            let mut sum = 0.0;
            for n in 0..4 {
                for i in 0..5 {
                    sum += x.data()[(n * 2 + c) * 5 + i];
                }
            }
            let batch_mean = sum / 20.0;
            // Running mean starts at zero, so one update leaves (1 - momentum) * batch_mean.
            assert!((st.running_mean[c] - (1.0 - 0.9) * batch_mean).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_affine_on_standardized_input() {
        let x = Tensor::<f64>::new(vec![2, 1, 2], vec![-1.0, 1.0, -1.0, 1.0]).unwrap();
        let mut st = BatchNormState::new(1);
        let (y, _) = batchnorm_forward(&x, &[1.0], &[0.0], &mut st, NormMode::Train).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn single_sample_batch_rejected_in_train_mode() {
        let x = Tensor::<f64>::zeros(vec![1, 2, 4]);
        let mut st = BatchNormState::new(2);
        assert_eq!(
            batchnorm_forward(&x, &[1.0, 1.0], &[0.0, 0.0], &mut st, NormMode::Train).unwrap_err(),
            TensorError::BatchTooSmall(1)
        );
        assert!(batchnorm_forward(&x, &[1.0, 1.0], &[0.0, 0.0], &mut st, NormMode::Infer).is_ok());
    }

    #[test]
    fn infer_mode_is_deterministic_and_stateless() {
        let x = sample();
        let mut st = BatchNormState::new(2);
        st.running_mean = vec![0.5, -0.5];
        st.running_var = vec![2.0, 0.5];
        let before = st.clone();
        let (a, _) = batchnorm_forward(&x, &[1.5, 0.5], &[0.1, 0.2], &mut st, NormMode::Infer).unwrap();
        let (b, _) = batchnorm_forward(&x, &[1.5, 0.5], &[0.1, 0.2], &mut st, NormMode::Infer).unwrap();
        assert_eq!(a, b);
        assert_eq!(st, before);
    }
}
