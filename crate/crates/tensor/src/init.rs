//! Parameter initializers.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::real::Real;
use crate::tensor::Tensor;

/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, the usual default for conv and
/// linear weights and biases.
pub fn fan_in_uniform<T: Real, R: Rng + ?Sized>(shape: Vec<usize>, fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    Tensor::from_fn(shape, |_| T::from_f64_lossy(dist.sample(rng)))
}

/// `U(-bound, bound)`.
pub fn uniform<T: Real, R: Rng + ?Sized>(shape: Vec<usize>, bound: f64, rng: &mut R) -> Tensor<T> {
    let dist = Uniform::new_inclusive(-bound, bound);
    Tensor::from_fn(shape, |_| T::from_f64_lossy(dist.sample(rng)))
}

/// He-uniform: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, variance preserving
/// under ReLU.
pub fn he_uniform<T: Real, R: Rng + ?Sized>(shape: Vec<usize>, fan_in: usize, rng: &mut R) -> Tensor<T> {
    uniform(shape, (6.0 / fan_in.max(1) as f64).sqrt(), rng)
}

pub fn normal<T: Real, R: Rng + ?Sized>(shape: Vec<usize>, mean: f64, std: f64, rng: &mut R) -> Tensor<T> {
    let dist = Normal::new(mean, std).expect("valid normal parameters");
    Tensor::from_fn(shape, |_| T::from_f64_lossy(dist.sample(rng)))
}
