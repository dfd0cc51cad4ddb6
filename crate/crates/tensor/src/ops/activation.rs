use crate::real::Real;

pub fn relu<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

pub fn leaky_relu<T: Real>(x: T, slope: T) -> T {
    if x > T::zero() {
        x
    } else {
        slope * x
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Row-wise softmax over the last axis with max subtraction.
pub fn softmax_rows<T: Real>(x: &[T], width: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for (row, dst) in x.chunks(width).zip(out.chunks_mut(width)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - max).exp();
            total += *d;
        }
        dst.iter_mut().for_each(|d| *d /= total);
    }
    out
}

/// Row-wise log-softmax over the last axis.
pub fn log_softmax_rows<T: Real>(x: &[T], width: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for (row, dst) in x.chunks(width).zip(out.chunks_mut(width)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = v - lse;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scalar_examples() {
        assert_eq!(leaky_relu(-1.0f64, 0.2), -0.2);
        assert_eq!(relu(-3.0f64), 0.0);
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert_eq!(softmax_rows(&[1.0f64; 4], 4), vec![0.25; 4]);
    }

    #[test]
    fn sigmoid_is_open_interval_for_moderate_inputs() {
        for x in [-30.0f64, -5.0, 0.0, 5.0, 30.0] {
            let s = sigmoid(x);
            assert!(s > 0.0 && s < 1.0);
        }
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_for_large_logits(row in proptest::collection::vec(-1e3f64..1e3, 1..16)) {
            let p = softmax_rows(&row, row.len());
            let total: f64 = p.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-6);
            prop_assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}
