use crate::real::{matmul, Real};

/// `y[N, out] = x[N, in] * W[out, in]^T + b`.
pub fn fc_forward<T: Real>(x: &[T], w: &[T], b: &[T], batch: usize, inputs: usize, outputs: usize) -> Vec<T> {
    let mut y = Vec::with_capacity(batch * outputs);
    for _ in 0..batch {
        y.extend_from_slice(b);
    }
    matmul(batch, inputs, outputs, x, false, w, true, T::one(), &mut y);
    y
}

pub fn fc_backward_input<T: Real>(w: &[T], dy: &[T], batch: usize, inputs: usize, outputs: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); batch * inputs];
    matmul(batch, outputs, inputs, dy, false, w, false, T::zero(), &mut dx);
    dx
}

pub fn fc_backward_weight<T: Real>(x: &[T], dy: &[T], batch: usize, inputs: usize, outputs: usize) -> Vec<T> {
    let mut dw = vec![T::zero(); outputs * inputs];
    matmul(outputs, batch, inputs, dy, true, x, false, T::zero(), &mut dw);
    dw
}

pub fn fc_backward_bias<T: Real>(dy: &[T], outputs: usize) -> Vec<T> {
    let mut db = vec![T::zero(); outputs];
    for row in dy.chunks(outputs) {
        db.iter_mut().zip(row).for_each(|(d, &v)| *d += v);
    }
    db
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fc_small_example() {
        // x = [[1, 2]], W = [[1, 0], [0, 1], [1, 1]], b = [0, 1, 2]
        let y = fc_forward(&[1.0f64, 2.0], &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0], &[0.0, 1.0, 2.0], 1, 2, 3);
        assert_eq!(y, vec![1.0, 3.0, 5.0]);
        let dx = fc_backward_input(&[1.0f64, 0.0, 0.0, 1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], 1, 2, 3);
        assert_eq!(dx, vec![2.0, 2.0]);
        let dw = fc_backward_weight(&[1.0f64, 2.0], &[1.0, 0.0, 2.0], 1, 2, 3);
        assert_eq!(dw, vec![1.0, 2.0, 0.0, 0.0, 2.0, 4.0]);
    }
}
