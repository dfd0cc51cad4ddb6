//! Output-extent arithmetic for the convolution family.

use crate::error::{Result, TensorError};

/// Ceil-mode 1D convolution length: `ceil((t + 2p - k) / s) + 1`.
///
/// For k=3, s=2, p=1 this is `ceil((t - 1) / 2) + 1`, which is one longer than
/// the usual floor-mode length whenever `t` is even. The extra right-hand
/// window reads implicit zeros.
pub fn conv1d_len(t: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = t + 2 * padding;
    if t == 0 || padded < kernel {
        return Err(TensorError::InputTooSmall {
            op: "conv1d",
            size: padded,
            kernel,
        });
    }
    Ok((padded - kernel).div_ceil(stride) + 1)
}

/// Floor-mode 2D convolution extent: `floor((h + 2p - k) / s) + 1`.
pub fn conv2d_len(h: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = h + 2 * padding;
    if h == 0 || padded < kernel {
        return Err(TensorError::InputTooSmall {
            op: "conv2d",
            size: padded,
            kernel,
        });
    }
    Ok((padded - kernel) / stride + 1)
}

/// Transposed convolution extent: `(h - 1) * s - 2p + k + output_padding`.
pub fn deconv2d_len(
    h: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Result<usize> {
    let size = (h as i64 - 1) * stride as i64 - 2 * padding as i64 + kernel as i64 + output_padding as i64;
    if h == 0 || size <= 0 {
        return Err(TensorError::NonPositiveOutput { op: "deconv2d", size });
    }
    Ok(size as usize)
}

/// Time extents after each stride-2 stage of the voice embedder,
/// `t_{i+1} = ceil((t_i - 1) / 2) + 1`, starting from `t0` (inclusive).
pub fn halving_chain(t0: usize, stages: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(stages + 1);
    let mut t = t0;
    out.push(t);
    for _ in 0..stages {
        t = (t - 1).div_ceil(2) + 1;
        out.push(t);
    }
    out
}
