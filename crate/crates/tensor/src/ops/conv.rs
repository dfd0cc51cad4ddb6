//! Convolutions lowered to im2col + GEMM.
//!
//! Layouts: 1D input `[N, C, T]`, weight `[C_out, C_in, K]`; 2D input
//! `[N, C, H, W]`, weight `[C_out, C_in, K, K]`; transposed 2D weight
//! `[C_in, C_out, K, K]`.

use crate::error::{Result, TensorError};
use crate::real::{matmul, Real};
use crate::shape::{conv1d_len, conv2d_len, deconv2d_len};
use crate::tensor::Tensor;

/// Sliding-window geometry over an image of `channels × in_h × in_w`.
/// Window positions outside the image read (and write) zeros.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Window {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Window {
    fn rows(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    fn cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// `cols[(c, ki, kj), (oy, ox)] = img[c, oy*s + ki - p, ox*s + kj - p]`.
    fn im2col<T: Real>(&self, img: &[T], cols: &mut [T]) {
        let ncols = self.cols();
        for c in 0..self.channels {
            let plane = &img[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for ki in 0..self.kernel_h {
                for kj in 0..self.kernel_w {
                    let row = (c * self.kernel_h + ki) * self.kernel_w + kj;
                    let dst = &mut cols[row * ncols..(row + 1) * ncols];
                    for oy in 0..self.out_h {
                        let iy = (oy * self.stride_h + ki) as isize - self.pad_h as isize;
                        let line = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        if iy < 0 || iy as usize >= self.in_h {
                            line.iter_mut().for_each(|v| *v = T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * self.in_w..(iy as usize + 1) * self.in_w];
                        for (ox, out) in line.iter_mut().enumerate() {
                            let ix = (ox * self.stride_w + kj) as isize - self.pad_w as isize;
                            *out = if ix < 0 || ix as usize >= self.in_w {
                                T::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Window::im2col`]; accumulates into `img`.
    fn col2im<T: Real>(&self, cols: &[T], img: &mut [T]) {
        let ncols = self.cols();
        for c in 0..self.channels {
            let plane = &mut img[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for ki in 0..self.kernel_h {
                for kj in 0..self.kernel_w {
                    let row = (c * self.kernel_h + ki) * self.kernel_w + kj;
                    let src = &cols[row * ncols..(row + 1) * ncols];
                    for oy in 0..self.out_h {
                        let iy = (oy * self.stride_h + ki) as isize - self.pad_h as isize;
                        if iy < 0 || iy as usize >= self.in_h {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.in_w..(iy as usize + 1) * self.in_w];
                        let line = &src[oy * self.out_w..(oy + 1) * self.out_w];
                        for (ox, &v) in line.iter().enumerate() {
                            let ix = (ox * self.stride_w + kj) as isize - self.pad_w as isize;
                            if ix >= 0 && (ix as usize) < self.in_w {
                                dst[ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn expect_rank<T: Real>(op: &'static str, t: &Tensor<T>, rank: usize) -> Result<()> {
    if t.rank() != rank {
        return Err(TensorError::Rank {
            op,
            expected: rank,
            shape: t.shape().to_vec(),
        });
    }
    Ok(())
}

fn expect_dim(op: &'static str, name: &str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(TensorError::mismatch(op, name, expected, actual));
    }
    Ok(())
}

/// Gradients of a convolution-like layer. Entries are `None` when not requested.
#[derive(Debug, Default)]
pub struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub weight: Option<Vec<T>>,
    pub bias: Option<Vec<T>>,
}

/// Which gradients a backward call should produce.
#[derive(Clone, Copy, Debug)]
pub struct Wants {
    pub input: bool,
    pub weight: bool,
    pub bias: bool,
}

/// Forward/backward for a correlation `y = W * im2col(x) + b` given a window.
#[derive(Clone, Copy, Debug)]
struct Correlation {
    window: Window,
    out_channels: usize,
}

impl Correlation {
    fn forward<T: Real>(&self, batch: usize, x: &[T], w: &[T], b: &[T]) -> Vec<T> {
        let g = &self.window;
        let (rows, ncols) = (g.rows(), g.cols());
        let in_stride = g.channels * g.in_h * g.in_w;
        let out_stride = self.out_channels * ncols;
        let mut cols = vec![T::zero(); rows * ncols];
        let mut y = vec![T::zero(); batch * out_stride];
        for n in 0..batch {
            g.im2col(&x[n * in_stride..(n + 1) * in_stride], &mut cols);
            let yn = &mut y[n * out_stride..(n + 1) * out_stride];
            for (co, chunk) in yn.chunks_mut(ncols).enumerate() {
                chunk.iter_mut().for_each(|v| *v = b[co]);
            }
            matmul(self.out_channels, rows, ncols, w, false, &cols, false, T::one(), yn);
        }
        y
    }

    fn backward<T: Real>(&self, batch: usize, x: &[T], w: &[T], dy: &[T], wants: Wants) -> ConvGrads<T> {
        let g = &self.window;
        let (rows, ncols) = (g.rows(), g.cols());
        let in_stride = g.channels * g.in_h * g.in_w;
        let out_stride = self.out_channels * ncols;
        let mut cols = vec![T::zero(); rows * ncols];
        let mut dcols = vec![T::zero(); rows * ncols];
        let mut dx = wants.input.then(|| vec![T::zero(); x.len()]);
        let mut dw = wants.weight.then(|| vec![T::zero(); w.len()]);
        let mut db = wants.bias.then(|| vec![T::zero(); self.out_channels]);
        for n in 0..batch {
            let dyn_ = &dy[n * out_stride..(n + 1) * out_stride];
            if let Some(dw) = dw.as_mut() {
                g.im2col(&x[n * in_stride..(n + 1) * in_stride], &mut cols);
                // dW[co, r] += dy[co, j] * cols[r, j]
                matmul(self.out_channels, ncols, rows, dyn_, false, &cols, true, T::one(), dw);
            }
            if let Some(db) = db.as_mut() {
                for (co, chunk) in dyn_.chunks(ncols).enumerate() {
                    db[co] += chunk.iter().copied().sum();
                }
            }
            if let Some(dx) = dx.as_mut() {
                // dcols[r, j] = W[co, r] * dy[co, j]
                matmul(rows, self.out_channels, ncols, w, true, dyn_, false, T::zero(), &mut dcols);
                g.col2im(&dcols, &mut dx[n * in_stride..(n + 1) * in_stride]);
            }
        }
        ConvGrads {
            input: dx,
            weight: dw,
            bias: db,
        }
    }
}

/// Validated shape information for a 1D convolution.
#[derive(Clone, Copy, Debug)]
pub struct Conv1dPlan {
    batch: usize,
    inner: Correlation,
}

impl Conv1dPlan {
    pub fn new<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, stride: usize, padding: usize) -> Result<Self> {
        const OP: &str = "conv1d";
        expect_rank(OP, x, 3)?;
        expect_rank(OP, w, 3)?;
        let (batch, cin, t) = (x.dim(0), x.dim(1), x.dim(2));
        let (cout, wcin, k) = (w.dim(0), w.dim(1), w.dim(2));
        expect_dim(OP, "input channels", wcin, cin)?;
        expect_dim(OP, "bias length", cout, b.numel())?;
        if stride == 0 {
            return Err(TensorError::InvalidSpec("conv1d stride must be positive".into()));
        }
        let out = conv1d_len(t, k, stride, padding)?;
        Ok(Conv1dPlan {
            batch,
            inner: Correlation {
                window: Window {
                    channels: cin,
                    in_h: 1,
                    in_w: t,
                    kernel_h: 1,
                    kernel_w: k,
                    stride_h: 1,
                    stride_w: stride,
                    pad_h: 0,
                    pad_w: padding,
                    out_h: 1,
                    out_w: out,
                },
                out_channels: cout,
            },
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.batch, self.inner.out_channels, self.inner.window.out_w]
    }

    pub fn forward<T: Real>(&self, x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
        let y = self.inner.forward(self.batch, x.data(), w.data(), b.data());
        Tensor::new(self.output_shape(), y).expect("conv1d output shape")
    }

    pub fn backward<T: Real>(&self, x: &Tensor<T>, w: &Tensor<T>, dy: &[T], wants: Wants) -> ConvGrads<T> {
        self.inner.backward(self.batch, x.data(), w.data(), dy, wants)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Conv2dPlan {
    batch: usize,
    window: Window,
    out_channels: usize,
}

impl Conv2dPlan {
    pub fn new<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, stride: usize, padding: usize) -> Result<Self> {
        const OP: &str = "conv2d";
        expect_rank(OP, x, 4)?;
        expect_rank(OP, w, 4)?;
        let (batch, cin, h, wd) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
        let (cout, wcin, kh, kw) = (w.dim(0), w.dim(1), w.dim(2), w.dim(3));
        expect_dim(OP, "input channels", wcin, cin)?;
        expect_dim(OP, "kernel width", kh, kw)?;
        expect_dim(OP, "bias length", cout, b.numel())?;
        if stride == 0 {
            return Err(TensorError::InvalidSpec("conv2d stride must be positive".into()));
        }
        let out_h = conv2d_len(h, kh, stride, padding)?;
        let out_w = conv2d_len(wd, kw, stride, padding)?;
        Ok(Conv2dPlan {
            batch,
            window: Window {
                channels: cin,
                in_h: h,
                in_w: wd,
                kernel_h: kh,
                kernel_w: kw,
                stride_h: stride,
                stride_w: stride,
                pad_h: padding,
                pad_w: padding,
                out_h,
                out_w,
            },
            out_channels: cout,
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.batch, self.out_channels, self.window.out_h, self.window.out_w]
    }

    fn correlation(&self) -> Correlation {
        Correlation {
            window: self.window,
            out_channels: self.out_channels,
        }
    }

    pub fn forward<T: Real>(&self, x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
        let y = self.correlation().forward(self.batch, x.data(), w.data(), b.data());
        Tensor::new(self.output_shape(), y).expect("conv2d output shape")
    }

    pub fn backward<T: Real>(&self, x: &Tensor<T>, w: &Tensor<T>, dy: &[T], wants: Wants) -> ConvGrads<T> {
        self.correlation().backward(self.batch, x.data(), w.data(), dy, wants)
    }
}

/// Transposed 2D convolution. The window describes the adjoint correlation
/// that maps the (large) output image back onto the (small) input grid.
#[derive(Clone, Copy, Debug)]
pub struct Deconv2dPlan {
    batch: usize,
    in_channels: usize,
    window: Window,
}

impl Deconv2dPlan {
    pub fn new<T: Real>(
        x: &Tensor<T>,
        w: &Tensor<T>,
        b: &Tensor<T>,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Self> {
        const OP: &str = "deconv2d";
        expect_rank(OP, x, 4)?;
        expect_rank(OP, w, 4)?;
        let (batch, cin, h, wd) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
        let (wcin, cout, kh, kw) = (w.dim(0), w.dim(1), w.dim(2), w.dim(3));
        expect_dim(OP, "input channels", wcin, cin)?;
        expect_dim(OP, "kernel width", kh, kw)?;
        expect_dim(OP, "bias length", cout, b.numel())?;
        if stride == 0 || output_padding >= stride {
            return Err(TensorError::InvalidSpec(format!(
                "deconv2d needs stride > output_padding (stride {stride}, output_padding {output_padding})"
            )));
        }
        let out_h = deconv2d_len(h, kh, stride, padding, output_padding)?;
        let out_w = deconv2d_len(wd, kw, stride, padding, output_padding)?;
        Ok(Deconv2dPlan {
            batch,
            in_channels: cin,
            window: Window {
                channels: cout,
                in_h: out_h,
                in_w: out_w,
                kernel_h: kh,
                kernel_w: kw,
                stride_h: stride,
                stride_w: stride,
                pad_h: padding,
                pad_w: padding,
                out_h: h,
                out_w: wd,
            },
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.batch, self.window.channels, self.window.in_h, self.window.in_w]
    }

    pub fn forward<T: Real>(&self, x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
        let g = &self.window;
        let (rows, ncols) = (g.rows(), g.cols());
        let in_stride = self.in_channels * ncols;
        let plane = g.in_h * g.in_w;
        let out_stride = g.channels * plane;
        let mut cols = vec![T::zero(); rows * ncols];
        let mut y = vec![T::zero(); self.batch * out_stride];
        for n in 0..self.batch {
            // cols[r, j] = W[ci, r] * x[ci, j]
            matmul(rows, self.in_channels, ncols, w.data(), true, &x.data()[n * in_stride..(n + 1) * in_stride], false, T::zero(), &mut cols);
            let yn = &mut y[n * out_stride..(n + 1) * out_stride];
            g.col2im(&cols, yn);
            for (co, chunk) in yn.chunks_mut(plane).enumerate() {
                let bias = b.data()[co];
                chunk.iter_mut().for_each(|v| *v += bias);
            }
        }
        Tensor::new(self.output_shape(), y).expect("deconv2d output shape")
    }

    pub fn backward<T: Real>(&self, x: &Tensor<T>, w: &Tensor<T>, dy: &[T], wants: Wants) -> ConvGrads<T> {
        let g = &self.window;
        let (rows, ncols) = (g.rows(), g.cols());
        let in_stride = self.in_channels * ncols;
        let plane = g.in_h * g.in_w;
        let out_stride = g.channels * plane;
        let mut dcols = vec![T::zero(); rows * ncols];
        let mut dx = wants.input.then(|| vec![T::zero(); x.numel()]);
        let mut dw = wants.weight.then(|| vec![T::zero(); w.numel()]);
        let mut db = wants.bias.then(|| vec![T::zero(); g.channels]);
        for n in 0..self.batch {
            let dyn_ = &dy[n * out_stride..(n + 1) * out_stride];
            if let Some(db) = db.as_mut() {
                for (co, chunk) in dyn_.chunks(plane).enumerate() {
                    db[co] += chunk.iter().copied().sum();
                }
            }
            if dx.is_none() && dw.is_none() {
                continue;
            }
            g.im2col(dyn_, &mut dcols);
            if let Some(dx) = dx.as_mut() {
                // dx[ci, j] = W[ci, r] * dcols[r, j]
                matmul(self.in_channels, rows, ncols, w.data(), false, &dcols, false, T::zero(), &mut dx[n * in_stride..(n + 1) * in_stride]);
            }
            if let Some(dw) = dw.as_mut() {
                // dW[ci, r] += x[ci, j] * dcols[r, j]
                matmul(self.in_channels, ncols, rows, &x.data()[n * in_stride..(n + 1) * in_stride], false, &dcols, true, T::one(), dw);
            }
        }
        ConvGrads {
            input: dx,
            weight: dw,
            bias: db,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: Wants = Wants {
        input: true,
        weight: true,
        bias: true,
    };

    /// Direct-loop 2D correlation used as an independent reference.
    fn naive_conv2d(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], stride: usize, pad: usize) -> Vec<f64> {
        let (n, cin, h, wd) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
        let (cout, k) = (w.dim(0), w.dim(2));
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wd + 2 * pad - k) / stride + 1;
        let mut y = vec![0.0; n * cout * oh * ow];
        for b_ in 0..n {
            for co in 0..cout {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b[co];
                        for ci in 0..cin {
                            for ki in 0..k {
                                for kj in 0..k {
                                    let iy = (oy * stride + ki) as isize - pad as isize;
                                    let ix = (ox * stride + kj) as isize - pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                        acc += w.data()[((co * cin + ci) * k + ki) * k + kj]
                                            * x.data()[((b_ * cin + ci) * h + iy as usize) * wd + ix as usize];
                                    }
                                }
                            }
                        }
                        y[((b_ * cout + co) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        y
    }

    /// Direct scatter definition of the transposed convolution.
    fn naive_deconv2d(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize, out_pad: usize) -> (Vec<f64>, usize) {
        let (n, cin, h, _) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
        let (cout, k) = (w.dim(1), w.dim(2));
        let oh = (h - 1) * stride + k + out_pad - 2 * pad;
        let mut y = vec![0.0; n * cout * oh * oh];
        for b_ in 0..n {
            for ci in 0..cin {
                for iy in 0..h {
                    for ix in 0..h {
                        let v = x.data()[((b_ * cin + ci) * h + iy) * h + ix];
                        for co in 0..cout {
                            for ki in 0..k {
                                for kj in 0..k {
                                    let oy = (iy * stride + ki) as isize - pad as isize;
                                    let ox = (ix * stride + kj) as isize - pad as isize;
                                    if oy >= 0 && ox >= 0 && (oy as usize) < oh && (ox as usize) < oh {
                                        y[((b_ * cout + co) * oh + oy as usize) * oh + ox as usize] +=
                                            v * w.data()[((ci * cout + co) * k + ki) * k + kj];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        (y, oh)
    }

    fn ramp(shape: Vec<usize>, scale: f64) -> Tensor<f64> {
        Tensor::from_fn(shape, |i| ((i * 37 % 23) as f64 - 11.0) * scale)
    }

    #[test]
    fn conv2d_matches_direct_loops() {
        for &(h, k, s, p) in &[(7, 3, 2, 1), (8, 3, 2, 1), (4, 4, 1, 0), (5, 1, 1, 0)] {
            let x = ramp(vec![2, 3, h, h], 0.1);
            let w = ramp(vec![4, 3, k, k], 0.05);
            let b = Tensor::from_fn(vec![4], |i| i as f64 * 0.1);
            let plan = Conv2dPlan::new(&x, &w, &b, s, p).unwrap();
            let y = plan.forward(&x, &w, &b);
            let reference = naive_conv2d(&x, &w, b.data(), s, p);
            for (a, r) in y.data().iter().zip(&reference) {
                assert!((a - r).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deconv2d_matches_scatter_definition() {
        for &(h, k, s, p, op) in &[(4, 3, 2, 1, 1), (1, 4, 1, 0, 0), (3, 1, 1, 0, 0), (2, 3, 2, 1, 0)] {
            let x = ramp(vec![2, 3, h, h], 0.1);
            let w = ramp(vec![3, 2, k, k], 0.05);
            let b = Tensor::zeros(vec![2]);
            let plan = Deconv2dPlan::new(&x, &w, &b, s, p, op).unwrap();
            let y = plan.forward(&x, &w, &b);
            let (reference, oh) = naive_deconv2d(&x, &w, s, p, op);
            assert_eq!(y.shape(), &[2, 2, oh, oh]);
            for (a, r) in y.data().iter().zip(&reference) {
                assert!((a - r).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deconv_of_delta_reproduces_kernel() {
        // A unit impulse at the centre of a 3x3 grid scatters the kernel
        // around it; with stride 1 and padding 1 the output is the kernel.
        let mut x = Tensor::<f64>::zeros(vec![1, 1, 3, 3]);
        x.data_mut()[4] = 1.0;
        let w = Tensor::from_fn(vec![1, 1, 3, 3], |i| i as f64 + 1.0);
        let b = Tensor::zeros(vec![1]);
        let plan = Deconv2dPlan::new(&x, &w, &b, 1, 1, 0).unwrap();
        let y = plan.forward(&x, &w, &b);
        assert_eq!(y.data(), w.data());

        // Correlation of the same impulse with the same kernel yields the kernel
        // rotated by 180 degrees: the transpose relationship between the two.
        let wc = Tensor::from_fn(vec![1, 1, 3, 3], |i| i as f64 + 1.0);
        let cplan = Conv2dPlan::new(&x, &wc, &b, 1, 1).unwrap();
        let yc = cplan.forward(&x, &wc, &b);
        let flipped: Vec<f64> = w.data().iter().rev().copied().collect();
        assert_eq!(yc.data(), flipped.as_slice());
    }

    #[test]
    fn deconv_is_adjoint_of_conv() {
        // <conv(x), y> == <x, deconv(y)> for tied weights and zero bias.
        let x = ramp(vec![1, 2, 8, 8], 0.1);
        let w = ramp(vec![3, 2, 3, 3], 0.07);
        let zb3 = Tensor::zeros(vec![3]);
        let zb2 = Tensor::zeros(vec![2]);
        let conv = Conv2dPlan::new(&x, &w, &zb3, 2, 1).unwrap();
        let cx = conv.forward(&x, &w, &zb3);
        let y = ramp(vec![1, 3, 4, 4], 0.3);
        let deconv = Deconv2dPlan::new(&y, &w, &zb2, 2, 1, 1).unwrap();
        let dy = deconv.forward(&y, &w, &zb2);
        let lhs: f64 = cx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(dy.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn conv1d_identity_kernel() {
        let x = Tensor::<f64>::new(vec![1, 1, 1], vec![2.5]).unwrap();
        let w = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
        let b = Tensor::zeros(vec![1]);
        let plan = Conv1dPlan::new(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(plan.forward(&x, &w, &b).data(), &[2.5]);
    }

    #[test]
    fn conv1d_ceil_mode_reads_zero_past_the_edge() {
        // T=2, k=3, s=2, p=1 gives two windows: [pad, x0, x1] and [x1, pad, pad].
        let x = Tensor::<f64>::new(vec![1, 1, 2], vec![1.0, 2.0]).unwrap();
        let w = Tensor::new(vec![1, 1, 3], vec![1.0, 10.0, 100.0]).unwrap();
        let b = Tensor::zeros(vec![1]);
        let plan = Conv1dPlan::new(&x, &w, &b, 2, 1).unwrap();
        assert_eq!(plan.output_shape(), vec![1, 1, 2]);
        assert_eq!(plan.forward(&x, &w, &b).data(), &[210.0, 2.0]);
    }

    #[test]
    fn shape_errors_name_the_dimension() {
        let x = Tensor::<f64>::zeros(vec![1, 3, 8]);
        let w = Tensor::zeros(vec![4, 2, 3]);
        let b = Tensor::zeros(vec![4]);
        let err = Conv1dPlan::new(&x, &w, &b, 2, 1).unwrap_err();
        assert!(err.to_string().contains("input channels"), "{err}");

        let x = Tensor::<f64>::zeros(vec![1, 1, 2, 2]);
        let w = Tensor::zeros(vec![1, 1, 4, 4]);
        let b = Tensor::zeros(vec![1]);
        assert!(matches!(Conv2dPlan::new(&x, &w, &b, 1, 0), Err(TensorError::InputTooSmall { .. })));
    }

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let x = Tensor::<f64>::zeros(vec![2, 3, 8, 8]);
        let w = ramp(vec![5, 3, 3, 3], 0.2);
        let b = Tensor::zeros(vec![5]);
        let plan = Conv2dPlan::new(&x, &w, &b, 2, 1).unwrap();
        assert!(plan.forward(&x, &w, &b).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_skips_unrequested_grads() {
        let x = ramp(vec![1, 2, 4, 4], 0.1);
        let w = ramp(vec![2, 2, 3, 3], 0.1);
        let b = Tensor::zeros(vec![2]);
        let plan = Conv2dPlan::new(&x, &w, &b, 1, 1).unwrap();
        let dy = vec![1.0; 32];
        let g = plan.backward(
            &x,
            &w,
            &dy,
            Wants {
                input: true,
                weight: false,
                bias: false,
            },
        );
        assert!(g.input.is_some() && g.weight.is_none() && g.bias.is_none());
        let g = plan.backward(&x, &w, &dy, ALL);
        assert_eq!(g.bias.unwrap(), vec![16.0, 16.0]);
    }
}
