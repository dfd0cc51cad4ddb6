use std::fmt;

use crate::error::{Result, TensorError};
use crate::shape::{conv1d_len, conv2d_len, deconv2d_len};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv1d,
    Conv2d,
    Deconv2d,
    BatchNorm,
    Relu,
    LeakyRelu,
    Sigmoid,
    Tanh,
    Softmax,
    FullyConnected,
    TimeAvgPool,
}

/// Static description of one layer. Shapes passed to [`LayerSpec::output_shape`]
/// exclude the batch axis.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Deconv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    },
    BatchNorm {
        channels: usize,
    },
    Relu,
    LeakyRelu {
        slope: f64,
    },
    Sigmoid,
    Tanh,
    Softmax,
    FullyConnected {
        inputs: usize,
        outputs: usize,
    },
    TimeAvgPool,
}

impl LayerSpec {
    pub fn conv1d(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn conv2d(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn deconv2d(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Self {
        LayerSpec::Deconv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            output_padding,
        }
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Conv1d { .. } => LayerKind::Conv1d,
            LayerSpec::Conv2d { .. } => LayerKind::Conv2d,
            LayerSpec::Deconv2d { .. } => LayerKind::Deconv2d,
            LayerSpec::BatchNorm { .. } => LayerKind::BatchNorm,
            LayerSpec::Relu => LayerKind::Relu,
            LayerSpec::LeakyRelu { .. } => LayerKind::LeakyRelu,
            LayerSpec::Sigmoid => LayerKind::Sigmoid,
            LayerSpec::Tanh => LayerKind::Tanh,
            LayerSpec::Softmax => LayerKind::Softmax,
            LayerSpec::FullyConnected { .. } => LayerKind::FullyConnected,
            LayerSpec::TimeAvgPool => LayerKind::TimeAvgPool,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(TensorError::InvalidSpec(msg));
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            }
            | LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => {
                if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 {
                    return bad(format!("{self}: channels, kernel and stride must be positive"));
                }
            }
            LayerSpec::Deconv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                output_padding,
                ..
            } => {
                if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 {
                    return bad(format!("{self}: channels, kernel and stride must be positive"));
                }
                if output_padding >= stride {
                    return bad(format!("{self}: output_padding must be smaller than stride"));
                }
            }
            LayerSpec::BatchNorm { channels } if channels == 0 => {
                return bad("batchnorm with zero channels".into());
            }
            LayerSpec::LeakyRelu { slope } if !slope.is_finite() => {
                return bad("leaky relu slope must be finite".into());
            }
            LayerSpec::FullyConnected { inputs, outputs } if inputs == 0 || outputs == 0 => {
                return bad("fully connected layer with zero width".into());
            }
            _ => {}
        }
        Ok(())
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.validate()?;
        let rank = |expected: usize| -> Result<()> {
            if input.len() != expected {
                Err(TensorError::Rank {
                    op: "output_shape",
                    expected,
                    shape: input.to_vec(),
                })
            } else {
                Ok(())
            }
        };
        let channels = |expected: usize| -> Result<()> {
            if input[0] != expected {
                Err(TensorError::mismatch("output_shape", "channels", expected, input[0]))
            } else {
                Ok(())
            }
        };
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                rank(2)?;
                channels(in_channels)?;
                Ok(vec![out_channels, conv1d_len(input[1], kernel, stride, padding)?])
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                rank(3)?;
                channels(in_channels)?;
                Ok(vec![
                    out_channels,
                    conv2d_len(input[1], kernel, stride, padding)?,
                    conv2d_len(input[2], kernel, stride, padding)?,
                ])
            }
            LayerSpec::Deconv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                output_padding,
            } => {
                rank(3)?;
                channels(in_channels)?;
                Ok(vec![
                    out_channels,
                    deconv2d_len(input[1], kernel, stride, padding, output_padding)?,
                    deconv2d_len(input[2], kernel, stride, padding, output_padding)?,
                ])
            }
            LayerSpec::BatchNorm { channels: c } => {
                channels(c)?;
                Ok(input.to_vec())
            }
            LayerSpec::FullyConnected { inputs, outputs } => {
                let n: usize = input.iter().product();
                if n != inputs {
                    return Err(TensorError::mismatch("output_shape", "features", inputs, n));
                }
                Ok(vec![outputs])
            }
            LayerSpec::TimeAvgPool => {
                rank(2)?;
                Ok(vec![input[0], 1])
            }
            LayerSpec::Relu
            | LayerSpec::LeakyRelu { .. }
            | LayerSpec::Sigmoid
            | LayerSpec::Tanh
            | LayerSpec::Softmax => Ok(input.to_vec()),
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv1d {
                kernel, stride, padding, ..
            } => write!(f, "Conv {kernel}/{stride},{padding}"),
            LayerSpec::Conv2d {
                kernel, stride, padding, ..
            } => write!(f, "Conv {kernel}x{kernel}/{stride},{padding}"),
            LayerSpec::Deconv2d {
                kernel, stride, padding, ..
            } => write!(f, "Deconv {kernel}x{kernel}/{stride},{padding}"),
            LayerSpec::BatchNorm { .. } => write!(f, "BN"),
            LayerSpec::Relu => write!(f, "ReLU"),
            LayerSpec::LeakyRelu { .. } => write!(f, "LReLU"),
            LayerSpec::Sigmoid => write!(f, "Sigmoid"),
            LayerSpec::Tanh => write!(f, "Tanh"),
            LayerSpec::Softmax => write!(f, "Softmax"),
            LayerSpec::FullyConnected { inputs, outputs } => write!(f, "FC {inputs}x{outputs}"),
            LayerSpec::TimeAvgPool => write!(f, "AvePool"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_padding_must_be_below_stride() {
        assert!(LayerSpec::deconv2d(4, 4, 3, 2, 1, 2).validate().is_err());
        assert!(LayerSpec::deconv2d(4, 4, 3, 2, 1, 1).validate().is_ok());
        assert!(LayerSpec::conv2d(4, 4, 3, 0, 1).validate().is_err());
    }

    #[test]
    fn shape_rules() {
        let s = LayerSpec::conv2d(64, 128, 3, 2, 1);
        assert_eq!(s.output_shape(&[64, 32, 32]).unwrap(), vec![128, 16, 16]);
        assert!(s.output_shape(&[3, 32, 32]).is_err());
        let d = LayerSpec::deconv2d(1024, 512, 3, 2, 1, 1);
        assert_eq!(d.output_shape(&[1024, 4, 4]).unwrap(), vec![512, 8, 8]);
        let fc = LayerSpec::FullyConnected { inputs: 64, outputs: 1 };
        assert_eq!(fc.output_shape(&[64, 1, 1]).unwrap(), vec![1]);
    }
}
