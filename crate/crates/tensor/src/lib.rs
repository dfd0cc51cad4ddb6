//! A deliberately small CPU tensor library: row-major dense tensors, a
//! Wengert-list tape for reverse-mode differentiation, the convolution,
//! normalization and activation layers needed by the voice-to-face networks,
//! cross-entropy losses, Adam, and a central-difference gradient checker.
//!
//! Everything is generic over [`Real`] so the same code runs in `f32` for
//! training and in `f64` for gradient verification.

pub mod adam;
pub mod error;
pub mod gradcheck;
pub mod init;
pub mod loss;
pub mod ops;
pub mod params;
pub mod real;
pub mod shape;
pub mod spec;
pub mod suite;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use error::{Result, TensorError};
pub use gradcheck::{finite_difference_check, GradCheckReport, ScalarFunction, TapeFunction};
pub use ops::norm::{BatchNormState, NormMode};
pub use params::{ParamId, ParamStore};
pub use real::Real;
pub use spec::{LayerKind, LayerSpec};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
