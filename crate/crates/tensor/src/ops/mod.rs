//! Batched layer kernels. Each layer exposes a forward function and the
//! matching vector-Jacobian products; the tape in [`crate::tape`] wires them
//! together.

pub mod activation;
pub mod conv;
pub mod linear;
pub mod norm;
