//! Face generation from voice recordings.
//!
//! A frozen voice embedder maps a log-mel spectrogram to a 64-d embedding,
//! a deconvolutional generator turns the embedding into a 64x64 face, and a
//! discriminator and an identity classifier supervise the generator during
//! adversarial training. Around the networks sit the audio front end
//! ([`audio`]), image I/O ([`face`]), a synthetic voice/face corpus with a
//! learnable voice-face coupling ([`corpus`]), the trainer ([`trainer`]),
//! the evaluation protocols ([`evaluator`]), and the `voice2face` command
//! line ([`cli`]).
//!
//! Numerics live in the companion `voice2face-tensor` crate.

pub mod audio;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod evaluator;
pub mod face;
pub mod models;
pub mod parallel;
pub mod pipeline;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
