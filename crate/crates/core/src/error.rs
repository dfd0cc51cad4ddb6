use std::path::PathBuf;

use thiserror::Error;
use voice2face_tensor::TensorError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error("audio too short: {samples} samples, need at least {required}")]
    AudioTooShort { samples: usize, required: usize },
    #[error("invalid audio: {0}")]
    InvalidAudio(String),
    #[error("mel spectrogram must be normalized before embedding")]
    NotNormalized,
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("manifest row {row}: {message}")]
    ManifestRow { row: usize, message: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training aborted at iteration {iteration}: {message}")]
    TrainingAborted { iteration: u64, message: String },
    #[error("evaluation: {0}")]
    Evaluation(String),
    #[error("{0} already exists; pass --force to overwrite")]
    WouldOverwrite(PathBuf),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs rather than runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::ManifestRow { .. }
                | Error::Manifest(_)
                | Error::Config(_)
                | Error::WouldOverwrite(_)
                | Error::AudioTooShort { .. }
                | Error::InvalidAudio(_)
                | Error::InvalidImage(_)
        )
    }
}
