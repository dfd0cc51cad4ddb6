//! The voice embedder, generator, discriminator and classifier.

mod arch;
mod bundle;
mod checkpoint;
mod networks;

pub use arch::{shape_report, Activation, Architecture, LayerShape, EMBEDDING_DIM, FEATURE_DIM, LEAKY_SLOPE};
pub use bundle::{mel_batch, Classification, ModelBundle, ParameterCounts, Player, VoiceEmbedding};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use networks::{ConvLayer, FaceTrunk, Generator, Head, NormLayer, VoiceEmbedder};
