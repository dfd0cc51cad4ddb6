//! Embedder pretraining and adversarial training.

mod config;
mod objective;
mod pretrain;
mod runlog;
mod steps;
mod train;

pub use config::{PretrainConfig, TrainConfig};
pub use objective::{ascent_improves, check_step_gradients, jitter_biases, step_gradient_suite, StepGradientReport, StepInputs, StepKind};
pub use pretrain::{pretrain_embedder, PretrainReport};
pub use runlog::{RunLog, StepReport};
pub use steps::{
    classifier_loss, classifier_step, discriminator_loss, discriminator_step, generator_loss, generator_step,
    DiscriminatorStep, DiscriminatorTerms, GeneratorStep, GeneratorTerms, Optimizers,
};
pub use train::{final_checkpoint, sample_batch, train, GanBatch, TrainOptions, TrainOutcome};
