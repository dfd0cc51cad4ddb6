//! Short adversarial training run: pretrain the embedder, freeze it, then
//! alternate discriminator, classifier and generator updates. Checkpoints
//! and the run log go to the given directory.
//!
//! cargo run --release --example train_gan -- [output_dir] [iterations]

use std::path::PathBuf;

use voice2face::audio::VadConfig;
use voice2face::corpus::{Split, SplitData, SynthConfig, SyntheticCorpus, TrainingData};
use voice2face::models::{Architecture, ModelBundle};
use voice2face::trainer::{pretrain_embedder, train, PretrainConfig, TrainConfig, TrainOptions};

fn main() -> voice2face::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("voice2face_train"));
    let iterations: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);

    let corpus = SyntheticCorpus::new(SynthConfig {
        identities: 12,
        voices_per_identity: 8,
        faces_per_identity: 8,
        test_identities: 4,
        ..SynthConfig::default()
    })?;
    let split = SplitData::from_synthetic(&corpus, Split::Train, Some(&VadConfig::default()))?;
    let data = TrainingData::new(&split, &corpus.manifest()?.class_map())?;
    let mut bundle = ModelBundle::<f32>::new(Architecture::full(data.classes).narrowed(8), 7)?;
    let pre = pretrain_embedder(&mut bundle, &data.voices, &data.voice_labels, &PretrainConfig::default())?;
    println!("pretrained embedder, speaker accuracy {:.3}", pre.train_accuracy);

    let config = TrainConfig {
        total_iterations: iterations,
        checkpoint_every: (iterations / 3).max(1),
        ..TrainConfig::desk()
    };
    let options = TrainOptions {
        output_dir: Some(out.clone()),
        verify_ownership: false,
    };
    let outcome = train(&mut bundle, &data, &config, &options)?;
    for r in outcome.reports.iter().step_by((iterations as usize / 10).max(1)) {
        println!("{r}");
    }
    println!("{:.1}s, checkpoints:", outcome.seconds);
    for c in &outcome.checkpoints {
        println!("  {}", c.display());
    }
    Ok(())
}
