//! Pretrains the voice embedder as a speaker classifier on a small
//! synthetic corpus and reports the loss curve and speaker accuracy.

use voice2face::audio::VadConfig;
use voice2face::corpus::{Split, SplitData, SynthConfig, SyntheticCorpus, TrainingData};
use voice2face::models::{Architecture, ModelBundle};
use voice2face::trainer::{pretrain_embedder, PretrainConfig};

fn main() -> voice2face::Result<()> {
    let corpus = SyntheticCorpus::new(SynthConfig {
        identities: 10,
        voices_per_identity: 10,
        faces_per_identity: 2,
        test_identities: 2,
        ..SynthConfig::default()
    })?;
    let split = SplitData::from_synthetic(&corpus, Split::Train, Some(&VadConfig::default()))?;
    let data = TrainingData::new(&split, &corpus.manifest()?.class_map())?;
    let arch = Architecture::full(data.classes).narrowed(8);
    let mut bundle = ModelBundle::<f32>::new(arch, 7)?;
    let config = PretrainConfig {
        steps: 600,
        ..PretrainConfig::default()
    };
    let report = pretrain_embedder(&mut bundle, &data.voices, &data.voice_labels, &config)?;
    for (step, loss) in report.losses.iter().enumerate().step_by(100) {
        println!("step {step:>4} loss {loss:.4}");
    }
    println!("speakers {} final loss {:.4} accuracy {:.3}", report.speakers, report.final_loss(), report.train_accuracy);
    let e = bundle.embed_voice(&data.voices[0])?;
    println!("embedding of the first recording: {} values, first {:.3?}", e.dim(), &e.values()[..4]);
    Ok(())
}
