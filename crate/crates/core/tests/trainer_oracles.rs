use rand::Rng;
use voice2face::audio::VadConfig;
use voice2face::corpus::{Split, SplitData, SynthConfig, SyntheticCorpus, TrainingData};
use voice2face::models::{Architecture, ModelBundle};
use voice2face::trainer::{classifier_step, pretrain_embedder, PretrainConfig, TrainConfig};
use voice2face::rng;
use voice2face_tensor::Adam;

fn argmax(p: &[f32]) -> usize {
    (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap()
}

fn eight_identities() -> TrainingData {
    let corpus = SyntheticCorpus::new(SynthConfig {
        identities: 10,
        voices_per_identity: 12,
        faces_per_identity: 12,
        test_identities: 2,
        seed: 5,
        ..SynthConfig::default()
    })
    .unwrap();
    let split = SplitData::from_synthetic(&corpus, Split::Train, Some(&VadConfig::default())).unwrap();
    let data = TrainingData::new(&split, &corpus.manifest().unwrap().class_map()).unwrap();
    assert_eq!(data.classes, 8);
    data
}

#[test]
fn embedder_pretraining_separates_eight_speakers() {
    let data = eight_identities();
    let mut bundle = ModelBundle::<f32>::new(Architecture::full(8).narrowed(8), 1).unwrap();
    let config = PretrainConfig {
        steps: 2000,
        seed: 2,
        ..PretrainConfig::default()
    };
    let report = pretrain_embedder(&mut bundle, &data.voices, &data.voice_labels, &config).unwrap();
    let ln8 = 8f64.ln();
    assert!((report.initial_loss() - ln8).abs() <= 0.15 * ln8, "{}", report.initial_loss());
    assert!(report.train_accuracy > 0.9, "accuracy {}", report.train_accuracy);
}

#[test]
fn classifier_learns_eight_identities_within_3000_steps() {
    let data = eight_identities();
    let mut bundle = ModelBundle::<f32>::new(Architecture::full(8).narrowed(8), 1).unwrap();
    let config = TrainConfig::desk();
    let mut adam = Adam::new(&bundle.store, &bundle.classifier_params(), config.adam());
    let mut r = rng::stream(3, &[]);
    let batch = 16;
    let accuracy = |bundle: &ModelBundle<f32>| {
        let predicted = bundle.classify_batch(&data.faces).unwrap();
        let hits = predicted.iter().zip(&data.face_labels).filter(|(p, &y)| argmax(&p.probabilities) == y).count();
        hits as f64 / data.faces.len() as f64
    };
    let mut best = 0.0;
    for step in 0..3000 {
        let idx: Vec<usize> = (0..batch).map(|_| r.gen_range(0..data.faces.len())).collect();
        let faces: Vec<_> = idx.iter().map(|&i| &data.faces[i]).collect();
        let labels: Vec<usize> = idx.iter().map(|&i| data.face_labels[i]).collect();
        let x = bundle.faces_tensor(&faces).unwrap();
        classifier_step(&mut bundle, &mut adam, x, &labels).unwrap();
        if (step + 1) % 500 == 0 {
            best = accuracy(&bundle);
            if best > 0.8 {
                break;
            }
        }
    }
    assert!(best > 0.8, "accuracy {best}");
}
