//! The scaled-down end-to-end experiment: synthetic corpus, embedder
//! pretraining, adversarial training, and all three evaluation protocols.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{random_crop, MelSpectrogram, VadConfig};
use crate::corpus::{Split, SplitData, SynthConfig, SyntheticCorpus, TrainingData};
use crate::error::Result;
use crate::evaluator::{
    build_trials, export_grids, gender_accuracy, matching_accuracy, noise_mel, specificity_stats, EvalReport, GenderProbe,
    NoiseKind, ProbeConfig, SpecificityReport, TrialOptions, NOISE_DURATIONS,
};
use crate::models::{save_checkpoint, Architecture, ModelBundle};
use crate::rng::{self, tags};
use crate::trainer::{pretrain_embedder, train, PretrainConfig, PretrainReport, TrainConfig, TrainOptions};

pub const DESK_WIDTH_DIVISOR: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeskConfig {
    pub seed: u64,
    pub width_divisor: usize,
    pub corpus: SynthConfig,
    pub pretrain: PretrainConfig,
    pub train: TrainConfig,
    pub probe_steps: usize,
    pub matching_trials: usize,
    pub specificity_samples: usize,
}

impl Default for DeskConfig {
    fn default() -> Self {
        DeskConfig {
            seed: 7,
            width_divisor: DESK_WIDTH_DIVISOR,
            corpus: SynthConfig::default(),
            pretrain: PretrainConfig::default(),
            train: TrainConfig::desk(),
            probe_steps: ProbeConfig::default().steps,
            matching_trials: 20_000,
            specificity_samples: 500,
        }
    }
}

impl DeskConfig {
    /// Every component seeded from `seed`.
    pub fn seeded(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.corpus.seed = seed;
        self.pretrain.seed = rng::derive_seed(seed, &[tags::PRETRAIN]);
        self.train.seed = rng::derive_seed(seed, &[tags::BATCH]);
        self
    }
}

#[derive(Clone, Debug)]
pub struct DeskOutcome {
    pub pretrain: PretrainReport,
    pub train_seconds: f64,
    pub iterations: u64,
    pub final_losses_finite: bool,
    pub matching: EvalReport,
    pub matching_stratified: EvalReport,
    pub probe_accuracy: EvalReport,
    pub gender: EvalReport,
    pub specificity: SpecificityReport,
    pub files: Vec<PathBuf>,
}

impl DeskOutcome {
    pub fn report_lines(&self) -> Vec<String> {
        let mut out = vec![
            format!(
                "metric=pretrain_speaker_accuracy value={:.6} initial_loss={:.6} final_loss={:.6}",
                self.pretrain.train_accuracy,
                self.pretrain.initial_loss(),
                self.pretrain.final_loss()
            ),
            format!("metric=train_seconds value={:.1} iterations={}", self.train_seconds, self.iterations),
            self.matching.to_string(),
            self.matching_stratified.to_string(),
            self.probe_accuracy.to_string(),
            self.gender.to_string(),
        ];
        out.extend(self.specificity.lines());
        out
    }
}

/// Random 3-8 s crops of speech recordings.
pub fn speech_samples(voices: &[MelSpectrogram], n: usize, seed: u64) -> Result<Vec<MelSpectrogram>> {
    let mut rng = rng::stream(seed, &[tags::CROP]);
    (0..n)
        .map(|_| {
            let v = &voices[rng.gen_range(0..voices.len())];
            Ok(random_crop(v, 3.0, 8.0, &mut rng)?.spec)
        })
        .collect()
}

/// Noise inputs cycling through every kind and duration.
pub fn noise_samples(n: usize, seed: u64) -> Result<Vec<MelSpectrogram>> {
    let combos: Vec<(NoiseKind, f64)> = NoiseKind::ALL
        .iter()
        .flat_map(|&k| NOISE_DURATIONS.iter().map(move |&d| (k, d)))
        .collect();
    let items: Vec<usize> = (0..n).collect();
    crate::parallel::try_map(&items, |&i| {
        let (kind, secs) = combos[i % combos.len()];
        noise_mel(kind, secs, rng::derive_seed(seed, &[i as u64]))
    })
}

/// Runs the whole experiment. With `output_dir`, checkpoints, the run log,
/// the report and image grids are written there.
pub fn run_desk(config: &DeskConfig, output_dir: Option<&Path>) -> Result<DeskOutcome> {
    let start = Instant::now();
    let corpus = SyntheticCorpus::new(config.corpus.clone())?;
    let manifest = corpus.manifest()?;
    let vad = VadConfig::default();
    let train_split = SplitData::from_synthetic(&corpus, Split::Train, Some(&vad))?;
    let test_split = SplitData::from_synthetic(&corpus, Split::Test, Some(&vad))?;
    let data = TrainingData::new(&train_split, &manifest.class_map())?;
    info!("corpus ready in {:.1}s", start.elapsed().as_secs_f64());

    let arch = Architecture::full(data.classes).narrowed(config.width_divisor);
    let mut bundle = ModelBundle::<f32>::new(arch.clone(), config.seed)?;
    let pretrain = pretrain_embedder(&mut bundle, &data.voices, &data.voice_labels, &config.pretrain)?;
    bundle.embedder_frozen = true;

    let options = TrainOptions {
        output_dir: output_dir.map(|d| d.join("checkpoints")),
        verify_ownership: false,
    };
    let outcome = train(&mut bundle, &data, &config.train, &options)?;
    info!("adversarial training took {:.1}s", outcome.seconds);

    let unstratified = build_trials(
        &test_split,
        &TrialOptions {
            stratified: false,
            max_trials: Some(config.matching_trials),
            seed: config.seed,
        },
    )?;
    let stratified = build_trials(
        &test_split,
        &TrialOptions {
            stratified: true,
            max_trials: Some(config.matching_trials),
            seed: config.seed,
        },
    )?;
    let matching = matching_accuracy(&bundle, &test_split, &unstratified)?;
    let matching_stratified = matching_accuracy(&bundle, &test_split, &stratified)?;

    let probe = GenderProbe::train(
        &arch,
        &data.faces,
        &data.face_genders,
        &ProbeConfig {
            steps: config.probe_steps,
            seed: config.seed,
            ..ProbeConfig::default()
        },
    )?;
    let test_faces: Vec<_> = test_split.faces.iter().map(|f| f.image.clone()).collect();
    let test_face_genders: Vec<u8> = test_split.faces.iter().map(|f| f.gender).collect();
    let probe_accuracy = probe.accuracy(&test_faces, &test_face_genders)?;
    let test_voices: Vec<_> = test_split.voices.iter().map(|v| v.mel.clone()).collect();
    let voice_genders: Vec<u8> = test_split.voices.iter().map(|v| v.gender).collect();
    let gender = gender_accuracy(&bundle, &test_voices, &voice_genders, &probe, probe_accuracy.value)?;

    let speech = speech_samples(&test_voices, config.specificity_samples, config.seed)?;
    let noise = noise_samples(config.specificity_samples, config.seed)?;
    let specificity = specificity_stats(&bundle, &speech, &noise)?;

    let mut result = DeskOutcome {
        pretrain,
        train_seconds: outcome.seconds,
        iterations: bundle.iteration,
        final_losses_finite: outcome.reports.iter().all(|r| r.is_finite()),
        matching,
        matching_stratified,
        probe_accuracy,
        gender,
        specificity,
        files: outcome.checkpoints,
    };
    if let Some(dir) = output_dir {
        let ckpt = dir.join("model.ckpt");
        save_checkpoint(&ckpt, &bundle, serde_json::to_value(config).ok())?;
        result.files.push(ckpt);
        result.files.extend(export_grids(&bundle, &test_split, &dir.join("grids"), config.seed)?);
        let report = dir.join("report.txt");
        std::fs::write(&report, result.report_lines().join("\n") + "\n").map_err(|e| crate::Error::io(&report, e))?;
        result.files.push(report);
    }
    Ok(result)
}
