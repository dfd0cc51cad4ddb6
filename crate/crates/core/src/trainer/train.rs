use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rand::seq::index::sample;
use rand::Rng;
use voice2face_tensor::{ParamId, ParamStore, Tensor};

use super::config::TrainConfig;
use super::runlog::{RunLog, StepReport};
use super::steps::{classifier_step, discriminator_step, generator_step, Optimizers};
use crate::audio::random_crop;
use crate::corpus::TrainingData;
use crate::error::{Error, Result};
use crate::models::{save_checkpoint, ModelBundle};
use crate::rng::{self, tags};

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Checkpoints and the run log go here; nothing is written when unset.
    pub output_dir: Option<PathBuf>,
    /// Compare every parameter before and after each step and fail if a
    /// step touched anything outside its player.
    pub verify_ownership: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub reports: Vec<StepReport>,
    pub checkpoints: Vec<PathBuf>,
    pub embedder_hash: String,
    pub seconds: f64,
}

/// Inputs of one iteration: `m` real faces and `n` voice embeddings.
#[derive(Clone, Debug)]
pub struct GanBatch {
    pub faces: Tensor<f32>,
    pub face_labels: Vec<usize>,
    pub embeddings: Tensor<f32>,
    pub voice_labels: Vec<usize>,
}

fn draw<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    if k <= n {
        sample(rng, n, k).into_vec()
    } else {
        (0..k).map(|_| rng.gen_range(0..n)).collect()
    }
}

/// The batch for `iteration`, a pure function of the seed and iteration.
/// Each voice is cropped independently and embedded by the frozen embedder.
pub fn sample_batch(bundle: &ModelBundle<f32>, data: &TrainingData, config: &TrainConfig, iteration: u64) -> Result<GanBatch> {
    let mut rng = rng::stream(config.seed, &[tags::BATCH, iteration]);
    let face_idx = draw(&mut rng, data.faces.len(), config.batch_faces);
    let voice_idx = draw(&mut rng, data.voices.len(), config.batch_voices);
    let faces: Vec<_> = face_idx.iter().map(|&i| &data.faces[i]).collect();
    let e = bundle.arch().embedding_dim;
    let mut emb = Vec::with_capacity(voice_idx.len() * e);
    for &i in &voice_idx {
        let crop = random_crop(&data.voices[i], config.crop_min_seconds, config.crop_max_seconds, &mut rng)?;
        emb.extend_from_slice(bundle.embed_batch(&[&crop.spec])?.data());
    }
    Ok(GanBatch {
        faces: bundle.faces_tensor(&faces)?,
        face_labels: face_idx.iter().map(|&i| data.face_labels[i]).collect(),
        embeddings: Tensor::new(vec![voice_idx.len(), e], emb)?,
        voice_labels: voice_idx.iter().map(|&i| data.voice_labels[i]).collect(),
    })
}

fn changed(before: &ParamStore<f32>, after: &ParamStore<f32>) -> Vec<ParamId> {
    before.ids().filter(|&id| before.get(id).data() != after.get(id).data()).collect()
}

fn ensure_owned(step: &str, bundle: &ModelBundle<f32>, before: &ParamStore<f32>, owned: &[ParamId]) -> Result<()> {
    if let Some(id) = changed(before, &bundle.store).into_iter().find(|id| !owned.contains(id)) {
        return Err(Error::TrainingAborted {
            iteration: bundle.iteration,
            message: format!("{step} step modified {}", bundle.store.name(id)),
        });
    }
    Ok(())
}

struct Run<'a> {
    config: &'a TrainConfig,
    options: &'a TrainOptions,
    config_json: serde_json::Value,
    log: Option<RunLog>,
    checkpoints: Vec<PathBuf>,
    embedder_ids: Vec<ParamId>,
    embedder_hash: String,
}

impl Run<'_> {
    fn checkpoint(&mut self, bundle: &ModelBundle<f32>, name: &str) -> Result<()> {
        if bundle.hash_params(&self.embedder_ids) != self.embedder_hash {
            return Err(Error::TrainingAborted {
                iteration: bundle.iteration,
                message: "embedder parameters changed during adversarial training".into(),
            });
        }
        if let Some(dir) = &self.options.output_dir {
            let path = dir.join(name);
            save_checkpoint(&path, bundle, Some(self.config_json.clone()))?;
            info!("checkpoint {}", path.display());
            self.checkpoints.push(path);
        }
        Ok(())
    }

    fn iteration(&mut self, bundle: &mut ModelBundle<f32>, opt: &mut Optimizers<f32>, data: &TrainingData) -> Result<StepReport> {
        let it = bundle.iteration;
        let batch = sample_batch(bundle, data, self.config, it)?;
        let verify = self.options.verify_ownership;

        let fakes = bundle.generate_tensor(batch.embeddings.clone())?;
        let snapshot = verify.then(|| bundle.store.clone());
        let d = discriminator_step(bundle, &mut opt.discriminator, batch.faces.clone(), fakes)?;
        if let Some(s) = &snapshot {
            ensure_owned("discriminator", bundle, s, &bundle.discriminator_params())?;
        }

        let snapshot = verify.then(|| bundle.store.clone());
        let c = classifier_step(bundle, &mut opt.classifier, batch.faces, &batch.face_labels)?;
        if let Some(s) = &snapshot {
            ensure_owned("classifier", bundle, s, &bundle.classifier_params())?;
        }

        let snapshot = verify.then(|| bundle.store.clone());
        let g = generator_step(bundle, &mut opt.generator, batch.embeddings, &batch.voice_labels)?;
        if let Some(s) = &snapshot {
            ensure_owned("generator", bundle, s, &bundle.generator_params())?;
        }

        Ok(StepReport {
            iteration: it,
            loss_d: d.loss,
            loss_c: c,
            loss_g: g.loss,
            loss_g_adversarial: g.adversarial,
            loss_g_identity: g.identity,
            real_score: d.real_score,
            fake_score: d.fake_score,
        })
    }
}

fn abort(iteration: u64, e: Error) -> Error {
    match e {
        Error::TrainingAborted { message, .. } => Error::TrainingAborted { iteration, message },
        Error::Tensor(t) => Error::TrainingAborted {
            iteration,
            message: t.to_string(),
        },
        other => other,
    }
}

/// Adversarial training with the embedder frozen. Runs from
/// `bundle.iteration` up to `config.total_iterations`.
pub fn train(bundle: &mut ModelBundle<f32>, data: &TrainingData, config: &TrainConfig, options: &TrainOptions) -> Result<TrainOutcome> {
    config.validate()?;
    if data.classes != bundle.arch().classes {
        return Err(Error::Config(format!(
            "classifier has {} outputs but the training split has {} identities",
            bundle.arch().classes,
            data.classes
        )));
    }
    if let Some(l) = data.face_labels.iter().chain(&data.voice_labels).find(|&&l| l >= data.classes) {
        return Err(Error::Config(format!("label {l} out of range for {} classes", data.classes)));
    }
    if !bundle.embedder_frozen {
        warn!("embedder was not marked as pretrained; freezing it as is");
    }
    bundle.embedder_frozen = true;
    let mut log = None;
    if let Some(dir) = &options.output_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        log = Some(RunLog::create(&dir.join("run.log"))?);
    }
    let embedder_ids = bundle.embedder_state();
    let mut run = Run {
        config,
        options,
        config_json: serde_json::to_value(config).map_err(|e| Error::Config(e.to_string()))?,
        log,
        checkpoints: Vec::new(),
        embedder_hash: bundle.hash_params(&embedder_ids),
        embedder_ids,
    };
    let mut opt = Optimizers::new(bundle, config.adam());
    let mut reports = Vec::new();
    let start = Instant::now();

    while bundle.iteration < config.total_iterations {
        let it = bundle.iteration;
        let report = match run.iteration(bundle, &mut opt, data) {
            Ok(r) => r,
            Err(e) => {
                let e = abort(it, e);
                if matches!(e, Error::TrainingAborted { .. }) {
                    if let Err(ce) = run.checkpoint(bundle, "abort.ckpt") {
                        warn!("could not write abort checkpoint: {ce}");
                    }
                }
                if let Some(l) = run.log.as_mut() {
                    let _ = l.record(format!("iteration={it} abort=\"{e}\""));
                    let _ = l.flush();
                }
                return Err(e);
            }
        };
        if let Some(l) = run.log.as_mut() {
            l.record(report)?;
        }
        if it.is_multiple_of(100) {
            info!("{report}");
        }
        reports.push(report);
        bundle.iteration += 1;
        if config.checkpoint_every > 0 && bundle.iteration.is_multiple_of(config.checkpoint_every) && bundle.iteration < config.total_iterations {
            run.checkpoint(bundle, &format!("iter_{:06}.ckpt", bundle.iteration))?;
        }
    }
    run.checkpoint(bundle, "final.ckpt")?;
    if let Some(l) = run.log.as_mut() {
        l.flush()?;
    }
    Ok(TrainOutcome {
        reports,
        checkpoints: run.checkpoints,
        embedder_hash: run.embedder_hash,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Path of the final checkpoint inside a training output directory.
pub fn final_checkpoint(dir: &Path) -> PathBuf {
    dir.join("final.ckpt")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ClassMap, Split, SplitData, SynthConfig, SyntheticCorpus};
    use crate::models::{load_checkpoint, Architecture};

    fn data() -> TrainingData {
        let corpus = SyntheticCorpus::new(SynthConfig {
            identities: 4,
            voices_per_identity: 2,
            faces_per_identity: 2,
            test_identities: 1,
            validation_identities: 0,
            seed: 5,
        })
        .unwrap();
        let split = SplitData::from_synthetic(&corpus, Split::Train, None).unwrap();
        let classes: ClassMap = corpus.manifest().unwrap().class_map();
        TrainingData::new(&split, &classes).unwrap()
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            batch_voices: 3,
            batch_faces: 3,
            total_iterations: 4,
            checkpoint_every: 2,
            seed: 9,
            crop_min_seconds: 0.5,
            crop_max_seconds: 1.0,
            ..TrainConfig::default()
        }
    }

    fn bundle(classes: usize) -> ModelBundle<f32> {
        ModelBundle::new(Architecture::full(classes).narrowed(64), 1).unwrap()
    }

    #[test]
    fn batches_depend_only_on_seed_and_iteration() {
        let d = data();
        let b = bundle(d.classes);
        let cfg = tiny_config();
        let a = sample_batch(&b, &d, &cfg, 3).unwrap();
        let _ = sample_batch(&b, &d, &cfg, 2).unwrap();
        let c = sample_batch(&b, &d, &cfg, 3).unwrap();
        assert_eq!(a.faces, c.faces);
        assert_eq!(a.embeddings, c.embeddings);
        assert_eq!(a.voice_labels, c.voice_labels);
    }

    #[test]
    fn run_writes_log_and_checkpoints_and_keeps_embedder() {
        let d = data();
        let mut b = bundle(d.classes);
        let dir = tempfile::tempdir().unwrap();
        let opts = TrainOptions {
            output_dir: Some(dir.path().to_path_buf()),
            verify_ownership: true,
        };
        let out = train(&mut b, &d, &tiny_config(), &opts).unwrap();
        assert_eq!(out.reports.len(), 4);
        assert!(out.reports.iter().all(StepReport::is_finite));
        assert_eq!(out.checkpoints.len(), 2);
        let log = fs::read_to_string(dir.path().join("run.log")).unwrap();
        assert_eq!(log.lines().count(), 4);
        let (loaded, meta) = load_checkpoint(&final_checkpoint(dir.path())).unwrap();
        assert_eq!(meta.iteration, 4);
        assert!(meta.embedder_frozen);
        assert_eq!(meta.config.unwrap()["batch_voices"], 3);
        assert_eq!(loaded.hash_params(&loaded.embedder_state()), out.embedder_hash);
    }

    #[test]
    fn class_count_mismatch_is_a_config_error() {
        let d = data();
        let mut b = bundle(d.classes + 1);
        assert!(matches!(train(&mut b, &d, &tiny_config(), &TrainOptions::default()), Err(Error::Config(_))));
    }
}
