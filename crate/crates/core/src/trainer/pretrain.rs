use log::info;
use rand::seq::index::sample;
use rand::Rng;
use voice2face_tensor::{adam_step, init, Adam, AdamState, Real, Tape, Tensor};

use super::config::PretrainConfig;
use crate::audio::{crop_frames, seconds_to_frames, MelSpectrogram};
use crate::error::{Error, Result};
use crate::models::{mel_batch, ModelBundle};
use crate::rng::{self, tags};

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainReport {
    pub losses: Vec<f64>,
    /// Speaker accuracy of the temporary head on whole training recordings.
    pub train_accuracy: f64,
    pub speakers: usize,
}

impl PretrainReport {
    pub fn initial_loss(&self) -> f64 {
        self.losses.first().copied().unwrap_or(f64::NAN)
    }

    pub fn final_loss(&self) -> f64 {
        self.losses.last().copied().unwrap_or(f64::NAN)
    }
}

fn draw_indices<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    if k <= n {
        sample(rng, n, k).into_vec()
    } else {
        (0..k).map(|_| rng.gen_range(0..n)).collect()
    }
}

/// Trains the embedder as a speaker classifier through a temporary linear
/// head, which is discarded afterwards. Batch-norm layers run on batch
/// statistics and their running averages end up in the bundle.
pub fn pretrain_embedder<T: Real>(
    bundle: &mut ModelBundle<T>,
    voices: &[MelSpectrogram],
    labels: &[usize],
    config: &PretrainConfig,
) -> Result<PretrainReport> {
    config.validate()?;
    if voices.len() != labels.len() || voices.is_empty() {
        return Err(Error::Config("pretraining needs one label per voice".into()));
    }
    let speakers = labels.iter().max().map_or(0, |m| m + 1);
    if speakers < 2 {
        return Err(Error::Config("pretraining needs at least two speakers".into()));
    }
    let e = bundle.arch().embedding_dim;
    let mut rng = rng::stream(config.seed, &[tags::PRETRAIN, 0]);
    let mut w: Tensor<T> = init::fan_in_uniform(vec![speakers, e], e, &mut rng);
    let mut b: Tensor<T> = Tensor::zeros(vec![speakers]);
    let mut w_state = AdamState::new(w.numel(), config.adam());
    let mut b_state = AdamState::new(b.numel(), config.adam());
    let mut adam = Adam::new(&bundle.store, &bundle.embedder_params(), config.adam());
    let lo = seconds_to_frames(config.crop_min_seconds);
    let hi = seconds_to_frames(config.crop_max_seconds);

    let mut losses = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let mut rng = rng::stream(config.seed, &[tags::PRETRAIN, step as u64 + 1]);
        let idx = draw_indices(&mut rng, voices.len(), config.batch_size);
        let shortest = idx.iter().map(|&i| voices[i].frames()).min().unwrap_or(0);
        let len = rng.gen_range(lo.min(shortest)..=hi.min(shortest));
        let crops = idx
            .iter()
            .map(|&i| crop_frames(&voices[i], len, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let batch_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();

        let mut tape = Tape::new();
        let x = tape.input(mel_batch(&crops.iter().collect::<Vec<_>>())?)?;
        let emb = bundle.embedder.forward_train(&mut tape, &mut bundle.store, x)?;
        let wv = tape.variable(w.clone())?;
        let bv = tape.variable(b.clone())?;
        let logits = tape.linear(emb, wv, bv)?;
        let loss = tape.softmax_cross_entropy(logits, &batch_labels)?;
        let value = tape.value(loss).item().to_f64_lossy();
        if !value.is_finite() {
            return Err(Error::TrainingAborted {
                iteration: step as u64,
                message: "pretraining loss is not finite".into(),
            });
        }
        let grads = tape.backward(loss)?;
        adam.step(&mut bundle.store, &grads)?;
        if let Some(g) = grads.wrt(wv) {
            adam_step(&mut w, g, &mut w_state)?;
        }
        if let Some(g) = grads.wrt(bv) {
            adam_step(&mut b, g, &mut b_state)?;
        }
        if step % 100 == 0 {
            info!("pretrain step={step} loss={value:.4}");
        }
        losses.push(value);
    }

    let mut correct = 0usize;
    for (spec, &label) in voices.iter().zip(labels) {
        let emb = bundle.embed_batch(&[spec])?;
        let mut best = (0, f64::NEG_INFINITY);
        for k in 0..speakers {
            let row = &w.data()[k * e..(k + 1) * e];
            let z: f64 = row.iter().zip(emb.data()).map(|(a, x)| (*a * *x).to_f64_lossy()).sum::<f64>() + b.data()[k].to_f64_lossy();
            if z > best.1 {
                best = (k, z);
            }
        }
        correct += usize::from(best.0 == label);
    }
    let train_accuracy = correct as f64 / voices.len() as f64;
    info!("pretrain done accuracy={train_accuracy:.3}");
    Ok(PretrainReport {
        losses,
        train_accuracy,
        speakers,
    })
}
