use std::collections::BTreeSet;

use rand_distr::{Distribution, StandardNormal};

use super::report::EvalReport;
use super::trials::MatchingTrial;
use crate::corpus::{FaceItem, SplitData, VoiceItem};
use crate::error::{Error, Result};
use crate::models::ModelBundle;
use crate::parallel;
use crate::rng;

/// Maps probe voices and gallery faces into one feature space.
pub trait MatchingModel: Sync {
    fn voice_feature(&self, voice: &VoiceItem) -> Result<Vec<f32>>;
    fn face_feature(&self, face: &FaceItem) -> Result<Vec<f32>>;
}

/// The generated face's classifier feature stands in for the voice.
impl MatchingModel for ModelBundle<f32> {
    fn voice_feature(&self, voice: &VoiceItem) -> Result<Vec<f32>> {
        Ok(self.classify(&self.voice_to_face(&voice.mel)?)?.features)
    }

    fn face_feature(&self, face: &FaceItem) -> Result<Vec<f32>> {
        Ok(self.classify(&face.image)?.features)
    }
}

/// Harness check: features planted from the identity label. With
/// `adversarial` set, faces get the negated code of their identity so the
/// imposter always wins.
#[derive(Clone, Debug)]
pub struct PlantedOracle {
    pub dim: usize,
    pub seed: u64,
    pub adversarial: bool,
}

impl PlantedOracle {
    pub fn new(adversarial: bool) -> Self {
        PlantedOracle {
            dim: 64,
            seed: 0,
            adversarial,
        }
    }

    fn code(&self, identity: usize) -> Vec<f32> {
        let mut rng = rng::stream(self.seed, &[identity as u64]);
        (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect()
    }
}

impl MatchingModel for PlantedOracle {
    fn voice_feature(&self, voice: &VoiceItem) -> Result<Vec<f32>> {
        Ok(self.code(voice.identity))
    }

    fn face_feature(&self, face: &FaceItem) -> Result<Vec<f32>> {
        let c = self.code(face.identity);
        Ok(if self.adversarial { c.into_iter().map(|v| -v).collect() } else { c })
    }
}

/// `None` for a zero vector.
pub fn cosine(a: &[f32], b: &[f32]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    let na: f64 = a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    (na > 0.0 && nb > 0.0).then(|| dot / (na * nb))
}

fn features<T: Sync>(used: &BTreeSet<usize>, items: &[T], f: impl Fn(&T) -> Result<Vec<f32>> + Sync) -> Result<Vec<Option<Vec<f32>>>> {
    let idx: Vec<usize> = used.iter().copied().collect();
    let computed = parallel::try_map(&idx, |&i| f(&items[i]))?;
    let mut out = vec![None; items.len()];
    for (i, v) in idx.into_iter().zip(computed) {
        out[i] = Some(v);
    }
    Ok(out)
}

/// 1:2 matching: the gallery face more cosine-similar to the probe's
/// feature is chosen. Trials involving a zero feature are skipped and
/// counted; ties count as errors.
pub fn matching_accuracy(model: &impl MatchingModel, split: &SplitData, trials: &[MatchingTrial]) -> Result<EvalReport> {
    if trials.is_empty() {
        return Err(Error::Evaluation("no trials".into()));
    }
    let voices: BTreeSet<usize> = trials.iter().map(|t| t.probe_voice).collect();
    let faces: BTreeSet<usize> = trials.iter().flat_map(|t| [t.true_face, t.imposter_face]).collect();
    if voices.iter().any(|&v| v >= split.voices.len()) || faces.iter().any(|&f| f >= split.faces.len()) {
        return Err(Error::Evaluation("trial refers to an item outside the split".into()));
    }
    let vf = features(&voices, &split.voices, |v| model.voice_feature(v))?;
    let ff = features(&faces, &split.faces, |f| model.face_feature(f))?;
    let (mut correct, mut counted, mut skipped) = (0u64, 0u64, 0u64);
    for t in trials {
        let p = vf[t.probe_voice].as_deref().unwrap_or_default();
        let sims = cosine(p, ff[t.true_face].as_deref().unwrap_or_default())
            .zip(cosine(p, ff[t.imposter_face].as_deref().unwrap_or_default()));
        match sims {
            Some((s_true, s_imp)) => {
                counted += 1;
                correct += u64::from(s_true > s_imp);
            }
            None => skipped += 1,
        }
    }
    let stratified = trials.iter().all(|t| t.gender_stratified);
    let name = if stratified { "matching_accuracy_stratified" } else { "matching_accuracy" };
    let mut report = EvalReport::proportion(name, correct, counted);
    report.skipped = skipped;
    Ok(report)
}
