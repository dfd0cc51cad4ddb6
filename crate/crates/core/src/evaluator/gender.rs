use rand::seq::index::sample;
use voice2face_tensor::ops::activation::sigmoid;
use voice2face_tensor::{Adam, AdamConfig, ParamStore, Tape, Tensor};

use super::report::EvalReport;
use crate::audio::MelSpectrogram;
use crate::error::{Error, Result};
use crate::face::{FaceImage, FACE_CHANNELS};
use crate::models::{Architecture, FaceTrunk, Head, ModelBundle};
use crate::rng::{self, tags};

/// Real-face accuracy a probe must reach before its verdicts are used.
pub const MIN_PROBE_ACCURACY: f64 = 0.9;

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            steps: 400,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Binary gender classifier on faces, built like the discriminator.
#[derive(Clone, Debug)]
pub struct GenderProbe {
    store: ParamStore<f32>,
    trunk: FaceTrunk,
    head: Head,
    size: usize,
}

impl GenderProbe {
    pub fn new(arch: &Architecture, seed: u64) -> Self {
        let mut store = ParamStore::new();
        let trunk = FaceTrunk::new(&mut store, "probe.trunk", &arch.trunk_layers(), &mut rng::stream(seed, &[tags::PROBE, 1]));
        let head = Head::new(&mut store, "probe.fc", arch.discriminator_head(), &mut rng::stream(seed, &[tags::PROBE, 2]));
        GenderProbe {
            store,
            trunk,
            head,
            size: arch.image_size(),
        }
    }

    fn batch(&self, faces: &[&FaceImage]) -> Result<Tensor<f32>> {
        if let Some(f) = faces.iter().find(|f| f.size() != self.size) {
            return Err(Error::InvalidImage(format!("probe expects {0}x{0} faces, got {1}x{1}", self.size, f.size())));
        }
        let data = faces.iter().flat_map(|f| f.values().iter().copied()).collect();
        Ok(Tensor::new(vec![faces.len(), FACE_CHANNELS, self.size, self.size], data)?)
    }

    fn logits(&self, tape: &mut Tape<f32>, x: Tensor<f32>, trainable: bool) -> Result<voice2face_tensor::Var> {
        let x = tape.input(x)?;
        let f = self.trunk.forward(tape, &self.store, x, trainable)?;
        self.head.logits(tape, &self.store, f, trainable)
    }

    /// Probability that each face has gender 1.
    pub fn predict(&self, faces: &[FaceImage]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(faces.len());
        for chunk in faces.chunks(64) {
            let mut tape = Tape::new();
            let l = self.logits(&mut tape, self.batch(&chunk.iter().collect::<Vec<_>>())?, false)?;
            out.extend(tape.value(l).data().iter().map(|&v| sigmoid(v) as f64));
        }
        Ok(out)
    }

    pub fn accuracy(&self, faces: &[FaceImage], genders: &[u8]) -> Result<EvalReport> {
        let p = self.predict(faces)?;
        let hits = p.iter().zip(genders).filter(|(&p, &g)| u8::from(p >= 0.5) == g).count();
        Ok(EvalReport::proportion("gender_probe_accuracy", hits as u64, faces.len() as u64))
    }

    /// Trains on real faces with binary cross-entropy.
    pub fn train(arch: &Architecture, faces: &[FaceImage], genders: &[u8], config: &ProbeConfig) -> Result<Self> {
        if faces.len() != genders.len() || faces.len() < 2 {
            return Err(Error::Evaluation("probe needs labelled faces".into()));
        }
        if genders.iter().all(|&g| g == genders[0]) {
            return Err(Error::Evaluation("probe training faces all have one gender".into()));
        }
        let mut probe = GenderProbe::new(arch, config.seed);
        let ids: Vec<_> = probe.trunk.params().into_iter().chain(probe.head.params()).collect();
        let mut adam = Adam::new(
            &probe.store,
            &ids,
            AdamConfig {
                learning_rate: config.learning_rate,
                ..AdamConfig::default()
            },
        );
        for step in 0..config.steps {
            let mut rng = rng::stream(config.seed, &[tags::PROBE, 3, step as u64]);
            let k = config.batch_size.min(faces.len());
            let idx: Vec<usize> = sample(&mut rng, faces.len(), k).into_vec();
            let x = probe.batch(&idx.iter().map(|&i| &faces[i]).collect::<Vec<_>>())?;
            let y: Vec<f32> = idx.iter().map(|&i| genders[i] as f32).collect();
            let mut tape = Tape::new();
            let l = probe.logits(&mut tape, x, true)?;
            let loss = tape.bce_with_logits(l, &y)?;
            let grads = tape.backward(loss)?;
            adam.step(&mut probe.store, &grads)?;
        }
        Ok(probe)
    }
}

/// Fraction of faces generated from `voices` whose probe-predicted gender
/// matches the speaker. Refused when the probe's own accuracy on held-out
/// real faces is below [`MIN_PROBE_ACCURACY`].
pub fn gender_accuracy(
    bundle: &ModelBundle<f32>,
    voices: &[MelSpectrogram],
    genders: &[u8],
    probe: &GenderProbe,
    probe_accuracy: f64,
) -> Result<EvalReport> {
    if probe_accuracy < MIN_PROBE_ACCURACY {
        return Err(Error::Evaluation(format!(
            "gender probe reaches only {:.1}% on real faces (need {:.0}%)",
            100.0 * probe_accuracy,
            100.0 * MIN_PROBE_ACCURACY
        )));
    }
    if voices.len() != genders.len() || voices.is_empty() {
        return Err(Error::Evaluation("one gender per voice required".into()));
    }
    let faces = crate::parallel::try_map(voices, |v| bundle.voice_to_face(v))?;
    let p = probe.predict(&faces)?;
    let hits = p.iter().zip(genders).filter(|(&p, &g)| u8::from(p >= 0.5) == g).count();
    Ok(EvalReport::proportion("gender_accuracy", hits as u64, voices.len() as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn faces(n: usize) -> (Vec<FaceImage>, Vec<u8>) {
        // Gender 1 faces are bright, gender 0 dark.
        let mut rng = rng::stream(1, &[]);
        (0..n)
            .map(|i| {
                let g = (i % 2) as u8;
                let base = if g == 1 { 0.4 } else { -0.4 };
                let v = (0..3 * 64 * 64).map(|_| base + rng.gen_range(-0.3f32..0.3)).collect();
                (FaceImage::new(64, v).unwrap(), g)
            })
            .unzip()
    }

    #[test]
    fn probe_learns_a_separable_cue() {
        let arch = Architecture::full(2).narrowed(32);
        let (f, g) = faces(40);
        let probe = GenderProbe::train(
            &arch,
            &f,
            &g,
            &ProbeConfig {
                steps: 40,
                batch_size: 16,
                ..ProbeConfig::default()
            },
        )
        .unwrap();
        let (tf, tg) = faces(20);
        assert!(probe.accuracy(&tf, &tg).unwrap().value >= 0.95);
    }

    #[test]
    fn single_gender_training_set_is_rejected() {
        let arch = Architecture::full(2).narrowed(32);
        let (f, _) = faces(4);
        assert!(GenderProbe::train(&arch, &f, &[1; 4], &ProbeConfig::default()).is_err());
    }

    #[test]
    fn unreliable_probe_refuses_evaluation() {
        let arch = Architecture::full(2).narrowed(32);
        let b = ModelBundle::<f32>::new(arch.clone(), 0).unwrap();
        let probe = GenderProbe::new(&arch, 0);
        let m = MelSpectrogram::new(10, vec![0.0; 640], true).unwrap();
        assert!(matches!(gender_accuracy(&b, &[m], &[0], &probe, 0.85), Err(Error::Evaluation(_))));
    }
}
