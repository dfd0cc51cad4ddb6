use sha2::{Digest, Sha256};
use voice2face_tensor::ops::activation::{sigmoid, softmax_rows};
use voice2face_tensor::{ParamId, ParamStore, Real, Tape, Tensor, Var};

use super::arch::Architecture;
use super::networks::{FaceTrunk, Generator, Head, VoiceEmbedder};
use crate::audio::{MelSpectrogram, MEL_BINS};
use crate::error::{Error, Result};
use crate::face::{FaceImage, FACE_CHANNELS};
use crate::rng::{self, tags};

/// Time-pooled voice embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct VoiceEmbedding {
    values: Vec<f32>,
}

impl VoiceEmbedding {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidAudio("embedding must be non-empty and finite".into()));
        }
        Ok(VoiceEmbedding { values })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Classifier output: identity probabilities and the penultimate feature.
#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub probabilities: Vec<f32>,
    pub features: Vec<f32>,
}

/// Which player's trunk to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Player {
    Discriminator,
    Classifier,
}

/// Parameters of all four networks in one store.
#[derive(Clone, Debug)]
pub struct ModelBundle<T> {
    arch: Architecture,
    pub store: ParamStore<T>,
    pub embedder: VoiceEmbedder,
    pub generator: Generator,
    pub disc_trunk: FaceTrunk,
    pub cls_trunk: FaceTrunk,
    pub disc_head: Head,
    pub cls_head: Head,
    pub iteration: u64,
    pub embedder_frozen: bool,
}

const INFERENCE_CHUNK: usize = 64;

fn to_real<T: Real>(v: f32) -> T {
    T::from_f64_lossy(v as f64)
}

fn to_f32<T: Real>(v: T) -> f32 {
    v.to_f64_lossy() as f32
}

/// Stack equal-length spectrograms into `[N, 64, T]`.
pub fn mel_batch<T: Real>(specs: &[&MelSpectrogram]) -> Result<Tensor<T>> {
    let t = specs.first().map(|s| s.frames()).ok_or_else(|| Error::InvalidAudio("empty batch".into()))?;
    if let Some(s) = specs.iter().find(|s| s.frames() != t) {
        return Err(Error::InvalidAudio(format!("batch mixes {t} and {} frames", s.frames())));
    }
    if specs.iter().any(|s| !s.is_normalized()) {
        return Err(Error::NotNormalized);
    }
    let data = specs.iter().flat_map(|s| s.values().iter().map(|&v| to_real(v))).collect();
    Ok(Tensor::new(vec![specs.len(), MEL_BINS, t], data)?)
}

impl<T: Real> ModelBundle<T> {
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut store = ParamStore::new();
        let embedder = VoiceEmbedder::new(&mut store, &arch.embedder_layers(), &mut rng::stream(seed, &[tags::INIT, 1]));
        let generator = Generator::new(
            &mut store,
            &arch.generator_layers(),
            arch.embedding_dim,
            &mut rng::stream(seed, &[tags::INIT, 2]),
        );
        let trunk_layers = arch.trunk_layers();
        let (disc_trunk, cls_trunk) = if arch.shared_trunk {
            let t = FaceTrunk::new(&mut store, "trunk", &trunk_layers, &mut rng::stream(seed, &[tags::INIT, 3]));
            (t.clone(), t)
        } else {
            (
                FaceTrunk::new(&mut store, "disc.trunk", &trunk_layers, &mut rng::stream(seed, &[tags::INIT, 3])),
                FaceTrunk::new(&mut store, "cls.trunk", &trunk_layers, &mut rng::stream(seed, &[tags::INIT, 4])),
            )
        };
        let disc_head = Head::new(&mut store, "disc.fc", arch.discriminator_head(), &mut rng::stream(seed, &[tags::INIT, 5]));
        let cls_head = Head::new(&mut store, "cls.fc", arch.classifier_head(), &mut rng::stream(seed, &[tags::INIT, 6]));
        Ok(ModelBundle {
            arch,
            store,
            embedder,
            generator,
            disc_trunk,
            cls_trunk,
            disc_head,
            cls_head,
            iteration: 0,
            embedder_frozen: false,
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn image_size(&self) -> usize {
        self.arch.image_size()
    }

    pub fn embedder_params(&self) -> Vec<ParamId> {
        self.embedder.params()
    }

    /// Trainable embedder parameters plus batch-norm running statistics.
    pub fn embedder_state(&self) -> Vec<ParamId> {
        let mut ids = self.embedder.params();
        ids.extend(self.embedder.buffers());
        ids
    }

    pub fn generator_params(&self) -> Vec<ParamId> {
        self.generator.params()
    }

    pub fn discriminator_params(&self) -> Vec<ParamId> {
        let mut ids = self.disc_trunk.params();
        ids.extend(self.disc_head.params());
        ids
    }

    pub fn classifier_params(&self) -> Vec<ParamId> {
        let mut ids = self.cls_trunk.params();
        ids.extend(self.cls_head.params());
        ids
    }

    pub fn trunk(&self, player: Player) -> &FaceTrunk {
        match player {
            Player::Discriminator => &self.disc_trunk,
            Player::Classifier => &self.cls_trunk,
        }
    }

    /// SHA-256 over the names and values of the given parameters.
    pub fn hash_params(&self, ids: &[ParamId]) -> String {
        let mut h = Sha256::new();
        for &id in ids {
            h.update(self.store.name(id).as_bytes());
            for v in self.store.get(id).data() {
                h.update(v.to_f64_lossy().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn faces_tensor(&self, faces: &[&FaceImage]) -> Result<Tensor<T>> {
        let s = self.image_size();
        if faces.is_empty() {
            return Err(Error::InvalidImage("empty face batch".into()));
        }
        if let Some(f) = faces.iter().find(|f| f.size() != s) {
            return Err(Error::InvalidImage(format!(
                "networks expect {FACE_CHANNELS}x{s}x{s} images, got {FACE_CHANNELS}x{0}x{0}",
                f.size()
            )));
        }
        let data = faces.iter().flat_map(|f| f.values().iter().map(|&v| to_real(v))).collect();
        Ok(Tensor::new(vec![faces.len(), FACE_CHANNELS, s, s], data)?)
    }

    pub fn embeddings_tensor(&self, embeddings: &[&VoiceEmbedding]) -> Result<Tensor<T>> {
        let e = self.arch.embedding_dim;
        if embeddings.is_empty() {
            return Err(Error::InvalidAudio("empty embedding batch".into()));
        }
        if let Some(x) = embeddings.iter().find(|x| x.dim() != e) {
            return Err(Error::InvalidAudio(format!("generator expects {e}-dim embeddings, got {}", x.dim())));
        }
        let data = embeddings.iter().flat_map(|x| x.values().iter().map(|&v| to_real(v))).collect();
        Ok(Tensor::new(vec![embeddings.len(), e], data)?)
    }

    /// Embed one batch of equal-length spectrograms (inference mode).
    pub fn embed_batch(&self, specs: &[&MelSpectrogram]) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let x = tape.input(mel_batch(specs)?)?;
        let e = self.embedder.forward(&mut tape, &self.store, x, false)?;
        Ok(tape.value(e).clone())
    }

    pub fn embed_voice(&self, spec: &MelSpectrogram) -> Result<VoiceEmbedding> {
        let e = self.embed_batch(&[spec])?;
        VoiceEmbedding::new(e.data().iter().map(|&v| to_f32(v)).collect())
    }

    pub fn embed_voices(&self, specs: &[MelSpectrogram]) -> Result<Vec<VoiceEmbedding>> {
        specs.iter().map(|s| self.embed_voice(s)).collect()
    }

    /// Generator forward on a `[N, E]` tensor without gradients.
    pub fn generate_tensor(&self, embeddings: Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let e = tape.input(embeddings)?;
        let y = self.generator.forward(&mut tape, &self.store, e, false)?;
        Ok(tape.value(y).clone())
    }

    fn images_from(&self, t: &Tensor<T>) -> Result<Vec<FaceImage>> {
        let s = self.image_size();
        (0..t.dim(0))
            .map(|i| {
                let v: Vec<f32> = t.sample(i).iter().map(|&x| to_f32(x)).collect();
                FaceImage::from_network(s, &v)
            })
            .collect()
    }

    pub fn generate_face(&self, e: &VoiceEmbedding) -> Result<FaceImage> {
        Ok(self.generate_faces(std::slice::from_ref(e))?.remove(0))
    }

    pub fn generate_faces(&self, embeddings: &[VoiceEmbedding]) -> Result<Vec<FaceImage>> {
        let mut out = Vec::with_capacity(embeddings.len());
        for chunk in embeddings.chunks(INFERENCE_CHUNK) {
            let refs: Vec<&VoiceEmbedding> = chunk.iter().collect();
            out.extend(self.images_from(&self.generate_tensor(self.embeddings_tensor(&refs)?)?)?);
        }
        Ok(out)
    }

    /// Whole-recording voice to face.
    pub fn voice_to_face(&self, spec: &MelSpectrogram) -> Result<FaceImage> {
        self.generate_face(&self.embed_voice(spec)?)
    }

    /// Trunk features `[N, F]` on a tape.
    pub fn features_on(&self, tape: &mut Tape<T>, player: Player, images: Var, trainable: bool) -> Result<Var> {
        self.trunk(player).forward(tape, &self.store, images, trainable)
    }

    pub fn disc_logits_on(&self, tape: &mut Tape<T>, features: Var, trainable: bool) -> Result<Var> {
        self.disc_head.logits(tape, &self.store, features, trainable)
    }

    pub fn cls_logits_on(&self, tape: &mut Tape<T>, features: Var, trainable: bool) -> Result<Var> {
        self.cls_head.logits(tape, &self.store, features, trainable)
    }

    /// Realness probabilities for a batch of images.
    pub fn discriminate_tensor(&self, images: Tensor<T>) -> Result<Vec<f32>> {
        let mut tape = Tape::new();
        let x = tape.input(images)?;
        let f = self.features_on(&mut tape, Player::Discriminator, x, false)?;
        let logits = self.disc_logits_on(&mut tape, f, false)?;
        Ok(tape.value(logits).data().iter().map(|&l| to_f32(sigmoid(l))).collect())
    }

    pub fn discriminate(&self, face: &FaceImage) -> Result<f32> {
        Ok(self.discriminate_batch(std::slice::from_ref(face))?[0])
    }

    pub fn discriminate_batch(&self, faces: &[FaceImage]) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(faces.len());
        for chunk in faces.chunks(INFERENCE_CHUNK) {
            let refs: Vec<&FaceImage> = chunk.iter().collect();
            out.extend(self.discriminate_tensor(self.faces_tensor(&refs)?)?);
        }
        Ok(out)
    }

    pub fn classify_tensor(&self, images: Tensor<T>) -> Result<Vec<Classification>> {
        let mut tape = Tape::new();
        let x = tape.input(images)?;
        let f = self.features_on(&mut tape, Player::Classifier, x, false)?;
        let logits = self.cls_logits_on(&mut tape, f, false)?;
        let (fv, lv) = (tape.value(f), tape.value(logits));
        let k = lv.dim(1);
        let probs = softmax_rows(lv.data(), k);
        Ok((0..fv.dim(0))
            .map(|i| Classification {
                probabilities: probs[i * k..(i + 1) * k].iter().map(|&p| to_f32(p)).collect(),
                features: fv.sample(i).iter().map(|&v| to_f32(v)).collect(),
            })
            .collect())
    }

    pub fn classify(&self, face: &FaceImage) -> Result<Classification> {
        Ok(self.classify_batch(std::slice::from_ref(face))?.remove(0))
    }

    pub fn classify_batch(&self, faces: &[FaceImage]) -> Result<Vec<Classification>> {
        let mut out = Vec::with_capacity(faces.len());
        for chunk in faces.chunks(INFERENCE_CHUNK) {
            let refs: Vec<&FaceImage> = chunk.iter().collect();
            out.extend(self.classify_tensor(self.faces_tensor(&refs)?)?);
        }
        Ok(out)
    }

    pub fn parameter_counts(&self) -> ParameterCounts {
        let count = |ids: &[ParamId]| self.store.count(ids);
        ParameterCounts {
            embedder: count(&self.embedder_params()),
            generator: count(&self.generator_params()),
            discriminator: count(&self.discriminator_params()),
            classifier: count(&self.classifier_params()),
            shared_trunk: if self.arch.shared_trunk { count(&self.disc_trunk.params()) } else { 0 },
            buffers: count(&self.embedder.buffers()),
        }
    }
}

/// Trainable parameter counts per network. With a shared trunk the trunk
/// is included in both the discriminator and classifier counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParameterCounts {
    pub embedder: usize,
    pub generator: usize,
    pub discriminator: usize,
    pub classifier: usize,
    pub shared_trunk: usize,
    pub buffers: usize,
}

impl ParameterCounts {
    pub fn unique_total(&self) -> usize {
        self.embedder + self.generator + self.discriminator + self.classifier - self.shared_trunk
    }

    pub fn report(&self) -> String {
        format!(
            "embedder={}\ngenerator={}\ndiscriminator={}\nclassifier={}\nshared_trunk={}\nbatchnorm_buffers={}\nunique_trainable={}\n",
            self.embedder,
            self.generator,
            self.discriminator,
            self.classifier,
            self.shared_trunk,
            self.buffers,
            self.unique_total()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::MEL_BINS;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mel(frames: usize, seed: u64) -> MelSpectrogram {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        MelSpectrogram::new(frames, (0..MEL_BINS * frames).map(|_| r.gen_range(-2.0..2.0)).collect(), true).unwrap()
    }

    fn face(size: usize, seed: u64) -> FaceImage {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        FaceImage::new(size, (0..3 * size * size).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn small() -> ModelBundle<f32> {
        ModelBundle::new(Architecture::full(6).narrowed(16), 1).unwrap()
    }

    #[test]
    fn embedding_dimension_ignores_duration() {
        let b = small();
        for t in [50, 300, 800] {
            assert_eq!(b.embed_voice(&mel(t, t as u64)).unwrap().dim(), 64);
        }
        let m = mel(120, 3);
        assert_eq!(b.embed_voice(&m).unwrap(), b.embed_voice(&m).unwrap());
    }

    #[test]
    fn unnormalized_input_is_rejected() {
        let m = MelSpectrogram::new(10, vec![0.0; MEL_BINS * 10], false).unwrap();
        assert!(matches!(small().embed_voice(&m), Err(Error::NotNormalized)));
    }

    #[test]
    fn generator_output_shape_and_determinism() {
        let b = small();
        let zero = VoiceEmbedding::new(vec![0.0; 64]).unwrap();
        let f = b.generate_face(&zero).unwrap();
        assert_eq!(f.shape(), [3, 64, 64]);
        assert_eq!(f, b.generate_face(&zero).unwrap());
        assert!(b.generate_face(&VoiceEmbedding::new(vec![0.0; 63]).unwrap()).is_err());
    }

    #[test]
    fn discriminator_is_a_probability() {
        let b = small();
        for s in 0..5 {
            let p = b.discriminate(&face(64, s)).unwrap();
            assert!(p > 0.0 && p < 1.0);
        }
        assert!(b.discriminate(&face(32, 0)).is_err());
    }

    #[test]
    fn classifier_outputs_sum_to_one() {
        let b = small();
        let c = b.classify(&face(64, 9)).unwrap();
        assert_eq!(c.probabilities.len(), 6);
        assert_eq!(c.features.len(), 64);
        assert!((c.probabilities.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn table_scale_classifier_width() {
        let b: ModelBundle<f32> = ModelBundle::new(Architecture::full(924).narrowed(32), 1).unwrap();
        assert_eq!(b.classify(&face(64, 1)).unwrap().probabilities.len(), 924);
    }

    #[test]
    fn initial_entropy_is_near_uniform() {
        let b: ModelBundle<f32> = ModelBundle::new(Architecture::full(32).narrowed(8), 2).unwrap();
        let faces: Vec<FaceImage> = (0..100).map(|s| face(64, s)).collect();
        let mean_entropy: f64 = b
            .classify_batch(&faces)
            .unwrap()
            .iter()
            .map(|c| -c.probabilities.iter().map(|&p| p as f64 * (p as f64).ln()).sum::<f64>())
            .sum::<f64>()
            / 100.0;
        let bound = (32f64).ln();
        assert!(mean_entropy <= bound + 1e-6 && mean_entropy > 0.9 * bound, "{mean_entropy} vs {bound}");
    }

    #[test]
    fn shared_trunk_is_one_storage() {
        let mut b = small();
        assert_eq!(b.disc_trunk.params(), b.cls_trunk.params());
        let f = face(64, 4);
        let before = b.classify(&f).unwrap().features;
        let w = b.disc_trunk.layers[1].weight;
        b.store.get_mut(w).data_mut()[0] += 0.5;
        assert_ne!(b.classify(&f).unwrap().features, before);
    }

    #[test]
    fn separate_trunks_when_unshared() {
        let mut arch = Architecture::full(4).narrowed(16);
        arch.shared_trunk = false;
        let b: ModelBundle<f32> = ModelBundle::new(arch, 1).unwrap();
        assert!(b.disc_trunk.params().iter().all(|id| !b.cls_trunk.params().contains(id)));
        assert_eq!(b.parameter_counts().shared_trunk, 0);
    }

    #[test]
    fn parameter_counts_match_layer_formulas() {
        let b: ModelBundle<f32> = ModelBundle::new(Architecture::full(924), 0).unwrap();
        let c = b.parameter_counts();
        let conv1 = |ci: usize, co: usize| co * ci * 3 + co + 2 * co;
        let emb = conv1(64, 256) + conv1(256, 384) + conv1(384, 576) + conv1(576, 864) + conv1(864, 64);
        let dec = |ci: usize, co: usize, k: usize| ci * co * k * k + co;
        let gen = dec(64, 1024, 4) + dec(1024, 512, 3) + dec(512, 256, 3) + dec(256, 128, 3) + dec(128, 64, 3) + dec(64, 3, 1);
        let conv = |ci: usize, co: usize, k: usize| co * ci * k * k + co;
        let trunk = conv(3, 32, 1) + conv(32, 64, 3) + conv(64, 128, 3) + conv(128, 256, 3) + conv(256, 512, 3) + conv(512, 64, 4);
        assert_eq!(c.embedder, emb);
        assert_eq!(c.generator, gen);
        assert_eq!(c.discriminator, trunk + 65);
        assert_eq!(c.classifier, trunk + 64 * 924 + 924);
        assert_eq!(c.unique_total(), emb + gen + trunk + 65 + 64 * 924 + 924);
    }
}
