//! Procedural paired corpus. Each identity owns a latent vector (a gender
//! bit and three shape reals); face geometry and the voice's resonance
//! peaks are both affine in that vector, so identity is recoverable from
//! either modality.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, ManifestEntry, Modality, Split};
use crate::audio::{write_wav, Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::face::{write_face_png, FaceImage, FACE_CHANNELS, FACE_SIZE};
use crate::rng::{self, tags};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub identities: usize,
    pub voices_per_identity: usize,
    pub faces_per_identity: usize,
    pub test_identities: usize,
    pub validation_identities: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            identities: 32,
            voices_per_identity: 20,
            faces_per_identity: 20,
            test_identities: 8,
            validation_identities: 0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.identities < 2 {
            return Err(Error::Config("synthetic corpus needs at least 2 identities".into()));
        }
        if self.voices_per_identity == 0 || self.faces_per_identity == 0 {
            return Err(Error::Config("per-identity voice and face counts must be at least 1".into()));
        }
        if self.test_identities + self.validation_identities + 2 > self.identities {
            return Err(Error::Config(format!(
                "{} held-out identities leave fewer than 2 of {} for training",
                self.test_identities + self.validation_identities,
                self.identities
            )));
        }
        Ok(())
    }

    pub fn train_identities(&self) -> usize {
        self.identities - self.test_identities - self.validation_identities
    }

    /// Train identities come first, then validation, then test.
    pub fn split_of(&self, label: usize) -> Split {
        let train = self.train_identities();
        if label < train {
            Split::Train
        } else if label < train + self.validation_identities {
            Split::Validation
        } else {
            Split::Test
        }
    }
}

/// Per-identity latent: gender bit, face shape reals in `[-1, 1]`, and the
/// vocal tract reals (equal to the face shape).
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticIdentity {
    pub label: usize,
    pub gender: u8,
    pub face_shape: [f64; 3],
    pub vocal_tract: [f64; 3],
}

impl SyntheticIdentity {
    pub fn new(seed: u64, label: usize) -> Self {
        let offset = (rng::derive_seed(seed, &[tags::IDENTITY]) & 1) as usize;
        let gender = ((label + offset) % 2) as u8;
        let mut r = rng::stream(seed, &[tags::IDENTITY, label as u64]);
        let face_shape = [r.gen_range(-1.0..=1.0), r.gen_range(-1.0..=1.0), r.gen_range(-1.0..=1.0)];
        SyntheticIdentity {
            label,
            gender,
            face_shape,
            vocal_tract: face_shape,
        }
    }

    pub fn attribute_vector(&self) -> [f64; 7] {
        let [a, b, c] = self.face_shape;
        let [d, e, f] = self.vocal_tract;
        [self.gender as f64, a, b, c, d, e, f]
    }

    pub fn face_params(&self) -> FaceParams {
        let [s1, s2, s3] = self.face_shape;
        let female = self.gender == 1;
        FaceParams {
            center: [32.0, 34.0],
            axes: [16.0 + 3.5 * s1, 21.0 + 3.5 * s2],
            eye_spacing: 14.0 + 4.0 * s3,
            mouth_width: 5.0 + 2.5 * s1 - 1.5 * s2,
            hue: if female { 0.58 } else { 0.07 } + 0.05 * s3,
            brightness: 1.0,
        }
    }

    pub fn voice_params(&self) -> VoiceParams {
        let [t1, t2, t3] = self.vocal_tract;
        let (f0, base) = if self.gender == 1 {
            (205.0, [640.0, 1750.0, 2900.0])
        } else {
            (115.0, [520.0, 1450.0, 2450.0])
        };
        VoiceParams {
            f0: f0 * (1.0 + 0.12 * t3),
            formants: [base[0] * (1.0 - 0.18 * t1), base[1] * (1.0 - 0.14 * t2), base[2] * (1.0 + 0.10 * t3)],
            bandwidths: [80.0, 110.0, 150.0],
        }
    }
}

/// Maximum per-image deviation from an identity's nominal face parameters.
#[derive(Clone, Copy, Debug)]
pub struct FaceJitter {
    pub center_px: f64,
    pub axis_px: f64,
    pub eye_px: f64,
    pub mouth_px: f64,
    pub hue: f64,
    pub brightness: f64,
}

pub const FACE_JITTER: FaceJitter = FaceJitter {
    center_px: 1.5,
    axis_px: 0.8,
    eye_px: 0.6,
    mouth_px: 0.6,
    hue: 0.012,
    brightness: 0.05,
};

#[derive(Clone, Debug, PartialEq)]
pub struct FaceParams {
    pub center: [f64; 2],
    pub axes: [f64; 2],
    pub eye_spacing: f64,
    pub mouth_width: f64,
    pub hue: f64,
    pub brightness: f64,
}

impl FaceParams {
    pub fn jittered<R: Rng + ?Sized>(&self, rng: &mut R) -> FaceParams {
        let j = FACE_JITTER;
        let mut u = |r: f64| rng.gen_range(-r..=r);
        FaceParams {
            center: [self.center[0] + u(j.center_px), self.center[1] + u(j.center_px)],
            axes: [self.axes[0] + u(j.axis_px), self.axes[1] + u(j.axis_px)],
            eye_spacing: self.eye_spacing + u(j.eye_px),
            mouth_width: self.mouth_width + u(j.mouth_px),
            hue: self.hue + u(j.hue),
            brightness: self.brightness + u(j.brightness),
        }
    }

    pub fn as_vector(&self) -> [f64; 8] {
        [
            self.center[0],
            self.center[1],
            self.axes[0],
            self.axes[1],
            self.eye_spacing,
            self.mouth_width,
            self.hue,
            self.brightness,
        ]
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(1.0) * 6.0;
    let i = h.floor();
    let f = h - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i as u32 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Soft coverage of a shape given its signed distance in pixels (negative inside).
fn coverage(distance: f64) -> f64 {
    (0.5 - distance).clamp(0.0, 1.0)
}

fn ellipse_distance(x: f64, y: f64, c: [f64; 2], a: [f64; 2]) -> f64 {
    let (dx, dy) = ((x - c[0]) / a[0], (y - c[1]) / a[1]);
    (dx.hypot(dy) - 1.0) * a[0].min(a[1])
}

pub fn render_face(p: &FaceParams) -> FaceImage {
    let s = FACE_SIZE;
    let background = [0.20 * p.brightness, 0.21 * p.brightness, 0.25 * p.brightness];
    let skin = hsv_to_rgb(p.hue, 0.55, (0.85 * p.brightness).min(1.0));
    let eye_color = [0.08, 0.08, 0.12];
    let mouth_color = [0.62, 0.18, 0.24];
    let eye_y = p.center[1] - 0.22 * p.axes[1];
    let eyes = [[p.center[0] - p.eye_spacing / 2.0, eye_y], [p.center[0] + p.eye_spacing / 2.0, eye_y]];
    let mouth = [p.center[0], p.center[1] + 0.45 * p.axes[1]];
    let mut values = vec![0f32; FACE_CHANNELS * s * s];
    for y in 0..s {
        for x in 0..s {
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut rgb = background;
            let mut paint = |color: [f64; 3], alpha: f64| {
                for c in 0..3 {
                    rgb[c] = rgb[c] * (1.0 - alpha) + color[c] * alpha;
                }
            };
            paint(skin, coverage(ellipse_distance(fx, fy, p.center, p.axes)));
            for e in eyes {
                paint(eye_color, coverage(ellipse_distance(fx, fy, e, [2.6, 2.2])));
            }
            paint(mouth_color, coverage(ellipse_distance(fx, fy, mouth, [p.mouth_width.max(1.0), 1.6])));
            for c in 0..3 {
                values[c * s * s + y * s + x] = (rgb[c].clamp(0.0, 1.0) * 2.0 - 1.0) as f32;
            }
        }
    }
    FaceImage::new(s, values).expect("rendered face has the fixed shape")
}

/// The `index`-th face image of an identity.
pub fn synthesize_face(seed: u64, identity: &SyntheticIdentity, index: usize) -> FaceImage {
    let mut r = rng::stream(seed, &[tags::FACE, identity.label as u64, index as u64]);
    render_face(&identity.face_params().jittered(&mut r))
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoiceParams {
    pub f0: f64,
    pub formants: [f64; 3],
    pub bandwidths: [f64; 3],
}

/// Two-pole resonator with unit gain at DC.
struct Resonator {
    a: f64,
    b: f64,
    c: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new() -> Self {
        Resonator { a: 1.0, b: 0.0, c: 0.0, y1: 0.0, y2: 0.0 }
    }

    fn tune(&mut self, freq: f64, bandwidth: f64) {
        let t = 1.0 / SAMPLE_RATE as f64;
        self.c = -(-2.0 * PI * bandwidth * t).exp();
        self.b = 2.0 * (-PI * bandwidth * t).exp() * (2.0 * PI * freq * t).cos();
        self.a = 1.0 - self.b - self.c;
    }

    fn process(&mut self, x: f64) -> f64 {
        let y = self.a * x + self.b * self.y1 + self.c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

struct Syllable {
    start: usize,
    end: usize,
    formant_scale: [f64; 3],
    f0_start: f64,
    f0_end: f64,
    amplitude: f64,
}

/// Source-filter speech stand-in: a glottal pulse train through three
/// cascaded resonators, shaped into syllables separated by pauses.
pub fn synthesize_voice(seed: u64, identity: &SyntheticIdentity, index: usize) -> Waveform {
    let mut r = rng::stream(seed, &[tags::VOICE, identity.label as u64, index as u64]);
    let sr = SAMPLE_RATE as f64;
    let duration = r.gen_range(3.0..10.0);
    let n = (duration * sr) as usize;
    let base = identity.voice_params();
    let jitter = Normal::new(0.0, 1.0).expect("unit normal");
    let formants: Vec<f64> = base.formants.iter().map(|f| f * (1.0 + 0.015 * jitter.sample(&mut r))).collect();
    let f0 = base.f0 * (1.0 + 0.03 * jitter.sample(&mut r));

    let mut syllables = Vec::new();
    let mut t = r.gen_range(0.05..0.25);
    while t < duration - 0.2 {
        let len = r.gen_range(0.12..0.32);
        let end = (t + len).min(duration - 0.05);
        let glide = r.gen_range(-0.08..0.08);
        syllables.push(Syllable {
            start: (t * sr) as usize,
            end: (end * sr) as usize,
            formant_scale: [r.gen_range(0.94..1.06), r.gen_range(0.94..1.06), r.gen_range(0.96..1.04)],
            f0_start: f0 * (1.0 + glide),
            f0_end: f0 * (1.0 - glide),
            amplitude: r.gen_range(0.6..1.0),
        });
        let pause = if r.gen_bool(0.1) { r.gen_range(0.3..0.5) } else { r.gen_range(0.04..0.22) };
        t = end + pause;
    }

    let mut out = vec![0.0f64; n];
    let mut resonators = [Resonator::new(), Resonator::new(), Resonator::new()];
    let (mut phase, mut tilt1, mut tilt2, mut prev) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let ramp = (0.02 * sr) as usize;
    for syl in &syllables {
        for (k, res) in resonators.iter_mut().enumerate() {
            res.tune(formants[k] * syl.formant_scale[k], base.bandwidths[k]);
        }
        let span = (syl.end - syl.start).max(1);
        for i in syl.start..syl.end.min(n) {
            let pos = (i - syl.start) as f64 / span as f64;
            let pitch = syl.f0_start + (syl.f0_end - syl.f0_start) * pos;
            phase += pitch / sr;
            let pulse = if phase >= 1.0 {
                phase -= 1.0;
                1.0
            } else {
                0.0
            };
            let source = pulse + 0.02 * jitter.sample(&mut r);
            tilt1 = 0.9 * tilt1 + 0.1 * source;
            tilt2 = 0.9 * tilt2 + 0.1 * tilt1;
            let mut y = tilt2;
            for res in resonators.iter_mut() {
                y = res.process(y);
            }
            let radiated = y - 0.97 * prev;
            prev = y;
            let from_start = i - syl.start;
            let to_end = syl.end - i;
            let edge = from_start.min(to_end).min(ramp) as f64 / ramp as f64;
            let envelope = 0.5 - 0.5 * (PI * edge).cos();
            out[i] = radiated * envelope * syl.amplitude;
        }
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let gain = r.gen_range(0.4..0.8) / peak;
    let floor = Normal::new(0.0, 1e-4).expect("floor noise");
    let samples = out
        .iter()
        .map(|v| ((v * gain) + floor.sample(&mut r)).clamp(-1.0, 1.0) as f32)
        .collect();
    Waveform::new(samples, SAMPLE_RATE).expect("synthesized voice is valid")
}

/// Identities, images and recordings of a corpus, without touching disk.
pub struct SyntheticCorpus {
    pub config: SynthConfig,
    pub identities: Vec<SyntheticIdentity>,
}

impl SyntheticCorpus {
    pub fn new(config: SynthConfig) -> Result<Self> {
        config.validate()?;
        let identities = (0..config.identities).map(|l| SyntheticIdentity::new(config.seed, l)).collect();
        Ok(SyntheticCorpus { config, identities })
    }

    pub fn face(&self, label: usize, index: usize) -> FaceImage {
        synthesize_face(self.config.seed, &self.identities[label], index)
    }

    pub fn voice(&self, label: usize, index: usize) -> Waveform {
        synthesize_voice(self.config.seed, &self.identities[label], index)
    }

    pub fn voice_path(label: usize, index: usize) -> String {
        format!("voices/id{label:04}_v{index:03}.wav")
    }

    pub fn face_path(label: usize, index: usize) -> String {
        format!("faces/id{label:04}_f{index:03}.png")
    }

    pub fn manifest(&self) -> Result<DatasetManifest> {
        let mut entries = Vec::new();
        for id in &self.identities {
            let split = self.config.split_of(id.label);
            for v in 0..self.config.voices_per_identity {
                entries.push(ManifestEntry {
                    path: Self::voice_path(id.label, v),
                    identity: id.label,
                    gender: id.gender,
                    split,
                    modality: Modality::Voice,
                });
            }
            for f in 0..self.config.faces_per_identity {
                entries.push(ManifestEntry {
                    path: Self::face_path(id.label, f),
                    identity: id.label,
                    gender: id.gender,
                    split,
                    modality: Modality::Face,
                });
            }
        }
        DatasetManifest::new(entries)
    }

    /// Write WAVs, PNGs and `manifest.csv` under `root`.
    pub fn write(&self, root: &Path) -> Result<DatasetManifest> {
        for dir in ["voices", "faces"] {
            let d = root.join(dir);
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        let manifest = self.manifest()?;
        let jobs: Vec<&ManifestEntry> = manifest.entries().iter().collect();
        crate::parallel::try_for_each(&jobs, |e| {
            let index: usize = e.path[e.path.len() - 7..e.path.len() - 4].parse().expect("generated path");
            let path: PathBuf = root.join(&e.path);
            match e.modality {
                Modality::Voice => write_wav(&path, &self.voice(e.identity, index)),
                Modality::Face => write_face_png(&path, &self.face(e.identity, index)),
            }
        })?;
        manifest.write(&root.join(MANIFEST_FILE))?;
        Ok(manifest)
    }
}

pub const MANIFEST_FILE: &str = "manifest.csv";

/// Generate a corpus on disk and return its manifest.
pub fn synthesize_corpus(root: &Path, config: &SynthConfig) -> Result<DatasetManifest> {
    SyntheticCorpus::new(config.clone())?.write(root)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identities_are_deterministic_and_distinct() {
        let a = SyntheticIdentity::new(3, 5);
        assert_eq!(a, SyntheticIdentity::new(3, 5));
        assert_ne!(a.attribute_vector(), SyntheticIdentity::new(3, 6).attribute_vector());
        assert_ne!(a.attribute_vector(), SyntheticIdentity::new(4, 5).attribute_vector());
    }

    #[test]
    fn genders_are_balanced() {
        let g: usize = (0..32).map(|l| SyntheticIdentity::new(11, l).gender as usize).sum();
        assert_eq!(g, 16);
    }

    #[test]
    fn face_jitter_is_bounded() {
        let id = SyntheticIdentity::new(1, 2);
        let nominal = id.face_params().as_vector();
        let radius = [1.5, 1.5, 0.8, 0.8, 0.6, 0.6, 0.012, 0.05];
        let mut r = rng::stream(9, &[]);
        for _ in 0..200 {
            let j = id.face_params().jittered(&mut r).as_vector();
            for k in 0..8 {
                assert!((j[k] - nominal[k]).abs() <= radius[k] + 1e-12);
            }
        }
    }

    #[test]
    fn faces_are_valid_and_deterministic() {
        let id = SyntheticIdentity::new(2, 0);
        let f = synthesize_face(2, &id, 3);
        assert_eq!(f.size(), FACE_SIZE);
        assert!(f.values().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(f, synthesize_face(2, &id, 3));
        assert_ne!(f, synthesize_face(2, &id, 4));
    }

    #[test]
    fn voices_have_the_documented_duration() {
        let id = SyntheticIdentity::new(2, 1);
        for i in 0..5 {
            let w = synthesize_voice(2, &id, i);
            assert!((3.0..10.0).contains(&w.duration_seconds()));
            assert!(w.samples().iter().any(|s| s.abs() > 0.3));
        }
        assert_eq!(synthesize_voice(2, &id, 0), synthesize_voice(2, &id, 0));
    }

    #[test]
    fn splits_follow_label_order() {
        let c = SynthConfig {
            identities: 10,
            test_identities: 3,
            validation_identities: 2,
            ..SynthConfig::default()
        };
        let splits: Vec<Split> = (0..10).map(|l| c.split_of(l)).collect();
        assert_eq!(&splits[..5], &[Split::Train; 5]);
        assert_eq!(&splits[5..7], &[Split::Validation; 2]);
        assert_eq!(&splits[7..], &[Split::Test; 3]);
        assert!(SynthConfig { identities: 1, ..SynthConfig::default() }.validate().is_err());
    }

    #[test]
    fn manifest_counts() {
        let c = SyntheticCorpus::new(SynthConfig::default()).unwrap();
        let m = c.manifest().unwrap();
        let voices = m.entries().iter().filter(|e| e.modality == Modality::Voice).count();
        let faces = m.entries().iter().filter(|e| e.modality == Modality::Face).count();
        assert_eq!((voices, faces), (640, 640));
        assert_eq!(m.identity_count(), 32);
        assert_eq!(m.identities(Split::Test).len(), 8);
    }
}
