use rand::Rng;
use rand_distr::StandardNormal;

use crate::audio::{prepare_voice, MelSpectrogram, Waveform, SAMPLE_RATE};
use crate::corpus::{synthesize_voice, SyntheticIdentity};
use crate::error::Result;
use crate::rng::{self, tags};

pub const NOISE_DURATIONS: [f64; 5] = [1.0, 2.0, 3.0, 5.0, 10.0];
const BABBLE_TALKERS: usize = 6;
const PEAK: f32 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    White,
    Pink,
    Brown,
    Babble,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [NoiseKind::White, NoiseKind::Pink, NoiseKind::Brown, NoiseKind::Babble];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
            NoiseKind::Brown => "brown",
            NoiseKind::Babble => "babble",
        }
    }

    fn tag(self) -> u64 {
        self as u64
    }
}

fn white<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Paul Kellet's refined 1/f filter.
fn pink<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    white(rng, n)
        .into_iter()
        .map(|w| {
            b[0] = 0.99886 * b[0] + w * 0.0555179;
            b[1] = 0.99332 * b[1] + w * 0.0750759;
            b[2] = 0.96900 * b[2] + w * 0.1538520;
            b[3] = 0.86650 * b[3] + w * 0.3104856;
            b[4] = 0.55000 * b[4] + w * 0.5329522;
            b[5] = -0.7616 * b[5] - w * 0.0168980;
            let y = b[..6].iter().sum::<f64>() + b[6] + w * 0.5362;
            b[6] = w * 0.115926;
            y
        })
        .collect()
}

fn brown<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut acc = 0.0;
    white(rng, n)
        .into_iter()
        .map(|w| {
            acc = 0.998 * acc + 0.02 * w;
            acc
        })
        .collect()
}

fn babble(seed: u64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for t in 0..BABBLE_TALKERS {
        let id = SyntheticIdentity::new(rng::derive_seed(seed, &[t as u64]), t);
        let mut k = 0;
        let mut filled = 0;
        while filled < n {
            let v = synthesize_voice(seed, &id, k);
            for (o, &s) in out[filled..].iter_mut().zip(v.samples()) {
                *o += s as f64;
            }
            filled += v.len();
            k += 1;
        }
    }
    out
}

/// A noise recording of `seconds` at the corpus rate, peak-normalized.
pub fn noise_waveform(kind: NoiseKind, seconds: f64, seed: u64) -> Result<Waveform> {
    let n = (seconds * SAMPLE_RATE as f64).round().max(1.0) as usize;
    let mut rng = rng::stream(seed, &[tags::NOISE, kind.tag()]);
    let raw = match kind {
        NoiseKind::White => white(&mut rng, n),
        NoiseKind::Pink => pink(&mut rng, n),
        NoiseKind::Brown => brown(&mut rng, n),
        NoiseKind::Babble => babble(rng.gen(), n),
    };
    let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    Waveform::new(raw.iter().map(|v| (v / peak) as f32 * PEAK).collect(), SAMPLE_RATE)
}

/// Noise through the speech front end with voice activity detection
/// bypassed.
pub fn noise_mel(kind: NoiseKind, seconds: f64, seed: u64) -> Result<MelSpectrogram> {
    prepare_voice(&noise_waveform(kind, seconds, seed)?, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn band_power(x: &[f32], lo: f64, hi: f64) -> f64 {
        let n = 1 << 14;
        let mut buf: Vec<Complex<f64>> = x[..n].iter().map(|&v| Complex::new(v as f64, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let hz = |k: usize| k as f64 * SAMPLE_RATE as f64 / n as f64;
        (1..n / 2).filter(|&k| hz(k) >= lo && hz(k) < hi).map(|k| buf[k].norm_sqr()).sum()
    }

    #[test]
    fn durations_and_peaks() {
        for kind in NoiseKind::ALL {
            for secs in NOISE_DURATIONS {
                let w = noise_waveform(kind, secs, 3).unwrap();
                assert_eq!(w.len(), (secs * 16_000.0) as usize);
                let peak = w.samples().iter().fold(0.0f32, |m, v| m.max(v.abs()));
                assert!((peak - PEAK).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn spectral_tilts_are_ordered() {
        // Low-band to high-band power ratio: flat for white, steeper for pink, steepest for brown.
        let ratio = |k| {
            let w = noise_waveform(k, 2.0, 5).unwrap();
            band_power(w.samples(), 100.0, 400.0) / band_power(w.samples(), 3200.0, 6400.0) * (3200.0 / 300.0)
        };
        let (wh, pk, br) = (ratio(NoiseKind::White), ratio(NoiseKind::Pink), ratio(NoiseKind::Brown));
        assert!(wh > 0.5 && wh < 2.0, "{wh}");
        assert!(pk > 3.0 * wh, "{pk}");
        assert!(br > 10.0 * pk, "{br}");
    }

    #[test]
    fn noise_mels_skip_vad_and_are_normalized() {
        let m = noise_mel(NoiseKind::White, 1.0, 1).unwrap();
        assert_eq!(m.frames(), 98);
        assert!(m.is_normalized());
        assert_eq!(noise_mel(NoiseKind::Babble, 1.0, 1).unwrap(), noise_mel(NoiseKind::Babble, 1.0, 1).unwrap());
    }
}
