use std::sync::OnceLock;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{MelSpectrogram, Waveform, FFT_SIZE, FMAX_HZ, FMIN_HZ, HOP, LOG_FLOOR, MEL_BINS, SAMPLE_RATE, WINDOW};
use crate::error::{Error, Result};

const SLANEY_F_SP: f64 = 200.0 / 3.0;
const SLANEY_MIN_LOG_HZ: f64 = 1000.0;
const SLANEY_MIN_LOG_MEL: f64 = SLANEY_MIN_LOG_HZ / SLANEY_F_SP;

fn slaney_log_step() -> f64 {
    6.4f64.ln() / 27.0
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    if hz < SLANEY_MIN_LOG_HZ {
        hz / SLANEY_F_SP
    } else {
        SLANEY_MIN_LOG_MEL + (hz / SLANEY_MIN_LOG_HZ).ln() / slaney_log_step()
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel < SLANEY_MIN_LOG_MEL {
        mel * SLANEY_F_SP
    } else {
        SLANEY_MIN_LOG_HZ * ((mel - SLANEY_MIN_LOG_MEL) * slaney_log_step()).exp()
    }
}

/// `MEL_BINS x (FFT_SIZE/2 + 1)` unit-peak triangular filters, row-major.
pub fn mel_filterbank() -> &'static [f64] {
    static BANK: OnceLock<Vec<f64>> = OnceLock::new();
    BANK.get_or_init(|| {
        let bins = FFT_SIZE / 2 + 1;
        let (lo, hi) = (hz_to_mel(FMIN_HZ), hz_to_mel(FMAX_HZ));
        let edges: Vec<f64> = (0..MEL_BINS + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (MEL_BINS + 1) as f64))
            .collect();
        let mut bank = vec![0.0; MEL_BINS * bins];
        for m in 0..MEL_BINS {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..bins {
                let f = k as f64 * SAMPLE_RATE as f64 / FFT_SIZE as f64;
                let rising = (f - left) / (center - left);
                let falling = (right - f) / (right - center);
                bank[m * bins + k] = rising.min(falling).max(0.0);
            }
        }
        bank
    })
}

fn hann() -> &'static [f64] {
    static WIN: OnceLock<Vec<f64>> = OnceLock::new();
    WIN.get_or_init(|| {
        (0..WINDOW)
            .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / WINDOW as f64).cos())
            .collect()
    })
}

/// Natural-log mel energies in double precision, bin-major `MEL_BINS x T`.
pub fn log_mel_energies(waveform: &Waveform) -> Result<(usize, Vec<f64>)> {
    if waveform.sample_rate() != SAMPLE_RATE {
        return Err(Error::InvalidAudio(format!(
            "expected {SAMPLE_RATE} Hz audio, got {} Hz",
            waveform.sample_rate()
        )));
    }
    let x = waveform.samples();
    if x.len() < WINDOW {
        return Err(Error::AudioTooShort {
            samples: x.len(),
            required: WINDOW,
        });
    }
    let frames = 1 + (x.len() - WINDOW) / HOP;
    let bins = FFT_SIZE / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(FFT_SIZE);
    let bank = mel_filterbank();
    let window = hann();
    let mut out = vec![0.0; MEL_BINS * frames];
    let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
    let mut power = vec![0.0; bins];
    for t in 0..frames {
        let frame = &x[t * HOP..t * HOP + WINDOW];
        for (i, c) in buf.iter_mut().enumerate() {
            let v = if i < WINDOW { frame[i] as f64 * window[i] } else { 0.0 };
            *c = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        for m in 0..MEL_BINS {
            let row = &bank[m * bins..(m + 1) * bins];
            let e: f64 = row.iter().zip(&power).map(|(w, p)| w * p).sum();
            out[m * frames + t] = (e + LOG_FLOOR).ln();
        }
    }
    Ok((frames, out))
}

pub fn mel_spectrogram(waveform: &Waveform) -> Result<MelSpectrogram> {
    let (frames, energies) = log_mel_energies(waveform)?;
    MelSpectrogram::new(frames, energies.into_iter().map(|v| v as f32).collect(), false)
}

/// Standardize every bin over its own frames (population variance).
/// Rows with no spread become zero.
pub fn normalize_mel(spec: &MelSpectrogram) -> MelSpectrogram {
    let t = spec.frames();
    let mut values = Vec::with_capacity(MEL_BINS * t);
    for b in 0..MEL_BINS {
        let row = spec.row(b);
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / t as f64;
        let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / t as f64;
        if var <= 1e-12 * (1.0 + mean * mean) {
            values.extend(std::iter::repeat_n(0.0f32, t));
        } else {
            let inv = 1.0 / var.sqrt();
            values.extend(row.iter().map(|&v| ((v as f64 - mean) * inv) as f32));
        }
    }
    MelSpectrogram::new(t, values, true).expect("normalized values are finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn noise(len: usize, seed: u64) -> Waveform {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.gen_range(-0.5f32..0.5)).collect(), SAMPLE_RATE).unwrap()
    }

    #[test]
    fn three_seconds_has_298_frames() {
        let w = Waveform::new(vec![0.0; 48_000], SAMPLE_RATE).unwrap();
        assert_eq!(mel_spectrogram(&w).unwrap().frames(), 298);
    }

    #[test]
    fn one_window_is_one_frame() {
        assert_eq!(mel_spectrogram(&noise(400, 1)).unwrap().frames(), 1);
        let err = mel_spectrogram(&noise(399, 1)).unwrap_err();
        assert!(err.to_string().contains("400"), "{err}");
    }

    #[test]
    fn silence_hits_the_floor() {
        let w = Waveform::new(vec![0.0; 4000], SAMPLE_RATE).unwrap();
        let m = mel_spectrogram(&w).unwrap();
        let floor = (LOG_FLOOR).ln() as f32;
        assert!(m.values().iter().all(|&v| v == floor));
    }

    #[test]
    fn filterbank_rows_are_nonnegative_and_nonempty() {
        let bank = mel_filterbank();
        let bins = FFT_SIZE / 2 + 1;
        for m in 0..MEL_BINS {
            let row = &bank[m * bins..(m + 1) * bins];
            assert!(row.iter().all(|&w| w >= 0.0));
            assert!(row.iter().sum::<f64>() > 0.0, "filter {m} covers no FFT bin");
        }
    }

    #[test]
    fn filters_partition_the_interior() {
        let bank = mel_filterbank();
        let bins = FFT_SIZE / 2 + 1;
        let first_center = mel_to_hz(hz_to_mel(FMAX_HZ) / (MEL_BINS + 1) as f64);
        let last_center = mel_to_hz(hz_to_mel(FMAX_HZ) * MEL_BINS as f64 / (MEL_BINS + 1) as f64);
        for k in 0..bins {
            let f = k as f64 * SAMPLE_RATE as f64 / FFT_SIZE as f64;
            if f < first_center || f > last_center {
                continue;
            }
            let total: f64 = (0..MEL_BINS).map(|m| bank[m * bins + k]).sum();
            assert!((total - 1.0).abs() < 0.05, "bin {k} ({f} Hz) sums to {total}");
        }
    }

    #[test]
    fn mel_scale_round_trips() {
        for hz in [0.0, 300.0, 999.0, 1000.0, 4321.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
    }

    #[test]
    fn normalize_hand_example() {
        let mut values = vec![0.0f32; MEL_BINS * 3];
        values[..3].copy_from_slice(&[1.0, 2.0, 3.0]);
        values[3..6].copy_from_slice(&[5.0, 5.0, 5.0]);
        let m = normalize_mel(&MelSpectrogram::new(3, values, false).unwrap());
        let r = m.row(0);
        assert!((r[0] + 1.224_744_9).abs() < 1e-6 && r[1].abs() < 1e-7 && (r[2] - 1.224_744_9).abs() < 1e-6);
        assert_eq!(m.row(1), &[0.0, 0.0, 0.0]);
        assert!(m.is_normalized());
    }

    #[test]
    fn single_frame_normalizes_to_zero() {
        let m = normalize_mel(&mel_spectrogram(&noise(400, 3)).unwrap());
        assert!(m.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalized_rows_are_standard() {
        let m = normalize_mel(&mel_spectrogram(&noise(16_000, 4)).unwrap());
        for b in 0..MEL_BINS {
            let r = m.row(b);
            let mean = r.iter().map(|&v| v as f64).sum::<f64>() / r.len() as f64;
            let var = r.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / r.len() as f64;
            assert!(mean.abs() < 1e-5 && (var - 1.0).abs() < 1e-3, "bin {b}: {mean} {var}");
        }
    }

    #[test]
    fn deterministic_features() {
        let w = noise(8000, 5);
        assert_eq!(mel_spectrogram(&w).unwrap(), mel_spectrogram(&w).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn framing_formula(len in 400usize..20_000) {
            let w = Waveform::new(vec![0.0; len], SAMPLE_RATE).unwrap();
            prop_assert_eq!(mel_spectrogram(&w).unwrap().frames(), 1 + (len - 400) / 160);
        }

        #[test]
        fn gain_shifts_log_mel(seed in 0u64..1000, c in 0.05f32..1.0) {
            let w = noise(2400, seed);
            let (_, base) = log_mel_energies(&w).unwrap();
            let (_, scaled) = log_mel_energies(&w.scaled(c)).unwrap();
            let shift = 2.0 * (c as f64).ln();
            for (a, b) in base.iter().zip(&scaled) {
                prop_assert!((b - a - shift).abs() < 1e-6, "{} vs {}", b - a, shift);
            }
        }

        #[test]
        fn normalized_features_ignore_gain(seed in 0u64..1000, c in 0.05f32..1.0) {
            let w = noise(4000, seed);
            let a = normalize_mel(&mel_spectrogram(&w).unwrap());
            let b = normalize_mel(&mel_spectrogram(&w.scaled(c)).unwrap());
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() < 1e-4);
            }
        }

        #[test]
        fn normalization_is_idempotent(seed in 0u64..1000) {
            let once = normalize_mel(&mel_spectrogram(&noise(3000, seed)).unwrap());
            let twice = normalize_mel(&once);
            for (x, y) in once.values().iter().zip(twice.values()) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }
}
