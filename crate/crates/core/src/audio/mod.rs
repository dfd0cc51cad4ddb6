//! Waveforms, voice activity detection, log-mel features, crops and the
//! on-disk feature cache.

mod cache;
mod crop;
mod mel;
mod vad;
mod wav;

pub use cache::{decode_mel, encode_mel, read_mel_cache, write_mel_cache, MEL_CACHE_MAGIC, MEL_CACHE_VERSION};
pub use crop::{crop_frames, random_crop, seconds_to_frames, Crop, CROP_MAX_SECONDS, CROP_MIN_SECONDS};
pub use mel::{log_mel_energies, mel_filterbank, mel_spectrogram, normalize_mel, hz_to_mel, mel_to_hz};
pub use vad::{apply_vad, detect_voiced, VadConfig, VadSegment};
pub use wav::{read_wav, resample_linear, write_wav};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
pub const WINDOW: usize = 400;
pub const HOP: usize = 160;
pub const FFT_SIZE: usize = 512;
pub const MEL_BINS: usize = 64;
pub const FMIN_HZ: f64 = 0.0;
pub const FMAX_HZ: f64 = 8_000.0;
pub const LOG_FLOOR: f64 = 1e-10;
/// Frames per second at the fixed hop.
pub const FRAMES_PER_SECOND: f64 = SAMPLE_RATE as f64 / HOP as f64;

/// Mono audio in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidAudio("waveform has no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidAudio("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::InvalidAudio(format!(
                "sample {i} = {} outside [-1, 1]",
                samples[i]
            )));
        }
        Ok(Waveform { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Resample to the corpus rate if needed.
    pub fn to_corpus_rate(self) -> Result<Self> {
        if self.sample_rate == SAMPLE_RATE {
            return Ok(self);
        }
        let samples = resample_linear(&self.samples, self.sample_rate, SAMPLE_RATE);
        Waveform::new(samples, SAMPLE_RATE)
    }

    /// Multiply every sample by `gain`, clamping to the valid range.
    pub fn scaled(&self, gain: f32) -> Self {
        Waveform {
            samples: self.samples.iter().map(|s| (s * gain).clamp(-1.0, 1.0)).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// `MEL_BINS x frames` log-mel matrix stored bin-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    frames: usize,
    values: Vec<f32>,
    normalized: bool,
}

impl MelSpectrogram {
    pub fn new(frames: usize, values: Vec<f32>, normalized: bool) -> Result<Self> {
        if frames == 0 {
            return Err(Error::InvalidAudio("mel spectrogram needs at least one frame".into()));
        }
        if values.len() != MEL_BINS * frames {
            return Err(Error::InvalidAudio(format!(
                "mel values: expected {} = {MEL_BINS}x{frames}, got {}",
                MEL_BINS * frames,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidAudio("mel spectrogram contains non-finite values".into()));
        }
        Ok(MelSpectrogram { frames, values, normalized })
    }

    pub fn bins(&self) -> usize {
        MEL_BINS
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, bin: usize) -> &[f32] {
        &self.values[bin * self.frames..(bin + 1) * self.frames]
    }

    pub fn get(&self, bin: usize, frame: usize) -> f32 {
        self.values[bin * self.frames + frame]
    }

    /// Per-bin average over time.
    pub fn bin_means(&self) -> Vec<f64> {
        (0..MEL_BINS)
            .map(|b| self.row(b).iter().map(|&v| v as f64).sum::<f64>() / self.frames as f64)
            .collect()
    }

    /// Contiguous frame range `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.frames {
            return Err(Error::InvalidAudio(format!(
                "frame slice {start}..{} outside 0..{}",
                start + len,
                self.frames
            )));
        }
        let mut values = Vec::with_capacity(MEL_BINS * len);
        for b in 0..MEL_BINS {
            values.extend_from_slice(&self.row(b)[start..start + len]);
        }
        Ok(MelSpectrogram {
            frames: len,
            values,
            normalized: self.normalized,
        })
    }
}

/// Full front end for one recording: optional VAD, log-mel, normalization.
pub fn prepare_voice(waveform: &Waveform, vad: Option<&VadConfig>) -> Result<MelSpectrogram> {
    let waveform = waveform.clone().to_corpus_rate()?;
    let filtered = match vad {
        Some(cfg) => {
            let segments = detect_voiced(&waveform, cfg)?;
            match apply_vad(&waveform, &segments, cfg) {
                Some(w) if w.len() >= WINDOW => w,
                _ => {
                    log::warn!("voice activity detection kept too little audio; using the whole recording");
                    waveform
                }
            }
        }
        None => waveform,
    };
    Ok(normalize_mel(&mel_spectrogram(&filtered)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn waveform_rejects_out_of_range() {
        assert!(Waveform::new(vec![0.0, 1.5], SAMPLE_RATE).is_err());
        assert!(Waveform::new(vec![], SAMPLE_RATE).is_err());
        assert!(Waveform::new(vec![f32::NAN], SAMPLE_RATE).is_err());
    }

    #[test]
    fn slice_keeps_rows() {
        let values: Vec<f32> = (0..MEL_BINS * 5).map(|i| i as f32).collect();
        let m = MelSpectrogram::new(5, values, false).unwrap();
        let s = m.slice(1, 3).unwrap();
        assert_eq!(s.row(2), &[11.0, 12.0, 13.0]);
        assert!(m.slice(3, 3).is_err());
    }
}
