//! Energy-based voice activity detection.
//!
//! A frame is voiced when its log energy exceeds the noise floor by
//! `threshold_db`. The noise floor is the 10th-percentile frame energy,
//! capped at `max_noise_floor_db` so that recordings without any pause
//! are not judged against their own speech level.

use super::Waveform;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct VadConfig {
    pub frame_ms: f64,
    pub threshold_db: f64,
    pub floor_percentile: f64,
    pub max_noise_floor_db: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        VadConfig {
            frame_ms: 30.0,
            threshold_db: 12.0,
            floor_percentile: 0.10,
            max_noise_floor_db: -60.0,
        }
    }
}

impl VadConfig {
    pub fn with_threshold(threshold_db: f64) -> Self {
        VadConfig {
            threshold_db,
            ..Self::default()
        }
    }

    pub fn frame_len(&self, sample_rate: u32) -> usize {
        ((self.frame_ms * sample_rate as f64 / 1000.0).round() as usize).max(1)
    }
}

/// Run of frames `[start_frame, end_frame)` sharing one decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VadSegment {
    pub start_frame: usize,
    pub end_frame: usize,
    pub is_voiced: bool,
}

fn frame_energies_db(samples: &[f32], frame_len: usize) -> Vec<f64> {
    samples
        .chunks(frame_len)
        .map(|c| {
            let e = c.iter().map(|&s| (s as f64).powi(2)).sum::<f64>() / c.len() as f64;
            10.0 * (e + 1e-20).log10()
        })
        .collect()
}

fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Partition the waveform into alternating voiced and unvoiced runs that
/// cover every frame. Silence yields a single unvoiced run.
pub fn detect_voiced(waveform: &Waveform, config: &VadConfig) -> Result<Vec<VadSegment>> {
    if config.frame_ms <= 0.0 || !(0.0..=1.0).contains(&config.floor_percentile) {
        return Err(Error::Config(format!("invalid VAD settings {config:?}")));
    }
    let frame_len = config.frame_len(waveform.sample_rate());
    let energies = frame_energies_db(waveform.samples(), frame_len);
    let floor = percentile(&energies, config.floor_percentile).min(config.max_noise_floor_db);
    let threshold = floor + config.threshold_db;
    let mut segments: Vec<VadSegment> = Vec::new();
    for (i, &e) in energies.iter().enumerate() {
        let voiced = e > threshold;
        match segments.last_mut() {
            Some(s) if s.is_voiced == voiced => s.end_frame = i + 1,
            _ => segments.push(VadSegment {
                start_frame: i,
                end_frame: i + 1,
                is_voiced: voiced,
            }),
        }
    }
    Ok(segments)
}

/// Concatenate the samples of voiced frames. `None` when nothing is voiced.
pub fn apply_vad(waveform: &Waveform, segments: &[VadSegment], config: &VadConfig) -> Option<Waveform> {
    let frame_len = config.frame_len(waveform.sample_rate());
    let x = waveform.samples();
    let kept: Vec<f32> = segments
        .iter()
        .filter(|s| s.is_voiced)
        .flat_map(|s| {
            let a = (s.start_frame * frame_len).min(x.len());
            let b = (s.end_frame * frame_len).min(x.len());
            x[a..b].iter().copied()
        })
        .collect();
    if kept.is_empty() {
        return None;
    }
    Waveform::new(kept, waveform.sample_rate()).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::SAMPLE_RATE;

    fn voiced(segments: &[VadSegment]) -> Vec<VadSegment> {
        segments.iter().copied().filter(|s| s.is_voiced).collect()
    }

    #[test]
    fn silence_has_no_voiced_frames() {
        let w = Waveform::new(vec![0.0; 16_000], SAMPLE_RATE).unwrap();
        let segs = detect_voiced(&w, &VadConfig::default()).unwrap();
        assert!(voiced(&segs).is_empty());
        assert!(apply_vad(&w, &segs, &VadConfig::default()).is_none());
    }

    #[test]
    fn tone_between_silences() {
        let sr = SAMPLE_RATE as usize;
        let mut x = vec![0.0f32; 3 * sr];
        for (i, s) in x[sr..2 * sr].iter_mut().enumerate() {
            *s = (2.0 * std::f32::consts::PI * 440.0 * i as f32 / sr as f32).sin();
        }
        let w = Waveform::new(x, SAMPLE_RATE).unwrap();
        let cfg = VadConfig::with_threshold(15.0);
        let v = voiced(&detect_voiced(&w, &cfg).unwrap());
        assert_eq!(v.len(), 1);
        let frame = cfg.frame_len(SAMPLE_RATE);
        let (start, end) = (v[0].start_frame * frame, v[0].end_frame * frame);
        assert!(start <= sr && sr - start <= frame, "start {start}");
        assert!(end >= 2 * sr && end - 2 * sr <= frame, "end {end}");
    }

    #[test]
    fn continuous_signal_is_one_voiced_run() {
        let x: Vec<f32> = (0..32_000)
            .map(|i| {
                let t = i as f32 / SAMPLE_RATE as f32;
                0.3 * (2.0 * std::f32::consts::PI * 150.0 * t).sin() * (1.0 + 0.5 * (6.0 * t).sin())
            })
            .collect();
        let w = Waveform::new(x, SAMPLE_RATE).unwrap();
        let segs = detect_voiced(&w, &VadConfig::default()).unwrap();
        assert_eq!(segs.len(), 1);
        assert!(segs[0].is_voiced);
        assert_eq!(apply_vad(&w, &segs, &VadConfig::default()).unwrap(), w);
    }

    #[test]
    fn segments_are_sorted_and_cover_all_frames() {
        let x: Vec<f32> = (0..20_000).map(|i| if (i / 3000) % 2 == 0 { 0.0 } else { 0.5 }).collect();
        let w = Waveform::new(x, SAMPLE_RATE).unwrap();
        let segs = detect_voiced(&w, &VadConfig::default()).unwrap();
        assert_eq!(segs[0].start_frame, 0);
        for pair in segs.windows(2) {
            assert_eq!(pair[0].end_frame, pair[1].start_frame);
            assert_ne!(pair[0].is_voiced, pair[1].is_voiced);
        }
        assert_eq!(segs.last().unwrap().end_frame, 20_000usize.div_ceil(480));
    }
}
