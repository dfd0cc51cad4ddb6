use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::Waveform;
use crate::error::{Error, Result};

/// Decode PCM integer or 32-bit float WAV, downmixing to mono and
/// resampling to the corpus rate.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f32> = match spec.sample_format {
        SampleFormat::Float => reader.samples::<f32>().collect::<std::result::Result<_, _>>()?,
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    if interleaved.is_empty() {
        return Err(Error::InvalidAudio(format!("{} contains no samples", path.display())));
    }
    let mono: Vec<f32> = interleaved
        .chunks(channels)
        .map(|c| (c.iter().sum::<f32>() / c.len() as f32).clamp(-1.0, 1.0))
        .collect();
    Waveform::new(mono, spec.sample_rate)?.to_corpus_rate()
}

/// Write 16-bit PCM mono.
pub fn write_wav(path: &Path, waveform: &Waveform) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: waveform.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec)?;
    for &s in waveform.samples() {
        writer.write_sample((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16)?;
    }
    writer.finalize()?;
    Ok(())
}

/// Linear-interpolation resampler.
pub fn resample_linear(samples: &[f32], from: u32, to: u32) -> Vec<f32> {
    if from == to || samples.is_empty() {
        return samples.to_vec();
    }
    let out_len = ((samples.len() as u64 * to as u64) / from as u64).max(1) as usize;
    let ratio = from as f64 / to as f64;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let j = pos.floor() as usize;
            let frac = (pos - j as f64) as f32;
            let a = samples[j.min(samples.len() - 1)];
            let b = samples[(j + 1).min(samples.len() - 1)];
            a + (b - a) * frac
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::SAMPLE_RATE;

    #[test]
    fn wav_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let x: Vec<f32> = (0..1600).map(|i| (i as f32 * 0.01).sin() * 0.8).collect();
        let w = Waveform::new(x.clone(), SAMPLE_RATE).unwrap();
        write_wav(&path, &w).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.len(), x.len());
        for (a, b) in x.iter().zip(back.samples()) {
            assert!((a - b).abs() < 1.0 / 32767.0, "{a} {b}");
        }
    }

    #[test]
    fn float_stereo_is_downmixed_and_resampled() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        for _ in 0..800 {
            w.write_sample(0.5f32).unwrap();
            w.write_sample(-0.1f32).unwrap();
        }
        w.finalize().unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate(), SAMPLE_RATE);
        assert_eq!(back.len(), 1600);
        assert!(back.samples().iter().all(|&s| (s - 0.2).abs() < 1e-6));
    }

    #[test]
    fn resample_preserves_constant() {
        let y = resample_linear(&[0.25; 441], 44_100, 16_000);
        assert_eq!(y.len(), 160);
        assert!(y.iter().all(|&v| v == 0.25));
    }
}
