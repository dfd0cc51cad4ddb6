//! Voice front end: synthesize a recording, run voice activity detection,
//! and compute the normalized 64-bin log-mel spectrogram and a training crop.

use voice2face::audio::{detect_voiced, prepare_voice, random_crop, VadConfig};
use voice2face::corpus::{synthesize_voice, SyntheticIdentity};
use voice2face::rng;

fn main() -> voice2face::Result<()> {
    let identity = SyntheticIdentity::new(7, 0);
    let wave = synthesize_voice(7, &identity, 0);
    println!("waveform: {:.2}s at {} Hz", wave.duration_seconds(), wave.sample_rate());

    let vad = VadConfig::default();
    let segments = detect_voiced(&wave, &vad)?;
    let voiced = segments.iter().filter(|s| s.is_voiced).count();
    println!("vad: {} runs, {voiced} voiced", segments.len());

    let mel = prepare_voice(&wave, Some(&vad))?;
    println!("log-mel: {} bins x {} frames, normalized={}", mel.bins(), mel.frames(), mel.is_normalized());
    let means = mel.bin_means();
    let spread = means.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("largest per-bin mean after normalization: {spread:.2e}");

    let mut r = rng::stream(7, &[]);
    let crop = random_crop(&mel, 3.0, 8.0, &mut r)?;
    println!("random crop: {} frames", crop.spec.frames());
    Ok(())
}
