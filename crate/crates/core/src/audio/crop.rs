use rand::Rng;

use super::{MelSpectrogram, FRAMES_PER_SECOND};
use crate::error::Result;

pub const CROP_MIN_SECONDS: f64 = 3.0;
pub const CROP_MAX_SECONDS: f64 = 8.0;

/// Result of a crop; `short_input` marks inputs below the minimum length,
/// which are returned whole.
#[derive(Clone, Debug, PartialEq)]
pub struct Crop {
    pub spec: MelSpectrogram,
    pub short_input: bool,
}

pub fn seconds_to_frames(seconds: f64) -> usize {
    (seconds * FRAMES_PER_SECOND).round() as usize
}

/// Uniform-length contiguous crop between `min_s` and `max_s` seconds.
pub fn random_crop<R: Rng + ?Sized>(spec: &MelSpectrogram, min_s: f64, max_s: f64, rng: &mut R) -> Result<Crop> {
    let lo = seconds_to_frames(min_s).max(1);
    let hi = seconds_to_frames(max_s).max(lo);
    if spec.frames() <= lo {
        return Ok(Crop {
            spec: spec.clone(),
            short_input: spec.frames() < lo,
        });
    }
    let len = rng.gen_range(lo..=hi.min(spec.frames()));
    Ok(Crop {
        spec: crop_frames(spec, len, rng)?,
        short_input: false,
    })
}

/// Crop of exactly `len` frames (or the whole input if shorter) at a
/// uniformly drawn offset.
pub fn crop_frames<R: Rng + ?Sized>(spec: &MelSpectrogram, len: usize, rng: &mut R) -> Result<MelSpectrogram> {
    if len >= spec.frames() {
        return Ok(spec.clone());
    }
    let start = rng.gen_range(0..=spec.frames() - len);
    spec.slice(start, len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::MEL_BINS;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(frames: usize) -> MelSpectrogram {
        MelSpectrogram::new(frames, (0..MEL_BINS * frames).map(|i| i as f32).collect(), true).unwrap()
    }

    #[test]
    fn fixed_seed_repeats() {
        let m = ramp(1000);
        let a = random_crop(&m, 3.0, 8.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = random_crop(&m, 3.0, 8.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn minimum_length_input_is_whole() {
        let m = ramp(300);
        let c = random_crop(&m, 3.0, 8.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(c.spec, m);
        assert!(!c.short_input);
        let short = random_crop(&ramp(120), 3.0, 8.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(short.short_input);
        assert_eq!(short.spec.frames(), 120);
    }

    #[test]
    fn crop_lengths_stay_in_bounds() {
        let m = ramp(900);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut seen_lo, mut seen_hi) = (usize::MAX, 0);
        for _ in 0..10_000 {
            let c = random_crop(&m, 3.0, 8.0, &mut rng).unwrap();
            let n = c.spec.frames();
            assert!((300..=800).contains(&n));
            seen_lo = seen_lo.min(n);
            seen_hi = seen_hi.max(n);
        }
        assert!(seen_lo < 320 && seen_hi > 780);
    }

    #[test]
    fn crop_is_contiguous() {
        let m = ramp(1000);
        let c = random_crop(&m, 3.0, 8.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap().spec;
        let row = c.row(0);
        assert!(row.windows(2).all(|w| w[1] == w[0] + 1.0));
    }
}
