use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::noise::{noise_mel, NoiseKind, NOISE_DURATIONS};
use crate::audio::{seconds_to_frames, MelSpectrogram};
use crate::corpus::SplitData;
use crate::error::{Error, Result};
use crate::face::{compose_grid, FaceImage};
use crate::models::ModelBundle;

pub const SEGMENTS_PER_SPEAKER: usize = 7;
pub const MAX_GRID_SPEAKERS: usize = 8;

/// One row per noise kind, one column per duration.
pub fn noise_rows(bundle: &ModelBundle<f32>, seed: u64) -> Result<Vec<Vec<FaceImage>>> {
    NoiseKind::ALL
        .iter()
        .map(|&kind| {
            NOISE_DURATIONS
                .iter()
                .map(|&secs| bundle.voice_to_face(&noise_mel(kind, secs, seed)?))
                .collect()
        })
        .collect()
}

/// Seven segments of one speaker: recordings in turn, moving the window
/// 3 s further each time a recording is reused.
pub fn speaker_segments(recordings: &[&MelSpectrogram]) -> Result<Vec<MelSpectrogram>> {
    let step = seconds_to_frames(3.0);
    (0..SEGMENTS_PER_SPEAKER)
        .map(|k| {
            let rec = recordings[k % recordings.len()];
            let pass = k / recordings.len();
            if pass == 0 {
                return Ok(rec.clone());
            }
            let len = step.min(rec.frames());
            let start = (pass * step) % (rec.frames() - len + 1);
            rec.slice(start, len)
        })
        .collect()
}

/// Voices and faces of the first speakers in a split, grouped by identity.
fn by_speaker(split: &SplitData) -> BTreeMap<usize, (Vec<&MelSpectrogram>, Vec<&FaceImage>)> {
    let mut map: BTreeMap<usize, (Vec<&MelSpectrogram>, Vec<&FaceImage>)> = BTreeMap::new();
    for v in &split.voices {
        map.entry(v.identity).or_default().0.push(&v.mel);
    }
    for f in &split.faces {
        map.entry(f.identity).or_default().1.push(&f.image);
    }
    map.retain(|_, (v, f)| !v.is_empty() && !f.is_empty());
    map.into_iter().take(MAX_GRID_SPEAKERS).collect()
}

/// Noise grid, per-speaker segment grid, and generated-versus-reference
/// pairs, written as PNG files into `dir`.
pub fn export_grids(bundle: &ModelBundle<f32>, split: &SplitData, dir: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let speakers = by_speaker(split);
    let mut written = Vec::new();
    let mut save = |name: &str, rows: &[Vec<FaceImage>]| -> Result<()> {
        let path = dir.join(name);
        compose_grid(rows)?.save_with_format(&path, image::ImageFormat::Png)?;
        written.push(path);
        Ok(())
    };
    save("noise_grid.png", &noise_rows(bundle, seed)?)?;
    if !speakers.is_empty() {
        let rows = speakers
            .values()
            .map(|(voices, _)| speaker_segments(voices)?.iter().map(|m| bundle.voice_to_face(m)).collect())
            .collect::<Result<Vec<Vec<_>>>>()?;
        save("speaker_grid.png", &rows)?;
        let pairs = speakers
            .values()
            .map(|(voices, faces)| Ok(vec![bundle.voice_to_face(voices[0])?, faces[0].clone()]))
            .collect::<Result<Vec<_>>>()?;
        save("side_by_side.png", &pairs)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Split, SynthConfig, SyntheticCorpus};
    use crate::models::Architecture;

    #[test]
    fn layouts_and_determinism() {
        let corpus = SyntheticCorpus::new(SynthConfig {
            identities: 4,
            voices_per_identity: 2,
            faces_per_identity: 1,
            test_identities: 2,
            validation_identities: 0,
            seed: 4,
        })
        .unwrap();
        let split = SplitData::from_synthetic(&corpus, Split::Test, None).unwrap();
        let b = ModelBundle::<f32>::new(Architecture::full(2).narrowed(64), 0).unwrap();
        let rows = noise_rows(&b, 0).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.len() == 5));

        let segs = speaker_segments(&[&split.voices[0].mel, &split.voices[1].mel]).unwrap();
        assert_eq!(segs.len(), SEGMENTS_PER_SPEAKER);
        assert_ne!(segs[2], segs[0]);

        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let a = export_grids(&b, &split, d1.path(), 1).unwrap();
        let c = export_grids(&b, &split, d2.path(), 1).unwrap();
        assert_eq!(a.len(), 3);
        for (x, y) in a.iter().zip(&c) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
        let grid = image::open(&a[1]).unwrap();
        assert_eq!(grid.width(), 7 * 66 + 2);
        assert_eq!(grid.height(), 2 * 66 + 2);
    }
}
