use std::fs;
use std::path::{Path, PathBuf};

use super::manifest::{ClassMap, DatasetManifest, ManifestEntry, Modality, Split};
use super::synth::SyntheticCorpus;
use crate::audio::{prepare_voice, read_mel_cache, read_wav, write_mel_cache, MelSpectrogram, VadConfig};
use crate::error::{Error, Result};
use crate::face::{read_face_png, FaceImage};
use crate::parallel;

#[derive(Clone, Debug)]
pub struct LoadOptions {
    /// `None` bypasses voice activity detection.
    pub vad: Option<VadConfig>,
    /// Directory of `.mel` files mirroring the corpus layout.
    pub cache_dir: Option<PathBuf>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            vad: Some(VadConfig::default()),
            cache_dir: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct VoiceItem {
    pub identity: usize,
    pub gender: u8,
    pub path: String,
    pub mel: MelSpectrogram,
}

#[derive(Clone, Debug)]
pub struct FaceItem {
    pub identity: usize,
    pub gender: u8,
    pub path: String,
    pub image: FaceImage,
}

/// Decoded features of one split.
#[derive(Clone, Debug, Default)]
pub struct SplitData {
    pub voices: Vec<VoiceItem>,
    pub faces: Vec<FaceItem>,
}

pub fn cache_path(cache_dir: &Path, entry: &ManifestEntry) -> PathBuf {
    cache_dir.join(&entry.path).with_extension("mel")
}

fn load_voice(root: &Path, entry: &ManifestEntry, options: &LoadOptions) -> Result<MelSpectrogram> {
    if let Some(dir) = &options.cache_dir {
        let p = cache_path(dir, entry);
        if p.exists() {
            return read_mel_cache(&p);
        }
    }
    prepare_voice(&read_wav(&root.join(&entry.path))?, options.vad.as_ref())
}

/// Decode every voice and face of `split`.
pub fn load_split(root: &Path, manifest: &DatasetManifest, split: Split, options: &LoadOptions) -> Result<SplitData> {
    let voices: Vec<&ManifestEntry> = manifest.select(split, Modality::Voice).collect();
    let faces: Vec<&ManifestEntry> = manifest.select(split, Modality::Face).collect();
    let voices = parallel::try_map(&voices, |e| {
        Ok(VoiceItem {
            identity: e.identity,
            gender: e.gender,
            path: e.path.clone(),
            mel: load_voice(root, e, options)?,
        })
    })?;
    let faces = parallel::try_map(&faces, |e| {
        Ok(FaceItem {
            identity: e.identity,
            gender: e.gender,
            path: e.path.clone(),
            image: read_face_png(&root.join(&e.path))?,
        })
    })?;
    Ok(SplitData { voices, faces })
}

/// Compute and store the mel cache for every voice in the manifest.
/// Returns the number of files written.
pub fn prepare_cache(root: &Path, manifest: &DatasetManifest, cache_dir: &Path, vad: Option<&VadConfig>) -> Result<usize> {
    let voices: Vec<&ManifestEntry> = manifest.entries().iter().filter(|e| e.modality == Modality::Voice).collect();
    parallel::try_for_each(&voices, |e| {
        let out = cache_path(cache_dir, e);
        if let Some(parent) = out.parent() {
            fs::create_dir_all(parent).map_err(|err| Error::io(parent, err))?;
        }
        let mel = prepare_voice(&read_wav(&root.join(&e.path))?, vad)?;
        write_mel_cache(&out, &mel)
    })?;
    Ok(voices.len())
}

impl SplitData {
    /// Features straight from the generator, skipping the file round trip.
    pub fn from_synthetic(corpus: &SyntheticCorpus, split: Split, vad: Option<&VadConfig>) -> Result<Self> {
        let manifest = corpus.manifest()?;
        let voice_entries: Vec<(usize, usize, u8)> = ids_with_index(&manifest, split, Modality::Voice);
        let face_entries: Vec<(usize, usize, u8)> = ids_with_index(&manifest, split, Modality::Face);
        let voices = parallel::try_map(&voice_entries, |&(id, i, gender)| {
            Ok(VoiceItem {
                identity: id,
                gender,
                path: SyntheticCorpus::voice_path(id, i),
                mel: prepare_voice(&corpus.voice(id, i), vad)?,
            })
        })?;
        let faces = parallel::map(&face_entries, |&(id, i, gender)| FaceItem {
            identity: id,
            gender,
            path: SyntheticCorpus::face_path(id, i),
            image: corpus.face(id, i),
        });
        Ok(SplitData { voices, faces })
    }

    pub fn identities(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.voices.iter().map(|v| v.identity).chain(self.faces.iter().map(|f| f.identity)).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

fn ids_with_index(manifest: &DatasetManifest, split: Split, modality: Modality) -> Vec<(usize, usize, u8)> {
    let mut counter = std::collections::HashMap::new();
    manifest
        .select(split, modality)
        .map(|e| {
            let n = counter.entry(e.identity).or_insert(0usize);
            *n += 1;
            (e.identity, *n - 1, e.gender)
        })
        .collect()
}

/// Training inputs with classifier indices in place of identity labels.
#[derive(Clone, Debug)]
pub struct TrainingData {
    pub voices: Vec<MelSpectrogram>,
    pub voice_labels: Vec<usize>,
    pub faces: Vec<FaceImage>,
    pub face_labels: Vec<usize>,
    pub face_genders: Vec<u8>,
    pub classes: usize,
}

impl TrainingData {
    pub fn new(split: &SplitData, classes: &ClassMap) -> Result<Self> {
        let class = |id: usize| {
            classes
                .class_of(id)
                .ok_or_else(|| Error::Manifest(format!("identity {id} is not a training identity")))
        };
        let data = TrainingData {
            voices: split.voices.iter().map(|v| v.mel.clone()).collect(),
            voice_labels: split.voices.iter().map(|v| class(v.identity)).collect::<Result<_>>()?,
            faces: split.faces.iter().map(|f| f.image.clone()).collect(),
            face_labels: split.faces.iter().map(|f| class(f.identity)).collect::<Result<_>>()?,
            face_genders: split.faces.iter().map(|f| f.gender).collect(),
            classes: classes.len(),
        };
        if data.voices.is_empty() || data.faces.is_empty() {
            return Err(Error::Manifest("training split needs both voices and faces".into()));
        }
        Ok(data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::SynthConfig;

    fn tiny() -> SyntheticCorpus {
        SyntheticCorpus::new(SynthConfig {
            identities: 4,
            voices_per_identity: 2,
            faces_per_identity: 2,
            test_identities: 1,
            validation_identities: 0,
            seed: 3,
        })
        .unwrap()
    }

    #[test]
    fn disk_and_memory_agree_on_faces() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = tiny();
        let manifest = corpus.write(dir.path()).unwrap();
        let disk = load_split(dir.path(), &manifest, Split::Train, &LoadOptions::default()).unwrap();
        let mem = SplitData::from_synthetic(&corpus, Split::Train, Some(&VadConfig::default())).unwrap();
        assert_eq!(disk.faces.len(), 6);
        for (a, b) in disk.faces.iter().zip(&mem.faces) {
            assert_eq!(a.path, b.path);
            assert_eq!(crate::face::denormalize_pixels(&a.image), crate::face::denormalize_pixels(&b.image));
        }
        for (a, b) in disk.voices.iter().zip(&mem.voices) {
            assert_eq!(a.mel.frames(), b.mel.frames());
        }
    }

    #[test]
    fn cache_is_used_when_present() {
        let dir = tempfile::tempdir().unwrap();
        let cache = tempfile::tempdir().unwrap();
        let corpus = tiny();
        let manifest = corpus.write(dir.path()).unwrap();
        assert_eq!(prepare_cache(dir.path(), &manifest, cache.path(), Some(&VadConfig::default())).unwrap(), 8);
        let opts = LoadOptions {
            cache_dir: Some(cache.path().to_path_buf()),
            ..LoadOptions::default()
        };
        let cached = load_split(dir.path(), &manifest, Split::Test, &opts).unwrap();
        let direct = load_split(dir.path(), &manifest, Split::Test, &LoadOptions::default()).unwrap();
        for (a, b) in cached.voices.iter().zip(&direct.voices) {
            assert_eq!(a.mel, b.mel);
        }
        assert!(cached.voices.iter().all(|v| v.mel.is_normalized()));
    }

    #[test]
    fn training_data_uses_class_indices() {
        let corpus = tiny();
        let manifest = corpus.manifest().unwrap();
        let split = SplitData::from_synthetic(&corpus, Split::Train, None).unwrap();
        let data = TrainingData::new(&split, &manifest.class_map()).unwrap();
        assert_eq!(data.classes, 3);
        assert!(data.voice_labels.iter().all(|&c| c < 3));
        let test = SplitData::from_synthetic(&corpus, Split::Test, None).unwrap();
        assert!(TrainingData::new(&test, &manifest.class_map()).is_err());
    }
}
