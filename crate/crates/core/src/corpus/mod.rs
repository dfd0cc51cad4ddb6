//! Dataset manifests, the synthetic paired corpus, and in-memory loading.

mod dataset;
mod manifest;
mod synth;

pub use dataset::{cache_path, load_split, prepare_cache, FaceItem, LoadOptions, SplitData, TrainingData, VoiceItem};
pub use manifest::{load_manifest, ClassMap, DatasetManifest, ManifestEntry, Modality, Split};
pub use synth::{
    render_face, synthesize_corpus, synthesize_face, synthesize_voice, FaceJitter, FaceParams, SynthConfig,
    SyntheticCorpus, SyntheticIdentity, VoiceParams, FACE_JITTER, MANIFEST_FILE,
};
