//! Writes a small synthetic voice/face corpus and summarizes its manifest.
//!
//! cargo run --example synth_corpus -- [output_dir]

use std::path::PathBuf;

use voice2face::corpus::{synthesize_corpus, Modality, Split, SynthConfig};

fn main() -> voice2face::Result<()> {
    let root = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("voice2face_corpus"));
    let config = SynthConfig {
        identities: 10,
        voices_per_identity: 4,
        faces_per_identity: 4,
        test_identities: 3,
        ..SynthConfig::default()
    };
    let manifest = synthesize_corpus(&root, &config)?;
    println!("corpus written to {}", root.display());
    for split in [Split::Train, Split::Test] {
        let voices = manifest.select(split, Modality::Voice).count();
        let faces = manifest.select(split, Modality::Face).count();
        println!("{split:?}: {} identities, {voices} voices, {faces} faces", manifest.identities(split).len());
    }
    for id in manifest.identities(Split::Test) {
        println!("identity {id} gender {:?}", manifest.gender_of(id));
    }
    Ok(())
}
