//! Generates faces from voices. Loads a checkpoint when one is given,
//! otherwise uses a freshly initialized model, and writes one PNG per
//! synthetic test recording plus a grid of all of them.
//!
//! cargo run --release --example generate_faces -- [checkpoint] [output_dir]

use std::path::PathBuf;

use voice2face::audio::{prepare_voice, VadConfig};
use voice2face::corpus::{SynthConfig, SyntheticCorpus};
use voice2face::face::{compose_grid, write_face_png};
use voice2face::models::{load_checkpoint, Architecture, ModelBundle};

fn main() -> voice2face::Result<()> {
    let mut args = std::env::args().skip(1);
    let bundle = match args.next() {
        Some(path) => load_checkpoint(&PathBuf::from(path))?.0,
        None => ModelBundle::<f32>::new(Architecture::full(24).narrowed(8), 7)?,
    };
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("voice2face_faces"));
    std::fs::create_dir_all(&out).map_err(|e| voice2face::Error::io(&out, e))?;

    let corpus = SyntheticCorpus::new(SynthConfig::default())?;
    let vad = VadConfig::default();
    let mut rows = Vec::new();
    for label in 24..28 {
        let mut row = Vec::new();
        for index in 0..4 {
            let mel = prepare_voice(&corpus.voice(label, index), Some(&vad))?;
            let face = bundle.voice_to_face(&mel)?;
            let path = out.join(format!("id{label:04}_v{index:03}.png"));
            write_face_png(&path, &face)?;
            row.push(face);
        }
        row.push(corpus.face(label, 0));
        rows.push(row);
    }
    let grid = out.join("grid.png");
    compose_grid(&rows)?.save(&grid)?;
    println!("faces and {} written to {}", grid.display(), out.display());
    Ok(())
}
