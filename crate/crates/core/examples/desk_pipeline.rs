//! The complete scaled-down experiment: synthetic corpus, embedder
//! pretraining, adversarial training, matching, gender and specificity
//! evaluation, and image grids. Takes roughly 15 minutes on one core.
//!
//! cargo run --release --example desk_pipeline -- [output_dir] [iterations]

use std::path::PathBuf;

use voice2face::pipeline::{run_desk, DeskConfig};

fn main() -> voice2face::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("voice2face_desk"));
    let mut config = DeskConfig::default();
    if let Some(n) = args.next().and_then(|s| s.parse().ok()) {
        config.train.total_iterations = n;
    }
    let outcome = run_desk(&config, Some(&out))?;
    for line in outcome.report_lines() {
        println!("{line}");
    }
    Ok(())
}
