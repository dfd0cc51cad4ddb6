//! Specificity, gender and 1:2 matching protocols, plus image grids.

mod gender;
mod grids;
mod matching;
mod noise;
mod report;
mod specificity;
mod trials;

pub use gender::{gender_accuracy, GenderProbe, ProbeConfig, MIN_PROBE_ACCURACY};
pub use grids::{export_grids, noise_rows, speaker_segments, MAX_GRID_SPEAKERS, SEGMENTS_PER_SPEAKER};
pub use matching::{cosine, matching_accuracy, MatchingModel, PlantedOracle};
pub use noise::{noise_mel, noise_waveform, NoiseKind, NOISE_DURATIONS};
pub use report::{wilson_interval, EvalReport, Z_95};
pub use specificity::{generated_scores, specificity_stats, ScoreStats, SpecificityReport, MIN_SPECIFICITY_SAMPLES};
pub use trials::{build_trials, exhaustive_trial_count, MatchingTrial, TrialOptions, DEFAULT_MAX_TRIALS};
