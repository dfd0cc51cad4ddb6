//! The 1:2 matching protocol on a synthetic test split: a planted oracle
//! that knows every identity scores 100%, an untrained model sits at chance.

use voice2face::audio::VadConfig;
use voice2face::corpus::{Split, SplitData, SynthConfig, SyntheticCorpus};
use voice2face::evaluator::{build_trials, exhaustive_trial_count, matching_accuracy, PlantedOracle, TrialOptions};
use voice2face::models::{Architecture, ModelBundle};

fn main() -> voice2face::Result<()> {
    let corpus = SyntheticCorpus::new(SynthConfig {
        identities: 12,
        voices_per_identity: 6,
        faces_per_identity: 6,
        test_identities: 6,
        ..SynthConfig::default()
    })?;
    let test = SplitData::from_synthetic(&corpus, Split::Test, Some(&VadConfig::default()))?;
    for stratified in [false, true] {
        println!("exhaustive trials (stratified={stratified}): {}", exhaustive_trial_count(&test, stratified));
    }
    let trials = build_trials(
        &test,
        &TrialOptions {
            stratified: false,
            max_trials: Some(2000),
            seed: 7,
        },
    )?;
    println!("oracle    {}", matching_accuracy(&PlantedOracle::new(false), &test, &trials)?);
    println!("adversary {}", matching_accuracy(&PlantedOracle::new(true), &test, &trials)?);
    let untrained = ModelBundle::<f32>::new(Architecture::full(6).narrowed(8), 7)?;
    println!("untrained {}", matching_accuracy(&untrained, &test, &trials)?);
    Ok(())
}
