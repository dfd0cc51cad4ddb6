use std::collections::BTreeMap;

use rand::Rng;

use crate::corpus::SplitData;
use crate::error::{Error, Result};
use crate::rng::{self, tags};

pub const DEFAULT_MAX_TRIALS: usize = 100_000;

/// One 1:2 matching instance, by index into a split's voices and faces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MatchingTrial {
    pub probe_voice: usize,
    pub true_face: usize,
    pub imposter_face: usize,
    pub gender_stratified: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialOptions {
    pub stratified: bool,
    /// `None` builds every trial.
    pub max_trials: Option<usize>,
    pub seed: u64,
}

impl Default for TrialOptions {
    fn default() -> Self {
        TrialOptions {
            stratified: false,
            max_trials: Some(DEFAULT_MAX_TRIALS),
            seed: 0,
        }
    }
}

struct Index {
    faces_of: BTreeMap<usize, Vec<usize>>,
    gender_of: BTreeMap<usize, u8>,
}

impl Index {
    fn new(split: &SplitData) -> Self {
        let mut faces_of: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut gender_of = BTreeMap::new();
        for (i, f) in split.faces.iter().enumerate() {
            faces_of.entry(f.identity).or_default().push(i);
            gender_of.insert(f.identity, f.gender);
        }
        Index { faces_of, gender_of }
    }

    /// Face indices usable as imposters against `identity`.
    fn imposters(&self, identity: usize, stratified: bool) -> Vec<usize> {
        let g = self.gender_of.get(&identity).copied();
        self.faces_of
            .iter()
            .filter(|(&id, _)| id != identity && (!stratified || self.gender_of.get(&id).copied() == g))
            .flat_map(|(_, f)| f.iter().copied())
            .collect()
    }
}

/// Number of trials the exhaustive construction yields.
pub fn exhaustive_trial_count(split: &SplitData, stratified: bool) -> u64 {
    let index = Index::new(split);
    let mut cache: BTreeMap<usize, u64> = BTreeMap::new();
    split
        .voices
        .iter()
        .map(|v| {
            let own = index.faces_of.get(&v.identity).map_or(0, Vec::len) as u64;
            let imp = *cache.entry(v.identity).or_insert_with(|| index.imposters(v.identity, stratified).len() as u64);
            own * imp
        })
        .sum()
}

/// Pairs every probe voice with a face of its speaker and an imposter face.
/// Sampling is uniform over the exhaustive set and reproducible from the
/// seed.
pub fn build_trials(split: &SplitData, options: &TrialOptions) -> Result<Vec<MatchingTrial>> {
    let index = Index::new(split);
    if options.stratified {
        let genders: std::collections::BTreeSet<u8> = index.gender_of.values().copied().collect();
        if genders.len() < 2 {
            return Err(Error::Evaluation("stratified trials need both genders in the test set".into()));
        }
    }
    let mut probes = Vec::new();
    let mut imposters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (v, item) in split.voices.iter().enumerate() {
        let Some(own) = index.faces_of.get(&item.identity) else { continue };
        let imp = imposters
            .entry(item.identity)
            .or_insert_with(|| index.imposters(item.identity, options.stratified));
        if !imp.is_empty() {
            probes.push((v, own, item.identity, own.len() as u64 * imp.len() as u64));
        }
    }
    let total: u64 = probes.iter().map(|p| p.3).sum();
    if total == 0 {
        return Err(Error::Evaluation("no valid trials: need at least two identities with faces and voices".into()));
    }
    let trial = |v: usize, t: usize, i: usize| MatchingTrial {
        probe_voice: v,
        true_face: t,
        imposter_face: i,
        gender_stratified: options.stratified,
    };
    match options.max_trials {
        Some(max) if (max as u64) < total => {
            let mut rng = rng::stream(options.seed, &[tags::TRIALS, u64::from(options.stratified)]);
            let cumulative: Vec<u64> = probes
                .iter()
                .scan(0u64, |acc, p| {
                    *acc += p.3;
                    Some(*acc)
                })
                .collect();
            Ok((0..max)
                .map(|_| {
                    let r = rng.gen_range(0..total);
                    let k = cumulative.partition_point(|&c| c <= r);
                    let (v, own, id, _) = probes[k];
                    let imp = &imposters[&id];
                    trial(v, own[rng.gen_range(0..own.len())], imp[rng.gen_range(0..imp.len())])
                })
                .collect())
        }
        _ => Ok(probes
            .iter()
            .flat_map(|&(v, own, id, _)| {
                let imp = &imposters[&id];
                own.iter().flat_map(move |&t| imp.iter().map(move |&i| trial(v, t, i)))
            })
            .collect()),
    }
}
