use crate::audio::MelSpectrogram;
use crate::error::{Error, Result};
use crate::models::ModelBundle;
use crate::parallel;

pub const MIN_SPECIFICITY_SAMPLES: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreStats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl ScoreStats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        ScoreStats { mean, std: var.sqrt(), n }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpecificityReport {
    pub speech: ScoreStats,
    pub noise: ScoreStats,
    /// Faces generated from speech look more real than those from noise.
    pub ordering_holds: bool,
    pub warning: Option<String>,
}

impl SpecificityReport {
    pub fn lines(&self) -> Vec<String> {
        let line = |class: &str, s: &ScoreStats| format!("metric=specificity class={class} mean={:.6} std={:.6} n={}", s.mean, s.std, s.n);
        let mut out = vec![line("speech", &self.speech), line("noise", &self.noise)];
        let mut last = format!("metric=specificity_ordering holds={}", self.ordering_holds);
        if let Some(w) = &self.warning {
            last.push_str(&format!(" warning=\"{w}\""));
        }
        out.push(last);
        out
    }
}

/// Discriminator realness of faces generated from each input.
pub fn generated_scores(bundle: &ModelBundle<f32>, inputs: &[MelSpectrogram]) -> Result<Vec<f64>> {
    parallel::try_map(inputs, |m| Ok(bundle.discriminate(&bundle.voice_to_face(m)?)? as f64))
}

pub fn specificity_stats(bundle: &ModelBundle<f32>, speech: &[MelSpectrogram], noise: &[MelSpectrogram]) -> Result<SpecificityReport> {
    if speech.len() < MIN_SPECIFICITY_SAMPLES || noise.len() < MIN_SPECIFICITY_SAMPLES {
        return Err(Error::Evaluation(format!(
            "specificity needs at least {MIN_SPECIFICITY_SAMPLES} samples per class, got {} speech and {} noise",
            speech.len(),
            noise.len()
        )));
    }
    let speech = ScoreStats::of(&generated_scores(bundle, speech)?);
    let noise = ScoreStats::of(&generated_scores(bundle, noise)?);
    Ok(SpecificityReport {
        ordering_holds: speech.mean > noise.mean,
        warning: (bundle.iteration == 0).then(|| "bundle has not been adversarially trained".to_string()),
        speech,
        noise,
    })
}
