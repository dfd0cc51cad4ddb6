//! Finite-difference verification of the three step objectives.

use voice2face_tensor::gradcheck::relative_error;
use voice2face_tensor::{Adam, AdamConfig, ParamId, Tape, Tensor};

use super::steps::{classifier_loss, discriminator_loss, generator_loss};
use crate::error::Result;
use crate::models::{Architecture, ModelBundle};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    Discriminator,
    Classifier,
    Generator,
}

impl StepKind {
    pub const ALL: [StepKind; 3] = [StepKind::Discriminator, StepKind::Classifier, StepKind::Generator];

    pub fn name(self) -> &'static str {
        match self {
            StepKind::Discriminator => "discriminator",
            StepKind::Classifier => "classifier",
            StepKind::Generator => "generator",
        }
    }

    fn owned(self, b: &ModelBundle<f64>) -> Vec<ParamId> {
        match self {
            StepKind::Discriminator => b.discriminator_params(),
            StepKind::Classifier => b.classifier_params(),
            StepKind::Generator => b.generator_params(),
        }
    }
}

/// Fixed inputs for evaluating a step loss.
pub struct StepInputs<'a> {
    pub faces: &'a Tensor<f64>,
    pub fakes: &'a Tensor<f64>,
    pub embeddings: &'a Tensor<f64>,
    pub labels: &'a [usize],
}

fn loss_on(b: &ModelBundle<f64>, kind: StepKind, inputs: &StepInputs, trainable: bool) -> Result<(Tape<f64>, voice2face_tensor::Var)> {
    let mut tape = Tape::new();
    let loss = match kind {
        StepKind::Discriminator => {
            let r = tape.input(inputs.faces.clone())?;
            let f = tape.input(inputs.fakes.clone())?;
            discriminator_loss(b, &mut tape, r, f, trainable)?.loss
        }
        StepKind::Classifier => {
            let x = tape.input(inputs.faces.clone())?;
            classifier_loss(b, &mut tape, x, inputs.labels, trainable)?
        }
        StepKind::Generator => {
            let e = tape.input(inputs.embeddings.clone())?;
            generator_loss(b, &mut tape, e, inputs.labels, trainable)?.loss
        }
    };
    Ok((tape, loss))
}

fn loss_value(b: &ModelBundle<f64>, kind: StepKind, inputs: &StepInputs) -> Result<f64> {
    let (tape, loss) = loss_on(b, kind, inputs, false)?;
    Ok(tape.value(loss).item())
}

fn loss_and_pattern(b: &ModelBundle<f64>, kind: StepKind, inputs: &StepInputs) -> Result<(f64, Vec<bool>)> {
    let (tape, loss) = loss_on(b, kind, inputs, false)?;
    Ok((tape.value(loss).item(), tape.kink_pattern()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepGradientReport {
    pub kind: StepKind,
    pub max_relative_error: f64,
    pub worst_param: String,
    pub checked: usize,
    /// Coordinates whose `±h` perturbation crossed a ReLU kink.
    pub kink_crossings: usize,
}

impl StepGradientReport {
    /// At most a quarter of the coordinates may be excluded for crossing
    /// a kink.
    pub fn passes(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_relative_error < tolerance && self.kink_crossings * 4 <= self.checked + self.kink_crossings
    }
}

/// Central differences on every coordinate the step's player owns.
pub fn check_step_gradients(bundle: &ModelBundle<f64>, kind: StepKind, inputs: &StepInputs, h: f64) -> Result<StepGradientReport> {
    let (tape, loss) = loss_on(bundle, kind, inputs, true)?;
    let pattern = tape.kink_pattern();
    let grads = tape.backward(loss)?;
    let mut probe = bundle.clone();
    let mut report = StepGradientReport {
        kind,
        max_relative_error: 0.0,
        worst_param: String::new(),
        checked: 0,
        kink_crossings: 0,
    };
    for id in kind.owned(bundle) {
        let n = bundle.store.get(id).numel();
        let zero = vec![0.0; n];
        let analytic = grads.param(id).unwrap_or(&zero);
        for i in 0..n {
            let x = bundle.store.get(id).data()[i];
            probe.store.get_mut(id).data_mut()[i] = x + h;
            let (plus, plus_pattern) = loss_and_pattern(&probe, kind, inputs)?;
            probe.store.get_mut(id).data_mut()[i] = x - h;
            let (minus, minus_pattern) = loss_and_pattern(&probe, kind, inputs)?;
            probe.store.get_mut(id).data_mut()[i] = x;
            if plus_pattern != pattern || minus_pattern != pattern {
                report.kink_crossings += 1;
                continue;
            }
            let err = relative_error(analytic[i], (plus - minus) / (2.0 * h));
            report.checked += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst_param = format!("{}[{i}]", bundle.store.name(id));
            }
        }
    }
    Ok(report)
}

/// Replaces every bias with a draw from `U(-0.1, 0.1)`.
pub fn jitter_biases(bundle: &mut ModelBundle<f64>, seed: u64) {
    use rand::Rng;
    let mut rng = crate::rng::stream(seed, &[]);
    let ids: Vec<ParamId> = bundle.store.ids().filter(|&id| bundle.store.name(id).ends_with(".bias")).collect();
    for id in ids {
        for v in bundle.store.get_mut(id).data_mut() {
            *v = rng.gen_range(-0.1..0.1);
        }
    }
}

/// Objective (negated loss) before and after one Adam step of size `lr`
/// on the step's own parameters.
pub fn ascent_improves(bundle: &ModelBundle<f64>, kind: StepKind, inputs: &StepInputs, lr: f64) -> Result<(f64, f64)> {
    let mut b = bundle.clone();
    let before = -loss_value(&b, kind, inputs)?;
    let (tape, loss) = loss_on(&b, kind, inputs, true)?;
    let grads = tape.backward(loss)?;
    let cfg = AdamConfig {
        learning_rate: lr,
        ..AdamConfig::default()
    };
    let mut adam = Adam::new(&b.store, &kind.owned(&b), cfg);
    adam.step(&mut b.store, &grads)?;
    let after = -loss_value(&b, kind, inputs)?;
    Ok((before, after))
}

/// Every step objective, with shared and separate trunks, on the
/// miniature architecture at a generic random point.
pub fn step_gradient_suite(seed: u64, h: f64) -> Result<Vec<StepGradientReport>> {
    use rand::Rng;
    let mut out = Vec::new();
    for shared in [true, false] {
        let mut arch = Architecture::miniature(5);
        arch.shared_trunk = shared;
        let mut bundle = ModelBundle::<f64>::new(arch, seed)?;
        jitter_biases(&mut bundle, seed ^ 1);
        let mut rng = crate::rng::stream(seed, &[2]);
        let s = bundle.image_size();
        let e = bundle.arch().embedding_dim;
        let faces = Tensor::from_fn(vec![3, 3, s, s], |_| rng.gen_range(-1.0..1.0));
        let embeddings = Tensor::from_fn(vec![3, e], |_| rng.gen_range(0.0..1.0));
        let fakes = bundle.generate_tensor(embeddings.clone())?;
        let labels = [1, 4, 0];
        let inputs = StepInputs {
            faces: &faces,
            fakes: &fakes,
            embeddings: &embeddings,
            labels: &labels,
        };
        for kind in StepKind::ALL {
            out.push(check_step_gradients(&bundle, kind, &inputs, h)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Vec<usize>, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    struct Fixture {
        bundle: ModelBundle<f64>,
        faces: Tensor<f64>,
        fakes: Tensor<f64>,
        embeddings: Tensor<f64>,
        labels: Vec<usize>,
    }

    impl Fixture {
        fn new(shared: bool) -> Self {
            let mut arch = Architecture::miniature(5);
            arch.shared_trunk = shared;
            let mut bundle = ModelBundle::<f64>::new(arch, 11).unwrap();
            jitter_biases(&mut bundle, 12);
            let s = bundle.image_size();
            let embeddings = random(vec![3, bundle.arch().embedding_dim], 5).map(f64::abs);
            let fakes = bundle.generate_tensor(embeddings.clone()).unwrap();
            Fixture {
                faces: random(vec![3, 3, s, s], 4),
                fakes,
                embeddings,
                labels: vec![1, 4, 0],
                bundle,
            }
        }

        fn inputs(&self) -> StepInputs<'_> {
            StepInputs {
                faces: &self.faces,
                fakes: &self.fakes,
                embeddings: &self.embeddings,
                labels: &self.labels,
            }
        }
    }

    #[test]
    fn step_gradients_match_differences() {
        for shared in [true, false] {
            let fx = Fixture::new(shared);
            for kind in StepKind::ALL {
                let r = check_step_gradients(&fx.bundle, kind, &fx.inputs(), 1e-4).unwrap();
                assert!(r.passes(1e-4), "{r:?}");
                assert!(r.checked > 0);
            }
        }
    }

    #[test]
    fn suite_covers_both_trunk_layouts() {
        let r = step_gradient_suite(3, 1e-4).unwrap();
        assert_eq!(r.len(), 6);
        assert!(r.iter().all(|x| x.passes(1e-4)), "{r:?}");
    }

    #[test]
    fn small_steps_increase_each_objective() {
        let fx = Fixture::new(true);
        for kind in StepKind::ALL {
            let (before, after) = ascent_improves(&fx.bundle, kind, &fx.inputs(), 1e-5).unwrap();
            assert!(after > before, "{kind:?}: {before} -> {after}");
        }
    }

    #[test]
    fn constant_players_give_closed_form_generator_loss() {
        let mut fx = Fixture::new(true);
        let heads: Vec<_> = fx.bundle.disc_head.params().into_iter().chain(fx.bundle.cls_head.params()).collect();
        for id in heads {
            fx.bundle.store.get_mut(id).data_mut().fill(0.0);
        }
        let k = fx.bundle.arch().classes as f64;
        let loss = loss_value(&fx.bundle, StepKind::Generator, &fx.inputs()).unwrap();
        assert!((loss - (2f64.ln() + k.ln())).abs() < 1e-12);
        let r = check_step_gradients(&fx.bundle, StepKind::Generator, &fx.inputs(), 1e-4).unwrap();
        assert!(r.passes(1e-4), "{r:?}");
    }
}
