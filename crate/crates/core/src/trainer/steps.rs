//! The three alternating updates of adversarial training. Each loss is the
//! negation of the objective its player ascends, averaged over the batch.

use voice2face_tensor::{Adam, AdamConfig, Gradients, ParamId, Real, Tape, Tensor, Var};

use crate::error::Result;
use crate::models::{ModelBundle, Player};

fn ones<T: Real>(n: usize) -> Vec<T> {
    vec![T::one(); n]
}

fn zeros<T: Real>(n: usize) -> Vec<T> {
    vec![T::zero(); n]
}

/// Discriminator loss `BCE(D(real), 1) + BCE(D(fake), 0)`.
pub struct DiscriminatorTerms {
    pub loss: Var,
    pub real_logits: Var,
    pub fake_logits: Var,
}

pub fn discriminator_loss<T: Real>(
    bundle: &ModelBundle<T>,
    tape: &mut Tape<T>,
    real: Var,
    fake: Var,
    trainable: bool,
) -> Result<DiscriminatorTerms> {
    let m = tape.value(real).dim(0);
    let n = tape.value(fake).dim(0);
    let fr = bundle.features_on(tape, Player::Discriminator, real, trainable)?;
    let real_logits = bundle.disc_logits_on(tape, fr, trainable)?;
    let ff = bundle.features_on(tape, Player::Discriminator, fake, trainable)?;
    let fake_logits = bundle.disc_logits_on(tape, ff, trainable)?;
    let lr = tape.bce_with_logits(real_logits, &ones(m))?;
    let lf = tape.bce_with_logits(fake_logits, &zeros(n))?;
    Ok(DiscriminatorTerms {
        loss: tape.add(lr, lf)?,
        real_logits,
        fake_logits,
    })
}

/// Identity cross-entropy of the classifier on real faces.
pub fn classifier_loss<T: Real>(
    bundle: &ModelBundle<T>,
    tape: &mut Tape<T>,
    faces: Var,
    labels: &[usize],
    trainable: bool,
) -> Result<Var> {
    let f = bundle.features_on(tape, Player::Classifier, faces, trainable)?;
    let logits = bundle.cls_logits_on(tape, f, trainable)?;
    Ok(tape.softmax_cross_entropy(logits, labels)?)
}

pub struct GeneratorTerms {
    pub loss: Var,
    pub adversarial: Var,
    pub identity: Var,
}

/// Generator loss `BCE(D(G(e)), 1) + CE(C(G(e)), y)`; discriminator and
/// classifier parameters enter as constants.
pub fn generator_loss<T: Real>(
    bundle: &ModelBundle<T>,
    tape: &mut Tape<T>,
    embeddings: Var,
    labels: &[usize],
    trainable: bool,
) -> Result<GeneratorTerms> {
    let n = tape.value(embeddings).dim(0);
    let fake = bundle.generator.forward(tape, &bundle.store, embeddings, trainable)?;
    let fd = bundle.features_on(tape, Player::Discriminator, fake, false)?;
    let fc = if bundle.arch().shared_trunk {
        fd
    } else {
        bundle.features_on(tape, Player::Classifier, fake, false)?
    };
    let d_logits = bundle.disc_logits_on(tape, fd, false)?;
    let c_logits = bundle.cls_logits_on(tape, fc, false)?;
    let adversarial = tape.bce_with_logits(d_logits, &ones(n))?;
    let identity = tape.softmax_cross_entropy(c_logits, labels)?;
    Ok(GeneratorTerms {
        loss: tape.add(adversarial, identity)?,
        adversarial,
        identity,
    })
}

/// One Adam instance per player, so moment estimates are never shared.
#[derive(Clone, Debug)]
pub struct Optimizers<T> {
    pub discriminator: Adam<T>,
    pub classifier: Adam<T>,
    pub generator: Adam<T>,
}

impl<T: Real> Optimizers<T> {
    pub fn new(bundle: &ModelBundle<T>, config: AdamConfig) -> Self {
        Optimizers {
            discriminator: Adam::new(&bundle.store, &bundle.discriminator_params(), config),
            classifier: Adam::new(&bundle.store, &bundle.classifier_params(), config),
            generator: Adam::new(&bundle.store, &bundle.generator_params(), config),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscriminatorStep {
    pub loss: f64,
    /// Mean `D` on real faces.
    pub real_score: f64,
    /// Mean `D` on generated faces.
    pub fake_score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorStep {
    pub loss: f64,
    pub adversarial: f64,
    pub identity: f64,
}

fn mean_sigmoid<T: Real>(t: &Tensor<T>) -> f64 {
    let v = t.data();
    v.iter().map(|&x| voice2face_tensor::ops::activation::sigmoid(x).to_f64_lossy()).sum::<f64>() / v.len() as f64
}

fn check_finite<T: Real>(tape: &Tape<T>, loss: Var, what: &str) -> Result<f64> {
    let v = tape.value(loss).item().to_f64_lossy();
    if !v.is_finite() {
        return Err(crate::Error::TrainingAborted {
            iteration: 0,
            message: format!("{what} loss is not finite"),
        });
    }
    Ok(v)
}

fn apply<T: Real>(adam: &mut Adam<T>, bundle: &mut ModelBundle<T>, grads: &Gradients<T>, owned: &[ParamId]) -> Result<()> {
    debug_assert!(grads.param_ids().iter().all(|id| owned.contains(id)));
    adam.step(&mut bundle.store, grads)?;
    Ok(())
}

/// Updates the discriminator on real faces against `fakes`, which carry no
/// generator gradient.
pub fn discriminator_step<T: Real>(
    bundle: &mut ModelBundle<T>,
    adam: &mut Adam<T>,
    real: Tensor<T>,
    fakes: Tensor<T>,
) -> Result<DiscriminatorStep> {
    let mut tape = Tape::new();
    let r = tape.input(real)?;
    let f = tape.input(fakes)?;
    let terms = discriminator_loss(bundle, &mut tape, r, f, true)?;
    let loss = check_finite(&tape, terms.loss, "discriminator")?;
    let grads = tape.backward(terms.loss)?;
    let report = DiscriminatorStep {
        loss,
        real_score: mean_sigmoid(tape.value(terms.real_logits)),
        fake_score: mean_sigmoid(tape.value(terms.fake_logits)),
    };
    let owned = bundle.discriminator_params();
    apply(adam, bundle, &grads, &owned)?;
    Ok(report)
}

pub fn classifier_step<T: Real>(
    bundle: &mut ModelBundle<T>,
    adam: &mut Adam<T>,
    faces: Tensor<T>,
    labels: &[usize],
) -> Result<f64> {
    let mut tape = Tape::new();
    let x = tape.input(faces)?;
    let l = classifier_loss(bundle, &mut tape, x, labels, true)?;
    let loss = check_finite(&tape, l, "classifier")?;
    let grads = tape.backward(l)?;
    let owned = bundle.classifier_params();
    apply(adam, bundle, &grads, &owned)?;
    Ok(loss)
}

pub fn generator_step<T: Real>(
    bundle: &mut ModelBundle<T>,
    adam: &mut Adam<T>,
    embeddings: Tensor<T>,
    labels: &[usize],
) -> Result<GeneratorStep> {
    let mut tape = Tape::new();
    let e = tape.input(embeddings)?;
    let terms = generator_loss(bundle, &mut tape, e, labels, true)?;
    let loss = check_finite(&tape, terms.loss, "generator")?;
    let grads = tape.backward(terms.loss)?;
    let report = GeneratorStep {
        loss,
        adversarial: tape.value(terms.adversarial).item().to_f64_lossy(),
        identity: tape.value(terms.identity).item().to_f64_lossy(),
    };
    let owned = bundle.generator_params();
    apply(adam, bundle, &grads, &owned)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Architecture;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Vec<usize>, seed: u64, scale: f64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.gen_range(-scale..scale))
    }

    fn setup() -> (ModelBundle<f64>, Tensor<f64>, Tensor<f64>, Vec<usize>) {
        let b = ModelBundle::<f64>::new(Architecture::miniature(5), 3).unwrap();
        let s = b.image_size();
        let faces = random(vec![4, 3, s, s], 1, 1.0);
        let e = random(vec![4, b.arch().embedding_dim], 2, 1.0).map(|v| v.abs());
        (b, faces, e, vec![0, 2, 4, 1])
    }

    #[test]
    fn each_step_touches_only_its_owner() {
        let (mut b, faces, e, labels) = setup();
        let mut opt = Optimizers::new(&b, AdamConfig::default());
        let fakes = b.generate_tensor(e.clone()).unwrap();
        let groups = [
            b.embedder_state(),
            b.generator_params(),
            b.discriminator_params(),
            b.classifier_params(),
        ];
        let hashes = |b: &ModelBundle<f64>| groups.iter().map(|g| b.hash_params(g)).collect::<Vec<_>>();

        let before = hashes(&b);
        discriminator_step(&mut b, &mut opt.discriminator, faces.clone(), fakes).unwrap();
        let after = hashes(&b);
        assert_eq!(before[0], after[0]);
        assert_eq!(before[1], after[1]);
        assert_ne!(before[2], after[2]);

        let before = hashes(&b);
        generator_step(&mut b, &mut opt.generator, e, &labels).unwrap();
        let after = hashes(&b);
        assert_ne!(before[1], after[1]);
        assert_eq!(before[2], after[2]);
        assert_eq!(before[3], after[3]);

        let before = hashes(&b);
        classifier_step(&mut b, &mut opt.classifier, faces, &labels).unwrap();
        let after = hashes(&b);
        assert_eq!(before[1], after[1]);
        assert_ne!(before[3], after[3]);
    }

    #[test]
    fn discriminator_loss_at_chance_is_two_ln_two() {
        let (mut b, faces, e, _) = setup();
        for &id in &b.disc_head.params() {
            b.store.get_mut(id).data_mut().fill(0.0);
        }
        let fakes = b.generate_tensor(e).unwrap();
        let mut tape = Tape::new();
        let r = tape.input(faces).unwrap();
        let f = tape.input(fakes).unwrap();
        let t = discriminator_loss(&b, &mut tape, r, f, true).unwrap();
        assert!((tape.value(t.loss).item() - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn uniform_classifier_has_loss_ln_k() {
        let (mut b, faces, _, labels) = setup();
        for &id in &b.cls_head.params() {
            b.store.get_mut(id).data_mut().fill(0.0);
        }
        let mut tape = Tape::new();
        let x = tape.input(faces).unwrap();
        let l = classifier_loss(&b, &mut tape, x, &labels, true).unwrap();
        assert!((tape.value(l).item() - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let (mut b, faces, _, _) = setup();
        let mut opt = Optimizers::new(&b, AdamConfig::default());
        let before = b.hash_params(&b.classifier_params());
        assert!(classifier_step(&mut b, &mut opt.classifier, faces, &[0, 1, 2, 5]).is_err());
        assert_eq!(before, b.hash_params(&b.classifier_params()));
    }

    #[test]
    fn confident_correct_discriminator_has_vanishing_loss_and_gradient() {
        let mut tape = Tape::<f64>::new();
        let real = tape.variable(Tensor::new(vec![3, 1], vec![40.0; 3]).unwrap()).unwrap();
        let fake = tape.variable(Tensor::new(vec![3, 1], vec![-40.0; 3]).unwrap()).unwrap();
        let lr = tape.bce_with_logits(real, &[1.0; 3]).unwrap();
        let lf = tape.bce_with_logits(fake, &[0.0; 3]).unwrap();
        let loss = tape.add(lr, lf).unwrap();
        assert!(tape.value(loss).item() < 1e-6);
        let g = tape.backward(loss).unwrap();
        for v in [real, fake] {
            assert!(g.wrt(v).unwrap().iter().all(|x| x.abs() < 1e-12));
        }
    }
}
