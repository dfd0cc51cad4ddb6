//! Finite-difference checks for every layer kind, runnable from tests and
//! from the command line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gradcheck::{finite_difference_check, GradCheckReport, PackedFunction};
use crate::ops::norm::{BatchNormState, NormMode};
use crate::spec::LayerKind;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const SUITE_STEP: f64 = 1e-4;
pub const SUITE_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct SuiteEntry {
    pub name: String,
    pub kind: Option<LayerKind>,
    pub report: GradCheckReport,
}

impl SuiteEntry {
    pub fn passes(&self) -> bool {
        self.report.passes(SUITE_TOLERANCE)
    }
}

/// Values in `±[0.1, 1]`, so kinked activations never sit within `h` of zero.
fn away_from_zero(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.gen_range(0.1..1.0);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

fn uniform(shape: Vec<usize>, scale: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-scale..scale))
}

/// Reduces `y` to a scalar through fixed random weights so that every output
/// element contributes a distinct sensitivity.
fn weighted_sum(tape: &mut Tape<f64>, y: Var, weights: &Tensor<f64>) -> Result<Var> {
    let n = tape.value(y).numel();
    let flat = tape.reshape(y, vec![1, n])?;
    let w = tape.input(weights.clone().reshape(vec![1, n])?)?;
    let b = tape.input(Tensor::zeros(vec![1]))?;
    let s = tape.linear(flat, w, b)?;
    tape.reshape(s, vec![1])
}

fn check(
    name: &str,
    kind: Option<LayerKind>,
    tensors: Vec<Tensor<f64>>,
    output_len: usize,
    rng: &mut ChaCha8Rng,
    mut layer: impl FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
) -> Result<SuiteEntry> {
    let weights = uniform(vec![output_len], 1.0, rng);
    let shapes = tensors.iter().map(|t| t.shape().to_vec()).collect();
    let point = PackedFunction::<fn(&mut Tape<f64>, &[Var]) -> Result<Var>>::pack(&tensors);
    let mut f = PackedFunction::new(shapes, |tape: &mut Tape<f64>, vars: &[Var]| {
        let y = layer(tape, vars)?;
        if tape.value(y).numel() == 1 {
            Ok(y)
        } else {
            weighted_sum(tape, y, &weights)
        }
    });
    let report = finite_difference_check(&mut f, &point, SUITE_STEP)?;
    Ok(SuiteEntry {
        name: name.to_string(),
        kind,
        report,
    })
}

/// Checks input and parameter gradients of every layer kind on small random
/// double-precision problems.
pub fn layer_suite(seed: u64) -> Result<Vec<SuiteEntry>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let mut out = Vec::new();

    // conv1d on even and odd lengths; even lengths exercise the ceil-mode window.
    for t in [6usize, 7] {
        let tensors = vec![uniform(vec![2, 3, t], 1.0, r), uniform(vec![4, 3, 3], 0.5, r), uniform(vec![4], 0.5, r)];
        let len = 2 * 4 * crate::shape::conv1d_len(t, 3, 2, 1)?;
        out.push(check(&format!("conv1d k3/2,1 t={t}"), Some(LayerKind::Conv1d), tensors, len, r, |tp, v| tp.conv1d(v[0], v[1], v[2], 2, 1))?);
    }

    for &(k, s, p, h) in &[(3usize, 2usize, 1usize, 6usize), (4, 1, 0, 4), (1, 1, 0, 3)] {
        let tensors = vec![uniform(vec![2, 2, h, h], 1.0, r), uniform(vec![3, 2, k, k], 0.5, r), uniform(vec![3], 0.5, r)];
        let o = crate::shape::conv2d_len(h, k, s, p)?;
        out.push(check(&format!("conv2d {k}x{k}/{s},{p}"), Some(LayerKind::Conv2d), tensors, 2 * 3 * o * o, r, move |tp, v| tp.conv2d(v[0], v[1], v[2], s, p))?);
    }

    for &(k, s, p, op, h) in &[(3usize, 2usize, 1usize, 1usize, 3usize), (4, 1, 0, 0, 1), (1, 1, 0, 0, 4)] {
        let tensors = vec![uniform(vec![2, 2, h, h], 1.0, r), uniform(vec![2, 3, k, k], 0.5, r), uniform(vec![3], 0.5, r)];
        let o = crate::shape::deconv2d_len(h, k, s, p, op)?;
        out.push(check(&format!("deconv2d {k}x{k}/{s},{p} op={op}"), Some(LayerKind::Deconv2d), tensors, 2 * 3 * o * o, r, move |tp, v| tp.deconv2d(v[0], v[1], v[2], s, p, op))?);
    }

    for mode in [NormMode::Train, NormMode::Infer] {
        let tensors = vec![uniform(vec![3, 2, 4], 1.0, r), uniform(vec![2], 1.5, r), uniform(vec![2], 0.5, r)];
        let mut state = BatchNormState::<f64>::new(2);
        state.running_mean = vec![0.1, -0.2];
        state.running_var = vec![0.8, 1.3];
        out.push(check(&format!("batchnorm {mode:?}"), Some(LayerKind::BatchNorm), tensors, 24, r, move |tp, v| {
            let mut st = state.clone();
            tp.batch_norm(v[0], v[1], v[2], &mut st, mode)
        })?);
    }

    out.push(check("relu", Some(LayerKind::Relu), vec![away_from_zero(vec![2, 5], r)], 10, r, |tp, v| Ok(tp.relu(v[0])))?);
    out.push(check("leaky_relu", Some(LayerKind::LeakyRelu), vec![away_from_zero(vec![2, 5], r)], 10, r, |tp, v| Ok(tp.leaky_relu(v[0], 0.2)))?);
    out.push(check("sigmoid", Some(LayerKind::Sigmoid), vec![uniform(vec![2, 5], 3.0, r)], 10, r, |tp, v| Ok(tp.sigmoid(v[0])))?);
    out.push(check("tanh", Some(LayerKind::Tanh), vec![uniform(vec![2, 5], 2.0, r)], 10, r, |tp, v| Ok(tp.tanh(v[0])))?);
    out.push(check("softmax", Some(LayerKind::Softmax), vec![uniform(vec![3, 4], 3.0, r)], 12, r, |tp, v| Ok(tp.softmax(v[0])))?);

    let tensors = vec![uniform(vec![3, 5], 1.0, r), uniform(vec![4, 5], 0.5, r), uniform(vec![4], 0.5, r)];
    out.push(check("fully_connected", Some(LayerKind::FullyConnected), tensors, 12, r, |tp, v| tp.linear(v[0], v[1], v[2]))?);

    out.push(check("time_avg_pool", Some(LayerKind::TimeAvgPool), vec![uniform(vec![2, 3, 5], 1.0, r)], 6, r, |tp, v| tp.time_avg_pool(v[0]))?);

    let targets = [1.0, 0.0, 1.0, 0.0];
    out.push(check("bce_with_logits", None, vec![uniform(vec![4], 3.0, r)], 1, r, move |tp, v| tp.bce_with_logits(v[0], &targets))?);
    let labels = [2usize, 0, 1];
    out.push(check("softmax_cross_entropy", None, vec![uniform(vec![3, 4], 2.0, r)], 1, r, move |tp, v| tp.softmax_cross_entropy(v[0], &labels))?);

    Ok(out)
}
