//! Reverse-mode differentiation over a Wengert list.
//!
//! Every operation appends a node holding its output value and enough context
//! to compute vector-Jacobian products. Nodes are created in topological
//! order, so [`Tape::backward`] is a single reverse sweep. A node takes part in
//! the sweep only if one of its inputs needs a gradient, which lets frozen
//! sub-networks run forward on the same tape at no backward cost.

use std::collections::HashMap;

use crate::error::{Result, TensorError};
use crate::ops::activation::{leaky_relu, log_softmax_rows, relu, sigmoid, softmax_rows};
use crate::ops::conv::{Conv1dPlan, Conv2dPlan, Deconv2dPlan, ConvGrads, Wants};
use crate::ops::linear::{fc_backward_bias, fc_backward_input, fc_backward_weight, fc_forward};
use crate::ops::norm::{batchnorm_backward, batchnorm_forward, BatchNormCache, BatchNormState, NormMode};
use crate::params::{ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor;

/// Probability clamp used by the binary cross-entropy forward value.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Input,
    Variable,
    Param,
    Conv1d { x: Var, w: Var, b: Var, plan: Conv1dPlan },
    Conv2d { x: Var, w: Var, b: Var, plan: Conv2dPlan },
    Deconv2d { x: Var, w: Var, b: Var, plan: Deconv2dPlan },
    BatchNorm { x: Var, gamma: Var, beta: Var, cache: BatchNormCache<T> },
    Relu(Var),
    LeakyRelu(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    Linear { x: Var, w: Var, b: Var },
    TimeAvgPool(Var),
    Reshape(Var),
    Add(Var, Var),
    Scale(Var, T),
    Mean(Var),
    BceWithLogits { logits: Var, targets: Vec<T> },
    SoftmaxCrossEntropy { logits: Var, labels: Vec<usize>, log_probs: Vec<T> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn finite<T: Real>(op: &'static str, t: Tensor<T>) -> Result<Tensor<T>> {
    t.ensure_finite(op)?;
    Ok(t)
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Sign of every ReLU and leaky ReLU input (`> 0`), in recording order.
    pub fn kink_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) | Op::LeakyRelu(x, _) => Some(x),
                _ => None,
            })
            .flat_map(|x| self.nodes[x.0].value.data().iter().map(|&a| a > T::zero()))
            .collect()
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, value: Tensor<T>) -> Result<Var> {
        let value = finite("input", value)?;
        Ok(self.push(value, Op::Input, false))
    }

    /// Leaf whose gradient is reported by [`Tape::backward`].
    pub fn variable(&mut self, value: Tensor<T>) -> Result<Var> {
        let value = finite("variable", value)?;
        Ok(self.push(value, Op::Variable, true))
    }

    /// Brings a stored parameter onto the tape. Repeated calls with the same
    /// id return the same node, so shared parameters accumulate one gradient.
    /// The first call decides whether the parameter is trainable on this tape.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId, trainable: bool) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Param, trainable);
        self.params.insert(id, v);
        v
    }

    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        let plan = Conv1dPlan::new(self.value(x), self.value(w), self.value(b), stride, padding)?;
        let y = finite("conv1d", plan.forward(self.value(x), self.value(w), self.value(b)))?;
        let needs = self.needs(&[x, w, b]);
        Ok(self.push(y, Op::Conv1d { x, w, b, plan }, needs))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        let plan = Conv2dPlan::new(self.value(x), self.value(w), self.value(b), stride, padding)?;
        let y = finite("conv2d", plan.forward(self.value(x), self.value(w), self.value(b)))?;
        let needs = self.needs(&[x, w, b]);
        Ok(self.push(y, Op::Conv2d { x, w, b, plan }, needs))
    }

    pub fn deconv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize, output_padding: usize) -> Result<Var> {
        let plan = Deconv2dPlan::new(self.value(x), self.value(w), self.value(b), stride, padding, output_padding)?;
        let y = finite("deconv2d", plan.forward(self.value(x), self.value(w), self.value(b)))?;
        let needs = self.needs(&[x, w, b]);
        Ok(self.push(y, Op::Deconv2d { x, w, b, plan }, needs))
    }

    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, state: &mut BatchNormState<T>, mode: NormMode) -> Result<Var> {
        let (y, cache) = batchnorm_forward(
            self.value(x),
            self.value(gamma).data(),
            self.value(beta).data(),
            state,
            mode,
        )?;
        let y = finite("batchnorm", y)?;
        let needs = self.needs(&[x, gamma, beta]);
        Ok(self.push(y, Op::BatchNorm { x, gamma, beta, cache }, needs))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).map(relu);
        let needs = self.needs(&[x]);
        self.push(y, Op::Relu(x), needs)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let s = T::from_f64_lossy(slope);
        let y = self.value(x).map(|v| leaky_relu(v, s));
        let needs = self.needs(&[x]);
        self.push(y, Op::LeakyRelu(x, s), needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = self.value(x).map(sigmoid);
        let needs = self.needs(&[x]);
        self.push(y, Op::Sigmoid(x), needs)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| v.tanh());
        let needs = self.needs(&[x]);
        self.push(y, Op::Tanh(x), needs)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let width = *xv.shape().last().unwrap();
        let y = Tensor::new(xv.shape().to_vec(), softmax_rows(xv.data(), width)).unwrap();
        let needs = self.needs(&[x]);
        self.push(y, Op::Softmax(x), needs)
    }

    /// `[N, in] -> [N, out]` with weight `[out, in]`. Trailing axes of `x`
    /// are flattened.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let batch = xv.dim(0);
        let inputs = xv.numel() / batch;
        if wv.rank() != 2 || wv.dim(1) != inputs {
            return Err(TensorError::mismatch("linear", "input features", wv.shape().get(1).copied().unwrap_or(0), inputs));
        }
        let outputs = wv.dim(0);
        if bv.numel() != outputs {
            return Err(TensorError::mismatch("linear", "bias length", outputs, bv.numel()));
        }
        let y = fc_forward(xv.data(), wv.data(), bv.data(), batch, inputs, outputs);
        let y = finite("linear", Tensor::new(vec![batch, outputs], y)?)?;
        let needs = self.needs(&[x, w, b]);
        Ok(self.push(y, Op::Linear { x, w, b }, needs))
    }

    /// `[N, C, T] -> [N, C]`, mean over time.
    pub fn time_avg_pool(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 3 {
            return Err(TensorError::Rank {
                op: "time_avg_pool",
                expected: 3,
                shape: xv.shape().to_vec(),
            });
        }
        let (n, c, t) = (xv.dim(0), xv.dim(1), xv.dim(2));
        let tt = T::from_usize(t).unwrap();
        let y: Vec<T> = xv.data().chunks(t).map(|row| row.iter().copied().sum::<T>() / tt).collect();
        let y = Tensor::new(vec![n, c], y)?;
        let needs = self.needs(&[x]);
        Ok(self.push(y, Op::TimeAvgPool(x), needs))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let y = self.value(x).clone().reshape(shape)?;
        let needs = self.needs(&[x]);
        Ok(self.push(y, Op::Reshape(x), needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(TensorError::mismatch("add", "numel", av.numel(), bv.numel()));
        }
        let y = Tensor::new(av.shape().to_vec(), av.data().iter().zip(bv.data()).map(|(&p, &q)| p + q).collect())?;
        let needs = self.needs(&[a, b]);
        Ok(self.push(y, Op::Add(a, b), needs))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let c = T::from_f64_lossy(c);
        let y = self.value(x).map(|v| v * c);
        let needs = self.needs(&[x]);
        self.push(y, Op::Scale(x, c), needs)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let m = xv.sum() / T::from_usize(xv.numel()).unwrap();
        let needs = self.needs(&[x]);
        self.push(Tensor::scalar(m), Op::Mean(x), needs)
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `targets`.
    /// The forward value clamps probabilities to `[eps, 1 - eps]`; the
    /// gradient is `(sigmoid(x) - y) / N`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[T]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.numel() != targets.len() {
            return Err(TensorError::mismatch("bce_with_logits", "targets", lv.numel(), targets.len()));
        }
        let eps = T::from_f64_lossy(PROB_EPS);
        let total: T = lv
            .data()
            .iter()
            .zip(targets)
            .map(|(&x, &y)| {
                let p = sigmoid(x).max(eps).min(T::one() - eps);
                -(y * p.ln() + (T::one() - y) * (T::one() - p).ln())
            })
            .sum();
        let loss = total / T::from_usize(targets.len()).unwrap();
        let needs = self.needs(&[logits]);
        Ok(self.push(
            finite("bce_with_logits", Tensor::scalar(loss))?,
            Op::BceWithLogits {
                logits,
                targets: targets.to_vec(),
            },
            needs,
        ))
    }

    /// Mean of `-log softmax(logits)[label]` over rows of `[N, k]` logits.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.rank() != 2 || lv.dim(0) != labels.len() {
            return Err(TensorError::mismatch("softmax_cross_entropy", "batch", labels.len(), lv.dim(0)));
        }
        let k = lv.dim(1);
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(TensorError::LabelOutOfRange { label: bad, classes: k });
        }
        let log_probs = log_softmax_rows(lv.data(), k);
        let total: T = labels.iter().enumerate().map(|(i, &l)| -log_probs[i * k + l]).sum();
        let loss = total / T::from_usize(labels.len()).unwrap();
        let needs = self.needs(&[logits]);
        Ok(self.push(
            finite("softmax_cross_entropy", Tensor::scalar(loss))?,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                log_probs,
            },
            needs,
        ))
    }

    /// Gradients of the scalar `loss` with respect to every variable and
    /// trainable parameter that influences it.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].needs_grad {
            return Ok(Gradients {
                grads,
                params: HashMap::new(),
            });
        }
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Input | Op::Variable | Op::Param) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
        }

        let params = self
            .params
            .iter()
            .filter(|(_, v)| grads[v.0].is_some())
            .map(|(&id, &v)| (id, v))
            .collect();
        Ok(Gradients { grads, params })
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        let mut acc = |v: Var, d: Vec<T>| {
            match grads[v.0].as_mut() {
                Some(existing) => existing.iter_mut().zip(&d).for_each(|(a, &b)| *a += b),
                None => grads[v.0] = Some(d),
            }
        };
        let unary = |x: Var, f: &dyn Fn(T, T, T) -> T| -> Vec<T> {
            // f(input, output, upstream)
            let xv = self.value(x).data();
            xv.iter()
                .zip(node.value.data())
                .zip(g)
                .map(|((&a, &y), &d)| f(a, y, d))
                .collect()
        };
        match &node.op {
            Op::Input | Op::Variable | Op::Param => {}
            Op::Conv1d { x, w, b, plan } => {
                let ConvGrads { input, weight, bias } = plan.backward(
                    self.value(*x),
                    self.value(*w),
                    g,
                    Wants {
                        input: wants(*x),
                        weight: wants(*w),
                        bias: wants(*b),
                    },
                );
                scatter(&mut acc, [(*x, input), (*w, weight), (*b, bias)]);
            }
            Op::Conv2d { x, w, b, plan } => {
                let ConvGrads { input, weight, bias } = plan.backward(
                    self.value(*x),
                    self.value(*w),
                    g,
                    Wants {
                        input: wants(*x),
                        weight: wants(*w),
                        bias: wants(*b),
                    },
                );
                scatter(&mut acc, [(*x, input), (*w, weight), (*b, bias)]);
            }
            Op::Deconv2d { x, w, b, plan } => {
                let ConvGrads { input, weight, bias } = plan.backward(
                    self.value(*x),
                    self.value(*w),
                    g,
                    Wants {
                        input: wants(*x),
                        weight: wants(*w),
                        bias: wants(*b),
                    },
                );
                scatter(&mut acc, [(*x, input), (*w, weight), (*b, bias)]);
            }
            Op::BatchNorm { x, gamma, beta, cache } => {
                let bg = batchnorm_backward(self.value(*x).shape(), self.value(*gamma).data(), cache, g, wants(*x));
                let (dgamma, dbeta) = (wants(*gamma).then_some(bg.gamma), wants(*beta).then_some(bg.beta));
                scatter(&mut acc, [(*x, bg.input), (*gamma, dgamma), (*beta, dbeta)]);
            }
            Op::Relu(x) => acc(*x, unary(*x, &|a, _, d| if a > T::zero() { d } else { T::zero() })),
            Op::LeakyRelu(x, s) => {
                let s = *s;
                acc(*x, unary(*x, &|a, _, d| if a > T::zero() { d } else { s * d }))
            }
            Op::Sigmoid(x) => acc(*x, unary(*x, &|_, y, d| d * y * (T::one() - y))),
            Op::Tanh(x) => acc(*x, unary(*x, &|_, y, d| d * (T::one() - y * y))),
            Op::Softmax(x) => {
                let width = *node.value.shape().last().unwrap();
                let mut dx = vec![T::zero(); g.len()];
                for ((y, dy), out) in node.value.data().chunks(width).zip(g.chunks(width)).zip(dx.chunks_mut(width)) {
                    let dot: T = y.iter().zip(dy).map(|(&a, &b)| a * b).sum();
                    for ((o, &yi), &di) in out.iter_mut().zip(y).zip(dy) {
                        *o = yi * (di - dot);
                    }
                }
                acc(*x, dx);
            }
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let batch = xv.dim(0);
                let inputs = xv.numel() / batch;
                let outputs = wv.dim(0);
                if wants(*x) {
                    acc(*x, fc_backward_input(wv.data(), g, batch, inputs, outputs));
                }
                if wants(*w) {
                    acc(*w, fc_backward_weight(xv.data(), g, batch, inputs, outputs));
                }
                if wants(*b) {
                    acc(*b, fc_backward_bias(g, outputs));
                }
            }
            Op::TimeAvgPool(x) => {
                let t = self.value(*x).dim(2);
                let tt = T::from_usize(t).unwrap();
                let dx = g.iter().flat_map(|&d| std::iter::repeat_n(d / tt, t)).collect();
                acc(*x, dx);
            }
            Op::Reshape(x) => acc(*x, g.to_vec()),
            Op::Add(a, b) => {
                if wants(*a) {
                    acc(*a, g.to_vec());
                }
                if wants(*b) {
                    acc(*b, g.to_vec());
                }
            }
            Op::Scale(x, c) => acc(*x, g.iter().map(|&d| d * *c).collect()),
            Op::Mean(x) => {
                let n = self.value(*x).numel();
                let d = g[0] / T::from_usize(n).unwrap();
                acc(*x, vec![d; n]);
            }
            Op::BceWithLogits { logits, targets } => {
                let n = T::from_usize(targets.len()).unwrap();
                let dx = self
                    .value(*logits)
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&x, &y)| g[0] * (sigmoid(x) - y) / n)
                    .collect();
                acc(*logits, dx);
            }
            Op::SoftmaxCrossEntropy { logits, labels, log_probs } => {
                let k = self.value(*logits).dim(1);
                let n = T::from_usize(labels.len()).unwrap();
                let mut dx: Vec<T> = log_probs.iter().map(|&lp| g[0] * lp.exp() / n).collect();
                for (i, &l) in labels.iter().enumerate() {
                    dx[i * k + l] -= g[0] / n;
                }
                acc(*logits, dx);
            }
        }
        Ok(())
    }
}

fn scatter<T, const N: usize>(acc: &mut impl FnMut(Var, Vec<T>), items: [(Var, Option<Vec<T>>); N]) {
    for (v, d) in items {
        if let Some(d) = d {
            acc(v, d);
        }
    }
}

/// Result of a backward sweep.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    params: HashMap<ParamId, Var>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of a [`Tape::variable`] or parameter node.
    pub fn wrt(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn param(&self, id: ParamId) -> Option<&[T]> {
        self.params.get(&id).and_then(|v| self.wrt(*v))
    }

    /// Parameter ids that received a gradient.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self.params.keys().copied().collect();
        ids.sort();
        ids
    }

    /// Adds parameter gradients into the stores' gradient slots.
    pub fn accumulate_into(&self, store: &mut ParamStore<T>) -> Result<()> {
        for id in self.param_ids() {
            if let Some(g) = self.param(id) {
                store.get_mut(id).accumulate_grad(g)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_branch_gets_no_gradient() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add("w", Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap());
        let b = store.add("b", Tensor::zeros(vec![1]));
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(vec![1, 2], vec![3.0, 4.0]).unwrap()).unwrap();
        let wv = tape.param(&store, w, false);
        let bv = tape.param(&store, b, true);
        let y = tape.linear(x, wv, bv).unwrap();
        let loss = tape.mean(y);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.param(w).is_none());
        assert_eq!(grads.param(b).unwrap(), &[1.0]);
    }

    #[test]
    fn shared_parameter_accumulates_once_per_use() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add("w", Tensor::new(vec![1, 1], vec![2.0]).unwrap());
        let b = store.add("b", Tensor::zeros(vec![1]));
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(vec![1, 1], vec![3.0]).unwrap()).unwrap();
        let w1 = tape.param(&store, w, true);
        let b1 = tape.param(&store, b, true);
        let h = tape.linear(x, w1, b1).unwrap();
        let w2 = tape.param(&store, w, true);
        assert_eq!(w1, w2);
        let y = tape.linear(h, w2, b1).unwrap();
        let loss = tape.mean(y);
        // y = w * (w * x) -> dy/dw = 2 w x = 12
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.param(w).unwrap(), &[12.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.variable(Tensor::zeros(vec![2])).unwrap();
        assert!(matches!(tape.backward(x), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn nan_input_rejected_at_boundary() {
        let mut tape = Tape::<f32>::new();
        assert!(tape.input(Tensor::new(vec![1], vec![f32::NAN]).unwrap()).is_err());
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        let mut tape = Tape::<f64>::new();
        let x = tape.variable(Tensor::zeros(vec![1, 3])).unwrap();
        assert_eq!(
            tape.softmax_cross_entropy(x, &[3]).unwrap_err(),
            TensorError::LabelOutOfRange { label: 3, classes: 3 }
        );
    }

    #[test]
    fn uniform_logits_give_log_k() {
        let mut tape = Tape::<f64>::new();
        let x = tape.variable(Tensor::zeros(vec![2, 4])).unwrap();
        let l = tape.softmax_cross_entropy(x, &[0, 3]).unwrap();
        assert!((tape.value(l).item() - 4f64.ln()).abs() < 1e-12);
    }
}
