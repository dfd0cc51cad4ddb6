//! Parameter layout and forward passes of the four networks.

use rand::Rng;
use voice2face_tensor::init::{fan_in_uniform, he_uniform};
use voice2face_tensor::{BatchNormState, LayerSpec, NormMode, ParamId, ParamStore, Real, Tape, Tensor, Var};

use super::arch::{Activation, LEAKY_SLOPE};
use crate::error::Result;

/// A conv or deconv layer with its activation.
#[derive(Clone, Debug)]
pub struct ConvLayer {
    pub spec: LayerSpec,
    pub activation: Activation,
    pub weight: ParamId,
    pub bias: ParamId,
}

/// Batch-norm affine parameters and running statistics. The statistics
/// live in the parameter store as non-trainable buffers.
#[derive(Clone, Debug)]
pub struct NormLayer {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

fn weight_layout(spec: &LayerSpec, in_side: usize) -> (Vec<usize>, usize, usize) {
    match *spec {
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel,
            ..
        } => (vec![out_channels, in_channels, kernel], out_channels, in_channels * kernel),
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            ..
        } => (vec![out_channels, in_channels, kernel, kernel], out_channels, in_channels * kernel * kernel),
        LayerSpec::Deconv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            ..
        } => {
            let taps = kernel.div_ceil(stride).min(in_side);
            (vec![in_channels, out_channels, kernel, kernel], out_channels, in_channels * taps * taps)
        }
        LayerSpec::FullyConnected { inputs, outputs } => (vec![outputs, inputs], outputs, inputs),
        _ => unreachable!("layer {spec} has no weights"),
    }
}

fn add_conv<T: Real, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    name: &str,
    spec: LayerSpec,
    activation: Activation,
    in_side: usize,
    rng: &mut R,
) -> ConvLayer {
    let (shape, outputs, fan_in) = weight_layout(&spec, in_side);
    let weight = store.add(format!("{name}.weight"), he_uniform(shape, fan_in, rng));
    let bias = store.add(format!("{name}.bias"), Tensor::zeros(vec![outputs]));
    ConvLayer {
        spec,
        activation,
        weight,
        bias,
    }
}

fn apply<T: Real>(tape: &mut Tape<T>, x: Var, act: Activation) -> Var {
    match act {
        Activation::None | Activation::BnRelu => x,
        Activation::Relu => tape.relu(x),
        Activation::LeakyRelu => tape.leaky_relu(x, LEAKY_SLOPE),
        Activation::Sigmoid => tape.sigmoid(x),
        Activation::Softmax => tape.softmax(x),
        Activation::Tanh => tape.tanh(x),
    }
}

impl ConvLayer {
    pub fn params(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }

    /// Linear part only.
    fn linear<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var, trainable: bool) -> Result<Var> {
        let w = tape.param(store, self.weight, trainable);
        let b = tape.param(store, self.bias, trainable);
        Ok(match self.spec {
            LayerSpec::Conv1d { stride, padding, .. } => tape.conv1d(x, w, b, stride, padding)?,
            LayerSpec::Conv2d { stride, padding, .. } => tape.conv2d(x, w, b, stride, padding)?,
            LayerSpec::Deconv2d {
                stride,
                padding,
                output_padding,
                ..
            } => tape.deconv2d(x, w, b, stride, padding, output_padding)?,
            LayerSpec::FullyConnected { .. } => tape.linear(x, w, b)?,
            _ => unreachable!("layer {} has no weights", self.spec),
        })
    }

    fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var, trainable: bool) -> Result<Var> {
        let y = self.linear(tape, store, x, trainable)?;
        Ok(apply(tape, y, self.activation))
    }
}

impl NormLayer {
    fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        NormLayer {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(vec![channels], T::one())),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(vec![channels])),
            running_mean: store.add(format!("{name}.running_mean"), Tensor::zeros(vec![channels])),
            running_var: store.add(format!("{name}.running_var"), Tensor::full(vec![channels], T::one())),
        }
    }

    fn state<T: Real>(&self, store: &ParamStore<T>) -> BatchNormState<T> {
        let mut s = BatchNormState::new(store.get(self.running_mean).numel());
        s.running_mean = store.get(self.running_mean).data().to_vec();
        s.running_var = store.get(self.running_var).data().to_vec();
        s
    }
}

/// Strided 1-D convolutions with batch norm and ReLU, pooled over time.
#[derive(Clone, Debug)]
pub struct VoiceEmbedder {
    pub convs: Vec<ConvLayer>,
    pub norms: Vec<NormLayer>,
}

impl VoiceEmbedder {
    pub fn new<T: Real, R: Rng + ?Sized>(store: &mut ParamStore<T>, layers: &[(LayerSpec, Activation)], rng: &mut R) -> Self {
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        for (i, (spec, act)) in layers.iter().enumerate() {
            if let LayerSpec::Conv1d { out_channels, .. } = *spec {
                convs.push(add_conv(store, &format!("embedder.conv{}", i + 1), spec.clone(), *act, 1, rng));
                norms.push(NormLayer::new(store, &format!("embedder.bn{}", i + 1), out_channels));
            }
        }
        VoiceEmbedder { convs, norms }
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.convs
            .iter()
            .zip(&self.norms)
            .flat_map(|(c, n)| [c.weight, c.bias, n.gamma, n.beta])
            .collect()
    }

    pub fn buffers(&self) -> Vec<ParamId> {
        self.norms.iter().flat_map(|n| [n.running_mean, n.running_var]).collect()
    }

    fn run<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        trainable: bool,
        mode: NormMode,
    ) -> Result<(Var, Vec<BatchNormState<T>>)> {
        let mut h = x;
        let mut states = Vec::with_capacity(self.norms.len());
        for (conv, norm) in self.convs.iter().zip(&self.norms) {
            h = conv.linear(tape, store, h, trainable)?;
            let gamma = tape.param(store, norm.gamma, trainable);
            let beta = tape.param(store, norm.beta, trainable);
            let mut state = norm.state(store);
            h = tape.batch_norm(h, gamma, beta, &mut state, mode)?;
            h = tape.relu(h);
            states.push(state);
        }
        Ok((tape.time_avg_pool(h)?, states))
    }

    /// Inference: `[N, 64, T] -> [N, E]` using running statistics.
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var, trainable: bool) -> Result<Var> {
        Ok(self.run(tape, store, x, trainable, NormMode::Infer)?.0)
    }

    /// Training: batch statistics, and the running statistics in `store`
    /// are updated.
    pub fn forward_train<T: Real>(&self, tape: &mut Tape<T>, store: &mut ParamStore<T>, x: Var) -> Result<Var> {
        let (y, states) = self.run(tape, store, x, true, NormMode::Train)?;
        for (norm, state) in self.norms.iter().zip(states) {
            store.get_mut(norm.running_mean).data_mut().copy_from_slice(&state.running_mean);
            store.get_mut(norm.running_var).data_mut().copy_from_slice(&state.running_var);
        }
        Ok(y)
    }
}

/// Transposed convolutions from a `E x 1 x 1` code to an RGB image.
#[derive(Clone, Debug)]
pub struct Generator {
    pub layers: Vec<ConvLayer>,
    pub embedding_dim: usize,
}

impl Generator {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        layers: &[(LayerSpec, Activation)],
        embedding_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut side = 1;
        let mut out = Vec::new();
        for (i, (spec, act)) in layers.iter().enumerate() {
            out.push(add_conv(store, &format!("generator.deconv{}", i + 1), spec.clone(), *act, side, rng));
            side = spec.output_shape(&[spec_in_channels(spec), side, side]).expect("valid generator spec")[1];
        }
        Generator {
            layers: out,
            embedding_dim,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(ConvLayer::params).collect()
    }

    /// `[N, E] -> [N, 3, S, S]`.
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, e: Var, trainable: bool) -> Result<Var> {
        let n = tape.value(e).dim(0);
        let mut h = tape.reshape(e, vec![n, self.embedding_dim, 1, 1])?;
        for layer in &self.layers {
            h = layer.forward(tape, store, h, trainable)?;
        }
        Ok(h)
    }
}

fn spec_in_channels(spec: &LayerSpec) -> usize {
    match *spec {
        LayerSpec::Conv1d { in_channels, .. } | LayerSpec::Conv2d { in_channels, .. } | LayerSpec::Deconv2d { in_channels, .. } => {
            in_channels
        }
        _ => 0,
    }
}

/// Leaky-ReLU conv stack ending in a `F x 1 x 1` feature.
#[derive(Clone, Debug)]
pub struct FaceTrunk {
    pub layers: Vec<ConvLayer>,
}

impl FaceTrunk {
    pub fn new<T: Real, R: Rng + ?Sized>(store: &mut ParamStore<T>, prefix: &str, layers: &[(LayerSpec, Activation)], rng: &mut R) -> Self {
        FaceTrunk {
            layers: layers
                .iter()
                .enumerate()
                .map(|(i, (spec, act))| add_conv(store, &format!("{prefix}.conv{}", i + 1), spec.clone(), *act, 1, rng))
                .collect(),
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(ConvLayer::params).collect()
    }

    /// `[N, 3, S, S] -> [N, F]`.
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var, trainable: bool) -> Result<Var> {
        let mut h = x;
        for layer in &self.layers {
            h = layer.forward(tape, store, h, trainable)?;
        }
        let v = tape.value(h);
        let (n, f) = (v.dim(0), v.numel() / v.dim(0));
        Ok(tape.reshape(h, vec![n, f])?)
    }
}

/// Fully connected output layer producing logits.
#[derive(Clone, Debug)]
pub struct Head {
    pub layer: ConvLayer,
}

impl Head {
    pub fn new<T: Real, R: Rng + ?Sized>(store: &mut ParamStore<T>, name: &str, spec: (LayerSpec, Activation), rng: &mut R) -> Self {
        let (shape, outputs, fan_in) = weight_layout(&spec.0, 1);
        let weight = store.add(format!("{name}.weight"), fan_in_uniform(shape, fan_in, rng));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(vec![outputs]));
        Head {
            layer: ConvLayer {
                spec: spec.0,
                activation: spec.1,
                weight,
                bias,
            },
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layer.params().to_vec()
    }

    /// Pre-activation logits `[N, outputs]`.
    pub fn logits<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, features: Var, trainable: bool) -> Result<Var> {
        self.layer.linear(tape, store, features, trainable)
    }
}
