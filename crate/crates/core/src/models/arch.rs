//! Layer-by-layer description of the four networks and a shape-only dry run.

use std::fmt;

use serde::{Deserialize, Serialize};
use voice2face_tensor::LayerSpec;

use crate::audio::MEL_BINS;
use crate::error::{Error, Result};
use crate::face::FACE_CHANNELS;

pub const EMBEDDING_DIM: usize = 64;
pub const FEATURE_DIM: usize = 64;
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    None,
    BnRelu,
    Relu,
    LeakyRelu,
    Sigmoid,
    Softmax,
    Tanh,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::None => "-",
            Activation::BnRelu => "BN + ReLU",
            Activation::Relu => "ReLU",
            Activation::LeakyRelu => "LReLU",
            Activation::Sigmoid => "Sigmoid",
            Activation::Softmax => "Softmax",
            Activation::Tanh => "Tanh",
        })
    }
}

/// Widths of every network. Hidden widths may be narrowed for small
/// machines; the embedding and feature widths stay fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// Hidden conv widths of the voice embedder; a final conv maps to
    /// `embedding_dim`.
    pub embedder_channels: Vec<usize>,
    pub embedding_dim: usize,
    /// Deconv widths of the generator, starting at the 4x4 layer.
    pub generator_channels: Vec<usize>,
    /// Conv widths of the face trunk, starting with the 1x1 layer.
    pub trunk_channels: Vec<usize>,
    pub feature_dim: usize,
    /// Classifier width: number of training identities.
    pub classes: usize,
    pub shared_trunk: bool,
    pub generator_tanh: bool,
}

impl Architecture {
    /// Full-width networks.
    pub fn full(classes: usize) -> Self {
        Architecture {
            embedder_channels: vec![256, 384, 576, 864],
            embedding_dim: EMBEDDING_DIM,
            generator_channels: vec![1024, 512, 256, 128, 64],
            trunk_channels: vec![32, 64, 128, 256, 512],
            feature_dim: FEATURE_DIM,
            classes,
            shared_trunk: true,
            generator_tanh: true,
        }
    }

    /// Hidden widths divided by `divisor` (at least 1 channel each).
    pub fn narrowed(mut self, divisor: usize) -> Self {
        let d = divisor.max(1);
        let shrink = |v: &mut Vec<usize>| v.iter_mut().for_each(|c| *c = (*c / d).max(1));
        shrink(&mut self.embedder_channels);
        shrink(&mut self.generator_channels);
        shrink(&mut self.trunk_channels);
        self
    }

    /// 8x8 images and 4-channel layers, for gradient checks.
    pub fn miniature(classes: usize) -> Self {
        Architecture {
            embedder_channels: vec![4],
            embedding_dim: 4,
            generator_channels: vec![4, 4],
            trunk_channels: vec![4, 4],
            feature_dim: 4,
            classes,
            shared_trunk: true,
            generator_tanh: true,
        }
    }

    pub fn image_size(&self) -> usize {
        4 << (self.generator_channels.len() - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.generator_channels.is_empty() || self.trunk_channels.is_empty() {
            return bad("generator and trunk need at least one layer".into());
        }
        if self.generator_channels.len() != self.trunk_channels.len() {
            return bad(format!(
                "generator has {} deconv stages but the trunk has {} conv stages; image sizes would differ",
                self.generator_channels.len(),
                self.trunk_channels.len()
            ));
        }
        if self.generator_channels.len() > 8 {
            return bad("more than 8 generator stages".into());
        }
        let widths = [&self.embedder_channels, &self.generator_channels, &self.trunk_channels];
        if widths.iter().any(|w| w.contains(&0)) || self.embedding_dim == 0 || self.feature_dim == 0 {
            return bad("layer widths must be positive".into());
        }
        if self.classes < 2 {
            return bad(format!("classifier needs at least 2 classes, got {}", self.classes));
        }
        Ok(())
    }

    pub fn embedder_layers(&self) -> Vec<(LayerSpec, Activation)> {
        let mut layers = Vec::new();
        let mut c_in = MEL_BINS;
        for &c in self.embedder_channels.iter().chain(std::iter::once(&self.embedding_dim)) {
            layers.push((LayerSpec::conv1d(c_in, c, 3, 2, 1), Activation::BnRelu));
            c_in = c;
        }
        layers.push((LayerSpec::TimeAvgPool, Activation::None));
        layers
    }

    pub fn generator_layers(&self) -> Vec<(LayerSpec, Activation)> {
        let ch = &self.generator_channels;
        let mut layers = vec![(LayerSpec::deconv2d(self.embedding_dim, ch[0], 4, 1, 0, 0), Activation::Relu)];
        for w in ch.windows(2) {
            layers.push((LayerSpec::deconv2d(w[0], w[1], 3, 2, 1, 1), Activation::Relu));
        }
        let last = if self.generator_tanh { Activation::Tanh } else { Activation::None };
        layers.push((LayerSpec::deconv2d(*ch.last().unwrap(), FACE_CHANNELS, 1, 1, 0, 0), last));
        layers
    }

    /// Conv layers shared by the discriminator and classifier.
    pub fn trunk_layers(&self) -> Vec<(LayerSpec, Activation)> {
        let ch = &self.trunk_channels;
        let mut layers = vec![(LayerSpec::conv2d(FACE_CHANNELS, ch[0], 1, 1, 0), Activation::LeakyRelu)];
        for w in ch.windows(2) {
            layers.push((LayerSpec::conv2d(w[0], w[1], 3, 2, 1), Activation::LeakyRelu));
        }
        layers.push((LayerSpec::conv2d(*ch.last().unwrap(), self.feature_dim, 4, 1, 0), Activation::LeakyRelu));
        layers
    }

    pub fn discriminator_head(&self) -> (LayerSpec, Activation) {
        (
            LayerSpec::FullyConnected {
                inputs: self.feature_dim,
                outputs: 1,
            },
            Activation::Sigmoid,
        )
    }

    pub fn classifier_head(&self) -> (LayerSpec, Activation) {
        (
            LayerSpec::FullyConnected {
                inputs: self.feature_dim,
                outputs: self.classes,
            },
            Activation::Softmax,
        )
    }

    fn run(input: Vec<usize>, layers: &[(LayerSpec, Activation)]) -> Result<Vec<LayerShape>> {
        let mut rows = vec![LayerShape {
            layer: "Input".into(),
            activation: Activation::None,
            output: input.clone(),
        }];
        let mut shape = input;
        for (spec, act) in layers {
            shape = spec.output_shape(&shape)?;
            rows.push(LayerShape {
                layer: spec.to_string(),
                activation: *act,
                output: shape.clone(),
            });
        }
        Ok(rows)
    }

    pub fn dry_run_embedder(&self, frames: usize) -> Result<Vec<LayerShape>> {
        Self::run(vec![MEL_BINS, frames], &self.embedder_layers())
    }

    pub fn dry_run_generator(&self) -> Result<Vec<LayerShape>> {
        Self::run(vec![self.embedding_dim, 1, 1], &self.generator_layers())
    }

    pub fn dry_run_discriminator(&self) -> Result<Vec<LayerShape>> {
        let mut layers = self.trunk_layers();
        layers.push(self.discriminator_head());
        let s = self.image_size();
        Self::run(vec![FACE_CHANNELS, s, s], &layers)
    }

    pub fn dry_run_classifier(&self) -> Result<Vec<LayerShape>> {
        let mut layers = self.trunk_layers();
        layers.push(self.classifier_head());
        let s = self.image_size();
        Self::run(vec![FACE_CHANNELS, s, s], &layers)
    }
}

/// One row of a dry run.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerShape {
    pub layer: String,
    pub activation: Activation,
    pub output: Vec<usize>,
}

impl fmt::Display for LayerShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.output.iter().map(usize::to_string).collect();
        write!(f, "{:<16} {:<10} {}", self.layer, self.activation, dims.join("x"))
    }
}

/// Dry-run tables of all four networks as text.
pub fn shape_report(arch: &Architecture, frames: usize) -> Result<String> {
    let mut out = String::new();
    let sections = [
        ("Voice embedding network", arch.dry_run_embedder(frames)?),
        ("Generator", arch.dry_run_generator()?),
        ("Discriminator", arch.dry_run_discriminator()?),
        ("Classifier", arch.dry_run_classifier()?),
    ];
    for (name, rows) in sections {
        out.push_str(name);
        out.push('\n');
        for r in rows {
            out.push_str(&format!("  {r}\n"));
        }
    }
    Ok(out)
}
