use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Architecture and learning-rate schedule of one embedding network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    /// Hidden layer widths (rectified). The output layer is linear.
    pub layer_widths: Vec<usize>,
    pub embedding_dim: usize,
    /// Layer whose activation is exposed as the shallow feature map.
    pub shallow_tap_index: usize,
    /// Feed the raw input into the last hidden layer alongside the previous activation.
    #[serde(default)]
    pub skip: bool,
    pub lr_start: f64,
    pub lr_end: f64,
    pub epochs: usize,
    #[serde(default)]
    pub weight_decay: f64,
}

impl NetConfig {
    pub fn new(input_dim: usize, layer_widths: Vec<usize>, embedding_dim: usize) -> Self {
        let shallow_tap_index = layer_widths.len().saturating_sub(1);
        NetConfig {
            input_dim,
            layer_widths,
            embedding_dim,
            shallow_tap_index,
            skip: false,
            lr_start: 0.02,
            lr_end: 0.01,
            epochs: 1,
            weight_decay: 0.0,
        }
    }

    pub fn with_schedule(mut self, lr_start: f64, lr_end: f64, epochs: usize) -> Self {
        self.lr_start = lr_start;
        self.lr_end = lr_end;
        self.epochs = epochs;
        self
    }

    pub fn with_skip(mut self, skip: bool) -> Self {
        self.skip = skip;
        self
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn n_layers(&self) -> usize {
        self.layer_widths.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.embedding_dim == 0 || self.layer_widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.shallow_tap_index >= self.n_layers() {
            return Err(Error::Config(format!(
                "shallow tap {} beyond {} layers",
                self.shallow_tap_index,
                self.n_layers()
            )));
        }
        if !(self.lr_end > 0.0 && self.lr_start >= self.lr_end) {
            return Err(Error::Config(format!(
                "learning rates must satisfy start >= end > 0, got {} => {}",
                self.lr_start, self.lr_end
            )));
        }
        if self.skip && self.layer_widths.len() < 2 {
            return Err(Error::Config("skip connection needs two hidden layers".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("negative weight decay".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `out x in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Dense feedforward stack: rectifier on hidden layers, identity on the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricNet {
    pub layers: Vec<Dense>,
    input_dim: usize,
    tap: usize,
    skip_layer: Option<usize>,
}

/// Per-layer inputs and outputs of a batch forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct Activations {
    inputs: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
    tap: usize,
}

impl Activations {
    pub fn embeddings(&self) -> ArrayView2<'_, f64> {
        self.outputs.last().expect("at least one layer").view()
    }

    pub fn shallow(&self) -> ArrayView2<'_, f64> {
        self.outputs[self.tap].view()
    }

    /// Output of every layer, hidden layers after rectification.
    pub fn layer_outputs(&self) -> &[Array2<f64>] {
        &self.outputs
    }
}

/// Same shapes as the network parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &MetricNet) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weight.raw_dim()), Array1::zeros(l.bias.len())))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            *w += ow;
            *b += ob;
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().all(|v| *v == 0.0) && b.iter().all(|v| *v == 0.0))
    }
}

impl MetricNet {
    /// Glorot-uniform weights, zero biases.
    pub fn new(cfg: &NetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng::rng(seed, &[rng::tag("init")]);
        let mut widths = vec![cfg.input_dim];
        widths.extend(&cfg.layer_widths);
        widths.push(cfg.embedding_dim);
        let skip_layer = cfg.skip.then(|| cfg.layer_widths.len() - 1);
        let mut layers = Vec::new();
        for l in 0..widths.len() - 1 {
            let fan_in = widths[l] + if skip_layer == Some(l) { cfg.input_dim } else { 0 };
            let fan_out = widths[l + 1];
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weight = Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-limit..=limit));
            layers.push(Dense {
                weight,
                bias: Array1::zeros(fan_out),
            });
        }
        Ok(MetricNet {
            layers,
            input_dim: cfg.input_dim,
            tap: cfg.shallow_tap_index,
            skip_layer,
        })
    }

    /// Wraps explicit layers; no skip connection, tap at the penultimate layer.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Config("network needs a layer".into()))?;
        let input_dim = first.weight.ncols();
        for pair in layers.windows(2) {
            if pair[1].weight.ncols() != pair[0].weight.nrows() {
                return Err(Error::Shape {
                    expected: pair[0].weight.nrows(),
                    got: pair[1].weight.ncols(),
                });
            }
        }
        let tap = layers.len().saturating_sub(2);
        Ok(MetricNet {
            layers,
            input_dim,
            tap,
            skip_layer: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers.last().map(|l| l.weight.nrows()).unwrap_or(0)
    }

    pub fn shallow_dim(&self) -> usize {
        self.layers[self.tap].weight.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<Activations> {
        if x.ncols() != self.input_dim {
            return Err(Error::Shape {
                expected: self.input_dim,
                got: x.ncols(),
            });
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let input = match l {
                0 => x.to_owned(),
                _ if self.skip_layer == Some(l) => {
                    concatenate![Axis(1), outputs[l - 1].view(), x]
                }
                _ => outputs[l - 1].clone(),
            };
            let mut out = input.dot(&layer.weight.t());
            out += &layer.bias;
            if l < last {
                out.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(input);
            outputs.push(out);
        }
        Ok(Activations {
            inputs,
            outputs,
            tap: self.tap,
        })
    }

    /// Embeds a single feature vector, returning `(embedding, shallow features)`.
    pub fn forward(&self, x: ArrayView1<'_, f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        let batch = x.insert_axis(Axis(0));
        let acts = self.forward_batch(batch)?;
        Ok((
            acts.embeddings().row(0).to_owned(),
            acts.shallow().row(0).to_owned(),
        ))
    }

    pub fn embed(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut acts = self.forward_batch(x)?;
        Ok(acts.outputs.pop().expect("at least one layer"))
    }

    /// Backpropagates `d_embeddings` (batch x embedding_dim) through the activations.
    pub fn backward(&self, acts: &Activations, d_embeddings: ArrayView2<'_, f64>) -> Gradients {
        let last = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = d_embeddings.to_owned();
        for l in (0..self.layers.len()).rev() {
            if l < last {
                ndarray::Zip::from(&mut delta)
                    .and(&acts.outputs[l])
                    .for_each(|d, &o| {
                        if o <= 0.0 {
                            *d = 0.0;
                        }
                    });
            }
            let gw = delta.t().dot(&acts.inputs[l]);
            let gb = delta.sum_axis(Axis(0));
            grads.push((gw, gb));
            if l > 0 {
                let d_input = delta.dot(&self.layers[l].weight);
                delta = if self.skip_layer == Some(l) {
                    let prev = self.layers[l - 1].weight.nrows();
                    d_input.slice(s![.., ..prev]).to_owned()
                } else {
                    d_input
                };
            }
        }
        grads.reverse();
        Gradients { layers: grads }
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) {
        let mut k = 0;
        for l in &mut self.layers {
            for v in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *v = params[k];
                k += 1;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}
