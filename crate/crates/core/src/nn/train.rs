//! Small-scale training used to produce the shipped fixtures.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::backward::{backward_pass, ParamGrads, Seed};
use super::forward::{forward, prediction_of};
use super::{Activation, Input, Layer, LayerKind, Metadata, NeuralGraph};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One layer of an architecture, before weights exist.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTemplate {
    pub kind: LayerKind,
    pub activation: Activation,
    pub bias: bool,
}

impl LayerTemplate {
    /// A bias-free layer.
    pub fn new(kind: LayerKind, activation: Activation) -> Self {
        Self {
            kind,
            activation,
            bias: false,
        }
    }

    pub fn with_bias(mut self) -> Self {
        self.bias = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    pub layers: Vec<LayerTemplate>,
    pub metadata: Metadata,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    pub input: Input<T>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            learning_rate: 0.01,
            epochs: 20,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainReport {
    /// Accuracy on the training set after the last epoch.
    pub accuracy: f64,
    pub final_loss: f64,
    pub epochs: usize,
}

/// `(weight count, fan_in, fan_out)` for each contiguous weight block.
fn fans(kind: &LayerKind) -> Vec<(usize, usize, usize)> {
    match kind {
        LayerKind::Dense { inputs, outputs } => vec![(inputs * outputs, *inputs, *outputs)],
        LayerKind::Embedding { vocab, dim, .. } => vec![(vocab * dim, *dim, *dim)],
        LayerKind::Conv1d { channels, widths, .. } => {
            let filters = widths.len();
            widths
                .iter()
                .map(|&w| (w * channels, w * channels, w * filters))
                .collect()
        }
        LayerKind::Conv2d {
            in_channels,
            filters,
            kernel,
            ..
        } => {
            let k2 = kernel * kernel;
            vec![(filters * in_channels * k2, in_channels * k2, filters * k2)]
        }
        _ => Vec::new(),
    }
}

/// Glorot-uniform weights and zero biases, drawn from a seeded ChaCha stream.
pub fn initialize<T: Scalar>(arch: &ArchSpec, seed: u64) -> Result<NeuralGraph<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = arch
        .layers
        .iter()
        .map(|t| {
            let mut weights = Vec::with_capacity(t.kind.weight_count());
            for (count, fan_in, fan_out) in fans(&t.kind) {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                weights.extend((0..count).map(|_| T::lit(rng.random_range(-limit..limit))));
            }
            let bias = match (t.bias, t.kind.bias_len()) {
                (true, Some(n)) => Some(vec![T::zero(); n]),
                _ => None,
            };
            Layer::new(t.kind.clone(), t.activation, weights, bias)
        })
        .collect();
    NeuralGraph::new(layers, arch.metadata.clone())
}

/// Loss of one example and the gradient with respect to the output pre-activations.
fn loss_and_seed<T: Scalar>(activation: Activation, out: &[T], label: usize) -> (f64, Vec<T>) {
    let eps = 1e-12;
    match activation {
        Activation::Softmax => {
            let p = out[label].to_f64_lossy().max(eps);
            let g = out
                .iter()
                .enumerate()
                .map(|(i, &a)| if i == label { a - T::one() } else { a })
                .collect();
            (-p.ln(), g)
        }
        // per-unit binary cross-entropy; a single unit encodes P(class 1)
        _ => {
            let mut loss = 0.0;
            let g = out
                .iter()
                .enumerate()
                .map(|(i, &a)| {
                    let y = if out.len() == 1 { label == 1 } else { i == label };
                    let p = a.to_f64_lossy().clamp(eps, 1.0 - eps);
                    loss -= if y { p.ln() } else { (1.0 - p).ln() };
                    if y {
                        a - T::one()
                    } else {
                        a
                    }
                })
                .collect();
            (loss, g)
        }
    }
}

struct Adam<T> {
    m: ParamGrads<T>,
    v: ParamGrads<T>,
    step: i32,
}

fn zeros_like<T: Scalar>(net: &NeuralGraph<T>) -> ParamGrads<T> {
    net.layers()
        .iter()
        .map(|l| {
            (
                vec![T::zero(); l.weights.len()],
                l.bias.as_ref().map(|b| vec![T::zero(); b.len()]),
            )
        })
        .collect()
}

impl<T: Scalar> Adam<T> {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn update(&mut self, net: &mut NeuralGraph<T>, grads: &ParamGrads<T>, lr: f64, scale: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::B1.powi(self.step);
        let c2 = 1.0 - Self::B2.powi(self.step);
        let apply = |p: &mut [T], g: &[T], m: &mut [T], v: &mut [T]| {
            for i in 0..p.len() {
                let g = g[i].to_f64_lossy() * scale;
                let mi = Self::B1 * m[i].to_f64_lossy() + (1.0 - Self::B1) * g;
                let vi = Self::B2 * v[i].to_f64_lossy() + (1.0 - Self::B2) * g * g;
                m[i] = T::lit(mi);
                v[i] = T::lit(vi);
                let step = lr * (mi / c1) / ((vi / c2).sqrt() + Self::EPS);
                p[i] = p[i] - T::lit(step);
            }
        };
        for (l, layer) in net.layers_mut().iter_mut().enumerate() {
            let (gw, gb) = &grads[l];
            let (mw, mb) = &mut self.m[l];
            let (vw, vb) = &mut self.v[l];
            apply(&mut layer.weights, gw, mw, vw);
            if let (Some(b), Some(gb), Some(mb), Some(vb)) = (layer.bias.as_mut(), gb, mb.as_mut(), vb.as_mut()) {
                apply(b, gb, mb, vb);
            }
        }
    }
}

/// Trains a freshly initialized network with mini-batch Adam.
///
/// Softmax outputs use cross-entropy; sigmoid outputs use per-unit binary
/// cross-entropy. Deterministic for a given `config.seed`.
pub fn train_toy<T: Scalar>(
    arch: &ArchSpec,
    data: &[Example<T>],
    config: &TrainConfig,
) -> Result<(NeuralGraph<T>, TrainReport)> {
    if data.is_empty() {
        return Err(Error::InvalidDataset("no training examples".into()));
    }
    if config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::InvalidArgument(
            "batch size and learning rate must be positive".into(),
        ));
    }
    let mut net = initialize::<T>(arch, config.seed)?;
    let out_act = net.layers().last().expect("non-empty").activation;
    if !matches!(out_act, Activation::Softmax | Activation::Sigmoid) {
        return Err(Error::NotProbabilistic(out_act.name().into()));
    }
    let classes = net.layer_size(net.output_layer()).max(2);
    if let Some(bad) = data.iter().find(|e| e.label >= classes) {
        return Err(Error::InvalidDataset(format!(
            "label {} outside {} classes",
            bad.label, classes
        )));
    }
    let out_layer = net.output_layer();
    let mut adam = Adam {
        m: zeros_like(&net),
        v: zeros_like(&net),
        step: 0,
    };
    // the shuffling stream is kept apart from the initialization stream
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut final_loss = 0.0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads = zeros_like(&net);
            for &i in batch {
                let ex = &data[i];
                let record = forward(&net, &ex.input)?;
                let (loss, seed) = loss_and_seed(out_act, record.output(), ex.label);
                total += loss;
                backward_pass(&net, &record, Seed::Pre(out_layer, seed), Some(&mut grads));
            }
            adam.update(&mut net, &grads, config.learning_rate, 1.0 / batch.len() as f64);
        }
        final_loss = total / data.len() as f64;
        let diverged = !final_loss.is_finite()
            || net
                .layers()
                .iter()
                .any(|l| l.weights.iter().any(|w| !w.is_finite()));
        if diverged {
            return Err(Error::Diverged { epoch });
        }
    }
    let accuracy = accuracy(&net, data)?;
    Ok((
        net,
        TrainReport {
            accuracy,
            final_loss,
            epochs: config.epochs,
        },
    ))
}

/// Fraction of examples whose predicted class equals the label.
pub fn accuracy<T: Scalar>(net: &NeuralGraph<T>, data: &[Example<T>]) -> Result<f64> {
    let mut correct = 0usize;
    for ex in data {
        let record = forward(net, &ex.input)?;
        if prediction_of(net, &record)?.class == ex.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len().max(1) as f64)
}
