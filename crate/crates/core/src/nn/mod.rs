//! Feed-forward networks viewed as layered directed graphs of neurons.
//!
//! A [`NeuralGraph`] is a chain of [`Layer`]s. Layer `0` is the input layer
//! (it has no parameters); layer `i >= 1` is produced by `layers[i - 1]`.
//! Neurons are addressed by [`NeuronId`], printed as `L{layer}.{index}`.

mod backward;
mod bundle;
mod forward;
pub(crate) mod layer;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use backward::{gradient, GradientRecord};
pub use bundle::{load_model, save_model, LayerRecord, ModelBundle, ShapeRecord, FORMAT_VERSION};
pub use forward::{forward, forward_from, predict, prediction_of, ActivationRecord, Prediction};
pub use train::{accuracy, initialize, train_toy, ArchSpec, Example, LayerTemplate, TrainConfig, TrainReport};

pub(crate) use backward::{backward_pass, Seed};

/// Identifier of a single neuron: its layer (0 = input) and flat index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NeuronId {
    pub layer: usize,
    pub index: usize,
}

impl NeuronId {
    pub fn new(layer: usize, index: usize) -> Self {
        Self { layer, index }
    }
}

impl fmt::Display for NeuronId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}.{}", self.layer, self.index)
    }
}

impl FromStr for NeuronId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownNeuron(s.to_string());
        let rest = s.strip_prefix('L').ok_or_else(bad)?;
        let (layer, index) = rest.split_once('.').ok_or_else(bad)?;
        Ok(Self {
            layer: layer.parse().map_err(|_| bad())?,
            index: index.parse().map_err(|_| bad())?,
        })
    }
}

/// Activation function attached to a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    Softmax,
    Linear,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
            Activation::Linear => "linear",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "tanh" => Activation::Tanh,
            "relu" => Activation::Relu,
            "sigmoid" => Activation::Sigmoid,
            "softmax" => Activation::Softmax,
            "linear" => Activation::Linear,
            _ => return None,
        })
    }

    pub fn apply<T: Scalar>(self, z: &[T]) -> Vec<T> {
        match self {
            Activation::Tanh => z.iter().map(|v| v.tanh()).collect(),
            Activation::Relu => z.iter().map(|&v| v.max(T::zero())).collect(),
            Activation::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
            Activation::Linear => z.to_vec(),
            Activation::Softmax => {
                let max = z.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
                let exp: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
                let total: T = exp.iter().copied().sum();
                exp.into_iter().map(|e| e / total).collect()
            }
        }
    }

    /// Maps a gradient with respect to the outputs onto the pre-activations.
    pub fn backward<T: Scalar>(self, z: &[T], a: &[T], grad: &[T]) -> Vec<T> {
        match self {
            Activation::Linear => grad.to_vec(),
            Activation::Tanh => a
                .iter()
                .zip(grad)
                .map(|(&a, &g)| g * (T::one() - a * a))
                .collect(),
            Activation::Relu => z
                .iter()
                .zip(grad)
                .map(|(&z, &g)| if z > T::zero() { g } else { T::zero() })
                .collect(),
            Activation::Sigmoid => a
                .iter()
                .zip(grad)
                .map(|(&a, &g)| g * a * (T::one() - a))
                .collect(),
            Activation::Softmax => {
                let dot: T = a.iter().zip(grad).map(|(&a, &g)| a * g).sum();
                a.iter().zip(grad).map(|(&a, &g)| a * (g - dot)).collect()
            }
        }
    }
}

fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Zero padding mode of a 2D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

/// Structural description of a layer.
///
/// Flat index conventions: sequences are position-major (`p * channels + c`),
/// images are channel-major (`c * height * width + y * width + x`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerKind {
    /// Fully connected; weights are `[inputs][outputs]`.
    Dense { inputs: usize, outputs: usize },
    /// Token lookup; input is `seq_len` token ids, weights are `[vocab][dim]`.
    Embedding { vocab: usize, dim: usize, seq_len: usize },
    /// Valid 1D convolution over a `seq_len x channels` sequence with one
    /// width per filter; weights are concatenated `[filter][offset][channel]`.
    /// Outputs are filter-major, each filter owning `seq_len - width + 1` units.
    Conv1d { seq_len: usize, channels: usize, widths: Vec<usize> },
    /// Max over each consecutive segment of the input.
    GlobalMaxPool1d { segments: Vec<usize> },
    /// Square-kernel 2D convolution; weights are `[filter][in_channel][ky][kx]`.
    Conv2d {
        in_channels: usize,
        filters: usize,
        height: usize,
        width: usize,
        kernel: usize,
        padding: Padding,
    },
    /// Non-overlapping `pool x pool` max pooling per channel.
    MaxPool2d { channels: usize, height: usize, width: usize, pool: usize },
    Flatten { size: usize },
    /// Element-wise activation stage without parameters.
    Elementwise { size: usize },
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Dense { .. } => "dense",
            LayerKind::Embedding { .. } => "embedding",
            LayerKind::Conv1d { .. } => "conv1d",
            LayerKind::GlobalMaxPool1d { .. } => "global-maxpool-1d",
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::MaxPool2d { .. } => "maxpool-2d",
            LayerKind::Flatten { .. } => "flatten",
            LayerKind::Elementwise { .. } => "activation",
        }
    }

    pub fn input_len(&self) -> usize {
        match self {
            LayerKind::Dense { inputs, .. } => *inputs,
            LayerKind::Embedding { seq_len, .. } => *seq_len,
            LayerKind::Conv1d { seq_len, channels, .. } => seq_len * channels,
            LayerKind::GlobalMaxPool1d { segments } => segments.iter().sum(),
            LayerKind::Conv2d {
                in_channels,
                height,
                width,
                ..
            } => in_channels * height * width,
            LayerKind::MaxPool2d {
                channels,
                height,
                width,
                ..
            } => channels * height * width,
            LayerKind::Flatten { size } | LayerKind::Elementwise { size } => *size,
        }
    }

    pub fn output_len(&self) -> usize {
        match self {
            LayerKind::Dense { outputs, .. } => *outputs,
            LayerKind::Embedding { dim, seq_len, .. } => dim * seq_len,
            LayerKind::Conv1d { seq_len, widths, .. } => widths
                .iter()
                .map(|w| seq_len.saturating_sub(*w) + 1)
                .sum(),
            LayerKind::GlobalMaxPool1d { segments } => segments.len(),
            LayerKind::Conv2d { filters, .. } => {
                let (oh, ow) = self.conv2d_output_dims();
                filters * oh * ow
            }
            LayerKind::MaxPool2d {
                channels,
                height,
                width,
                pool,
            } => channels * (height / pool) * (width / pool),
            LayerKind::Flatten { size } | LayerKind::Elementwise { size } => *size,
        }
    }

    pub fn weight_count(&self) -> usize {
        match self {
            LayerKind::Dense { inputs, outputs } => inputs * outputs,
            LayerKind::Embedding { vocab, dim, .. } => vocab * dim,
            LayerKind::Conv1d { channels, widths, .. } => widths.iter().sum::<usize>() * channels,
            LayerKind::Conv2d {
                in_channels,
                filters,
                kernel,
                ..
            } => filters * in_channels * kernel * kernel,
            _ => 0,
        }
    }

    /// Length of the bias vector, when the layer admits one.
    pub fn bias_len(&self) -> Option<usize> {
        match self {
            LayerKind::Dense { outputs, .. } => Some(*outputs),
            LayerKind::Conv1d { widths, .. } => Some(widths.len()),
            LayerKind::Conv2d { filters, .. } => Some(*filters),
            _ => None,
        }
    }

    pub fn is_parametric(&self) -> bool {
        self.weight_count() > 0
    }

    /// Output spatial size of a 2D convolution (`(0, 0)` for other kinds).
    pub fn conv2d_output_dims(&self) -> (usize, usize) {
        match self {
            LayerKind::Conv2d {
                height,
                width,
                kernel,
                padding,
                ..
            } => match padding {
                Padding::Same => (*height, *width),
                Padding::Valid => (
                    height.saturating_sub(*kernel) + 1,
                    width.saturating_sub(*kernel) + 1,
                ),
            },
            _ => (0, 0),
        }
    }

    /// Number of filters of a convolution, `None` for other kinds.
    pub fn filter_count(&self) -> Option<usize> {
        match self {
            LayerKind::Conv1d { widths, .. } => Some(widths.len()),
            LayerKind::Conv2d { filters, .. } => Some(*filters),
            _ => None,
        }
    }

    /// Output units of a 1D convolution filter: `(offset, length)`.
    pub fn conv1d_segment(&self, filter: usize) -> Option<(usize, usize)> {
        match self {
            LayerKind::Conv1d { seq_len, widths, .. } => {
                let lens = widths.iter().map(|w| seq_len + 1 - w);
                let offset = lens.clone().take(filter).sum();
                lens.clone().nth(filter).map(|len| (offset, len))
            }
            _ => None,
        }
    }

    fn validate(&self, layer: usize) -> Result<()> {
        let bad = |detail: String| Err(Error::ShapeMismatch { layer, detail });
        match self {
            LayerKind::Conv1d {
                seq_len,
                channels,
                widths,
            } => {
                if widths.is_empty() || *channels == 0 {
                    return bad("conv1d needs at least one filter and one channel".into());
                }
                if let Some(w) = widths.iter().find(|&&w| w == 0 || w > *seq_len) {
                    return bad(format!("filter width {w} outside 1..={seq_len}"));
                }
            }
            LayerKind::Conv2d {
                kernel,
                height,
                width,
                padding,
                ..
            } => {
                if *kernel == 0 || *kernel > (*height).min(*width) {
                    return bad(format!("kernel {kernel} does not fit {height}x{width}"));
                }
                if *padding == Padding::Same && kernel % 2 == 0 {
                    return bad("same padding requires an odd kernel".into());
                }
            }
            LayerKind::MaxPool2d {
                pool,
                height,
                width,
                ..
            } => {
                if *pool == 0 || *pool > (*height).min(*width) {
                    return bad(format!("pool {pool} does not fit {height}x{width}"));
                }
            }
            LayerKind::GlobalMaxPool1d { segments } => {
                if segments.is_empty() || segments.contains(&0) {
                    return bad("empty pooling segment".into());
                }
            }
            LayerKind::Embedding { vocab, dim, .. } => {
                if *vocab == 0 || *dim == 0 {
                    return bad("embedding needs a non-empty vocabulary and dimension".into());
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// One layer: structure, parameters and activation function.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub kind: LayerKind,
    pub activation: Activation,
    pub weights: Vec<T>,
    pub bias: Option<Vec<T>>,
}

impl<T: Scalar> Layer<T> {
    pub fn new(kind: LayerKind, activation: Activation, weights: Vec<T>, bias: Option<Vec<T>>) -> Self {
        Self {
            kind,
            activation,
            weights,
            bias,
        }
    }

    fn validate(&self, layer: usize) -> Result<()> {
        self.kind.validate(layer)?;
        if self.weights.len() != self.kind.weight_count() {
            return Err(Error::ShapeMismatch {
                layer,
                detail: format!(
                    "{} declares {} weights but its shape needs {}",
                    self.kind.name(),
                    self.weights.len(),
                    self.kind.weight_count()
                ),
            });
        }
        if let Some(index) = self.weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFiniteWeight { layer, index });
        }
        if let Some(bias) = &self.bias {
            match self.kind.bias_len() {
                Some(n) if n == bias.len() => {}
                expected => {
                    return Err(Error::ShapeMismatch {
                        layer,
                        detail: format!("bias of length {} (expected {:?})", bias.len(), expected),
                    })
                }
            }
            if let Some(i) = bias.iter().position(|b| !b.is_finite()) {
                return Err(Error::NonFiniteWeight {
                    layer,
                    index: self.weights.len() + i,
                });
            }
        }
        Ok(())
    }
}

/// Labels and vocabularies carried alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<Vec<String>>,
    /// One-hot column names of tabular models, written `feature=value`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<String>>,
}

impl Metadata {
    pub fn labels(labels: &[&str]) -> Self {
        Self {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            ..Self::default()
        }
    }

    pub fn label(&self, class: usize) -> String {
        self.labels
            .get(class)
            .cloned()
            .unwrap_or_else(|| format!("class {class}"))
    }
}

/// Network input.
#[derive(Debug, Clone, PartialEq)]
pub enum Input<T> {
    Tokens(Vec<usize>),
    Values(Vec<T>),
}

/// A trained network `<V, E>` with weights and activation functions.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralGraph<T> {
    layers: Vec<Layer<T>>,
    metadata: Metadata,
}

impl<T: Scalar> NeuralGraph<T> {
    /// Builds a network, validating that consecutive layers fit together.
    pub fn new(layers: Vec<Layer<T>>, metadata: Metadata) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::ShapeMismatch {
                layer: 0,
                detail: "network has no layers".into(),
            });
        }
        for (i, layer) in layers.iter().enumerate() {
            layer.validate(i)?;
            if matches!(layer.kind, LayerKind::Embedding { .. }) && i != 0 {
                return Err(Error::ShapeMismatch {
                    layer: i,
                    detail: "embedding must be the first layer".into(),
                });
            }
            if i > 0 {
                let prev = layers[i - 1].kind.output_len();
                if layer.kind.input_len() != prev {
                    return Err(Error::ShapeMismatch {
                        layer: i,
                        detail: format!(
                            "expects {} inputs but layer {} produces {}",
                            layer.kind.input_len(),
                            i - 1,
                            prev
                        ),
                    });
                }
            }
        }
        Ok(Self { layers, metadata })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// The layer producing neurons of graph layer `graph_layer` (>= 1).
    pub fn producer(&self, graph_layer: usize) -> Option<&Layer<T>> {
        graph_layer.checked_sub(1).and_then(|i| self.layers.get(i))
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn metadata(&self) -> &Metadata {
        &self.metadata
    }

    pub fn set_metadata(&mut self, metadata: Metadata) {
        self.metadata = metadata;
    }

    /// Number of graph layers, input layer included.
    pub fn depth(&self) -> usize {
        self.layers.len() + 1
    }

    pub fn output_layer(&self) -> usize {
        self.layers.len()
    }

    /// Neuron counts per graph layer, input layer first.
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].kind.input_len())
            .chain(self.layers.iter().map(|l| l.kind.output_len()))
            .collect()
    }

    pub fn layer_size(&self, graph_layer: usize) -> usize {
        if graph_layer == 0 {
            self.layers[0].kind.input_len()
        } else {
            self.layers[graph_layer - 1].kind.output_len()
        }
    }

    pub fn neuron_count(&self) -> usize {
        self.layer_sizes().iter().sum()
    }

    pub fn contains(&self, id: NeuronId) -> bool {
        id.layer < self.depth() && id.index < self.layer_size(id.layer)
    }

    pub fn neuron_ids(&self) -> impl Iterator<Item = NeuronId> + '_ {
        self.layer_sizes()
            .into_iter()
            .enumerate()
            .flat_map(|(layer, n)| (0..n).map(move |index| NeuronId { layer, index }))
    }

    pub fn takes_tokens(&self) -> bool {
        matches!(self.layers[0].kind, LayerKind::Embedding { .. })
    }

    /// True when some layer carries a bias vector with a non-zero entry.
    pub fn has_bias(&self) -> bool {
        self.layers.iter().any(|l| {
            l.bias
                .as_ref()
                .is_some_and(|b| b.iter().any(|v| *v != T::zero()))
        })
    }

    /// Graph layer index of the last 2D convolution, if any.
    pub fn last_conv2d(&self) -> Option<usize> {
        self.layers
            .iter()
            .rposition(|l| matches!(l.kind, LayerKind::Conv2d { .. }))
            .map(|i| i + 1)
    }

    /// Structural predecessors of `id` (the edges `E` entering it).
    pub fn predecessors(&self, id: NeuronId) -> Vec<NeuronId> {
        match self.producer(id.layer) {
            Some(layer) => layer
                .structural_inputs(id.index)
                .into_iter()
                .map(|index| NeuronId::new(id.layer - 1, index))
                .collect(),
            None => Vec::new(),
        }
    }

    /// Weight of the direct edge `from -> to`: the learned weight for dense
    /// and convolutional links, `1` for pooling and identity links.
    pub fn weight(&self, from: NeuronId, to: NeuronId) -> Result<T> {
        let missing = || Error::MissingEdge {
            from: from.to_string(),
            to: to.to_string(),
        };
        if !self.contains(from) || !self.contains(to) || to.layer != from.layer + 1 {
            return Err(missing());
        }
        let layer = self.producer(to.layer).ok_or_else(missing)?;
        layer.link_weight(from.index, to.index).ok_or_else(missing)
    }

    /// Weight of the linear link `from -> to`, looking through parameter-free
    /// element-wise stages above `from`'s consumer (e.g. a ReLU after tanh).
    pub fn effective_weight(&self, from: NeuronId, to: NeuronId) -> Result<T> {
        let mut target = to;
        while target.layer > from.layer + 1 {
            match self.producer(target.layer).map(|l| &l.kind) {
                Some(LayerKind::Elementwise { .. }) | Some(LayerKind::Flatten { .. }) => {
                    target = NeuronId::new(target.layer - 1, target.index);
                }
                _ => break,
            }
        }
        self.weight(from, target)
    }
}
