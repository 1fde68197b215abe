//! Model-bundle JSON: the on-disk form of a [`NeuralGraph`].
//!
//! Field order is fixed so that `save(load(bytes)) == bytes` for any bundle
//! written by [`save_model`].

use serde::{Deserialize, Serialize};

use super::{Activation, Layer, LayerKind, Metadata, NeuralGraph, Padding};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBundle {
    pub format_version: u32,
    pub layers: Vec<LayerRecord>,
    pub metadata: Metadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    pub kind: String,
    pub activation: String,
    pub shape: ShapeRecord,
    pub weights: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

/// Shape parameters; each layer kind uses its own subset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
}

impl ShapeRecord {
    fn of(kind: &LayerKind) -> Self {
        let mut s = ShapeRecord::default();
        match kind {
            LayerKind::Dense { inputs, outputs } => {
                s.inputs = Some(*inputs);
                s.outputs = Some(*outputs);
            }
            LayerKind::Embedding { vocab, dim, seq_len } => {
                s.vocab = Some(*vocab);
                s.dim = Some(*dim);
                s.seq_len = Some(*seq_len);
            }
            LayerKind::Conv1d {
                seq_len,
                channels,
                widths,
            } => {
                s.seq_len = Some(*seq_len);
                s.channels = Some(*channels);
                s.widths = Some(widths.clone());
            }
            LayerKind::GlobalMaxPool1d { segments } => s.segments = Some(segments.clone()),
            LayerKind::Conv2d {
                in_channels,
                filters,
                height,
                width,
                kernel,
                padding,
            } => {
                s.in_channels = Some(*in_channels);
                s.filters = Some(*filters);
                s.height = Some(*height);
                s.width = Some(*width);
                s.kernel = Some(*kernel);
                s.padding = Some(
                    match padding {
                        Padding::Same => "same",
                        Padding::Valid => "valid",
                    }
                    .to_string(),
                );
            }
            LayerKind::MaxPool2d {
                channels,
                height,
                width,
                pool,
            } => {
                s.channels = Some(*channels);
                s.height = Some(*height);
                s.width = Some(*width);
                s.pool = Some(*pool);
            }
            LayerKind::Flatten { size } | LayerKind::Elementwise { size } => s.size = Some(*size),
        }
        s
    }

    fn to_kind(&self, kind: &str, layer: usize) -> Result<LayerKind> {
        let need = |v: Option<usize>, field: &str| {
            v.ok_or_else(|| Error::ShapeMismatch {
                layer,
                detail: format!("{kind} shape is missing `{field}`"),
            })
        };
        let need_vec = |v: &Option<Vec<usize>>, field: &str| {
            v.clone().ok_or_else(|| Error::ShapeMismatch {
                layer,
                detail: format!("{kind} shape is missing `{field}`"),
            })
        };
        Ok(match kind {
            "dense" => LayerKind::Dense {
                inputs: need(self.inputs, "inputs")?,
                outputs: need(self.outputs, "outputs")?,
            },
            "embedding" => LayerKind::Embedding {
                vocab: need(self.vocab, "vocab")?,
                dim: need(self.dim, "dim")?,
                seq_len: need(self.seq_len, "seq_len")?,
            },
            "conv1d" => LayerKind::Conv1d {
                seq_len: need(self.seq_len, "seq_len")?,
                channels: need(self.channels, "channels")?,
                widths: need_vec(&self.widths, "widths")?,
            },
            "global-maxpool-1d" => LayerKind::GlobalMaxPool1d {
                segments: need_vec(&self.segments, "segments")?,
            },
            "conv2d" => LayerKind::Conv2d {
                in_channels: need(self.in_channels, "in_channels")?,
                filters: need(self.filters, "filters")?,
                height: need(self.height, "height")?,
                width: need(self.width, "width")?,
                kernel: need(self.kernel, "kernel")?,
                padding: match self.padding.as_deref() {
                    Some("same") => Padding::Same,
                    Some("valid") | None => Padding::Valid,
                    Some(other) => {
                        return Err(Error::ShapeMismatch {
                            layer,
                            detail: format!("unknown padding `{other}`"),
                        })
                    }
                },
            },
            "maxpool-2d" => LayerKind::MaxPool2d {
                channels: need(self.channels, "channels")?,
                height: need(self.height, "height")?,
                width: need(self.width, "width")?,
                pool: need(self.pool, "pool")?,
            },
            "flatten" => LayerKind::Flatten {
                size: need(self.size, "size")?,
            },
            "activation" => LayerKind::Elementwise {
                size: need(self.size, "size")?,
            },
            other => {
                return Err(Error::UnknownLayerKind {
                    layer,
                    kind: other.to_string(),
                })
            }
        })
    }
}

impl<T: Scalar> NeuralGraph<T> {
    pub fn from_bundle(bundle: &ModelBundle) -> Result<Self> {
        if bundle.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(bundle.format_version));
        }
        let mut layers = Vec::with_capacity(bundle.layers.len());
        for (i, rec) in bundle.layers.iter().enumerate() {
            let kind = rec.shape.to_kind(&rec.kind, i)?;
            let activation = Activation::parse(&rec.activation).ok_or_else(|| Error::UnknownActivation {
                layer: i,
                name: rec.activation.clone(),
            })?;
            let convert = |values: &[f64], offset: usize| -> Result<Vec<T>> {
                values
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| match T::from_f64(v) {
                        Some(x) if x.is_finite() => Ok(x),
                        _ => Err(Error::NonFiniteWeight {
                            layer: i,
                            index: offset + j,
                        }),
                    })
                    .collect()
            };
            let weights = convert(&rec.weights, 0)?;
            let bias = rec
                .bias
                .as_deref()
                .map(|b| convert(b, rec.weights.len()))
                .transpose()?;
            layers.push(Layer::new(kind, activation, weights, bias));
        }
        NeuralGraph::new(layers, bundle.metadata.clone())
    }

    pub fn to_bundle(&self) -> ModelBundle {
        ModelBundle {
            format_version: FORMAT_VERSION,
            layers: self
                .layers()
                .iter()
                .map(|l| LayerRecord {
                    kind: l.kind.name().to_string(),
                    activation: l.activation.name().to_string(),
                    shape: ShapeRecord::of(&l.kind),
                    weights: l.weights.iter().map(|w| w.to_f64_lossy()).collect(),
                    bias: l
                        .bias
                        .as_ref()
                        .map(|b| b.iter().map(|v| v.to_f64_lossy()).collect()),
                })
                .collect(),
            metadata: self.metadata().clone(),
        }
    }
}

/// Parses and validates a model bundle.
pub fn load_model<T: Scalar>(json: &str) -> Result<NeuralGraph<T>> {
    let bundle: ModelBundle = serde_json::from_str(json)?;
    NeuralGraph::from_bundle(&bundle)
}

/// Serializes a network as a compact model bundle followed by a newline.
pub fn save_model<T: Scalar>(net: &NeuralGraph<T>) -> String {
    let mut s = serde_json::to_string(&net.to_bundle()).expect("bundle serializes");
    s.push('\n');
    s
}
