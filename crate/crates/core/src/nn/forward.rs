use serde::{Deserialize, Serialize};

use super::{Activation, Input, LayerKind, NeuralGraph, NeuronId};
use crate::error::{Error, Result};
use crate::scalar::{argmax, Scalar};

/// Activations of every neuron for one input.
///
/// Index `0` holds the input layer (token ids as scalars for embedding-first
/// networks); pooling layers additionally record the winning input index of
/// each pooled unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord<T> {
    pub pre: Vec<Vec<T>>,
    pub post: Vec<Vec<T>>,
    pub winners: Vec<Option<Vec<usize>>>,
}

impl<T: Scalar> ActivationRecord<T> {
    pub fn activation(&self, id: NeuronId) -> Option<T> {
        self.post.get(id.layer).and_then(|l| l.get(id.index)).copied()
    }

    pub fn pre_activation(&self, id: NeuronId) -> Option<T> {
        self.pre.get(id.layer).and_then(|l| l.get(id.index)).copied()
    }

    pub fn output(&self) -> &[T] {
        self.post.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn winners(&self, layer: usize) -> Option<&[usize]> {
        self.winners.get(layer).and_then(|w| w.as_deref())
    }

    pub fn neuron_count(&self) -> usize {
        self.post.iter().map(Vec::len).sum()
    }
}

/// Runs the network on one input.
pub fn forward<T: Scalar>(net: &NeuralGraph<T>, input: &Input<T>) -> Result<ActivationRecord<T>> {
    let expected = net.layer_size(0);
    let values: Vec<T> = match (input, &net.layers()[0].kind) {
        (Input::Tokens(tokens), LayerKind::Embedding { vocab, .. }) => {
            if tokens.len() != expected {
                return Err(Error::InputLength {
                    expected,
                    got: tokens.len(),
                });
            }
            if let Some((position, &token)) = tokens.iter().enumerate().find(|(_, &t)| t >= *vocab) {
                return Err(Error::TokenOutOfVocabulary {
                    token,
                    position,
                    vocab: *vocab,
                });
            }
            tokens.iter().map(|&t| T::from_usize_lossy(t)).collect()
        }
        (Input::Values(values), kind) if !matches!(kind, LayerKind::Embedding { .. }) => {
            if values.len() != expected {
                return Err(Error::InputLength {
                    expected,
                    got: values.len(),
                });
            }
            values.clone()
        }
        (Input::Tokens(_), _) => {
            return Err(Error::InvalidArgument(
                "token input given to a network without an embedding layer".into(),
            ))
        }
        (Input::Values(_), _) => {
            return Err(Error::InvalidArgument(
                "numeric input given to an embedding-first network".into(),
            ))
        }
    };
    Ok(run(net, 0, values))
}

/// Runs layers above `layer` starting from the given activations of `layer`.
/// Entries below `layer` in the returned record are left empty.
pub fn forward_from<T: Scalar>(net: &NeuralGraph<T>, layer: usize, activations: Vec<T>) -> Result<ActivationRecord<T>> {
    if layer >= net.depth() {
        return Err(Error::InvalidArgument(format!("no layer {layer}")));
    }
    if layer == 0 && net.takes_tokens() {
        return Err(Error::InvalidArgument(
            "cannot resume from token ids; use forward".into(),
        ));
    }
    let expected = net.layer_size(layer);
    if activations.len() != expected {
        return Err(Error::InputLength {
            expected,
            got: activations.len(),
        });
    }
    Ok(run(net, layer, activations))
}

fn run<T: Scalar>(net: &NeuralGraph<T>, start: usize, values: Vec<T>) -> ActivationRecord<T> {
    let depth = net.depth();
    let mut pre = vec![Vec::new(); depth];
    let mut post = vec![Vec::new(); depth];
    let mut winners = vec![None; depth];
    pre[start] = values.clone();
    post[start] = values;
    for l in start + 1..depth {
        let layer = &net.layers()[l - 1];
        let (z, w) = layer.pre_activation(&post[l - 1]);
        post[l] = layer.activation.apply(&z);
        pre[l] = z;
        winners[l] = w;
    }
    ActivationRecord { pre, post, winners }
}

/// Predicted class and the probability reported for it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    pub probability: f64,
}

/// Most probable class; ties go to the lowest index. A single sigmoid unit is
/// read as a binary classifier thresholded at 0.5.
pub fn predict<T: Scalar>(net: &NeuralGraph<T>, input: &Input<T>) -> Result<Prediction> {
    let record = forward(net, input)?;
    prediction_of(net, &record)
}

/// [`predict`] on an existing record.
pub fn prediction_of<T: Scalar>(net: &NeuralGraph<T>, record: &ActivationRecord<T>) -> Result<Prediction> {
    let last = net.layers().last().expect("network has layers");
    let out = record.output();
    match last.activation {
        Activation::Sigmoid if out.len() == 1 => {
            let p = out[0].to_f64_lossy();
            Ok(if p > 0.5 {
                Prediction { class: 1, probability: p }
            } else {
                Prediction {
                    class: 0,
                    probability: 1.0 - p,
                }
            })
        }
        Activation::Sigmoid | Activation::Softmax => {
            let class = argmax(out).ok_or_else(|| Error::NotProbabilistic("empty output".into()))?;
            Ok(Prediction {
                class,
                probability: out[class].to_f64_lossy(),
            })
        }
        other => Err(Error::NotProbabilistic(other.name().into())),
    }
}
