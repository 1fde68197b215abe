//! Hand-built networks small enough to trace by hand.

use crate::nn::{Activation, Input, Layer, LayerKind, Metadata, NeuralGraph};
use crate::scalar::Scalar;

fn lits<T: Scalar>(values: &[f64]) -> Vec<T> {
    values.iter().map(|&v| T::lit(v)).collect()
}

/// A 3-3-1 feed-forward network with tanh hidden units and a sigmoid output.
///
/// On [`toy_input`] the non-zero links are: x1 supports h1 and attacks h2,
/// x3 supports h2, x2 attacks h3; h1 and h3 support the output, h2 attacks it.
pub fn toy_ffnn<T: Scalar>() -> NeuralGraph<T> {
    #[rustfmt::skip]
    let hidden = [
        // h1    h2    h3
        2.0,  -1.0,  0.0,  // x1
        0.0,   0.0, -0.25, // x2
        0.0,   1.5,  0.0,  // x3
    ];
    let output = [1.0, -1.0, -1.0];
    NeuralGraph::new(
        vec![
            Layer::new(
                LayerKind::Dense { inputs: 3, outputs: 3 },
                Activation::Tanh,
                lits(&hidden),
                None,
            ),
            Layer::new(
                LayerKind::Dense { inputs: 3, outputs: 1 },
                Activation::Sigmoid,
                lits(&output),
                None,
            ),
        ],
        Metadata::labels(&["negative", "positive"]),
    )
    .expect("toy network is well formed")
}

pub fn toy_input<T: Scalar>() -> Input<T> {
    Input::Values(lits(&[0.5, 0.5, 0.5]))
}

/// A text CNN over 4 tokens: 2-dimensional embeddings of a 5-word
/// vocabulary, two width-2 ReLU filters, global max-pooling and a 2-class
/// softmax. 22 neurons in total.
pub fn tiny_text_cnn<T: Scalar>() -> NeuralGraph<T> {
    #[rustfmt::skip]
    let embedding = [
        0.0,  0.0,  // <pad>
        1.0,  0.5,  // good
       -0.5,  1.0,  // bad
        0.5, -1.0,  // plot
        2.0,  0.0,  // great
    ];
    // [filter][offset][channel]
    #[rustfmt::skip]
    let conv = [
        1.0,  0.0,   0.5,  0.25,
        0.0,  1.0,  -0.5,  1.0,
    ];
    #[rustfmt::skip]
    let dense = [
        // pos   neg
        1.0,  -1.0,  // filter 0
       -0.5,   1.5,  // filter 1
    ];
    let metadata = Metadata {
        labels: vec!["positive".into(), "negative".into()],
        vocab: Some(
            ["<pad>", "good", "bad", "plot", "great"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        ),
        features: None,
    };
    NeuralGraph::new(
        vec![
            Layer::new(
                LayerKind::Embedding { vocab: 5, dim: 2, seq_len: 4 },
                Activation::Linear,
                lits(&embedding),
                None,
            ),
            Layer::new(
                LayerKind::Conv1d {
                    seq_len: 4,
                    channels: 2,
                    widths: vec![2, 2],
                },
                Activation::Relu,
                lits(&conv),
                None,
            ),
            Layer::new(
                LayerKind::GlobalMaxPool1d { segments: vec![3, 3] },
                Activation::Linear,
                Vec::new(),
                None,
            ),
            Layer::new(
                LayerKind::Dense { inputs: 2, outputs: 2 },
                Activation::Softmax,
                lits(&dense),
                None,
            ),
        ],
        metadata,
    )
    .expect("tiny text network is well formed")
}

/// "good plot bad great".
pub fn tiny_text_input<T>() -> Input<T> {
    Input::Tokens(vec![1, 3, 2, 4])
}
