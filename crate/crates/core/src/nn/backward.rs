use super::{ActivationRecord, NeuralGraph, NeuronId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Partial derivatives of one neuron's activation with respect to every
/// neuron activation of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientRecord<T> {
    pub target: NeuronId,
    pub grads: Vec<Vec<T>>,
}

impl<T: Scalar> GradientRecord<T> {
    pub fn get(&self, id: NeuronId) -> Option<T> {
        self.grads.get(id.layer).and_then(|l| l.get(id.index)).copied()
    }
}

/// Where back-propagation starts.
pub(crate) enum Seed<T> {
    /// Gradient with respect to the activations of a layer.
    Post(usize, Vec<T>),
    /// Gradient with respect to the pre-activations of a layer.
    Pre(usize, Vec<T>),
}

/// Parameter gradient accumulators, one `(weights, bias)` pair per layer.
pub(crate) type ParamGrads<T> = Vec<(Vec<T>, Option<Vec<T>>)>;

/// Back-propagates a seed down to the input layer. Returns gradients with
/// respect to the activations of every layer; layers above the seed are zero.
pub(crate) fn backward_pass<T: Scalar>(
    net: &NeuralGraph<T>,
    record: &ActivationRecord<T>,
    seed: Seed<T>,
    mut params: Option<&mut ParamGrads<T>>,
) -> Vec<Vec<T>> {
    let sizes = net.layer_sizes();
    let mut grads: Vec<Vec<T>> = sizes.iter().map(|&n| vec![T::zero(); n]).collect();
    let (top, mut grad_pre) = match seed {
        Seed::Post(layer, g) => {
            let layer_spec = &net.layers()[layer.max(1) - 1];
            let pre = if layer == 0 {
                g.clone()
            } else {
                layer_spec
                    .activation
                    .backward(&record.pre[layer], &record.post[layer], &g)
            };
            grads[layer] = g;
            (layer, pre)
        }
        Seed::Pre(layer, g) => (layer, g),
    };
    for l in (1..=top).rev() {
        let layer = &net.layers()[l - 1];
        if let Some(params) = params.as_deref_mut() {
            let (w, b) = &mut params[l - 1];
            layer.accumulate_param_grads(&record.post[l - 1], &grad_pre, w, b.as_deref_mut());
        }
        let g_in = layer.backward_input(&record.post[l - 1], record.winners(l), &grad_pre);
        if l > 1 {
            let below = &net.layers()[l - 2];
            grad_pre = below
                .activation
                .backward(&record.pre[l - 1], &record.post[l - 1], &g_in);
        }
        grads[l - 1] = g_in;
    }
    grads
}

/// `d a_target / d a_x` for every neuron `x`, by reverse-mode differentiation.
pub fn gradient<T: Scalar>(
    net: &NeuralGraph<T>,
    record: &ActivationRecord<T>,
    target: NeuronId,
) -> Result<GradientRecord<T>> {
    if !net.contains(target) {
        return Err(Error::UnknownNeuron(target.to_string()));
    }
    if record.post.len() != net.depth()
        || record
            .post
            .iter()
            .zip(net.layer_sizes())
            .any(|(l, n)| l.len() != n)
    {
        return Err(Error::InvalidArgument(
            "activation record was not produced by this network".into(),
        ));
    }
    let mut seed = vec![T::zero(); net.layer_size(target.layer)];
    seed[target.index] = T::one();
    let grads = backward_pass(net, record, Seed::Post(target.layer, seed), None);
    Ok(GradientRecord { target, grads })
}
