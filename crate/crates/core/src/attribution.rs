//! Quantitative measures behind relation characterizations and strengths:
//! LRP-0 relevance, Grad-CAM maps and linear activation contributions.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::layer::Route;
use crate::nn::{backward_pass, ActivationRecord, LayerKind, NeuralGraph, NeuronId, Seed};
use crate::scalar::{sign_or_one, Scalar};

/// Denominators smaller than this in magnitude are pushed away from zero.
pub const LRP_EPSILON: f64 = 1e-9;

/// Relevance back-propagated from one source neuron.
///
/// Only neurons that received non-zero relevance are stored, so the cost of a
/// propagation depends on the receptive field of the source rather than on
/// the size of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMap<T> {
    pub source: NeuronId,
    pub seed: T,
    /// Lowest layer relevance was propagated to.
    pub stop_layer: usize,
    layers: Vec<BTreeMap<usize, T>>,
}

impl<T: Scalar> RelevanceMap<T> {
    /// Relevance of a neuron; `0` for neurons the source does not reach.
    pub fn get(&self, id: NeuronId) -> T {
        self.layers
            .get(id.layer)
            .and_then(|l| l.get(&id.index))
            .copied()
            .unwrap_or_else(T::zero)
    }

    /// Summed relevance of a group of neurons.
    pub fn sum_over(&self, ids: impl IntoIterator<Item = NeuronId>) -> T {
        ids.into_iter().map(|id| self.get(id)).sum()
    }

    pub fn layer_sum(&self, layer: usize) -> T {
        self.layers
            .get(layer)
            .map_or_else(T::zero, |l| l.values().copied().sum())
    }

    /// Non-zero entries of one layer, in index order.
    pub fn layer(&self, layer: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        self.layers.get(layer).into_iter().flat_map(|l| l.iter().map(|(&i, &r)| (i, r)))
    }
}

/// LRP-0 relevance seeded with the source's own activation.
pub fn lrp0_backward<T: Scalar>(
    net: &NeuralGraph<T>,
    record: &ActivationRecord<T>,
    source: NeuronId,
    stop_layer: usize,
) -> Result<RelevanceMap<T>> {
    let seed = record
        .activation(source)
        .ok_or_else(|| Error::UnknownNeuron(source.to_string()))?;
    lrp0_backward_seeded(net, record, source, stop_layer, seed)
}

/// LRP-0 relevance with an explicit seed, propagated down to `stop_layer`.
///
/// `R_i = sum_j a_i w_ij / (sum_l a_l w_lj) R_j`, biases excluded. Pooling
/// units pass everything to their recorded winner; element-wise stages pass
/// relevance through unchanged. Token networks stop at the embedding layer.
pub fn lrp0_backward_seeded<T: Scalar>(
    net: &NeuralGraph<T>,
    record: &ActivationRecord<T>,
    source: NeuronId,
    stop_layer: usize,
    seed: T,
) -> Result<RelevanceMap<T>> {
    if !net.contains(source) {
        return Err(Error::UnknownNeuron(source.to_string()));
    }
    if record.post.len() != net.depth() {
        return Err(Error::InvalidArgument(
            "activation record was not produced by this network".into(),
        ));
    }
    if stop_layer > source.layer {
        return Err(Error::InvalidArgument(format!(
            "cannot propagate from layer {} up to layer {stop_layer}",
            source.layer
        )));
    }
    let stop_layer = if net.takes_tokens() { stop_layer.max(1) } else { stop_layer };
    let eps = T::lit(LRP_EPSILON);
    let mut layers: Vec<BTreeMap<usize, T>> = vec![BTreeMap::new(); net.depth()];
    layers[source.layer].insert(source.index, seed);

    for l in (stop_layer + 1..=source.layer).rev() {
        let layer = &net.layers()[l - 1];
        let below = &record.post[l - 1];
        let (upper, lower) = layers.split_at_mut(l);
        let lower = &mut lower[0];
        let upper = &mut upper[l - 1];
        for (&j, &r) in lower.iter() {
            if r == T::zero() {
                continue;
            }
            match layer.route(j, record.winners(l)) {
                Route::Weighted(links) => {
                    let mut z: T = links.iter().map(|&(i, w)| below[i] * w).sum();
                    if z.abs() < eps {
                        z = z + eps * sign_or_one(z);
                    }
                    for (i, w) in links {
                        let share = below[i] * w / z * r;
                        if share != T::zero() {
                            *upper.entry(i).or_insert_with(T::zero) += share;
                        }
                    }
                }
                Route::Single(i) => *upper.entry(i).or_insert_with(T::zero) += r,
                Route::Lookup(_) => unreachable!("propagation stops above the embedding input"),
            }
        }
    }
    Ok(RelevanceMap {
        source,
        seed,
        stop_layer,
        layers,
    })
}

/// Relevance per input word of a token network: the sum over each word's
/// embedding neurons.
pub fn word_relevance<T: Scalar>(net: &NeuralGraph<T>, map: &RelevanceMap<T>) -> Result<Vec<T>> {
    match net.layers()[0].kind {
        LayerKind::Embedding { dim, seq_len, .. } => Ok((0..seq_len)
            .map(|p| (p * dim..(p + 1) * dim).map(|i| map.get(NeuronId::new(1, i))).sum())
            .collect()),
        _ => Err(Error::UnsupportedArchitecture(
            "word relevance needs an embedding input layer".into(),
        )),
    }
}

/// Grad-CAM quantities of one filter of the last 2D convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCam<T> {
    /// `g_j`: spatial mean of the class-score gradient over the filter's map.
    pub weight: T,
    /// `A^j`, row-major over the convolution's output grid.
    pub activation: Vec<T>,
    /// `G_j = upscale(relu(g_j A^j))`, row-major over the input grid.
    pub weighted: Vec<T>,
}

impl<T: Scalar> FilterCam<T> {
    pub fn total(&self) -> T {
        self.weighted.iter().copied().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCamResult<T> {
    pub class_neuron: NeuronId,
    /// Graph layer holding the last convolution's activations.
    pub layer: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub map_height: usize,
    pub map_width: usize,
    pub filters: Vec<FilterCam<T>>,
}

impl<T: Scalar> GradCamResult<T> {
    /// `G_j(x, y)`.
    pub fn at(&self, filter: usize, x: usize, y: usize) -> T {
        self.filters[filter].weighted[y * self.input_width + x]
    }

    pub fn total(&self) -> T {
        self.filters.iter().map(FilterCam::total).sum()
    }
}

/// Nearest-neighbour upscaling of a row-major grid.
pub fn upscale_nearest<T: Copy>(grid: &[T], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let sy = y * h / out_h;
        for x in 0..out_w {
            out.push(grid[sy * w + x * w / out_w]);
        }
    }
    out
}

/// Grad-CAM maps for every filter of the last 2D convolution, taking the
/// gradient of the class neuron's pre-activation score.
pub fn gradcam<T: Scalar>(
    net: &NeuralGraph<T>,
    record: &ActivationRecord<T>,
    class_neuron: NeuronId,
) -> Result<GradCamResult<T>> {
    let conv = net.last_conv2d().ok_or_else(|| {
        Error::UnsupportedArchitecture("Grad-CAM needs a 2D convolutional layer".into())
    })?;
    if class_neuron.layer != net.output_layer() || !net.contains(class_neuron) {
        return Err(Error::UnknownNeuron(class_neuron.to_string()));
    }
    let (input_height, input_width) = net
        .layers()
        .iter()
        .find_map(|l| match l.kind {
            LayerKind::Conv2d { height, width, .. } => Some((height, width)),
            _ => None,
        })
        .expect("a conv2d layer exists");
    let (map_height, map_width) = net.layers()[conv - 1].kind.conv2d_output_dims();
    let out = net.output_layer();
    let mut seed = vec![T::zero(); net.layer_size(out)];
    seed[class_neuron.index] = T::one();
    let grads = backward_pass(net, record, Seed::Pre(out, seed), None);
    let cells = map_height * map_width;
    let count = T::from_usize_lossy(cells);
    let filters = record.post[conv]
        .chunks(cells)
        .zip(grads[conv].chunks(cells))
        .map(|(a, g)| {
            let weight = g.iter().copied().sum::<T>() / count;
            let clamped: Vec<T> = a.iter().map(|&v| (weight * v).max(T::zero())).collect();
            FilterCam {
                weight,
                activation: a.to_vec(),
                weighted: upscale_nearest(&clamped, map_height, map_width, input_height, input_width),
            }
        })
        .collect();
    Ok(GradCamResult {
        class_neuron,
        layer: conv,
        input_height,
        input_width,
        map_height,
        map_width,
        filters,
    })
}

/// `w_xy * a_x` for an edge of the network, looking through parameter-free
/// element-wise stages.
pub fn linear_contribution<T: Scalar>(
    net: &NeuralGraph<T>,
    record: &ActivationRecord<T>,
    from: NeuronId,
    to: NeuronId,
) -> Result<T> {
    let w = net.effective_weight(from, to)?;
    let a = record
        .activation(from)
        .ok_or_else(|| Error::UnknownNeuron(from.to_string()))?;
    Ok(w * a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upscale_repeats_cells() {
        let g = upscale_nearest(&[1, 2, 3, 4], 2, 2, 4, 4);
        assert_eq!(g, vec![1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4]);
        assert_eq!(upscale_nearest(&[7, 8], 1, 2, 1, 2), vec![7, 8]);
    }
}
