//! Per-kind forward, backward and connectivity kernels.

use super::{Layer, LayerKind, Padding};
use crate::scalar::Scalar;

/// How relevance or signal reaches a unit from the layer below.
pub(crate) enum Route<T> {
    /// Linear combination `z = sum(w * a)` over the listed inputs.
    Weighted(Vec<(usize, T)>),
    /// The unit copies a single input (pooling winner or identity stage).
    Single(usize),
    /// Embedding lookup of the token at the given position.
    Lookup(usize),
}

impl<T: Scalar> Layer<T> {
    /// Pre-activation values plus pooling winners (absolute input indices).
    pub(crate) fn pre_activation(&self, input: &[T]) -> (Vec<T>, Option<Vec<usize>>) {
        let bias = |i: usize| self.bias.as_ref().map_or(T::zero(), |b| b[i]);
        match &self.kind {
            LayerKind::Dense { inputs, outputs } => {
                let mut z: Vec<T> = (0..*outputs).map(bias).collect();
                for x in 0..*inputs {
                    let a = input[x];
                    if a == T::zero() {
                        continue;
                    }
                    let row = &self.weights[x * outputs..(x + 1) * outputs];
                    for (zy, &w) in z.iter_mut().zip(row) {
                        *zy = *zy + a * w;
                    }
                }
                (z, None)
            }
            LayerKind::Embedding { dim, .. } => {
                let mut z = Vec::with_capacity(input.len() * dim);
                for &token in input {
                    let t = token.to_usize().unwrap_or(0);
                    z.extend_from_slice(&self.weights[t * dim..(t + 1) * dim]);
                }
                (z, None)
            }
            LayerKind::Conv1d {
                seq_len,
                channels,
                widths,
            } => {
                let mut z = Vec::with_capacity(self.kind.output_len());
                let mut woff = 0;
                for (f, &w) in widths.iter().enumerate() {
                    let kernel = &self.weights[woff..woff + w * channels];
                    for t in 0..=(seq_len - w) {
                        let window = &input[t * channels..(t + w) * channels];
                        let s: T = window.iter().zip(kernel).map(|(&a, &k)| a * k).sum();
                        z.push(s + bias(f));
                    }
                    woff += w * channels;
                }
                (z, None)
            }
            LayerKind::GlobalMaxPool1d { segments } => {
                let mut z = Vec::with_capacity(segments.len());
                let mut winners = Vec::with_capacity(segments.len());
                let mut off = 0;
                for &len in segments {
                    let (i, v) = max_in(input, off..off + len);
                    z.push(v);
                    winners.push(i);
                    off += len;
                }
                (z, Some(winners))
            }
            LayerKind::Conv2d {
                in_channels,
                filters,
                height,
                width,
                kernel,
                padding,
            } => {
                let (oh, ow) = self.kind.conv2d_output_dims();
                let pad = pad_of(*padding, *kernel) as isize;
                let mut z = Vec::with_capacity(filters * oh * ow);
                for f in 0..*filters {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut s = bias(f);
                            for c in 0..*in_channels {
                                for ky in 0..*kernel {
                                    let iy = oy as isize + ky as isize - pad;
                                    if iy < 0 || iy >= *height as isize {
                                        continue;
                                    }
                                    for kx in 0..*kernel {
                                        let ix = ox as isize + kx as isize - pad;
                                        if ix < 0 || ix >= *width as isize {
                                            continue;
                                        }
                                        let a = input[(c * height + iy as usize) * width + ix as usize];
                                        let w = self.weights[((f * in_channels + c) * kernel + ky) * kernel + kx];
                                        s = s + a * w;
                                    }
                                }
                            }
                            z.push(s);
                        }
                    }
                }
                (z, None)
            }
            LayerKind::MaxPool2d { .. } => {
                let n = self.kind.output_len();
                let mut z = Vec::with_capacity(n);
                let mut winners = Vec::with_capacity(n);
                for out in 0..n {
                    let window = self.structural_inputs(out);
                    let mut best = (window[0], input[window[0]]);
                    for &i in &window[1..] {
                        if input[i] > best.1 {
                            best = (i, input[i]);
                        }
                    }
                    winners.push(best.0);
                    z.push(best.1);
                }
                (z, Some(winners))
            }
            LayerKind::Flatten { .. } | LayerKind::Elementwise { .. } => (input.to_vec(), None),
        }
    }

    /// Gradient with respect to the layer input given the gradient at the
    /// pre-activations.
    pub(crate) fn backward_input(&self, input: &[T], winners: Option<&[usize]>, grad: &[T]) -> Vec<T> {
        let mut gin = vec![T::zero(); input.len()];
        match &self.kind {
            LayerKind::Dense { inputs, outputs } => {
                for (x, g) in gin.iter_mut().enumerate().take(*inputs) {
                    let row = &self.weights[x * outputs..(x + 1) * outputs];
                    *g = row.iter().zip(grad).map(|(&w, &g)| w * g).sum();
                }
            }
            LayerKind::Embedding { .. } => {}
            LayerKind::GlobalMaxPool1d { .. } | LayerKind::MaxPool2d { .. } => {
                let winners = winners.expect("pooling layer records winners");
                for (&w, &g) in winners.iter().zip(grad) {
                    gin[w] = gin[w] + g;
                }
            }
            LayerKind::Flatten { .. } | LayerKind::Elementwise { .. } => gin.copy_from_slice(grad),
            LayerKind::Conv1d { .. } | LayerKind::Conv2d { .. } => {
                for (out, &g) in grad.iter().enumerate() {
                    if g == T::zero() {
                        continue;
                    }
                    if let Route::Weighted(links) = self.route(out, None) {
                        for (i, w) in links {
                            gin[i] = gin[i] + w * g;
                        }
                    }
                }
            }
        }
        gin
    }

    /// Adds parameter gradients for one example into the accumulators.
    pub(crate) fn accumulate_param_grads(&self, input: &[T], grad: &[T], wgrad: &mut [T], bgrad: Option<&mut [T]>) {
        match &self.kind {
            LayerKind::Dense { inputs, outputs } => {
                for x in 0..*inputs {
                    let a = input[x];
                    if a == T::zero() {
                        continue;
                    }
                    let row = &mut wgrad[x * outputs..(x + 1) * outputs];
                    for (w, &g) in row.iter_mut().zip(grad) {
                        *w = *w + a * g;
                    }
                }
            }
            LayerKind::Embedding { dim, .. } => {
                for (p, &token) in input.iter().enumerate() {
                    let t = token.to_usize().unwrap_or(0);
                    for d in 0..*dim {
                        wgrad[t * dim + d] = wgrad[t * dim + d] + grad[p * dim + d];
                    }
                }
            }
            LayerKind::Conv1d { seq_len, channels, widths } => {
                let mut woff = 0;
                let mut ooff = 0;
                for &w in widths {
                    let n = seq_len - w + 1;
                    for t in 0..n {
                        let g = grad[ooff + t];
                        if g == T::zero() {
                            continue;
                        }
                        let window = &input[t * channels..(t + w) * channels];
                        for (k, &a) in window.iter().enumerate() {
                            wgrad[woff + k] = wgrad[woff + k] + a * g;
                        }
                    }
                    woff += w * channels;
                    ooff += n;
                }
            }
            LayerKind::Conv2d {
                in_channels,
                height,
                width,
                kernel,
                padding,
                ..
            } => {
                let (oh, ow) = self.kind.conv2d_output_dims();
                let pad = pad_of(*padding, *kernel) as isize;
                for (out, &g) in grad.iter().enumerate() {
                    if g == T::zero() {
                        continue;
                    }
                    let f = out / (oh * ow);
                    let (oy, ox) = ((out % (oh * ow)) / ow, out % ow);
                    for c in 0..*in_channels {
                        for ky in 0..*kernel {
                            let iy = oy as isize + ky as isize - pad;
                            if iy < 0 || iy >= *height as isize {
                                continue;
                            }
                            for kx in 0..*kernel {
                                let ix = ox as isize + kx as isize - pad;
                                if ix < 0 || ix >= *width as isize {
                                    continue;
                                }
                                let a = input[(c * height + iy as usize) * width + ix as usize];
                                let wi = ((f * in_channels + c) * kernel + ky) * kernel + kx;
                                wgrad[wi] = wgrad[wi] + a * g;
                            }
                        }
                    }
                }
            }
            _ => {}
        }
        if let Some(bgrad) = bgrad {
            match &self.kind {
                LayerKind::Dense { .. } => {
                    for (b, &g) in bgrad.iter_mut().zip(grad) {
                        *b = *b + g;
                    }
                }
                LayerKind::Conv1d { .. } | LayerKind::Conv2d { .. } => {
                    let filters = bgrad.len();
                    let per = grad.len() / filters.max(1);
                    for (out, &g) in grad.iter().enumerate() {
                        let f = match &self.kind {
                            LayerKind::Conv1d { .. } => self.conv1d_filter_of(out).0,
                            _ => out / per,
                        };
                        bgrad[f] = bgrad[f] + g;
                    }
                }
                _ => {}
            }
        }
    }

    /// `(filter, position)` of a conv1d output unit.
    pub(crate) fn conv1d_filter_of(&self, out: usize) -> (usize, usize) {
        if let LayerKind::Conv1d { seq_len, widths, .. } = &self.kind {
            let mut off = 0;
            for (f, w) in widths.iter().enumerate() {
                let n = seq_len - w + 1;
                if out < off + n {
                    return (f, out - off);
                }
                off += n;
            }
        }
        panic!("unit {out} is not a conv1d output");
    }

    /// Inputs structurally connected to output unit `out`.
    pub(crate) fn structural_inputs(&self, out: usize) -> Vec<usize> {
        match &self.kind {
            LayerKind::GlobalMaxPool1d { segments } => {
                let off: usize = segments[..out].iter().sum();
                (off..off + segments[out]).collect()
            }
            LayerKind::MaxPool2d {
                height,
                width,
                pool,
                ..
            } => {
                let (oh, ow) = (height / pool, width / pool);
                let c = out / (oh * ow);
                let (oy, ox) = ((out % (oh * ow)) / ow, out % ow);
                let mut v = Vec::with_capacity(pool * pool);
                for dy in 0..*pool {
                    for dx in 0..*pool {
                        v.push((c * height + oy * pool + dy) * width + ox * pool + dx);
                    }
                }
                v
            }
            _ => match self.route(out, None) {
                Route::Weighted(links) => links.into_iter().map(|(i, _)| i).collect(),
                Route::Single(i) | Route::Lookup(i) => vec![i],
            },
        }
    }

    /// Signal route into `out`. Pooling layers need the recorded winners.
    pub(crate) fn route(&self, out: usize, winners: Option<&[usize]>) -> Route<T> {
        match &self.kind {
            LayerKind::Dense { inputs, outputs } => {
                Route::Weighted((0..*inputs).map(|x| (x, self.weights[x * outputs + out])).collect())
            }
            LayerKind::Embedding { dim, .. } => Route::Lookup(out / dim),
            LayerKind::Conv1d { channels, widths, .. } => {
                let (f, t) = self.conv1d_filter_of(out);
                let woff: usize = widths[..f].iter().sum::<usize>() * channels;
                let w = widths[f];
                Route::Weighted(
                    (0..w * channels)
                        .map(|k| (t * channels + k, self.weights[woff + k]))
                        .collect(),
                )
            }
            LayerKind::Conv2d {
                in_channels,
                height,
                width,
                kernel,
                padding,
                ..
            } => {
                let (oh, ow) = self.kind.conv2d_output_dims();
                let pad = pad_of(*padding, *kernel) as isize;
                let f = out / (oh * ow);
                let (oy, ox) = ((out % (oh * ow)) / ow, out % ow);
                let mut links = Vec::with_capacity(in_channels * kernel * kernel);
                for c in 0..*in_channels {
                    for ky in 0..*kernel {
                        let iy = oy as isize + ky as isize - pad;
                        if iy < 0 || iy >= *height as isize {
                            continue;
                        }
                        for kx in 0..*kernel {
                            let ix = ox as isize + kx as isize - pad;
                            if ix < 0 || ix >= *width as isize {
                                continue;
                            }
                            let i = (c * height + iy as usize) * width + ix as usize;
                            let wi = ((f * in_channels + c) * kernel + ky) * kernel + kx;
                            links.push((i, self.weights[wi]));
                        }
                    }
                }
                Route::Weighted(links)
            }
            LayerKind::GlobalMaxPool1d { .. } | LayerKind::MaxPool2d { .. } => {
                let winners = winners.expect("pooling route requires recorded winners");
                Route::Single(winners[out])
            }
            LayerKind::Flatten { .. } | LayerKind::Elementwise { .. } => Route::Single(out),
        }
    }

    /// Weight of the link `input -> out`, if structurally present.
    pub(crate) fn link_weight(&self, input: usize, out: usize) -> Option<T> {
        if out >= self.kind.output_len() || input >= self.kind.input_len() {
            return None;
        }
        match &self.kind {
            LayerKind::Dense { .. } | LayerKind::Conv1d { .. } | LayerKind::Conv2d { .. } => {
                match self.route(out, None) {
                    Route::Weighted(links) => links.into_iter().find(|(i, _)| *i == input).map(|(_, w)| w),
                    _ => None,
                }
            }
            LayerKind::Embedding { .. } => None,
            _ => self.structural_inputs(out).contains(&input).then(T::one),
        }
    }
}

fn pad_of(padding: Padding, kernel: usize) -> usize {
    match padding {
        Padding::Same => kernel / 2,
        Padding::Valid => 0,
    }
}

/// Maximum over a range, lowest index on ties.
fn max_in<T: Scalar>(values: &[T], range: std::ops::Range<usize>) -> (usize, T) {
    let mut best = (range.start, values[range.start]);
    for i in range {
        if values[i] > best.1 {
            best = (i, values[i]);
        }
    }
    best
}
