//! Perturbations, relative differences, the deep-fidelity protocol and
//! timing of explanation generation.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{rng, text_arch, text_corpus, TEXT_DIM, TEXT_SEQ_LEN};
use crate::error::{Error, Result};
use crate::instances::{explain, ExplainOptions, Explanation, InstanceKind};
use crate::attribution::lrp0_backward;
use crate::nn::{forward, initialize, Activation, ActivationRecord, Input, NeuralGraph, NeuronId};
use crate::scalar::Scalar;

/// How a similar input is derived from an original one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Perturbation {
    /// Gaussian noise with standard deviation `std` on the 0-255 pixel scale.
    GaussianPixel { std: f64 },
    /// One categorical feature set to another of its values; `groups` are the
    /// one-hot columns of each feature.
    CategoricalFlip { groups: Vec<Vec<usize>> },
    /// Each token replaced by its synonym, if it has one, with probability `rate`.
    TokenSubstitute { rate: f64, synonyms: BTreeMap<usize, usize> },
    Identity,
}

impl Perturbation {
    pub fn gaussian(std: f64) -> Result<Self> {
        if !(std > 0.0 && std.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise std must be positive, got {std}")));
        }
        Ok(Self::GaussianPixel { std })
    }

    /// Groups columns named `feature=value` by feature, in column order.
    pub fn categorical_flip(columns: &[String]) -> Result<Self> {
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, c) in columns.iter().enumerate() {
            let (feature, _) = c
                .split_once('=')
                .ok_or_else(|| Error::IncompatiblePerturbation(format!("column {c} is not one-hot")))?;
            match groups.iter_mut().find(|g| g.0 == feature) {
                Some(g) => g.1.push(i),
                None => groups.push((feature.to_string(), vec![i])),
            }
        }
        if !groups.iter().any(|g| g.1.len() > 1) {
            return Err(Error::IncompatiblePerturbation("no feature has two values".into()));
        }
        Ok(Self::CategoricalFlip {
            groups: groups.into_iter().map(|g| g.1).collect(),
        })
    }

    pub fn token_substitute(rate: f64, synonyms: BTreeMap<usize, usize>) -> Result<Self> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("substitution rate must be in [0, 1], got {rate}")));
        }
        Ok(Self::TokenSubstitute { rate, synonyms })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::GaussianPixel { .. } => "gaussian-pixel",
            Self::CategoricalFlip { .. } => "categorical-flip",
            Self::TokenSubstitute { .. } => "token-substitute",
            Self::Identity => "identity",
        }
    }
}

/// Noise std of image pairs, on the 0-255 scale.
pub const PIXEL_NOISE_STD: f64 = 10.0;
pub const SUBSTITUTION_RATE: f64 = 0.5;

/// The perturbation used for `kind` by default. Tabular nets need their
/// one-hot column names and text nets a synonym table.
pub fn default_perturbation<T: Scalar>(
    net: &NeuralGraph<T>,
    kind: InstanceKind,
    synonyms: Option<&BTreeMap<usize, usize>>,
) -> Result<Perturbation> {
    match kind {
        InstanceKind::ImageCnn => Perturbation::gaussian(PIXEL_NOISE_STD),
        InstanceKind::TabularFfnn => {
            let columns = net
                .metadata()
                .features
                .as_ref()
                .ok_or_else(|| Error::IncompatiblePerturbation("tabular net without column names".into()))?;
            Perturbation::categorical_flip(columns)
        }
        InstanceKind::TextCnn => {
            let table = synonyms.ok_or_else(|| Error::IncompatiblePerturbation("text pairs need a synonym table".into()))?;
            Perturbation::token_substitute(SUBSTITUTION_RATE, table.clone())
        }
        InstanceKind::Toy => Err(Error::IncompatiblePerturbation("the toy instance has no perturbation".into())),
    }
}

/// `input` perturbed with the RNG stream `stream` of `seed`.
pub fn perturb<T: Scalar>(input: &Input<T>, kind: &Perturbation, seed: u64, stream: u64) -> Result<Input<T>> {
    let mut r = rng(seed, stream);
    match (kind, input) {
        (Perturbation::Identity, _) => Ok(input.clone()),
        (Perturbation::GaussianPixel { std }, Input::Values(v)) => {
            let noise = Normal::new(0.0, *std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            Ok(Input::Values(
                v.iter()
                    .map(|x| {
                        let p = (x.to_f64_lossy() * 255.0 + noise.sample(&mut r)).clamp(0.0, 255.0);
                        T::lit(p / 255.0)
                    })
                    .collect(),
            ))
        }
        (Perturbation::CategoricalFlip { groups }, Input::Values(v)) => {
            let width = groups.iter().flatten().count();
            if width != v.len() {
                return Err(Error::IncompatiblePerturbation(format!(
                    "{} columns for a record of {}",
                    width,
                    v.len()
                )));
            }
            let flippable: Vec<&Vec<usize>> = groups.iter().filter(|g| g.len() > 1).collect();
            let group = flippable.choose(&mut r).expect("checked on construction");
            let current = group.iter().position(|&c| v[c] != T::zero());
            let others: Vec<usize> = (0..group.len()).filter(|&i| Some(i) != current).collect();
            let pick = *others.choose(&mut r).expect("at least two values");
            let mut out = v.clone();
            for (i, &c) in group.iter().enumerate() {
                out[c] = if i == pick { T::one() } else { T::zero() };
            }
            Ok(Input::Values(out))
        }
        (Perturbation::TokenSubstitute { rate, synonyms }, Input::Tokens(t)) => Ok(Input::Tokens(
            t.iter()
                .map(|&tok| {
                    let hit = r.random_bool(*rate);
                    match synonyms.get(&tok) {
                        Some(&s) if hit => s,
                        _ => tok,
                    }
                })
                .collect(),
        )),
        _ => Err(Error::IncompatiblePerturbation(format!(
            "{} does not apply to this input",
            kind.name()
        ))),
    }
}

/// `2 |x' - x|_1 / (|x'|_1 + |x|_1)`, taken as 0 when both are zero.
pub fn relative_difference(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!("lengths {} and {} differ", x.len(), y.len())));
    }
    let diff: f64 = x.iter().zip(y).map(|(a, b)| (b - a).abs()).sum();
    let norm: f64 = x.iter().zip(y).map(|(a, b)| a.abs() + b.abs()).sum();
    Ok(if norm == 0.0 { 0.0 } else { 2.0 * diff / norm })
}

/// Mean over neurons of the pairwise relative difference.
pub fn mean_relative_difference(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!("lengths {} and {} differ", x.len(), y.len())));
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| relative_difference(&[a], &[b]).expect("equal lengths"))
        .sum();
    Ok(total / x.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationDistance {
    /// Relative difference of the whole activation vector.
    #[default]
    Vector,
    /// Mean of the per-neuron relative differences.
    NeuronMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityConfig {
    pub pairs: usize,
    pub seed: u64,
    /// Largest change of the original class's probability for a similar output.
    pub output_threshold: f64,
    /// Activation relative difference below which computations are similar.
    pub activation_threshold: f64,
    pub activation_distance: ActivationDistance,
}

impl Default for FidelityConfig {
    fn default() -> Self {
        Self {
            pairs: 500,
            seed: 0,
            output_threshold: 0.05,
            activation_threshold: 0.2,
            activation_distance: ActivationDistance::Vector,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub index: usize,
    pub sample: usize,
    pub delta_probability: f64,
    pub activation_drel: f64,
    pub strength_drel: f64,
    pub similar_activations: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Bin edges, one more than the counts.
    pub edges: Vec<f64>,
    pub activation: Vec<usize>,
    pub strength: Vec<usize>,
    pub conditional: Vec<usize>,
}

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelitySummary {
    pub mean_activation_drel: f64,
    pub mean_strength_drel: f64,
    /// Mean strength difference over pairs with similar activations.
    pub mean_conditional_strength_drel: f64,
    pub conditional_pairs: usize,
    /// `1 - conditional / unconditional`; 0 where undefined.
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub instance: InstanceKind,
    pub perturbation: String,
    pub config: FidelityConfig,
    /// No pair kept a similar output.
    pub empty: bool,
    pub rejected: usize,
    pub pairs: Vec<PairRecord>,
    pub summary: FidelitySummary,
    pub histogram: Histogram,
}

impl FidelityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// One row per kept pair.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for p in &self.pairs {
            w.serialize(p).map_err(|e| Error::Inconsistent(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Inconsistent(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

/// Probability of `class` in a forward record.
fn class_probability<T: Scalar>(net: &NeuralGraph<T>, record: &ActivationRecord<T>, class: usize) -> f64 {
    let out = record.output();
    let single_sigmoid = out.len() == 1 && net.layers().last().map(|l| l.activation) == Some(Activation::Sigmoid);
    if single_sigmoid {
        let p = out[0].to_f64_lossy();
        if class == 1 {
            p
        } else {
            1.0 - p
        }
    } else {
        out[class].to_f64_lossy()
    }
}

fn lossy<T: Scalar>(v: Vec<T>) -> Vec<f64> {
    v.into_iter().map(|x| x.to_f64_lossy()).collect()
}

/// Pair `index`: dataset item `index mod len` and its perturbation on RNG
/// stream `index`. `None` if the output changed too much.
pub fn evaluate_pair<T: Scalar>(
    net: &NeuralGraph<T>,
    kind: InstanceKind,
    dataset: &[Input<T>],
    perturbation: &Perturbation,
    config: &FidelityConfig,
    index: usize,
) -> Result<Option<PairRecord>> {
    if dataset.is_empty() {
        return Err(Error::InvalidDataset("empty fidelity dataset".into()));
    }
    let sample = index % dataset.len();
    let options = ExplainOptions {
        check_properties: false,
        ..ExplainOptions::default()
    };
    let original = explain(net, kind, &dataset[sample], &options)?;
    let similar = perturb(&original.input, perturbation, config.seed, index as u64)?;
    let other = explain(net, kind, &similar, &options)?;
    let class = original.prediction.class;
    let delta = (class_probability(net, &other.record, class) - original.prediction.probability).abs();
    if delta >= config.output_threshold {
        return Ok(None);
    }
    let (a, b) = (lossy(original.intermediate_activations()), lossy(other.intermediate_activations()));
    let activation_drel = match config.activation_distance {
        ActivationDistance::Vector => relative_difference(&a, &b)?,
        ActivationDistance::NeuronMean => mean_relative_difference(&a, &b)?,
    };
    let strength_drel = strength_difference(&original, &other)?;
    Ok(Some(PairRecord {
        index,
        sample,
        delta_probability: delta,
        activation_drel,
        strength_drel,
        similar_activations: activation_drel < config.activation_threshold,
    }))
}

/// Relative difference of intermediate argument strengths aligned by node.
pub fn strength_difference<T: Scalar>(a: &Explanation<T>, b: &Explanation<T>) -> Result<f64> {
    relative_difference(&lossy(a.intermediate_strengths()), &lossy(b.intermediate_strengths()))
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn histogram(values: impl Iterator<Item = f64>) -> Vec<usize> {
    let mut counts = vec![0; HISTOGRAM_BINS];
    let width = 2.0 / HISTOGRAM_BINS as f64;
    for v in values {
        counts[((v / width) as usize).min(HISTOGRAM_BINS - 1)] += 1;
    }
    counts
}

/// Statistics of kept pairs; independent of the order they are given in.
pub fn summarize(
    instance: InstanceKind,
    perturbation: &Perturbation,
    config: &FidelityConfig,
    mut pairs: Vec<PairRecord>,
    rejected: usize,
) -> FidelityReport {
    pairs.sort_by_key(|p| p.index);
    let mean_activation_drel = mean(pairs.iter().map(|p| p.activation_drel));
    let mean_strength_drel = mean(pairs.iter().map(|p| p.strength_drel));
    let conditional = || pairs.iter().filter(|p| p.similar_activations);
    let mean_conditional_strength_drel = mean(conditional().map(|p| p.strength_drel));
    let conditional_pairs = conditional().count();
    let reduction = if conditional_pairs == 0 || mean_strength_drel == 0.0 {
        0.0
    } else {
        1.0 - mean_conditional_strength_drel / mean_strength_drel
    };
    let histogram = Histogram {
        edges: (0..=HISTOGRAM_BINS).map(|i| 2.0 * i as f64 / HISTOGRAM_BINS as f64).collect(),
        activation: histogram(pairs.iter().map(|p| p.activation_drel)),
        strength: histogram(pairs.iter().map(|p| p.strength_drel)),
        conditional: histogram(conditional().map(|p| p.strength_drel)),
    };
    FidelityReport {
        instance,
        perturbation: perturbation.name().into(),
        config: config.clone(),
        empty: pairs.is_empty(),
        rejected,
        summary: FidelitySummary {
            mean_activation_drel,
            mean_strength_drel,
            mean_conditional_strength_drel,
            conditional_pairs,
            reduction,
        },
        histogram,
        pairs,
    }
}

/// Explains `config.pairs` input pairs and compares activations and strengths
/// of the intermediate stratum over those with similar outputs.
pub fn deep_fidelity_eval<T: Scalar>(
    net: &NeuralGraph<T>,
    kind: InstanceKind,
    dataset: &[Input<T>],
    perturbation: &Perturbation,
    config: &FidelityConfig,
) -> Result<FidelityReport> {
    let mut kept = Vec::new();
    let mut rejected = 0;
    for index in 0..config.pairs {
        match evaluate_pair(net, kind, dataset, perturbation, config, index)? {
            Some(p) => kept.push(p),
            None => rejected += 1,
        }
    }
    Ok(summarize(kind, perturbation, config, kept, rejected))
}

/// Median wall-clock milliseconds of `reps` runs of `f`.
pub fn median_ms(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps.max(1) {
        let start = Instant::now();
        f()?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    let n = times.len();
    Ok(if n % 2 == 1 {
        times[n / 2]
    } else {
        (times[n / 2 - 1] + times[n / 2]) / 2.0
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostPoint {
    /// `|N_2|`.
    pub filters: usize,
    pub dax_ms: f64,
    /// `c_f`.
    pub forward_ms: f64,
    /// `c_b`: one relevance pass from a filter to the inputs.
    pub backprop_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least squares line through `(x, y)`.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<LinearFit> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument("a line needs two points".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("x values are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub repetitions: usize,
    pub points: Vec<CostPoint>,
    /// DAX milliseconds against `|N_2|`.
    pub fit: LinearFit,
    /// Median milliseconds of one tabular explanation, when measured.
    pub tabular_ms: Option<f64>,
}

impl CostReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

pub const COST_SIZES: [usize; 4] = [8, 16, 32, 64];
pub const COST_REPETITIONS: usize = 30;

/// Times text explanations on untrained text nets with `sizes` filters, all
/// explaining one corpus document.
pub fn measure_text_costs(sizes: &[usize], reps: usize, seed: u64) -> Result<CostReport> {
    let corpus = text_corpus(seed, 1);
    let tokens = corpus.docs[0].tokens.clone();
    let input = Input::Tokens(tokens.clone());
    let options = ExplainOptions {
        check_properties: false,
        ..ExplainOptions::default()
    };
    let mut points = Vec::with_capacity(sizes.len());
    for &filters in sizes {
        let arch = text_arch(corpus.vocab.clone(), corpus.labels.clone(), TEXT_SEQ_LEN, TEXT_DIM, filters);
        let net = initialize::<f64>(&arch, seed)?;
        let record = forward(&net, &input)?;
        let pooled = NeuronId::new(3, 0);
        points.push(CostPoint {
            filters,
            dax_ms: median_ms(reps, || explain(&net, InstanceKind::TextCnn, &input, &options).map(drop))?,
            forward_ms: median_ms(reps, || forward(&net, &input).map(drop))?,
            backprop_ms: median_ms(reps, || lrp0_backward(&net, &record, pooled, 1).map(drop))?,
        });
    }
    let fit = linear_fit(&points.iter().map(|p| (p.filters as f64, p.dax_ms)).collect::<Vec<_>>())?;
    Ok(CostReport {
        repetitions: reps,
        points,
        fit,
        tabular_ms: None,
    })
}

/// Median milliseconds of one explanation of `input`, property checks off.
pub fn time_single_dax<T: Scalar>(net: &NeuralGraph<T>, kind: InstanceKind, input: &Input<T>, reps: usize) -> Result<f64> {
    let options = ExplainOptions {
        check_properties: false,
        ..ExplainOptions::default()
    };
    median_ms(reps, || explain(net, kind, input, &options).map(drop))
}
