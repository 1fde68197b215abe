//! End-to-end pipelines: input to strata, influence graph, GAF and strengths.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attribution::{gradcam, lrp0_backward, lrp0_backward_seeded, RelevanceMap};
use crate::dialectics::{check_property, PropertyKind, PropertyReport, PropertySpec};
use crate::error::{Error, Result};
use crate::gaf::{
    activation_characterizations, assign_strengths, extract_gaf, image_characterizations,
    tabular_characterizations, text_characterizations, Gaf, GafEdge, GafJson, GafNode, MeasureContext,
    RootQuantity, StrengthMap, StrengthSpec, TextRelevance,
};
use crate::nn::{forward, forward_from, prediction_of, ActivationRecord, Input, LayerKind, NeuralGraph, NeuronId, Prediction};
use crate::scalar::Scalar;
use crate::strata::{extract_influence_graph, select_strata, InfluenceGraph, Strata, StrataSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceKind {
    TextCnn,
    ImageCnn,
    TabularFfnn,
    Toy,
}

impl InstanceKind {
    pub const ALL: [InstanceKind; 4] = [
        InstanceKind::TextCnn,
        InstanceKind::ImageCnn,
        InstanceKind::TabularFfnn,
        InstanceKind::Toy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InstanceKind::TextCnn => "text-cnn",
            InstanceKind::ImageCnn => "image-cnn",
            InstanceKind::TabularFfnn => "tabular-ffnn",
            InstanceKind::Toy => "toy",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn strata_spec(self) -> StrataSpec {
        match self {
            InstanceKind::TextCnn => StrataSpec::TextCnn,
            InstanceKind::ImageCnn => StrataSpec::ImageCnn,
            InstanceKind::TabularFfnn => StrataSpec::TabularFfnn,
            InstanceKind::Toy => StrataSpec::Layers,
        }
    }

    /// Properties each instance is expected to satisfy.
    pub fn properties(self) -> &'static [PropertyKind] {
        match self {
            InstanceKind::TextCnn | InstanceKind::Toy => &[
                PropertyKind::DialecticalMonotonicity,
                PropertyKind::AdditiveMonotonicity,
            ],
            InstanceKind::ImageCnn => &[PropertyKind::AdditiveMonotonicity],
            InstanceKind::TabularFfnn => &[PropertyKind::CounterFactuality],
        }
    }
}

/// Per-node context of the intermediate stratum, for chi artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntermediateContext {
    pub node: String,
    /// Activation of a neuron node, or the mean over a group's neurons.
    pub activation: f64,
    /// `[first position, width]` of the winning max-pool window (text only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionHeader {
    pub label: String,
    pub class: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputEcho {
    Tokens(Vec<usize>),
    Values(Vec<f64>),
}

/// Serialized explanation: the GAF with strengths plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplanationBundle {
    pub instance: InstanceKind,
    pub prediction: PredictionHeader,
    pub input: InputEcho,
    /// Stratum sizes `|N_1|..|N_k|`.
    pub strata: Vec<usize>,
    pub nodes: Vec<GafNode>,
    pub edges: Vec<GafEdge>,
    pub intermediate: Vec<IntermediateContext>,
    pub properties: Vec<PropertyReport>,
}

impl ExplanationBundle {
    pub fn gaf_json(&self) -> GafJson {
        GafJson {
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
        }
    }

    pub fn to_gaf<T: Scalar>(&self) -> Result<(Gaf, StrengthMap<T>)> {
        self.gaf_json().to_gaf()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// A full explanation with the in-memory structures behind it.
#[derive(Debug, Clone)]
pub struct Explanation<T> {
    pub instance: InstanceKind,
    pub input: Input<T>,
    pub prediction: Prediction,
    pub record: ActivationRecord<T>,
    pub graph: InfluenceGraph,
    pub gaf: Gaf,
    pub sigma: StrengthMap<T>,
    pub properties: Vec<PropertyReport>,
    pub intermediate: Vec<IntermediateContext>,
}

impl<T: Scalar> Explanation<T> {
    pub fn strata(&self) -> &Strata {
        &self.graph.strata
    }

    pub fn bundle(&self, net: &NeuralGraph<T>) -> ExplanationBundle {
        let gaf = GafJson::new(&self.gaf, &self.sigma);
        ExplanationBundle {
            instance: self.instance,
            prediction: PredictionHeader {
                label: net.metadata().label(self.prediction.class),
                class: self.prediction.class,
                probability: self.prediction.probability,
            },
            input: match &self.input {
                Input::Tokens(t) => InputEcho::Tokens(t.clone()),
                Input::Values(v) => InputEcho::Values(v.iter().map(|x| x.to_f64_lossy()).collect()),
            },
            strata: self.strata().sizes(),
            nodes: gaf.nodes,
            edges: gaf.edges,
            intermediate: self.intermediate.clone(),
            properties: self.properties.clone(),
        }
    }

    /// Strength per intermediate-stratum node, 0 for nodes without an argument.
    /// Nodes with several arguments contribute their sum.
    pub fn intermediate_strengths(&self) -> Vec<T> {
        let mid = self.strata().k() - 2;
        let mut out = vec![T::zero(); self.strata().stratum(mid).len()];
        for i in 0..self.gaf.len() {
            if let Some((s, n)) = self.gaf.key(i) {
                if s == mid {
                    out[n] += self.sigma.get(i);
                }
            }
        }
        out
    }

    /// Activations of every neuron in the intermediate stratum, node by node.
    pub fn intermediate_activations(&self) -> Vec<T> {
        let mid = self.strata().k() - 2;
        self.strata()
            .stratum(mid)
            .iter()
            .flat_map(|n| n.members())
            .map(|m| self.record.activation(m).expect("strata lie in the network"))
            .collect()
    }
}

/// Options shared by the pipelines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplainOptions {
    pub root: RootQuantity,
    pub tolerance: f64,
    /// Attach the instance's property reports.
    pub check_properties: bool,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        Self {
            root: RootQuantity::Probability,
            tolerance: crate::dialectics::DEFAULT_TOLERANCE,
            check_properties: true,
        }
    }
}

fn properties<T: Scalar>(
    net: &NeuralGraph<T>,
    kind: InstanceKind,
    gaf: &Gaf,
    sigma: &StrengthMap<T>,
    options: &ExplainOptions,
) -> Result<Vec<PropertyReport>> {
    if !options.check_properties {
        return Ok(Vec::new());
    }
    kind.properties()
        .iter()
        .map(|&p| {
            let mut report = check_property(gaf, sigma, PropertySpec::new(p).with_tolerance(options.tolerance))?;
            if p == PropertyKind::AdditiveMonotonicity && net.has_bias() {
                report.notes.push("network has bias terms; additivity is not expected to hold".into());
            }
            Ok(report)
        })
        .collect()
}

fn group_mean<T: Scalar>(record: &ActivationRecord<T>, members: impl Iterator<Item = NeuronId>) -> f64 {
    let (sum, n) = members.fold((0.0, 0usize), |(s, n), m| {
        (s + record.activation(m).map_or(0.0, |a| a.to_f64_lossy()), n + 1)
    });
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn intermediate_context<T: Scalar>(
    net: &NeuralGraph<T>,
    record: &ActivationRecord<T>,
    strata: &Strata,
) -> Vec<IntermediateContext> {
    let mid = strata.k() - 2;
    strata
        .stratum(mid)
        .iter()
        .map(|node| IntermediateContext {
            node: node.id(),
            activation: group_mean(record, node.members()),
            window: node.neuron().and_then(|n| text_window(net, record, n)),
        })
        .collect()
}

/// Winning window `[start, width]` of a pooled text-CNN unit.
pub fn text_window<T: Scalar>(net: &NeuralGraph<T>, record: &ActivationRecord<T>, pooled: NeuronId) -> Option<[usize; 2]> {
    let pool = net.producer(pooled.layer)?;
    if !matches!(pool.kind, LayerKind::GlobalMaxPool1d { .. }) {
        return None;
    }
    let conv = net.producer(pooled.layer - 1)?;
    let (offset, _) = conv.kind.conv1d_segment(pooled.index)?;
    let width = match &conv.kind {
        LayerKind::Conv1d { widths, .. } => widths[pooled.index],
        _ => return None,
    };
    let winner = record.winners(pooled.layer)?[pooled.index];
    Some([winner - offset, width])
}

fn finish<T: Scalar>(
    net: &NeuralGraph<T>,
    kind: InstanceKind,
    input: Input<T>,
    record: ActivationRecord<T>,
    graph: InfluenceGraph,
    gaf: Gaf,
    sigma: StrengthMap<T>,
    options: &ExplainOptions,
) -> Result<Explanation<T>> {
    let prediction = prediction_of(net, &record)?;
    let properties = properties(net, kind, &gaf, &sigma, options)?;
    let intermediate = intermediate_context(net, &record, &graph.strata);
    Ok(Explanation {
        instance: kind,
        input,
        prediction,
        record,
        graph,
        gaf,
        sigma,
        properties,
        intermediate,
    })
}

fn prepare<T: Scalar>(
    net: &NeuralGraph<T>,
    input: &Input<T>,
    spec: &StrataSpec,
) -> Result<(ActivationRecord<T>, Prediction, InfluenceGraph)> {
    let record = forward(net, input)?;
    let prediction = prediction_of(net, &record)?;
    let strata = select_strata(net, spec, prediction.class)?;
    let graph = extract_influence_graph(net, &strata)?;
    Ok((record, prediction, graph))
}

/// Pads a token sequence with id 0 up to the network's sequence length.
pub fn pad_tokens<T: Scalar>(net: &NeuralGraph<T>, tokens: &[usize]) -> Result<Vec<usize>> {
    let seq_len = match net.layers().first().map(|l| &l.kind) {
        Some(LayerKind::Embedding { seq_len, .. }) => *seq_len,
        _ => {
            return Err(Error::UnsupportedArchitecture(
                "text instance needs an embedding input layer".into(),
            ))
        }
    };
    if tokens.len() > seq_len {
        return Err(Error::InputLength {
            expected: seq_len,
            got: tokens.len(),
        });
    }
    let mut padded = tokens.to_vec();
    padded.resize(seq_len, 0);
    Ok(padded)
}

/// BAF from LRP-0: a relation's sign is the sign of the relevance, strengths
/// are `a_o`, `|R(o,j)|` and `|R(j,i) R(o,j) / a_j|`.
pub fn explain_text_cnn<T: Scalar>(net: &NeuralGraph<T>, tokens: &[usize], options: &ExplainOptions) -> Result<Explanation<T>> {
    let input = Input::Tokens(pad_tokens(net, tokens)?);
    let (record, _, graph) = prepare(net, &input, &StrataSpec::TextCnn)?;
    let strata = &graph.strata;
    let o = strata.output();
    let pool_layer = strata.node((1, 0)).layer();
    let root = match options.root {
        RootQuantity::Probability => record.activation(o),
        RootQuantity::Logit => record.pre_activation(o),
    }
    .expect("output neuron recorded");
    let output = lrp0_backward_seeded(net, &record, o, pool_layer, root)?;
    let filters = strata
        .stratum(1)
        .iter()
        .map(|node| {
            let j = node.neuron().expect("filter nodes are neurons");
            let relevant = output.get(j) != T::zero() && record.activation(j) != Some(T::zero());
            relevant.then(|| lrp0_backward(net, &record, j, 1)).transpose()
        })
        .collect::<Result<Vec<Option<RelevanceMap<T>>>>>()?;
    let relevance = TextRelevance { output, filters };
    let ctx = MeasureContext {
        net,
        record: &record,
        graph: &graph,
        relevance: Some(&relevance),
        gradcam: None,
    };
    let gaf = extract_gaf(&graph, &text_characterizations(&ctx))?;
    let sigma = assign_strengths(&gaf, StrengthSpec::Text { root: options.root }, &ctx)?;
    finish(net, InstanceKind::TextCnn, input, record, graph, gaf, sigma, options)
}

/// SAF from Grad-CAM: supports where `g_j > 0` and `G_j(x, y) > 0`.
pub fn explain_image_cnn<T: Scalar>(net: &NeuralGraph<T>, image: &[T], options: &ExplainOptions) -> Result<Explanation<T>> {
    let input = Input::Values(image.to_vec());
    let (record, _, graph) = prepare(net, &input, &StrataSpec::ImageCnn)?;
    let cam = gradcam(net, &record, graph.strata.output())?;
    let ctx = MeasureContext {
        net,
        record: &record,
        graph: &graph,
        relevance: None,
        gradcam: Some(&cam),
    };
    let gaf = extract_gaf(&graph, &image_characterizations(&ctx))?;
    let sigma = assign_strengths(&gaf, StrengthSpec::Image, &ctx)?;
    finish(net, InstanceKind::ImageCnn, input, record, graph, gaf, sigma, options)
}

/// TAF from activations and weights, with critical support.
pub fn explain_tabular_ffnn<T: Scalar>(net: &NeuralGraph<T>, values: &[T], options: &ExplainOptions) -> Result<Explanation<T>> {
    let input = Input::Values(values.to_vec());
    let (record, _, graph) = prepare(net, &input, &StrataSpec::TabularFfnn)?;
    let ctx = MeasureContext {
        net,
        record: &record,
        graph: &graph,
        relevance: None,
        gradcam: None,
    };
    let gaf = extract_gaf(&graph, &tabular_characterizations(&ctx))?;
    let sigma = assign_strengths(&gaf, StrengthSpec::Tabular, &ctx)?;
    finish(net, InstanceKind::TabularFfnn, input, record, graph, gaf, sigma, options)
}

/// BAF over all layers, signs of `w a`, strengths `|a|`.
pub fn explain_toy<T: Scalar>(net: &NeuralGraph<T>, values: &[T], options: &ExplainOptions) -> Result<Explanation<T>> {
    let input = Input::Values(values.to_vec());
    let (record, _, graph) = prepare(net, &input, &StrataSpec::Layers)?;
    let ctx = MeasureContext {
        net,
        record: &record,
        graph: &graph,
        relevance: None,
        gradcam: None,
    };
    let gaf = extract_gaf(&graph, &activation_characterizations(&ctx))?;
    let sigma = assign_strengths(&gaf, StrengthSpec::Activation, &ctx)?;
    finish(net, InstanceKind::Toy, input, record, graph, gaf, sigma, options)
}

/// Dispatches on the instance kind.
pub fn explain<T: Scalar>(net: &NeuralGraph<T>, kind: InstanceKind, input: &Input<T>, options: &ExplainOptions) -> Result<Explanation<T>> {
    match (kind, input) {
        (InstanceKind::TextCnn, Input::Tokens(t)) => explain_text_cnn(net, t, options),
        (InstanceKind::ImageCnn, Input::Values(v)) => explain_image_cnn(net, v, options),
        (InstanceKind::TabularFfnn, Input::Values(v)) => explain_tabular_ffnn(net, v, options),
        (InstanceKind::Toy, Input::Values(v)) => explain_toy(net, v, options),
        (kind, _) => Err(Error::InvalidArgument(format!(
            "{} expects {} input",
            kind.name(),
            if kind == InstanceKind::TextCnn { "token" } else { "numeric" }
        ))),
    }
}

/// One-hot encodes a categorical record against `feature=value` columns.
/// Features missing from the record leave their columns at 0.
pub fn encode_record<T: Scalar>(columns: &[String], record: &BTreeMap<String, String>) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); columns.len()];
    for (feature, value) in record {
        let wanted = format!("{feature}={value}");
        match columns.iter().position(|c| *c == wanted) {
            Some(i) => out[i] = T::one(),
            None => {
                return Err(Error::UnknownCategory {
                    feature: feature.clone(),
                    value: value.clone(),
                })
            }
        }
    }
    Ok(out)
}

/// Inverse of [`encode_record`]; columns at 0 are skipped.
pub fn decode_record<T: Scalar>(columns: &[String], values: &[T]) -> BTreeMap<String, String> {
    columns
        .iter()
        .zip(values)
        .filter(|(_, v)| **v != T::zero())
        .filter_map(|(c, _)| c.split_once('='))
        .map(|(f, v)| (f.to_string(), v.to_string()))
        .collect()
}

/// Forward-rerun reading of critical support: `to` is active, and is no
/// longer active once `from` is set to zero and the layers above it rerun.
/// The tabular characterization approximates this with `a_y - w_xy a_x <= 0`.
pub fn deactivates<T: Scalar>(
    net: &NeuralGraph<T>,
    record: &ActivationRecord<T>,
    from: NeuronId,
    to: NeuronId,
) -> Result<bool> {
    let before = record
        .activation(to)
        .ok_or_else(|| Error::UnknownNeuron(to.to_string()))?;
    if before <= T::zero() {
        return Ok(false);
    }
    if from.layer >= to.layer {
        return Err(Error::InvalidArgument(format!("{from} is not below {to}")));
    }
    let mut values: Vec<T> = (0..net.layer_size(from.layer))
        .map(|i| record.activation(NeuronId::new(from.layer, i)).expect("layer recorded"))
        .collect();
    *values
        .get_mut(from.index)
        .ok_or_else(|| Error::UnknownNeuron(from.to_string()))? = T::zero();
    let after = forward_from(net, from.layer, values)?
        .activation(to)
        .expect("rerun covers the layers above");
    Ok(after <= T::zero())
}
