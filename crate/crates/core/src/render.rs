//! Pruning, interpretations of arguments, and the rendered explanation formats.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaf::{Gaf, RelationType, StrengthMap};
use crate::instances::{explain, text_window, ExplainOptions, Explanation, InstanceKind, PredictionHeader};
use crate::nn::{forward, Input, LayerKind, NeuralGraph, NeuronId};
use crate::scalar::Scalar;
use crate::strata::{select_strata, Node, Strata};

/// How many supporters and attackers to keep under one argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopK {
    pub support: usize,
    pub attack: usize,
}

impl Default for TopK {
    fn default() -> Self {
        Self { support: 3, attack: 3 }
    }
}

/// A pruned GAF; `original[i]` is the index of argument `i` before pruning.
#[derive(Debug, Clone, PartialEq)]
pub struct Pruned<T> {
    pub gaf: Gaf,
    pub sigma: StrengthMap<T>,
    pub original: Vec<usize>,
}

/// Keeps the `k` strongest supporters (critical ones included) and the `k`
/// strongest attackers of the root, then recursively of every kept argument.
/// `limits[d]` applies to the children of arguments at depth `d`; the last
/// entry covers deeper levels. Ties go to the lower argument id.
pub fn prune_top_k<T: Scalar>(gaf: &Gaf, sigma: &StrengthMap<T>, limits: &[TopK]) -> Result<Pruned<T>> {
    if limits.is_empty() || limits.iter().any(|l| l.support == 0 || l.attack == 0) {
        return Err(Error::InvalidArgument("top-k bounds must be at least 1".into()));
    }
    let mut keep = vec![false; gaf.len()];
    if gaf.is_empty() {
        return Ok(Pruned {
            gaf: gaf.clone(),
            sigma: sigma.clone(),
            original: Vec::new(),
        });
    }
    keep[0] = true;
    let mut frontier = vec![0usize];
    let mut depth = 0;
    while !frontier.is_empty() {
        let limit = limits[depth.min(limits.len() - 1)];
        let mut next = Vec::new();
        for &a in &frontier {
            let strongest = |mut kids: Vec<usize>, k: usize| {
                kids.sort_by(|&x, &y| {
                    sigma
                        .get(y)
                        .partial_cmp(&sigma.get(x))
                        .expect("finite strengths")
                        .then_with(|| gaf.argument(x).id.cmp(&gaf.argument(y).id))
                });
                kids.truncate(k);
                kids
            };
            let sup = strongest(gaf.supporters(a).collect(), limit.support);
            let att = strongest(gaf.attackers(a).collect(), limit.attack);
            for c in sup.into_iter().chain(att) {
                keep[c] = true;
                next.push(c);
            }
        }
        next.sort_unstable();
        frontier = next;
        depth += 1;
    }
    Ok(Pruned {
        gaf: gaf.restrict(&keep)?,
        sigma: sigma.restrict(&keep),
        original: (0..gaf.len()).filter(|&i| keep[i]).collect(),
    })
}

/// Percentile by linear interpolation between closest ranks of sorted data.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = p / 100.0 * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

/// Percentile levels kept per intermediate node.
pub const PERCENTILE_LEVELS: [f64; 7] = [1.0, 10.0, 25.0, 50.0, 75.0, 90.0, 99.0];
pub const STRONG_PERCENTILE: f64 = 90.0;
pub const WEAK_PERCENTILE: f64 = 1.0;
/// Supporters at or above this quantile of a class's supporter strengths
/// support it strongly.
pub const STRONG_SUPPORT_QUANTILE: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationLevel {
    Strong,
    Weak,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    pub node: String,
    pub p1: f64,
    pub p90: f64,
    /// Values at [`PERCENTILE_LEVELS`].
    pub percentiles: Vec<f64>,
}

/// Activation distributions of the intermediate stratum over `n_S` samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStats {
    pub instance: InstanceKind,
    /// `n_S`.
    pub samples: usize,
    pub seed: u64,
    /// Indices of the sampled items, ascending.
    pub sample_indices: Vec<usize>,
    pub nodes: Vec<NodeStats>,
    /// Per class, the supporter-strength quantile above which a supporter of
    /// the root counts as strong; `None` if no sample supported that class.
    pub supporter_threshold: Vec<Option<f64>>,
}

impl ReferenceStats {
    pub fn classify(&self, node: usize, activation: f64) -> ActivationLevel {
        let s = &self.nodes[node];
        if activation > s.p90 {
            ActivationLevel::Strong
        } else if activation < s.p1 {
            ActivationLevel::Weak
        } else {
            ActivationLevel::Neutral
        }
    }

    pub fn supports_strongly(&self, class: usize, strength: f64) -> bool {
        self.supporter_threshold
            .get(class)
            .copied()
            .flatten()
            .is_some_and(|t| strength >= t)
    }
}

/// Activation of a node: the neuron's value, or the mean over a group.
fn node_activation<T: Scalar>(record: &crate::nn::ActivationRecord<T>, node: &Node) -> f64 {
    let (sum, n) = node.members().fold((0.0, 0usize), |(s, n), m| {
        (s + record.activation(m).map_or(0.0, |a| a.to_f64_lossy()), n + 1)
    });
    sum / n.max(1) as f64
}

/// Sorted sample of `n_s` distinct indices below `len`.
pub fn sample_indices(len: usize, n_s: usize, seed: u64) -> Result<Vec<usize>> {
    if len == 0 {
        return Err(Error::InvalidDataset("empty reference corpus".into()));
    }
    if n_s == 0 || n_s > len {
        return Err(Error::InvalidArgument(format!(
            "n_S must be in 1..={len}, got {n_s}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, len, n_s).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Intermediate stratum of `kind` on `net`; it does not depend on the class.
fn intermediate<T: Scalar>(net: &NeuralGraph<T>, kind: InstanceKind) -> Result<Strata> {
    select_strata(net, &kind.strata_spec(), 0)
}

/// Percentiles of every intermediate node's activation, and per-class
/// thresholds on root-supporter strengths, over `n_s` sampled inputs.
pub fn build_reference_stats<T: Scalar>(
    net: &NeuralGraph<T>,
    kind: InstanceKind,
    corpus: &[Input<T>],
    n_s: usize,
    seed: u64,
) -> Result<ReferenceStats> {
    let idx = sample_indices(corpus.len(), n_s, seed)?;
    let strata = intermediate(net, kind)?;
    let mid = strata.k() - 2;
    let nodes = strata.stratum(mid);
    let mut acts = vec![Vec::with_capacity(n_s); nodes.len()];
    let classes = net.layer_size(net.output_layer()).max(2);
    let mut supporters = vec![Vec::new(); classes];
    let options = ExplainOptions {
        check_properties: false,
        ..ExplainOptions::default()
    };
    for &i in &idx {
        let ex = explain(net, kind, &corpus[i], &options)?;
        for (n, node) in nodes.iter().enumerate() {
            acts[n].push(node_activation(&ex.record, node));
        }
        supporters[ex.prediction.class].extend(ex.gaf.supporters(0).map(|c| ex.sigma.get(c).to_f64_lossy()));
    }
    let by_value = |a: &f64, b: &f64| a.partial_cmp(b).expect("finite activations");
    let nodes = nodes
        .iter()
        .zip(acts)
        .map(|(node, mut a)| {
            a.sort_by(by_value);
            NodeStats {
                node: node.id(),
                p1: percentile(&a, WEAK_PERCENTILE),
                p90: percentile(&a, STRONG_PERCENTILE),
                percentiles: PERCENTILE_LEVELS.iter().map(|&p| percentile(&a, p)).collect(),
            }
        })
        .collect();
    let supporter_threshold = supporters
        .into_iter()
        .map(|mut s| {
            s.sort_by(by_value);
            (!s.is_empty()).then(|| percentile(&s, STRONG_SUPPORT_QUANTILE))
        })
        .collect();
    Ok(ReferenceStats {
        instance: kind,
        samples: n_s,
        seed,
        sample_indices: idx,
        nodes,
        supporter_threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloudEntry {
    pub ngram: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub sample: usize,
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
    pub activation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub label: String,
    pub relation: RelationType,
    pub strength: f64,
    /// `strongest` or `weakest` among the children of that relation type.
    pub rank: String,
}

/// Human-facing interpretation of an argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "kebab-case")]
pub enum ChiArtifact {
    WordCloud(Vec<CloudEntry>),
    PatchGallery(Vec<Patch>),
    PieChart(Vec<Slice>),
    RawLabel(String),
}

/// Chi artifacts of intermediate nodes, by node id.
pub type ChiSet = BTreeMap<String, ChiArtifact>;

/// Text words of a token window.
fn ngram(vocab: &[String], tokens: &[usize]) -> String {
    tokens
        .iter()
        .map(|&t| vocab.get(t).map_or("?", String::as_str))
        .collect::<Vec<_>>()
        .join(" ")
}

/// For each filter, the winning n-grams of the reference samples that
/// activate it strongly, counted and sorted by count then text.
pub fn build_word_clouds<T: Scalar>(net: &NeuralGraph<T>, corpus: &[Vec<usize>], stats: &ReferenceStats) -> Result<ChiSet> {
    let vocab = net
        .metadata()
        .vocab
        .as_ref()
        .ok_or_else(|| Error::UnsupportedArchitecture("word clouds need a vocabulary".into()))?;
    let strata = intermediate(net, InstanceKind::TextCnn)?;
    let filters: Vec<NeuronId> = strata
        .stratum(1)
        .iter()
        .map(|n| n.neuron().expect("filter nodes are neurons"))
        .collect();
    let mut counts: Vec<BTreeMap<String, usize>> = vec![BTreeMap::new(); filters.len()];
    for &i in &stats.sample_indices {
        let tokens = corpus
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("sample {i} outside the corpus")))?;
        let record = forward(net, &Input::Tokens(tokens.clone()))?;
        for (j, &f) in filters.iter().enumerate() {
            let a = record.activation(f).expect("filter recorded").to_f64_lossy();
            if stats.classify(j, a) != ActivationLevel::Strong {
                continue;
            }
            let [start, width] = text_window(net, &record, f).expect("text filters have windows");
            *counts[j].entry(ngram(vocab, &tokens[start..start + width])).or_default() += 1;
        }
    }
    Ok(strata
        .stratum(1)
        .iter()
        .zip(counts)
        .map(|(node, c)| {
            let mut entries: Vec<CloudEntry> = c.into_iter().map(|(ngram, count)| CloudEntry { ngram, count }).collect();
            entries.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.ngram.cmp(&b.ngram)));
            (node.id(), ChiArtifact::WordCloud(entries))
        })
        .collect())
}

/// Patches per filter in a gallery.
pub const GALLERY_SIZE: usize = 6;

/// For each last-convolution filter, the reference images where it peaks
/// highest, with the input region around the peak cell.
pub fn build_patch_galleries<T: Scalar>(net: &NeuralGraph<T>, images: &[Vec<T>], stats: &ReferenceStats) -> Result<ChiSet> {
    let conv = net
        .last_conv2d()
        .ok_or_else(|| Error::UnsupportedArchitecture("patch galleries need a 2D convolution".into()))?;
    let kind = &net.layers()[conv - 1].kind;
    let (mh, mw) = kind.conv2d_output_dims();
    let (h, w) = match net.layers()[0].kind {
        LayerKind::Conv2d { height, width, .. } => (height, width),
        _ => return Err(Error::UnsupportedArchitecture("image input must be a 2D convolution".into())),
    };
    let filters = kind.filter_count().expect("conv2d has filters");
    let cells = mh * mw;
    let (sy, sx) = (h / mh.max(1), w / mw.max(1));
    let mut peaks: Vec<Vec<Patch>> = vec![Vec::new(); filters];
    for &i in &stats.sample_indices {
        let image = images
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("sample {i} outside the image set")))?;
        let record = forward(net, &Input::Values(image.clone()))?;
        for (j, peak) in peaks.iter_mut().enumerate() {
            let map = (0..cells).map(|c| record.activation(NeuronId::new(conv, j * cells + c)).expect("cell recorded"));
            let (cell, value) = map
                .enumerate()
                .fold((0, T::neg_infinity()), |best, (c, v)| if v > best.1 { (c, v) } else { best });
            let (cx, cy) = (cell % mw, cell / mw);
            let x = (cx * sx).saturating_sub(sx);
            let y = (cy * sy).saturating_sub(sy);
            peak.push(Patch {
                sample: i,
                x,
                y,
                width: ((cx + 2) * sx).min(w) - x,
                height: ((cy + 2) * sy).min(h) - y,
                activation: value.to_f64_lossy(),
            });
        }
    }
    let ids = intermediate(net, InstanceKind::ImageCnn)?;
    Ok(ids
        .stratum(1)
        .iter()
        .zip(peaks)
        .map(|(node, mut p)| {
            p.sort_by(|a, b| {
                b.activation
                    .partial_cmp(&a.activation)
                    .expect("finite activations")
                    .then(a.sample.cmp(&b.sample))
            });
            p.truncate(GALLERY_SIZE);
            (node.id(), ChiArtifact::PatchGallery(p))
        })
        .collect())
}

/// For each intermediate argument of a tabular explanation, the strongest and
/// weakest child of every relation type, labelled by input column.
pub fn build_pie_charts<T: Scalar>(net: &NeuralGraph<T>, ex: &Explanation<T>) -> ChiSet {
    let mut out = ChiSet::new();
    for j in ex.gaf.children(0).iter().copied() {
        let mut slices = Vec::new();
        for t in [RelationType::Attack, RelationType::Support, RelationType::CriticalSupport] {
            let mut kids: Vec<usize> = ex.gaf.related(j, t).collect();
            kids.sort_by(|&x, &y| {
                ex.sigma
                    .get(y)
                    .partial_cmp(&ex.sigma.get(x))
                    .expect("finite strengths")
                    .then_with(|| ex.gaf.argument(x).id.cmp(&ex.gaf.argument(y).id))
            });
            let picks = match kids.as_slice() {
                [] => vec![],
                [one] => vec![(*one, "strongest")],
                [first, .., last] => vec![(*first, "strongest"), (*last, "weakest")],
            };
            for (c, rank) in picks {
                slices.push(Slice {
                    label: argument_label(net, ex, c),
                    relation: t,
                    strength: ex.sigma.get(c).to_f64_lossy(),
                    rank: rank.into(),
                });
            }
        }
        out.insert(ex.gaf.argument(j).node.clone(), ChiArtifact::PieChart(slices));
    }
    out
}

/// Display label of argument `i` of an explanation.
pub fn argument_label<T: Scalar>(net: &NeuralGraph<T>, ex: &Explanation<T>, i: usize) -> String {
    let a = ex.gaf.argument(i);
    if a.parent.is_none() {
        return net.metadata().label(ex.prediction.class);
    }
    let key = ex.gaf.key(i);
    let node = key.map(|k| ex.strata().node(k));
    match (ex.instance, node) {
        (InstanceKind::TextCnn, Some(Node::Group(_))) => {
            let p = key.expect("keyed").1;
            let word = match (&ex.input, &net.metadata().vocab) {
                (Input::Tokens(t), Some(v)) => v.get(t[p]).cloned(),
                _ => None,
            };
            word.unwrap_or_else(|| a.node.clone())
        }
        (InstanceKind::TextCnn, Some(Node::Neuron(n))) => format!("filter {}", n.index),
        (InstanceKind::ImageCnn, Some(Node::Group(g))) if a.stratum == 0 => match g.name.split(':').collect::<Vec<_>>()[..] {
            ["pixel", x, y] => format!("pixel ({x}, {y})"),
            _ => a.node.clone(),
        },
        (InstanceKind::ImageCnn, _) => a.node.replace("filter:", "filter "),
        (InstanceKind::TabularFfnn, Some(Node::Neuron(n))) if a.stratum == 0 => net
            .metadata()
            .features
            .as_ref()
            .and_then(|f| f.get(n.index).cloned())
            .unwrap_or_else(|| a.node.clone()),
        (InstanceKind::TabularFfnn, Some(Node::Neuron(n))) => format!("hidden {}", n.index),
        (InstanceKind::Toy, Some(Node::Neuron(n))) => {
            let prefix = if n.layer == 0 { "x" } else { "h" };
            format!("{prefix}{}", n.index + 1)
        }
        _ => a.node.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DaxFormat {
    GraphicalInteractive,
    Conversational,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocArgument {
    pub id: String,
    /// 1-based stratum.
    pub stratum: usize,
    pub label: String,
    pub strength: f64,
    pub chi: ChiArtifact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocRelation {
    pub source: String,
    pub target: String,
    #[serde(rename = "type")]
    pub kind: RelationType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordAggregate {
    pub token: String,
    /// Position of the input node in the first stratum.
    pub index: usize,
    /// Supporting strengths minus attacking strengths over surviving arguments.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocMetadata {
    pub instance: InstanceKind,
    /// Which arguments word aggregates sum over.
    pub aggregation: String,
    pub top_k: Vec<TopK>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Palette {
    pub support: String,
    pub attack: String,
    #[serde(rename = "critical-support")]
    pub critical_support: String,
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            support: "green".into(),
            attack: "red".into(),
            critical_support: "blue".into(),
        }
    }
}

impl Palette {
    pub fn colour(&self, t: RelationType) -> &str {
        match t {
            RelationType::Support => &self.support,
            RelationType::Attack => &self.attack,
            RelationType::CriticalSupport => &self.critical_support,
        }
    }
}

/// The rendered explanation consumed by viewers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DaxDocument {
    pub format: DaxFormat,
    pub prediction: PredictionHeader,
    pub strata: Vec<usize>,
    pub arguments: Vec<DocArgument>,
    pub relations: Vec<DocRelation>,
    pub word_aggregates: Vec<WordAggregate>,
    pub metadata: DocMetadata,
    pub palette: Palette,
}

impl DaxDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Arguments of the intermediate strata (neither the root nor inputs).
    pub fn intermediate_count(&self) -> usize {
        let top = self.strata.len();
        self.arguments.iter().filter(|a| a.stratum > 1 && a.stratum < top).count()
    }
}

/// Static and expandable view of a pruned explanation. Intermediate arguments
/// take their node's artifact from `chi`, or a raw label.
pub fn render_graphical<T: Scalar>(
    net: &NeuralGraph<T>,
    ex: &Explanation<T>,
    pruned: &Pruned<T>,
    chi: &ChiSet,
    limits: &[TopK],
) -> Result<DaxDocument> {
    let k = ex.strata().k();
    let mut arguments = Vec::with_capacity(pruned.gaf.len());
    let mut aggregates: BTreeMap<usize, (String, f64)> = BTreeMap::new();
    for (i, a) in pruned.gaf.arguments().iter().enumerate() {
        let orig = pruned.original[i];
        let label = argument_label(net, ex, orig);
        let strength = pruned.sigma.get(i).to_f64_lossy();
        let intermediate = a.stratum > 0 && a.stratum + 1 < k;
        let chi = match chi.get(&a.node) {
            Some(c) if intermediate => c.clone(),
            _ => ChiArtifact::RawLabel(label.clone()),
        };
        if a.stratum == 0 {
            let key = ex
                .gaf
                .key(orig)
                .ok_or_else(|| Error::Inconsistent(format!("{} has no node", a.id)))?;
            let sign = if a.relation.is_some_and(RelationType::is_supportive) { 1.0 } else { -1.0 };
            aggregates.entry(key.1).or_insert_with(|| (label.clone(), 0.0)).1 += sign * strength;
        }
        arguments.push(DocArgument {
            id: a.id.clone(),
            stratum: a.stratum + 1,
            label: label_with_chi(label, &chi),
            strength,
            chi,
        });
    }
    let relations = pruned
        .gaf
        .relations()
        .map(|(c, p, t)| DocRelation {
            source: pruned.gaf.argument(c).id.clone(),
            target: pruned.gaf.argument(p).id.clone(),
            kind: t,
        })
        .collect();
    let bundle = ex.bundle(net);
    let doc = DaxDocument {
        format: DaxFormat::GraphicalInteractive,
        prediction: bundle.prediction,
        strata: bundle.strata,
        arguments,
        relations,
        word_aggregates: aggregates
            .into_iter()
            .map(|(index, (token, value))| WordAggregate { token, index, value })
            .collect(),
        metadata: DocMetadata {
            instance: ex.instance,
            aggregation: "surviving-arguments".into(),
            top_k: limits.to_vec(),
        },
        palette: Palette::default(),
    };
    validate_document(&doc)?;
    Ok(doc)
}

/// Names the most frequent n-gram next to a filter's label.
fn label_with_chi(label: String, chi: &ChiArtifact) -> String {
    match chi {
        ChiArtifact::WordCloud(entries) if !entries.is_empty() => format!("{label} (\"{}\")", entries[0].ngram),
        _ => label,
    }
}

/// Every relation endpoint is an argument and every argument is unique.
pub fn validate_document(doc: &DaxDocument) -> Result<()> {
    let mut ids = std::collections::BTreeSet::new();
    for a in &doc.arguments {
        if !ids.insert(a.id.as_str()) {
            return Err(Error::Inconsistent(format!("duplicate argument {}", a.id)));
        }
    }
    for r in &doc.relations {
        for end in [&r.source, &r.target] {
            if !ids.contains(end.as_str()) {
                return Err(Error::Inconsistent(format!("relation endpoint {end} is not an argument")));
            }
        }
    }
    Ok(())
}

fn strongest<T: Scalar>(gaf: &Gaf, sigma: &StrengthMap<T>, kids: impl Iterator<Item = usize>) -> Option<usize> {
    kids.fold(None, |best: Option<usize>, c| match best {
        Some(b) if sigma.get(b) > sigma.get(c) => Some(b),
        Some(b) if sigma.get(b) == sigma.get(c) && gaf.argument(b).id < gaf.argument(c).id => Some(b),
        _ => Some(c),
    })
}

/// `depth` question and answer pairs: the prediction with its strongest
/// supporter and attacker, then one "why?" per level, following the strongest
/// supporter (or attacker, if it has none) of the argument last discussed.
pub fn render_conversational<T: Scalar>(
    net: &NeuralGraph<T>,
    ex: &Explanation<T>,
    pruned: &Pruned<T>,
    depth: usize,
) -> Result<Vec<String>> {
    let k = ex.strata().k();
    if depth == 0 || depth > k {
        return Err(Error::InvalidArgument(format!("depth must be in 1..={k}, got {depth}")));
    }
    let gaf = &pruned.gaf;
    let sigma = &pruned.sigma;
    let label = |i: usize| argument_label(net, ex, pruned.original[i]);
    let reasons = |i: usize| {
        let sup = strongest(gaf, sigma, gaf.supporters(i));
        let att = strongest(gaf, sigma, gaf.attackers(i));
        let mut parts = Vec::new();
        if let Some(s) = sup {
            let critical = gaf.argument(s).relation == Some(RelationType::CriticalSupport);
            parts.push(format!(
                "{}supported by {} (strength {:.3})",
                if critical { "critically " } else { "" },
                label(s),
                sigma.get(s).to_f64_lossy()
            ));
        }
        if let Some(a) = att {
            parts.push(format!("attacked by {} (strength {:.3})", label(a), sigma.get(a).to_f64_lossy()));
        }
        (parts, sup.or(att))
    };
    let mut lines = Vec::with_capacity(2 * depth);
    let root = label(0);
    lines.push(format!("User: Why does the model predict {root}?"));
    let (parts, mut focus) = reasons(0);
    let mut answer = format!(
        "System: The model predicts {root} with probability {:.4}.",
        ex.prediction.probability
    );
    if !parts.is_empty() {
        answer.push_str(&format!(" The prediction is most strongly {}.", parts.join(" and most strongly ")));
    }
    lines.push(answer);
    for _ in 1..depth {
        let Some(f) = focus else { break };
        let name = label(f);
        lines.push(format!("User: Why {name}?"));
        let (parts, next) = reasons(f);
        if parts.is_empty() {
            lines.push(format!("System: {name} is an input with no further reasons."));
        } else {
            lines.push(format!("System: {name} is most strongly {}.", parts.join(" and most strongly ")));
        }
        focus = next;
    }
    Ok(lines)
}
