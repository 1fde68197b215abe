//! Strata over (groups of) neurons and the influence graph between them.

use std::collections::HashMap;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::nn::{LayerKind, NeuralGraph, NeuronId};
use crate::scalar::Scalar;

/// A node of the influence graph: one neuron or a named group of neurons.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    Neuron(NeuronId),
    Group(Group),
}

/// Neurons `start, start + stride, ..` (`count` of them) of one layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Group {
    pub name: String,
    pub layer: usize,
    pub start: usize,
    pub stride: usize,
    pub count: usize,
}

impl Node {
    pub fn id(&self) -> String {
        match self {
            Node::Neuron(n) => n.to_string(),
            Node::Group(g) => g.name.clone(),
        }
    }

    /// `(layer, start, stride, count)` of the member neurons.
    fn span(&self) -> (usize, usize, usize, usize) {
        match self {
            Node::Neuron(n) => (n.layer, n.index, 1, 1),
            Node::Group(g) => (g.layer, g.start, g.stride.max(1), g.count),
        }
    }

    pub fn members(&self) -> impl Iterator<Item = NeuronId> + '_ {
        let (layer, start, stride, count) = self.span();
        (0..count).map(move |k| NeuronId::new(layer, start + k * stride))
    }

    pub fn member_count(&self) -> usize {
        self.span().3
    }

    pub fn layer(&self) -> usize {
        self.span().0
    }

    /// The neuron itself, for single-neuron nodes.
    pub fn neuron(&self) -> Option<NeuronId> {
        match self {
            Node::Neuron(n) => Some(*n),
            Node::Group(_) => None,
        }
    }

    /// The embedding neurons of one word position.
    pub fn word(position: usize, dim: usize) -> Self {
        Node::Group(Group {
            name: format!("word:{position}"),
            layer: 1,
            start: position * dim,
            stride: 1,
            count: dim,
        })
    }

    /// The channel neurons of one input pixel (CHW layout).
    pub fn pixel(x: usize, y: usize, channels: usize, height: usize, width: usize) -> Self {
        Node::Group(Group {
            name: format!("pixel:{x}:{y}"),
            layer: 0,
            start: y * width + x,
            stride: height * width,
            count: channels,
        })
    }

    /// All neurons of one filter's map in graph layer `layer`.
    pub fn filter(filter: usize, layer: usize, cells: usize) -> Self {
        Node::Group(Group {
            name: format!("filter:{filter}"),
            layer,
            start: filter * cells,
            stride: 1,
            count: cells,
        })
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// Position of a node: `(stratum, index within the stratum)`, both 0-based.
pub type NodeKey = (usize, usize);

/// Ordered strata `N_1..N_k`; the last is the singleton `{n_o}`.
///
/// Stratum indices are 0-based in the API and 1-based in serialized form.
#[derive(Debug, Clone, PartialEq)]
pub struct Strata {
    strata: Vec<Vec<Node>>,
}

impl Strata {
    /// Validates disjointness, non-empty groups, `k > 2` and the output singleton.
    pub fn new<T: Scalar>(net: &NeuralGraph<T>, strata: Vec<Vec<Node>>) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidStrata(msg));
        if strata.len() < 3 {
            return invalid(format!("need at least 3 strata, got {}", strata.len()));
        }
        let last = strata.last().expect("non-empty");
        match last.as_slice() {
            [Node::Neuron(o)] if o.layer == net.output_layer() && net.contains(*o) => {}
            _ => return invalid("last stratum must be a single output-layer neuron".into()),
        }
        let mut taken: Vec<Vec<bool>> = vec![Vec::new(); net.depth()];
        let mut ids: HashMap<String, usize> = HashMap::new();
        for (s, stratum) in strata.iter().enumerate() {
            if stratum.is_empty() {
                return invalid(format!("stratum {} is empty", s + 1));
            }
            for node in stratum {
                if ids.insert(node.id(), s).is_some() {
                    return invalid(format!("node id {} appears twice", node.id()));
                }
                if node.member_count() == 0 {
                    return invalid(format!("group {} is empty", node.id()));
                }
                let (layer, start, stride, count) = node.span();
                let last = start + (count - 1) * stride;
                if !net.contains(NeuronId::new(layer, last)) {
                    return Err(Error::UnknownNeuron(NeuronId::new(layer, last).to_string()));
                }
                let marks = &mut taken[layer];
                if marks.is_empty() {
                    *marks = vec![false; net.layer_size(layer)];
                }
                for m in node.members() {
                    if std::mem::replace(&mut marks[m.index], true) {
                        return invalid(format!("{m} belongs to two strata nodes (one is {})", node.id()));
                    }
                }
            }
        }
        Ok(Self { strata })
    }

    /// Number of strata `k`.
    pub fn k(&self) -> usize {
        self.strata.len()
    }

    pub fn stratum(&self, s: usize) -> &[Node] {
        &self.strata[s]
    }

    pub fn node(&self, key: NodeKey) -> &Node {
        &self.strata[key.0][key.1]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.strata.iter().map(Vec::len).collect()
    }

    pub fn output(&self) -> NeuronId {
        self.strata
            .last()
            .and_then(|s| s[0].neuron())
            .expect("validated output stratum")
    }

    pub fn iter(&self) -> impl Iterator<Item = &[Node]> {
        self.strata.iter().map(Vec::as_slice)
    }

    /// Owner of every member neuron.
    fn owners(&self) -> HashMap<NeuronId, NodeKey> {
        let mut map = HashMap::new();
        for (s, stratum) in self.strata.iter().enumerate() {
            for (i, node) in stratum.iter().enumerate() {
                for m in node.members() {
                    map.insert(m, (s, i));
                }
            }
        }
        map
    }
}

impl Serialize for Strata {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let ids: Vec<Vec<String>> = self
            .strata
            .iter()
            .map(|s| s.iter().map(Node::id).collect())
            .collect();
        ids.serialize(serializer)
    }
}

/// Declarative strata selection.
#[derive(Debug, Clone, PartialEq)]
pub enum StrataSpec {
    /// Words, post-pooling filter neurons, output.
    TextCnn,
    /// RGB pixel groups, last-convolution filter groups, output.
    ImageCnn,
    /// Input neurons, post-activation hidden neurons, output.
    TabularFfnn,
    /// Every layer is a stratum; the output layer contributes only `n_o`.
    Layers,
    /// Explicit strata; `{n_o}` is appended unless already last. `any_path`
    /// searches reachability between all pairs of strata.
    Custom { strata: Vec<Vec<Node>>, any_path: bool },
}

impl StrataSpec {
    pub fn name(&self) -> &'static str {
        match self {
            StrataSpec::TextCnn => "text-cnn",
            StrataSpec::ImageCnn => "image-cnn",
            StrataSpec::TabularFfnn => "tabular-ffnn",
            StrataSpec::Layers => "layers",
            StrataSpec::Custom { .. } => "custom",
        }
    }

    fn any_path(&self) -> bool {
        matches!(self, StrataSpec::Custom { any_path: true, .. })
    }
}

/// The neuron standing for `class` in the output layer.
pub fn output_node<T: Scalar>(net: &NeuralGraph<T>, class: usize) -> Result<NeuronId> {
    let layer = net.output_layer();
    let size = net.layer_size(layer);
    let index = if size == 1 && class <= 1 { 0 } else { class };
    if index >= size {
        return Err(Error::InvalidArgument(format!(
            "class {class} outside an output layer of {size} neurons"
        )));
    }
    Ok(NeuronId::new(layer, index))
}

/// Resolves a spec on `net`, with `n_o` the neuron of `class`.
pub fn select_strata<T: Scalar>(net: &NeuralGraph<T>, spec: &StrataSpec, class: usize) -> Result<Strata> {
    let n_o = output_node(net, class)?;
    let missing = |what: &str| Err(Error::UnsupportedArchitecture(format!("{} spec needs {what}", spec.name())));
    let strata = match spec {
        StrataSpec::TextCnn => {
            let (dim, seq_len) = match net.layers()[0].kind {
                LayerKind::Embedding { dim, seq_len, .. } => (dim, seq_len),
                _ => return missing("an embedding input layer"),
            };
            let pool = match net
                .layers()
                .iter()
                .position(|l| matches!(l.kind, LayerKind::GlobalMaxPool1d { .. }))
            {
                Some(i) => i + 1,
                None => return missing("a global max-pooling layer"),
            };
            vec![
                (0..seq_len).map(|p| Node::word(p, dim)).collect(),
                (0..net.layer_size(pool))
                    .map(|i| Node::Neuron(NeuronId::new(pool, i)))
                    .collect(),
                vec![Node::Neuron(n_o)],
            ]
        }
        StrataSpec::ImageCnn => {
            let (channels, height, width) = match net.layers()[0].kind {
                LayerKind::Conv2d {
                    in_channels,
                    height,
                    width,
                    ..
                } => (in_channels, height, width),
                _ => return missing("a 2D convolution on the input"),
            };
            let conv = match net.last_conv2d() {
                Some(c) => c,
                None => return missing("a 2D convolution"),
            };
            let kind = &net.layers()[conv - 1].kind;
            let (oh, ow) = kind.conv2d_output_dims();
            let filters = kind.filter_count().expect("conv2d has filters");
            let mut pixels = Vec::with_capacity(height * width);
            for y in 0..height {
                for x in 0..width {
                    pixels.push(Node::pixel(x, y, channels, height, width));
                }
            }
            vec![
                pixels,
                (0..filters).map(|j| Node::filter(j, conv, oh * ow)).collect(),
                vec![Node::Neuron(n_o)],
            ]
        }
        StrataSpec::TabularFfnn => {
            if net.takes_tokens() || net.layers().len() < 2 {
                return missing("a dense hidden layer");
            }
            // the hidden stratum is the last stage below the output layer
            let hidden = net.output_layer() - 1;
            vec![
                (0..net.layer_size(0))
                    .map(|i| Node::Neuron(NeuronId::new(0, i)))
                    .collect(),
                (0..net.layer_size(hidden))
                    .map(|i| Node::Neuron(NeuronId::new(hidden, i)))
                    .collect(),
                vec![Node::Neuron(n_o)],
            ]
        }
        StrataSpec::Layers => {
            let mut strata: Vec<Vec<Node>> = (0..net.output_layer())
                .map(|l| {
                    (0..net.layer_size(l))
                        .map(|i| Node::Neuron(NeuronId::new(l, i)))
                        .collect()
                })
                .collect();
            strata.push(vec![Node::Neuron(n_o)]);
            strata
        }
        StrataSpec::Custom { strata, .. } => {
            let mut strata = strata.clone();
            match strata.last() {
                Some(last) if last.as_slice() == [Node::Neuron(n_o)] => {}
                _ => strata.push(vec![Node::Neuron(n_o)]),
            }
            strata
        }
    };
    Strata::new(net, strata)
}

/// Influence graph `<N, I>`: `incoming[s][i]` lists the nodes of stratum
/// `s - 1` that influence node `i` of stratum `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceGraph {
    pub strata: Strata,
    incoming: Vec<Vec<Vec<usize>>>,
}

impl InfluenceGraph {
    /// Influencers of a node, as indices into the stratum below.
    pub fn influencers(&self, key: NodeKey) -> &[usize] {
        &self.incoming[key.0][key.1]
    }

    pub fn contains(&self, from: NodeKey, to: NodeKey) -> bool {
        to.0 == from.0 + 1 && self.incoming[to.0][to.1].binary_search(&from.1).is_ok()
    }

    /// All influences `(n_1, n_2)`, grouped by target.
    pub fn edges(&self) -> impl Iterator<Item = (NodeKey, NodeKey)> + '_ {
        self.incoming.iter().enumerate().flat_map(|(s, stratum)| {
            stratum
                .iter()
                .enumerate()
                .flat_map(move |(i, inc)| inc.iter().map(move |&g| ((s - 1, g), (s, i))))
        })
    }

    pub fn edge_count(&self) -> usize {
        self.incoming.iter().flatten().map(Vec::len).sum()
    }
}

/// Reachability between strata nodes.
///
/// `(n_1, n_2)` is an influence when a path of `<V, E>` leads from a member
/// of `n_1` to a member of `n_2` without crossing another strata node. By
/// default only consecutive strata are searched; with `any_path` every
/// reachable strata node is found and a stratum-skipping path is an error.
pub fn extract_influence_graph<T: Scalar>(net: &NeuralGraph<T>, strata: &Strata) -> Result<InfluenceGraph> {
    extract_with(net, strata, false)
}

/// Extraction honouring the spec's reachability mode.
pub fn extract_for_spec<T: Scalar>(net: &NeuralGraph<T>, strata: &Strata, spec: &StrataSpec) -> Result<InfluenceGraph> {
    extract_with(net, strata, spec.any_path())
}

fn extract_with<T: Scalar>(net: &NeuralGraph<T>, strata: &Strata, any_path: bool) -> Result<InfluenceGraph> {
    let owners = strata.owners();
    let sizes = net.layer_sizes();
    let mut incoming: Vec<Vec<Vec<usize>>> = Vec::with_capacity(strata.k());
    incoming.push(vec![Vec::new(); strata.stratum(0).len()]);
    // visited marks carry the id of the search that set them
    let mut visited: Vec<Vec<u32>> = sizes.iter().map(|&n| vec![0; n]).collect();
    let mut search = 0u32;
    let mut stack = Vec::new();
    for s in 1..strata.k() {
        let floor = if any_path {
            0
        } else {
            strata
                .stratum(s - 1)
                .iter()
                .map(Node::layer)
                .min()
                .unwrap_or(0)
        };
        let mut per_node = Vec::with_capacity(strata.stratum(s).len());
        for node in strata.stratum(s) {
            search += 1;
            let mut found: Vec<usize> = Vec::new();
            stack.clear();
            for m in node.members() {
                visited[m.layer][m.index] = search;
                stack.push(m);
            }
            while let Some(v) = stack.pop() {
                if v.layer <= floor && !any_path {
                    continue;
                }
                for p in net.predecessors(v) {
                    if visited[p.layer][p.index] == search {
                        continue;
                    }
                    visited[p.layer][p.index] = search;
                    match owners.get(&p) {
                        None => stack.push(p),
                        Some(&(ps, pi)) if ps + 1 == s => found.push(pi),
                        Some(&key) => {
                            if any_path {
                                return Err(Error::InvalidStrata(format!(
                                    "{} in stratum {} reaches {} in stratum {}",
                                    strata.node(key),
                                    key.0 + 1,
                                    node,
                                    s + 1
                                )));
                            }
                        }
                    }
                }
            }
            found.sort_unstable();
            found.dedup();
            per_node.push(found);
        }
        incoming.push(per_node);
    }
    Ok(InfluenceGraph {
        strata: strata.clone(),
        incoming,
    })
}
