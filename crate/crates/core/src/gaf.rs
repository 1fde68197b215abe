//! Argumentation frameworks read off an influence graph, and their
//! dialectical strengths.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::attribution::{linear_contribution, GradCamResult, RelevanceMap};
use crate::error::{Error, Result};
use crate::nn::{ActivationRecord, NeuralGraph, NeuronId};
use crate::scalar::Scalar;
use crate::strata::{InfluenceGraph, NodeKey};

/// Id of the root argument `alpha_o`.
pub const ROOT_ID: &str = "output";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelationType {
    Attack,
    Support,
    CriticalSupport,
}

impl RelationType {
    pub fn name(self) -> &'static str {
        match self {
            RelationType::Attack => "attack",
            RelationType::Support => "support",
            RelationType::CriticalSupport => "critical-support",
        }
    }

    /// Support and critical support both count as support.
    pub fn is_supportive(self) -> bool {
        !matches!(self, RelationType::Attack)
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Argument {
    /// `node/parent-id`; the root is [`ROOT_ID`].
    pub id: String,
    /// 0-based stratum of the represented node.
    pub stratum: usize,
    /// Id of the represented node `rho(alpha)`.
    pub node: String,
    pub parent: Option<usize>,
    /// Relation from this argument to its parent.
    pub relation: Option<RelationType>,
}

/// A GAF shaped as a tree rooted at `alpha_o` (index 0), arguments in
/// breadth-first order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gaf {
    arguments: Vec<Argument>,
    children: Vec<Vec<usize>>,
    /// Influence-graph position of each argument's node; empty for parsed GAFs.
    keys: Vec<NodeKey>,
}

impl Gaf {
    fn from_parts(arguments: Vec<Argument>, keys: Vec<NodeKey>) -> Self {
        let mut children = vec![Vec::new(); arguments.len()];
        for (i, a) in arguments.iter().enumerate() {
            if let Some(p) = a.parent {
                children[p].push(i);
            }
        }
        Self {
            arguments,
            children,
            keys,
        }
    }

    pub fn arguments(&self) -> &[Argument] {
        &self.arguments
    }

    pub fn argument(&self, i: usize) -> &Argument {
        &self.arguments[i]
    }

    pub fn len(&self) -> usize {
        self.arguments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arguments.is_empty()
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn key(&self, i: usize) -> Option<NodeKey> {
        self.keys.get(i).copied()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.arguments.iter().position(|a| a.id == id)
    }

    /// Children of `i` related to it by `relation`.
    pub fn related(&self, i: usize, relation: RelationType) -> impl Iterator<Item = usize> + '_ {
        self.children[i]
            .iter()
            .copied()
            .filter(move |&c| self.arguments[c].relation == Some(relation))
    }

    pub fn attackers(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.related(i, RelationType::Attack)
    }

    /// Supporters, critical supporters included.
    pub fn supporters(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.children[i]
            .iter()
            .copied()
            .filter(move |&c| self.arguments[c].relation.is_some_and(RelationType::is_supportive))
    }

    /// All relation edges `(child, parent, type)`.
    pub fn relations(&self) -> impl Iterator<Item = (usize, usize, RelationType)> + '_ {
        self.arguments
            .iter()
            .enumerate()
            .filter_map(|(i, a)| Some((i, a.parent?, a.relation?)))
    }

    pub fn edge_count(&self) -> usize {
        self.arguments.iter().filter(|a| a.parent.is_some()).count()
    }

    pub fn relation_types(&self) -> Vec<RelationType> {
        let mut types: Vec<RelationType> = self.relations().map(|r| r.2).collect();
        types.sort();
        types.dedup();
        types
    }

    /// Keeps only the listed arguments (which must be closed under parents)
    /// and renumbers them.
    pub fn restrict(&self, keep: &[bool]) -> Result<Gaf> {
        let mut map = vec![usize::MAX; self.len()];
        let mut arguments = Vec::new();
        let mut keys = Vec::new();
        for (i, a) in self.arguments.iter().enumerate() {
            if !keep[i] {
                continue;
            }
            let parent = match a.parent {
                Some(p) if map[p] == usize::MAX => {
                    return Err(Error::Inconsistent(format!("{} kept without its parent", a.id)))
                }
                Some(p) => Some(map[p]),
                None => None,
            };
            map[i] = arguments.len();
            arguments.push(Argument {
                parent,
                ..a.clone()
            });
            if let Some(k) = self.key(i) {
                keys.push(k);
            }
        }
        Ok(Gaf::from_parts(arguments, keys))
    }
}

type Predicate<'a> = Box<dyn Fn(NodeKey, NodeKey) -> Result<bool> + 'a>;

/// Relation characterizations `c_j` over influence edges `(n_g, n_h)`.
pub struct CharacterizationSet<'a> {
    chars: Vec<(RelationType, Predicate<'a>)>,
    /// `(stronger, weaker)`: when both hold, the weaker one is dropped.
    precedence: Vec<(RelationType, RelationType)>,
}

impl<'a> CharacterizationSet<'a> {
    pub fn new() -> Self {
        Self {
            chars: Vec::new(),
            precedence: Vec::new(),
        }
    }

    pub fn with(mut self, relation: RelationType, predicate: impl Fn(NodeKey, NodeKey) -> Result<bool> + 'a) -> Self {
        self.chars.push((relation, Box::new(predicate)));
        self
    }

    pub fn with_precedence(mut self, stronger: RelationType, weaker: RelationType) -> Self {
        self.precedence.push((stronger, weaker));
        self
    }

    /// The unique characterization holding on an edge, if any.
    pub fn classify(&self, from: NodeKey, to: NodeKey, graph: &InfluenceGraph) -> Result<Option<RelationType>> {
        let mut hold = Vec::with_capacity(1);
        for (t, c) in &self.chars {
            if c(from, to)? {
                hold.push(*t);
            }
        }
        for &(stronger, weaker) in &self.precedence {
            if hold.contains(&stronger) {
                hold.retain(|&t| t != weaker);
            }
        }
        match hold.as_slice() {
            [] => Ok(None),
            [t] => Ok(Some(*t)),
            [first, second, ..] => Err(Error::NonExclusiveCharacterization {
                from: graph.strata.node(from).id(),
                to: graph.strata.node(to).id(),
                first: first.to_string(),
                second: second.to_string(),
            }),
        }
    }
}

impl Default for CharacterizationSet<'_> {
    fn default() -> Self {
        Self::new()
    }
}

/// Builds the GAF top-down from `alpha_o`: every influence into a represented
/// node that satisfies a characterization yields one child argument.
pub fn extract_gaf(graph: &InfluenceGraph, chars: &CharacterizationSet<'_>) -> Result<Gaf> {
    let strata = &graph.strata;
    let top = strata.k() - 1;
    let mut arguments = vec![Argument {
        id: ROOT_ID.to_string(),
        stratum: top,
        node: strata.node((top, 0)).id(),
        parent: None,
        relation: None,
    }];
    let mut keys = vec![(top, 0)];
    let mut cache: HashMap<(NodeKey, NodeKey), Option<RelationType>> = HashMap::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(h) = queue.pop_front() {
        let to = keys[h];
        if to.0 == 0 {
            continue;
        }
        for &g in graph.influencers(to) {
            let from = (to.0 - 1, g);
            let relation = match cache.get(&(from, to)) {
                Some(r) => *r,
                None => {
                    let r = chars.classify(from, to, graph)?;
                    cache.insert((from, to), r);
                    r
                }
            };
            if let Some(relation) = relation {
                let node = strata.node(from).id();
                arguments.push(Argument {
                    id: format!("{node}/{}", arguments[h].id),
                    stratum: from.0,
                    node,
                    parent: Some(h),
                    relation: Some(relation),
                });
                keys.push(from);
                queue.push_back(arguments.len() - 1);
            }
        }
    }
    Ok(Gaf::from_parts(arguments, keys))
}

/// Dialectical strengths, aligned with [`Gaf::arguments`].
#[derive(Debug, Clone, PartialEq)]
pub struct StrengthMap<T>(pub Vec<T>);

impl<T: Scalar> StrengthMap<T> {
    pub fn get(&self, i: usize) -> T {
        self.0[i]
    }

    pub fn restrict(&self, keep: &[bool]) -> Self {
        StrengthMap(
            self.0
                .iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(&s, _)| s)
                .collect(),
        )
    }
}

/// Which quantity of `n_o` the text instance uses as `sigma(alpha_o)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootQuantity {
    /// Post-softmax probability.
    #[default]
    Probability,
    /// Pre-softmax score.
    Logit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrengthSpec {
    /// LRP-based: `a_o`, `|R(o,j)|`, `|R(j,i) R(o,j) / a_j|`.
    Text { root: RootQuantity },
    /// Grad-CAM-based: total map mass, per-filter mass, per-pixel map value.
    Image,
    /// Weight-based: `a_o`, `|w_jo a_j|`, `|w_ij w_jo a_i|`.
    Tabular,
    /// `|activation|` of the represented neuron.
    Activation,
}

/// LRP relevance maps of the text instance.
#[derive(Debug, Clone, PartialEq)]
pub struct TextRelevance<T> {
    /// Seeded at `n_o`, propagated to the filter stratum.
    pub output: RelevanceMap<T>,
    /// Seeded at each filter node with its activation; `None` when not needed.
    pub filters: Vec<Option<RelevanceMap<T>>>,
}

/// Measures the characterizations and strengths are read from.
pub struct MeasureContext<'a, T> {
    pub net: &'a NeuralGraph<T>,
    pub record: &'a ActivationRecord<T>,
    pub graph: &'a InfluenceGraph,
    pub relevance: Option<&'a TextRelevance<T>>,
    pub gradcam: Option<&'a GradCamResult<T>>,
}

impl<'a, T: Scalar> MeasureContext<'a, T> {
    fn neuron(&self, key: NodeKey) -> Result<NeuronId> {
        let node = self.graph.strata.node(key);
        node.neuron()
            .ok_or_else(|| Error::MissingMeasure(format!("{node} is a group, not a neuron")))
    }

    fn activation(&self, id: NeuronId) -> Result<T> {
        self.record
            .activation(id)
            .ok_or_else(|| Error::UnknownNeuron(id.to_string()))
    }

    fn relevance(&self) -> Result<&'a TextRelevance<T>> {
        self.relevance
            .ok_or_else(|| Error::MissingMeasure("LRP relevance maps".into()))
    }

    fn gradcam(&self) -> Result<&'a GradCamResult<T>> {
        self.gradcam
            .ok_or_else(|| Error::MissingMeasure("Grad-CAM maps".into()))
    }

    fn require_three_strata(&self) -> Result<()> {
        match self.graph.strata.k() {
            3 => Ok(()),
            k => Err(Error::UnsupportedArchitecture(format!(
                "instance measures need 3 strata, got {k}"
            ))),
        }
    }

    /// `R(j, i)` for an influence into the filter stratum, or `R(o, j)` for
    /// one into the output.
    pub fn text_relevance(&self, from: NodeKey, to: NodeKey) -> Result<T> {
        let rel = self.relevance()?;
        let from_node = self.graph.strata.node(from);
        if to.0 == self.graph.strata.k() - 1 {
            Ok(rel.output.sum_over(from_node.members()))
        } else {
            let map = rel
                .filters
                .get(to.1)
                .and_then(Option::as_ref)
                .ok_or_else(|| {
                    Error::MissingMeasure(format!("relevance seeded at {}", self.graph.strata.node(to)))
                })?;
            Ok(map.sum_over(from_node.members()))
        }
    }

    /// `g_j` for an influence into the output, `G_j(x, y)` for one into a filter.
    pub fn image_measure(&self, from: NodeKey, to: NodeKey) -> Result<T> {
        let cam = self.gradcam()?;
        if to.0 == self.graph.strata.k() - 1 {
            Ok(cam.filters[from.1].weight)
        } else {
            let (x, y) = (from.1 % cam.input_width, from.1 / cam.input_width);
            Ok(cam.at(to.1, x, y))
        }
    }

    /// `w_xy a_x` between two neuron nodes.
    pub fn contribution(&self, from: NodeKey, to: NodeKey) -> Result<T> {
        linear_contribution(self.net, self.record, self.neuron(from)?, self.neuron(to)?)
    }
}

/// `c_-` iff the measure is negative, `c_+` iff positive.
fn signed<'a, T: Scalar>(measure: impl Fn(NodeKey, NodeKey) -> Result<T> + Clone + 'a) -> CharacterizationSet<'a> {
    let m2 = measure.clone();
    CharacterizationSet::new()
        .with(RelationType::Attack, move |f, t| Ok(measure(f, t)? < T::zero()))
        .with(RelationType::Support, move |f, t| Ok(m2(f, t)? > T::zero()))
}

/// Text BAF: attack iff `R < 0`, support iff `R > 0`.
pub fn text_characterizations<'a, T: Scalar>(ctx: &'a MeasureContext<'a, T>) -> CharacterizationSet<'a> {
    signed(move |f, t| ctx.text_relevance(f, t))
}

/// Image SAF: support iff `g_j > 0` (filter to output) or `G_j(x, y) > 0`
/// (pixel to filter).
pub fn image_characterizations<'a, T: Scalar>(ctx: &'a MeasureContext<'a, T>) -> CharacterizationSet<'a> {
    CharacterizationSet::new().with(RelationType::Support, move |f, t| Ok(ctx.image_measure(f, t)? > T::zero()))
}

/// Sign of `w_xy a_x`, as in the activation-based toy BAF.
pub fn activation_characterizations<'a, T: Scalar>(ctx: &'a MeasureContext<'a, T>) -> CharacterizationSet<'a> {
    signed(move |f, t| ctx.contribution(f, t))
}

/// Tabular TAF: sign of `w_xy a_x`, plus critical support iff
/// `a_y > 0 and a_y - w_xy a_x <= 0`, which takes precedence over support.
pub fn tabular_characterizations<'a, T: Scalar>(ctx: &'a MeasureContext<'a, T>) -> CharacterizationSet<'a> {
    signed(move |f, t| ctx.contribution(f, t))
        .with(RelationType::CriticalSupport, move |f, t| {
            let a_y = ctx.activation(ctx.neuron(t)?)?;
            let c = ctx.contribution(f, t)?;
            Ok(a_y > T::zero() && a_y - c <= T::zero())
        })
        .with_precedence(RelationType::CriticalSupport, RelationType::Support)
}

/// Evaluates `sigma` on every argument.
pub fn assign_strengths<T: Scalar>(gaf: &Gaf, spec: StrengthSpec, ctx: &MeasureContext<'_, T>) -> Result<StrengthMap<T>> {
    let key = |i: usize| {
        gaf.key(i)
            .ok_or_else(|| Error::MissingMeasure(format!("influence node of argument {}", gaf.argument(i).id)))
    };
    let top = ctx.graph.strata.k() - 1;
    let mut sigma = Vec::with_capacity(gaf.len());
    for i in 0..gaf.len() {
        let k = key(i)?;
        let parent = gaf.argument(i).parent;
        let s = match spec {
            StrengthSpec::Activation => {
                let node = ctx.graph.strata.node(k);
                node.members()
                    .map(|m| ctx.activation(m).map(T::abs))
                    .sum::<Result<T>>()?
            }
            StrengthSpec::Text { root } => {
                ctx.require_three_strata()?;
                let o = ctx.graph.strata.output();
                match parent {
                    None => match root {
                        RootQuantity::Probability => ctx.activation(o)?,
                        RootQuantity::Logit => ctx
                            .record
                            .pre_activation(o)
                            .ok_or_else(|| Error::UnknownNeuron(o.to_string()))?,
                    },
                    Some(_) if k.0 == top - 1 => ctx.text_relevance(k, (top, 0))?.abs(),
                    Some(p) => {
                        let j = key(p)?;
                        let r_ji = ctx.text_relevance(k, j)?;
                        let r_oj = ctx.text_relevance(j, (top, 0))?;
                        let a_j = ctx.activation(ctx.neuron(j)?)?;
                        // a_j = 0 forces R(o,j) = 0, so alpha_j cannot exist
                        debug_assert!(a_j != T::zero());
                        (r_ji * r_oj / a_j).abs()
                    }
                }
            }
            StrengthSpec::Image => {
                ctx.require_three_strata()?;
                let cam = ctx.gradcam()?;
                match parent {
                    None => cam.total(),
                    Some(_) if k.0 == top - 1 => cam.filters[k.1].total(),
                    Some(p) => ctx.image_measure(k, key(p)?)?,
                }
            }
            StrengthSpec::Tabular => {
                ctx.require_three_strata()?;
                let o = ctx.graph.strata.output();
                match parent {
                    None => ctx.activation(o)?,
                    Some(_) if k.0 == top - 1 => ctx.contribution(k, (top, 0))?.abs(),
                    Some(p) => {
                        let j = key(p)?;
                        let w_jo = ctx.net.effective_weight(ctx.neuron(j)?, o)?;
                        (ctx.contribution(k, j)? * w_jo).abs()
                    }
                }
            }
        };
        if !s.is_finite() {
            return Err(Error::MissingMeasure(format!(
                "non-finite strength for {}",
                gaf.argument(i).id
            )));
        }
        sigma.push(s);
    }
    Ok(StrengthMap(sigma))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GafNode {
    pub id: String,
    /// 1-based stratum.
    pub stratum: usize,
    pub node: String,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GafEdge {
    pub source: String,
    pub target: String,
    pub relation: RelationType,
}

/// Serialized form of a GAF with its strengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GafJson {
    pub nodes: Vec<GafNode>,
    pub edges: Vec<GafEdge>,
}

impl GafJson {
    pub fn new<T: Scalar>(gaf: &Gaf, sigma: &StrengthMap<T>) -> Self {
        let nodes = gaf
            .arguments()
            .iter()
            .zip(&sigma.0)
            .map(|(a, s)| GafNode {
                id: a.id.clone(),
                stratum: a.stratum + 1,
                node: a.node.clone(),
                strength: s.to_f64_lossy(),
            })
            .collect();
        let edges = gaf
            .relations()
            .map(|(c, p, t)| GafEdge {
                source: gaf.argument(c).id.clone(),
                target: gaf.argument(p).id.clone(),
                relation: t,
            })
            .collect();
        Self { nodes, edges }
    }

    /// Rebuilds the tree, checking that every non-root argument has exactly
    /// one outgoing relation and that the root comes first.
    pub fn to_gaf<T: Scalar>(&self) -> Result<(Gaf, StrengthMap<T>)> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("GAF: {msg}")));
        let index: HashMap<&str, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
        if index.len() != self.nodes.len() {
            return bad("duplicate argument ids".into());
        }
        if self.nodes.first().map(|n| n.id.as_str()) != Some(ROOT_ID) {
            return bad(format!("first argument must be `{ROOT_ID}`"));
        }
        let mut parent: Vec<Option<(usize, RelationType)>> = vec![None; self.nodes.len()];
        for e in &self.edges {
            let (Some(&s), Some(&t)) = (index.get(e.source.as_str()), index.get(e.target.as_str())) else {
                return bad(format!("edge {} -> {} has a missing endpoint", e.source, e.target));
            };
            if parent[s].replace((t, e.relation)).is_some() {
                return bad(format!("{} has two outgoing relations", e.source));
            }
            if self.nodes[s].stratum + 1 != self.nodes[t].stratum {
                return bad(format!("edge {} -> {} skips a stratum", e.source, e.target));
            }
        }
        let mut arguments = Vec::with_capacity(self.nodes.len());
        for (i, n) in self.nodes.iter().enumerate() {
            if i > 0 && parent[i].is_none() {
                return bad(format!("{} has no path to the root", n.id));
            }
            if n.stratum == 0 {
                return bad(format!("{} has stratum 0; strata are 1-based", n.id));
            }
            if let Some((p, _)) = parent[i] {
                if p >= i {
                    return bad(format!("{} listed before its parent", n.id));
                }
            }
            arguments.push(Argument {
                id: n.id.clone(),
                stratum: n.stratum - 1,
                node: n.node.clone(),
                parent: parent[i].map(|p| p.0),
                relation: parent[i].map(|p| p.1),
            });
        }
        let sigma = self.nodes.iter().map(|n| T::lit(n.strength)).collect();
        Ok((Gaf::from_parts(arguments, Vec::new()), StrengthMap(sigma)))
    }
}
