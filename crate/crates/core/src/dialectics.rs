//! Dialectical properties of a strength map on a GAF.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaf::{Gaf, RelationType, StrengthMap};
use crate::scalar::Scalar;

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_COUNTEREXAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropertyKind {
    DialecticalMonotonicity,
    AdditiveMonotonicity,
    CounterFactuality,
}

impl PropertyKind {
    pub const ALL: [PropertyKind; 3] = [
        PropertyKind::DialecticalMonotonicity,
        PropertyKind::AdditiveMonotonicity,
        PropertyKind::CounterFactuality,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PropertyKind::DialecticalMonotonicity => "dialectical-monotonicity",
            PropertyKind::AdditiveMonotonicity => "additive-monotonicity",
            PropertyKind::CounterFactuality => "counter-factuality",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertySpec {
    pub kind: PropertyKind,
    /// Absolute tolerance of every strength comparison.
    pub tolerance: f64,
    /// Counterexamples listed before the rest are only counted.
    pub max_counterexamples: usize,
}

impl PropertySpec {
    pub fn new(kind: PropertyKind) -> Self {
        Self {
            kind,
            tolerance: DEFAULT_TOLERANCE,
            max_counterexamples: DEFAULT_MAX_COUNTEREXAMPLES,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.tolerance >= 0.0 && self.tolerance.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "tolerance must be finite and >= 0, got {}",
                self.tolerance
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    /// Argument ids: a pair for monotonicity, one argument for additivity,
    /// `[source, target]` of a critical edge for counter-factuality.
    pub arguments: Vec<String>,
    /// Observed strengths of `arguments`, plus the expected value for additivity.
    pub values: Vec<f64>,
    pub clause: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: PropertyKind,
    pub verdict: Verdict,
    pub checked: usize,
    pub counterexamples: Vec<Counterexample>,
    /// Failures beyond the listed ones.
    pub omitted: usize,
    pub tolerance: f64,
    pub notes: Vec<String>,
}

impl PropertyReport {
    pub fn failures(&self) -> usize {
        self.counterexamples.len() + self.omitted
    }
}

/// `A1 <= A2` on strengths: an injection `m` with `a <= m(a) + tolerance`.
///
/// Greedy on ascending order: each element takes the smallest unused
/// element dominating it.
pub fn strength_set_leq<T: Scalar>(a1: &[T], a2: &[T], tolerance: T) -> bool {
    if a1.len() > a2.len() {
        return false;
    }
    let mut a1 = a1.to_vec();
    let mut a2 = a2.to_vec();
    a1.sort_by(|x, y| x.partial_cmp(y).expect("finite strengths"));
    a2.sort_by(|x, y| x.partial_cmp(y).expect("finite strengths"));
    let mut j = 0;
    for a in a1 {
        while j < a2.len() && a - a2[j] > tolerance {
            j += 1;
        }
        if j == a2.len() {
            return false;
        }
        j += 1;
    }
    true
}

pub fn strength_set_lt<T: Scalar>(a1: &[T], a2: &[T], tolerance: T) -> bool {
    strength_set_leq(a1, a2, tolerance) && !strength_set_leq(a2, a1, tolerance)
}

pub fn strength_set_eq<T: Scalar>(a1: &[T], a2: &[T], tolerance: T) -> bool {
    strength_set_leq(a1, a2, tolerance) && strength_set_leq(a2, a1, tolerance)
}

struct Collector {
    spec: PropertySpec,
    checked: usize,
    found: Vec<Counterexample>,
}

impl Collector {
    fn new(spec: PropertySpec) -> Self {
        Self {
            spec,
            checked: 0,
            found: Vec::new(),
        }
    }

    fn finish(mut self, applicable: bool, notes: Vec<String>) -> PropertyReport {
        self.found.sort_by(|a, b| a.arguments.cmp(&b.arguments).then_with(|| a.clause.cmp(&b.clause)));
        let omitted = self.found.len().saturating_sub(self.spec.max_counterexamples);
        self.found.truncate(self.spec.max_counterexamples);
        let verdict = if !applicable {
            Verdict::NotApplicable
        } else if self.found.is_empty() && omitted == 0 {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        PropertyReport {
            property: self.spec.kind,
            verdict,
            checked: self.checked,
            counterexamples: self.found,
            omitted,
            tolerance: self.spec.tolerance,
            notes,
        }
    }
}

/// Subjects to restrict a check to, as argument-id lists.
type Only<'a> = Option<&'a BTreeSet<Vec<String>>>;

fn wanted(only: Only<'_>, ids: &[&str]) -> bool {
    only.is_none_or(|set| set.contains(&ids.iter().map(|s| s.to_string()).collect::<Vec<_>>()))
}

fn check_sizes<T>(gaf: &Gaf, sigma: &StrengthMap<T>) -> Result<()> {
    if gaf.len() == sigma.0.len() {
        Ok(())
    } else {
        Err(Error::Inconsistent(format!(
            "{} strengths for {} arguments",
            sigma.0.len(),
            gaf.len()
        )))
    }
}

fn dialectical_monotonicity<T: Scalar>(gaf: &Gaf, sigma: &StrengthMap<T>, spec: PropertySpec, only: Only<'_>) -> PropertyReport {
    let tol = T::lit(spec.tolerance);
    let sets = |i: usize| {
        let att: Vec<T> = gaf.attackers(i).map(|c| sigma.get(c)).collect();
        let sup: Vec<T> = gaf.supporters(i).map(|c| sigma.get(c)).collect();
        (att, sup)
    };
    let all: Vec<(Vec<T>, Vec<T>)> = (0..gaf.len()).map(sets).collect();
    let mut out = Collector::new(spec);
    for a in 0..gaf.len() {
        for b in 0..gaf.len() {
            if a == b {
                continue;
            }
            let (ida, idb) = (gaf.argument(a).id.as_str(), gaf.argument(b).id.as_str());
            if !wanted(only, &[ida, idb]) {
                continue;
            }
            out.checked += 1;
            let ((att_a, sup_a), (att_b, sup_b)) = (&all[a], &all[b]);
            let (sa, sb) = (sigma.get(a), sigma.get(b));
            let att_eq = strength_set_eq(att_a, att_b, tol);
            let sup_eq = strength_set_eq(sup_a, sup_b, tol);
            let violated = if !att_eq && sup_eq && strength_set_lt(att_a, att_b, tol) && sa - sb <= tol {
                Some("weaker attackers but not stronger")
            } else if att_eq && !sup_eq && strength_set_lt(sup_a, sup_b, tol) && sb - sa <= tol {
                Some("weaker supporters but not weaker")
            } else if att_eq && sup_eq && (sa - sb).abs() > tol {
                Some("equal attackers and supporters but unequal strength")
            } else {
                None
            };
            if let Some(clause) = violated {
                out.found.push(Counterexample {
                    arguments: vec![ida.to_string(), idb.to_string()],
                    values: vec![sa.to_f64_lossy(), sb.to_f64_lossy()],
                    clause: clause.to_string(),
                });
            }
        }
    }
    out.finish(true, Vec::new())
}

fn additive_monotonicity<T: Scalar>(gaf: &Gaf, sigma: &StrengthMap<T>, spec: PropertySpec, only: Only<'_>) -> PropertyReport {
    let tol = T::lit(spec.tolerance);
    let mut out = Collector::new(spec);
    let mut leaves = 0;
    for a in 0..gaf.len() {
        if gaf.children(a).is_empty() {
            leaves += 1;
            continue;
        }
        let id = gaf.argument(a).id.as_str();
        if !wanted(only, &[id]) {
            continue;
        }
        out.checked += 1;
        let expected: T = gaf.supporters(a).map(|c| sigma.get(c)).sum::<T>()
            - gaf.attackers(a).map(|c| sigma.get(c)).sum::<T>();
        if (sigma.get(a) - expected).abs() > tol {
            out.found.push(Counterexample {
                arguments: vec![id.to_string()],
                values: vec![sigma.get(a).to_f64_lossy(), expected.to_f64_lossy()],
                clause: "strength differs from supporters minus attackers".into(),
            });
        }
    }
    out.finish(
        true,
        vec![format!("{leaves} arguments without incoming relations are exempt")],
    )
}

fn counter_factuality<T: Scalar>(gaf: &Gaf, sigma: &StrengthMap<T>, spec: PropertySpec, only: Only<'_>) -> PropertyReport {
    let tol = T::lit(spec.tolerance);
    let mut out = Collector::new(spec);
    let mut any = false;
    for (alpha, beta, t) in gaf.relations() {
        if t != RelationType::CriticalSupport {
            continue;
        }
        any = true;
        let (ida, idb) = (gaf.argument(alpha).id.as_str(), gaf.argument(beta).id.as_str());
        if !wanted(only, &[ida, idb]) {
            continue;
        }
        out.checked += 1;
        let (sa, sb) = (sigma.get(alpha), sigma.get(beta));
        let clause = if sb <= T::zero() {
            Some("critically supported argument has non-positive strength")
        } else if sb - sa > tol {
            Some("critical supporter weaker than the argument it supports")
        } else {
            None
        };
        if let Some(clause) = clause {
            out.found.push(Counterexample {
                arguments: vec![ida.to_string(), idb.to_string()],
                values: vec![sa.to_f64_lossy(), sb.to_f64_lossy()],
                clause: clause.to_string(),
            });
        }
    }
    let notes = if any {
        Vec::new()
    } else {
        vec!["no critical-support relations".into()]
    };
    out.finish(any, notes)
}

fn run<T: Scalar>(gaf: &Gaf, sigma: &StrengthMap<T>, spec: PropertySpec, only: Only<'_>) -> Result<PropertyReport> {
    spec.validate()?;
    check_sizes(gaf, sigma)?;
    Ok(match spec.kind {
        PropertyKind::DialecticalMonotonicity => dialectical_monotonicity(gaf, sigma, spec, only),
        PropertyKind::AdditiveMonotonicity => additive_monotonicity(gaf, sigma, spec, only),
        PropertyKind::CounterFactuality => counter_factuality(gaf, sigma, spec, only),
    })
}

/// Checks `spec.kind` over every ordered pair, argument or critical edge.
/// Supports and critical supports both count as supporters.
pub fn check_property<T: Scalar>(gaf: &Gaf, sigma: &StrengthMap<T>, spec: PropertySpec) -> Result<PropertyReport> {
    run(gaf, sigma, spec, None)
}

pub fn check_dialectical_monotonicity<T: Scalar>(gaf: &Gaf, sigma: &StrengthMap<T>, tolerance: f64) -> Result<PropertyReport> {
    check_property(gaf, sigma, PropertySpec::new(PropertyKind::DialecticalMonotonicity).with_tolerance(tolerance))
}

/// Leaves are exempt: the literal clause would force every leaf to strength 0.
pub fn check_additive_monotonicity<T: Scalar>(gaf: &Gaf, sigma: &StrengthMap<T>, tolerance: f64) -> Result<PropertyReport> {
    check_property(gaf, sigma, PropertySpec::new(PropertyKind::AdditiveMonotonicity).with_tolerance(tolerance))
}

pub fn check_counterfactuality<T: Scalar>(gaf: &Gaf, sigma: &StrengthMap<T>, tolerance: f64) -> Result<PropertyReport> {
    check_property(gaf, sigma, PropertySpec::new(PropertyKind::CounterFactuality).with_tolerance(tolerance))
}

/// Re-runs a check on the subjects of `report`'s listed counterexamples only.
pub fn recheck<T: Scalar>(gaf: &Gaf, sigma: &StrengthMap<T>, report: &PropertyReport) -> Result<PropertyReport> {
    let only: BTreeSet<Vec<String>> = report.counterexamples.iter().map(|c| c.arguments.clone()).collect();
    let spec = PropertySpec {
        kind: report.property,
        tolerance: report.tolerance,
        max_counterexamples: usize::MAX,
    };
    run(gaf, sigma, spec, Some(&only))
}
