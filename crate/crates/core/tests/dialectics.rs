use dax_core::dialectics::{
    check_additive_monotonicity, check_counterfactuality, check_dialectical_monotonicity, check_property, recheck,
    strength_set_eq, strength_set_leq, PropertyKind, PropertySpec, Verdict,
};
use dax_core::fixtures::{tiny_text_cnn, tiny_text_input, toy_ffnn, toy_input};
use dax_core::gaf::{Gaf, GafEdge, GafJson, GafNode, StrengthMap};
use dax_core::instances::{explain_text_cnn, explain_toy, ExplainOptions};
use dax_core::nn::Input;
use proptest::prelude::*;

/// Every injection of `a` into `b`, by recursion over unused targets.
fn leq_exhaustive(a: &[f64], b: &[f64]) -> bool {
    fn go(a: &[f64], b: &[f64], used: &mut Vec<bool>) -> bool {
        let Some((&x, rest)) = a.split_first() else { return true };
        for j in 0..b.len() {
            if !used[j] && x <= b[j] {
                used[j] = true;
                if go(rest, b, used) {
                    return true;
                }
                used[j] = false;
            }
        }
        false
    }
    go(a, b, &mut vec![false; b.len()])
}

/// Builds a GAF from `(id, parent, relation, strength)`; parents precede children.
fn build<'a>(args: &[(&'a str, Option<&'a str>, &str, f64)]) -> (Gaf, StrengthMap<f64>) {
    let depth = |mut id: &'a str| {
        let mut d = 0;
        while let Some(p) = args.iter().find(|a| a.0 == id).and_then(|a| a.1) {
            d += 1;
            id = p;
        }
        d
    };
    let max = args.iter().map(|a| depth(a.0)).max().unwrap();
    let nodes = args
        .iter()
        .map(|a| GafNode {
            id: a.0.to_string(),
            stratum: max - depth(a.0) + 1,
            node: a.0.to_string(),
            strength: a.3,
        })
        .collect();
    let edges = args
        .iter()
        .filter_map(|a| {
            Some(GafEdge {
                source: a.0.to_string(),
                target: a.1?.to_string(),
                relation: serde_json::from_str(&format!("\"{}\"", a.2)).unwrap(),
            })
        })
        .collect();
    GafJson { nodes, edges }.to_gaf().unwrap()
}

#[test]
fn set_order_examples() {
    assert!(strength_set_leq::<f64>(&[], &[0.1, 0.2], 0.0));
    assert!(strength_set_leq::<f64>(&[], &[], 0.0));
    assert!(!strength_set_leq(&[0.3], &[0.2], 0.0));
    assert!(strength_set_leq(&[0.1, 0.4], &[0.2, 0.5], 0.0));
    assert!(leq_exhaustive(&[0.1, 0.4], &[0.2, 0.5]));
    assert!(!strength_set_leq(&[0.1, 0.4], &[0.5], 0.0));
    // within tolerance
    assert!(strength_set_leq(&[0.3 + 1e-9], &[0.3], 1e-6));
    assert!(!strength_set_leq(&[0.3 + 1e-5], &[0.3], 1e-6));
}

fn set() -> impl Strategy<Value = Vec<f64>> {
    // a small value grid makes ties common
    prop::collection::vec((0u8..12).prop_map(|v| v as f64 / 4.0), 0..=7)
}

proptest! {
    #[test]
    fn greedy_matches_exhaustive(a in set(), b in set()) {
        prop_assert_eq!(strength_set_leq(&a, &b, 0.0), leq_exhaustive(&a, &b));
    }

    #[test]
    fn set_order_is_a_preorder(a in set(), b in set(), c in set()) {
        prop_assert!(strength_set_leq(&a, &a, 0.0));
        if strength_set_leq(&a, &b, 0.0) && strength_set_leq(&b, &c, 0.0) {
            prop_assert!(strength_set_leq(&a, &c, 0.0));
        }
    }

    #[test]
    fn recheck_reproduces_failures(sigma in prop::collection::vec(0.0f64..1.0, 8), kind in 0usize..2) {
        let net = toy_ffnn::<f64>();
        let Input::Values(x) = toy_input::<f64>() else { unreachable!() };
        let ex = explain_toy(&net, &x, &ExplainOptions::default()).unwrap();
        let sigma = StrengthMap(sigma);
        let spec = PropertySpec::new(PropertyKind::ALL[kind]);
        let report = check_property(&ex.gaf, &sigma, spec).unwrap();
        let again = recheck(&ex.gaf, &sigma, &report).unwrap();
        prop_assert_eq!(&again.counterexamples, &report.counterexamples);
        prop_assert_eq!(again.checked, report.counterexamples.len());
    }
}

#[test]
fn dialectical_monotonicity_pair() {
    // a: attackers {0.5}; b: attackers {0.5, 0.2}; both one supporter of 0.3
    let (gaf, sigma) = build(&[
        ("output", None, "", 1.0),
        ("a", Some("output"), "support", 0.9),
        ("b", Some("output"), "support", 0.4),
        ("a1", Some("a"), "attack", 0.5),
        ("a2", Some("a"), "support", 0.3),
        ("b1", Some("b"), "attack", 0.5),
        ("b2", Some("b"), "attack", 0.2),
        ("b3", Some("b"), "support", 0.3),
    ]);
    assert!(strength_set_leq(&[0.5], &[0.5, 0.2], 0.0));
    assert!(!strength_set_leq(&[0.5, 0.2], &[0.5], 0.0));
    let report = check_dialectical_monotonicity(&gaf, &sigma, 1e-6).unwrap();
    let pair = |x: &str, y: &str| {
        report
            .counterexamples
            .iter()
            .any(|c| c.arguments == [x.to_string(), y.to_string()])
    };
    assert!(!pair("a", "b"));
    assert!(!pair("b", "a"));

    // the same pair with sigma(a) < sigma(b) is a counterexample
    let flipped = StrengthMap(vec![1.0, 0.4, 0.9, 0.5, 0.3, 0.5, 0.2, 0.3]);
    let report = check_dialectical_monotonicity(&gaf, &flipped, 1e-6).unwrap();
    assert_eq!(report.verdict, Verdict::Fail);
    assert!(report
        .counterexamples
        .iter()
        .any(|c| c.arguments == ["a", "b"] && c.clause.contains("attackers")));
}

#[test]
fn equal_sets_unequal_strengths_fail() {
    let (gaf, sigma) = build(&[
        ("output", None, "", 1.0),
        ("a", Some("output"), "support", 0.6),
        ("b", Some("output"), "attack", 0.4),
        ("a1", Some("a"), "support", 0.2),
        ("b1", Some("b"), "support", 0.2),
    ]);
    let report = check_dialectical_monotonicity(&gaf, &sigma, 1e-6).unwrap();
    assert_eq!(report.verdict, Verdict::Fail);
    let ids: Vec<_> = report.counterexamples.iter().map(|c| c.arguments.join(",")).collect();
    assert_eq!(ids, ["a,b", "b,a"]);
    assert_eq!(report.counterexamples[0].values, vec![0.6, 0.4]);
    assert!(report.counterexamples[0].clause.starts_with("equal"));
}

#[test]
fn toy_network_properties() {
    let net = toy_ffnn::<f64>();
    let Input::Values(x) = toy_input::<f64>() else { unreachable!() };
    let ex = explain_toy(&net, &x, &ExplainOptions::default()).unwrap();
    let dm = check_dialectical_monotonicity(&ex.gaf, &ex.sigma, 1e-6).unwrap();
    assert_eq!(dm.verdict, Verdict::Pass, "{dm:?}");
    assert_eq!(dm.checked, 8 * 7);
    let am = check_additive_monotonicity(&ex.gaf, &ex.sigma, 1e-6).unwrap();
    assert_eq!(am.verdict, Verdict::Fail);
    assert_eq!(am.checked, 4);
    assert!(am.notes[0].contains("4 arguments"));
    assert_eq!(ex.properties.len(), 2);
    assert_eq!(ex.properties[1], am);
}

#[test]
fn text_additivity() {
    let net = tiny_text_cnn::<f64>();
    let Input::Tokens(t) = tiny_text_input::<f64>() else { unreachable!() };
    let ex = explain_text_cnn(&net, &t, &ExplainOptions::default()).unwrap();
    let am = check_additive_monotonicity(&ex.gaf, &ex.sigma, 1e-6).unwrap();
    assert_eq!(am.verdict, Verdict::Pass);
    assert_eq!(am.checked, 3);
}

#[test]
fn counterfactuality() {
    let (gaf, sigma) = build(&[
        ("output", None, "", 1.0),
        ("a", Some("output"), "support", 0.6),
        ("a1", Some("a"), "attack", 0.2),
    ]);
    let report = check_counterfactuality(&gaf, &sigma, 1e-6).unwrap();
    assert_eq!(report.verdict, Verdict::NotApplicable);
    assert_eq!(report.checked, 0);

    let (gaf, sigma) = build(&[
        ("output", None, "", 1.0),
        ("a", Some("output"), "support", 0.0),
        ("b", Some("output"), "support", 0.5),
        ("a1", Some("a"), "critical-support", 0.2),
        ("b1", Some("b"), "critical-support", 0.7),
        ("b2", Some("b"), "critical-support", 0.3),
    ]);
    let report = check_counterfactuality(&gaf, &sigma, 1e-6).unwrap();
    assert_eq!(report.verdict, Verdict::Fail);
    assert_eq!(report.checked, 3);
    let edges: Vec<_> = report.counterexamples.iter().map(|c| c.arguments.join("->")).collect();
    assert_eq!(edges, ["a1->a", "b2->b"]);
    assert!(report.counterexamples[0].clause.contains("non-positive"));
    assert!(report.counterexamples[1].clause.contains("weaker"));
}

#[test]
fn counterexample_cap() {
    let (gaf, _) = build(&[
        ("output", None, "", 1.0),
        ("a", Some("output"), "support", 0.6),
        ("b", Some("output"), "attack", 0.4),
        ("c", Some("output"), "attack", 0.4),
    ]);
    let sigma = StrengthMap(vec![1.0, 0.1, 0.2, 0.3]);
    let mut spec = PropertySpec::new(PropertyKind::DialecticalMonotonicity);
    spec.max_counterexamples = 2;
    let report = check_property(&gaf, &sigma, spec).unwrap();
    assert_eq!(report.counterexamples.len(), 2);
    assert_eq!(report.omitted, 4);
    assert_eq!(report.failures(), 6);
    assert_eq!(report.counterexamples[0].arguments, ["a", "b"]);
}

#[test]
fn report_json_shape() {
    let (gaf, sigma) = build(&[("output", None, "", 1.0), ("a", Some("output"), "support", 0.5)]);
    let report = check_additive_monotonicity(&gaf, &sigma, 1e-6).unwrap();
    let text = serde_json::to_string(&report).unwrap();
    assert!(text.starts_with(r#"{"property":"additive-monotonicity","verdict":"fail","checked":1,"counterexamples":[{"#));
    let spec = PropertySpec::new(PropertyKind::AdditiveMonotonicity).with_tolerance(-1.0);
    assert!(check_property(&gaf, &sigma, spec).is_err());
    assert!(strength_set_eq(&[0.5], &[0.5], 0.0));
}
