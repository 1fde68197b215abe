use dax_core::fixtures::{tiny_text_cnn, tiny_text_input, toy_ffnn, toy_input};
use dax_core::gaf::{
    activation_characterizations, assign_strengths, extract_gaf, tabular_characterizations, CharacterizationSet,
    GafJson, MeasureContext, RelationType, StrengthSpec,
};
use dax_core::instances::{explain_tabular_ffnn, explain_text_cnn, explain_toy, ExplainOptions};
use dax_core::nn::{forward, Activation, Input, Layer, LayerKind, Metadata, NeuralGraph};
use dax_core::strata::{extract_influence_graph, select_strata, StrataSpec};
use dax_core::Error;

use RelationType::{Attack, CriticalSupport, Support};

fn dense(inputs: usize, outputs: usize, act: Activation, w: &[f64]) -> Layer<f64> {
    Layer::new(LayerKind::Dense { inputs, outputs }, act, w.to_vec(), None)
}

fn values(net: &NeuralGraph<f64>) -> Vec<f64> {
    match toy_input::<f64>() {
        Input::Values(v) => {
            assert_eq!(v.len(), net.layer_size(0));
            v
        }
        Input::Tokens(_) => unreachable!(),
    }
}

/// `(id, relation)` per argument, in extraction order.
fn shape(gaf: &dax_core::gaf::Gaf) -> Vec<(String, Option<RelationType>)> {
    gaf.arguments().iter().map(|a| (a.id.clone(), a.relation)).collect()
}

#[test]
fn toy_bipolar_framework() {
    let net = toy_ffnn::<f64>();
    let x = values(&net);
    let ex = explain_toy(&net, &x, &ExplainOptions::default()).unwrap();
    let expected: Vec<(String, Option<RelationType>)> = [
        ("output", None),
        ("L1.0/output", Some(Support)),
        ("L1.1/output", Some(Attack)),
        ("L1.2/output", Some(Support)),
        ("L0.0/L1.0/output", Some(Support)),
        ("L0.0/L1.1/output", Some(Attack)),
        ("L0.2/L1.1/output", Some(Support)),
        ("L0.1/L1.2/output", Some(Attack)),
    ]
    .iter()
    .map(|(id, r)| (id.to_string(), *r))
    .collect();
    assert_eq!(shape(&ex.gaf), expected);

    // one node, two arguments
    let x1: Vec<_> = ex.gaf.arguments().iter().filter(|a| a.node == "L0.0").collect();
    assert_eq!(x1.len(), 2);
    assert_ne!(x1[0].parent, x1[1].parent);

    // zero weight x2 -> h1: no argument for that influence
    assert!(ex.graph.contains((0, 1), (1, 0)));
    assert!(ex.gaf.index_of("L0.1/L1.0/output").is_none());

    let a = |v: f64| v.tanh().abs();
    let h = [a(1.0), a(-0.5 + 0.75), a(-0.125)];
    let o = 1.0 / (1.0 + (-(h[0] - h[1] + h[2])).exp());
    let sigma = [o, h[0], h[1], h[2], 0.5, 0.5, 0.5, 0.5];
    for (s, e) in ex.sigma.0.iter().zip(sigma) {
        assert!((s - e).abs() < 1e-12, "{s} vs {e}");
    }
}

#[test]
fn tree_shape() {
    let net = toy_ffnn::<f64>();
    let ex = explain_toy(&net, &values(&net), &ExplainOptions::default()).unwrap();
    let gaf = &ex.gaf;
    assert_eq!(gaf.edge_count(), gaf.len() - 1);
    assert!(gaf.argument(0).parent.is_none());
    for (i, a) in gaf.arguments().iter().enumerate().skip(1) {
        let p = a.parent.unwrap();
        assert!(p < i);
        assert_eq!(gaf.argument(p).stratum, a.stratum + 1);
        assert!(a.relation.is_some());
    }
}

#[test]
fn tiny_text_matches_hand_trace() {
    let net = tiny_text_cnn::<f64>();
    let Input::Tokens(tokens) = tiny_text_input::<f64>() else { unreachable!() };
    let ex = explain_text_cnn(&net, &tokens, &ExplainOptions::default()).unwrap();
    // logits 0.875 and -0.625
    let a_o = 1.0 / (1.0 + (-1.5f64).exp());
    let expected = [
        ("output", None, a_o),
        ("L3.0/output", Some(Support), a_o * 8.0 / 7.0),
        ("L3.1/output", Some(Attack), a_o / 7.0),
        ("word:0/L3.0/output", Some(Support), a_o * 8.0 / 7.0),
        ("word:1/L3.1/output", Some(Attack), a_o * 4.0 / 7.0),
        ("word:2/L3.1/output", Some(Support), a_o * 5.0 / 7.0),
    ];
    assert_eq!(ex.gaf.len(), expected.len());
    for (i, (id, rel, s)) in expected.iter().enumerate() {
        assert_eq!(ex.gaf.argument(i).id, *id);
        assert_eq!(ex.gaf.argument(i).relation, *rel);
        assert!((ex.sigma.get(i) - s).abs() < 1e-12, "{id}: {} vs {s}", ex.sigma.get(i));
    }
    assert_eq!(ex.prediction.class, 0);
    assert_eq!(ex.strata().sizes(), vec![4, 2, 1]);
}

/// 2-2-1 tanh net; relations from the sign of `w a` worked out by hand.
#[test]
fn small_net_relations_by_sign() {
    #[rustfmt::skip]
    let hidden = [
        1.0, -2.0,
        0.5,  1.0,
    ];
    let net = NeuralGraph::new(
        vec![
            dense(2, 2, Activation::Tanh, &hidden),
            dense(2, 1, Activation::Sigmoid, &[-1.0, 2.0]),
        ],
        Metadata::labels(&["no", "yes"]),
    )
    .unwrap();
    let x = [1.0, -1.0];
    let rec = forward(&net, &Input::Values(x.to_vec())).unwrap();
    let strata = select_strata(&net, &StrataSpec::Layers, 1).unwrap();
    let graph = extract_influence_graph(&net, &strata).unwrap();
    assert_eq!(graph.edge_count(), 6);

    let h = [(1.0f64 - 0.5).tanh(), (-2.0f64 - 1.0).tanh()];
    let sign = |v: f64| {
        if v > 0.0 {
            Some(Support)
        } else if v < 0.0 {
            Some(Attack)
        } else {
            None
        }
    };
    let mut oracle = Vec::new();
    for (j, &hj) in h.iter().enumerate() {
        oracle.push((format!("L1.{j}"), None::<usize>, sign([-1.0, 2.0][j] * hj)));
    }
    for (j, _) in h.iter().enumerate() {
        for (i, &xi) in x.iter().enumerate() {
            oracle.push((format!("L0.{i}"), Some(j), sign(hidden[i * 2 + j] * xi)));
        }
    }

    let ctx = MeasureContext {
        net: &net,
        record: &rec,
        graph: &graph,
        relevance: None,
        gradcam: None,
    };
    let gaf = extract_gaf(&graph, &activation_characterizations(&ctx)).unwrap();
    let mut got = Vec::new();
    for (c, p, t) in gaf.relations() {
        let parent = &gaf.argument(p).node;
        got.push((gaf.argument(c).node.clone(), parent.clone(), t));
    }
    let want: Vec<_> = oracle
        .iter()
        .filter_map(|(n, j, r)| {
            let parent = j.map_or("L2.0".to_string(), |j| format!("L1.{j}"));
            r.map(|r| (n.clone(), parent, r))
        })
        .collect();
    assert_eq!(got, want);
}

/// Two inputs into one ReLU unit: 0.5 and -0.2, so `a_y = 0.3`.
fn critical_net() -> NeuralGraph<f64> {
    NeuralGraph::new(
        vec![
            dense(2, 1, Activation::Relu, &[0.5, -0.2]),
            dense(1, 2, Activation::Softmax, &[0.5, -0.5]),
        ],
        Metadata::labels(&["a", "b"]),
    )
    .unwrap()
}

#[test]
fn critical_support_takes_precedence() {
    let net = critical_net();
    let ex = explain_tabular_ffnn(&net, &[1.0, 1.0], &ExplainOptions::default()).unwrap();
    let rel = |id: &str| ex.gaf.argument(ex.gaf.index_of(id).unwrap()).relation.unwrap();
    // a_y = 0.3 > 0 and 0.3 - 0.5 <= 0
    assert_eq!(rel("L0.0/L1.0/output"), CriticalSupport);
    assert_eq!(rel("L0.1/L1.0/output"), Attack);
    // a_o is about 0.574 against a contribution of 0.15
    assert_eq!(rel("L1.0/output"), Support);
}

#[test]
fn overlapping_characterizations_are_rejected() {
    let net = critical_net();
    let rec = forward(&net, &Input::Values(vec![1.0, 1.0])).unwrap();
    let strata = select_strata(&net, &StrataSpec::TabularFfnn, 0).unwrap();
    let graph = extract_influence_graph(&net, &strata).unwrap();
    let chars = CharacterizationSet::new()
        .with(Support, |_, _| Ok(true))
        .with(CriticalSupport, |_, _| Ok(true));
    match extract_gaf(&graph, &chars) {
        Err(Error::NonExclusiveCharacterization { from, to, .. }) => {
            assert_eq!((from.as_str(), to.as_str()), ("L1.0", "L2.0"));
        }
        other => panic!("expected an exclusivity error, got {other:?}"),
    }
    // the tabular set resolves the same overlap by precedence
    let ctx = MeasureContext {
        net: &net,
        record: &rec,
        graph: &graph,
        relevance: None,
        gradcam: None,
    };
    assert!(extract_gaf(&graph, &tabular_characterizations(&ctx)).is_ok());
}

#[test]
fn tabular_strengths() {
    // a_j = 0.8, w_jo = 0.5
    let net = NeuralGraph::new(
        vec![
            dense(1, 1, Activation::Relu, &[1.0]),
            dense(1, 2, Activation::Softmax, &[0.5, -0.5]),
        ],
        Metadata::labels(&["a", "b"]),
    )
    .unwrap();
    let ex = explain_tabular_ffnn(&net, &[0.8], &ExplainOptions::default()).unwrap();
    let j = ex.gaf.index_of("L1.0/output").unwrap();
    assert!((ex.sigma.get(j) - 0.4).abs() < 1e-15);
    let i = ex.gaf.index_of("L0.0/L1.0/output").unwrap();
    assert!((ex.sigma.get(i) - 0.4).abs() < 1e-15);
    let o = ex.record.output()[0];
    assert_eq!(ex.sigma.get(0), o);
}

#[test]
fn zero_input_yields_no_argument() {
    let net = critical_net();
    let ex = explain_tabular_ffnn(&net, &[1.0, 0.0], &ExplainOptions::default()).unwrap();
    assert!(ex.gaf.index_of("L0.1/L1.0/output").is_none());
    assert!(ex.gaf.index_of("L0.0/L1.0/output").is_some());
}

#[test]
fn missing_measures_are_reported() {
    let net = tiny_text_cnn::<f64>();
    let rec = forward(&net, &tiny_text_input()).unwrap();
    let strata = select_strata(&net, &StrataSpec::TextCnn, 0).unwrap();
    let graph = extract_influence_graph(&net, &strata).unwrap();
    let ctx = MeasureContext {
        net: &net,
        record: &rec,
        graph: &graph,
        relevance: None,
        gradcam: None,
    };
    let gaf = extract_gaf(&graph, &CharacterizationSet::new()).unwrap();
    assert_eq!(gaf.len(), 1);
    let err = assign_strengths(&gaf, StrengthSpec::Image, &ctx).unwrap_err();
    assert!(matches!(err, Error::MissingMeasure(_)));
}

#[test]
fn json_round_trip() {
    let net = tiny_text_cnn::<f64>();
    let Input::Tokens(tokens) = tiny_text_input::<f64>() else { unreachable!() };
    let ex = explain_text_cnn(&net, &tokens, &ExplainOptions::default()).unwrap();
    let json = GafJson::new(&ex.gaf, &ex.sigma);
    let text = serde_json::to_string(&json).unwrap();
    let parsed: GafJson = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, json);
    let (gaf, sigma) = parsed.to_gaf::<f64>().unwrap();
    assert_eq!(shape(&gaf), shape(&ex.gaf));
    assert_eq!(sigma, ex.sigma);
    assert_eq!(serde_json::to_string(&GafJson::new(&gaf, &sigma)).unwrap(), text);
    assert_eq!(json.nodes[0].stratum, 3);
    assert_eq!(json.edges[0].relation, Support);
    assert!(text.contains("\"relation\":\"attack\""));
}

#[test]
fn malformed_gaf_json() {
    let bad = [
        // root not first
        r#"{"nodes":[{"id":"a/output","stratum":1,"node":"a","strength":1.0},{"id":"output","stratum":2,"node":"o","strength":1.0}],"edges":[{"source":"a/output","target":"output","relation":"support"}]}"#,
        // two outgoing relations
        r#"{"nodes":[{"id":"output","stratum":3,"node":"o","strength":1.0},{"id":"b","stratum":2,"node":"b","strength":1.0},{"id":"c","stratum":2,"node":"c","strength":1.0},{"id":"a","stratum":1,"node":"a","strength":1.0}],"edges":[{"source":"b","target":"output","relation":"support"},{"source":"c","target":"output","relation":"support"},{"source":"a","target":"b","relation":"support"},{"source":"a","target":"c","relation":"attack"}]}"#,
        // dangling argument
        r#"{"nodes":[{"id":"output","stratum":2,"node":"o","strength":1.0},{"id":"a","stratum":1,"node":"a","strength":1.0}],"edges":[]}"#,
        // stratum skip
        r#"{"nodes":[{"id":"output","stratum":3,"node":"o","strength":1.0},{"id":"a","stratum":1,"node":"a","strength":1.0}],"edges":[{"source":"a","target":"output","relation":"attack"}]}"#,
    ];
    for text in bad {
        let json: GafJson = serde_json::from_str(text).unwrap();
        assert!(matches!(json.to_gaf::<f64>(), Err(Error::InvalidArgument(_))), "{text}");
    }
    let unknown = r#"{"nodes":[],"edges":[{"source":"a","target":"b","relation":"endorse"}]}"#;
    assert!(serde_json::from_str::<GafJson>(unknown).is_err());
}
