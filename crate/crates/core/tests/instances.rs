use std::collections::BTreeMap;

use dax_core::attribution::{lrp0_backward, word_relevance};
use dax_core::data::fixture_data;
use dax_core::dialectics::{check_additive_monotonicity, check_counterfactuality, Verdict};
use dax_core::gaf::RelationType;
use dax_core::instances::{deactivates, explain, explain_image_cnn, ExplainOptions, InstanceKind};
use dax_core::nn::{
    forward, initialize, load_model, Activation, ArchSpec, Input, LayerKind, LayerTemplate, Metadata, NeuralGraph,
    NeuronId, Padding,
};
use dax_core::strata::select_strata;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn shipped(name: &str) -> NeuralGraph<f64> {
    let path = format!("{}/fixtures/{name}.model.json", env!("CARGO_MANIFEST_DIR"));
    load_model(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fixture_strata_sizes() {
    for (name, kind, sizes) in [
        ("text-cnn", InstanceKind::TextCnn, [150, 20, 1]),
        ("tabular-ffnn", InstanceKind::TabularFfnn, [58, 8, 1]),
        ("image-cnn", InstanceKind::ImageCnn, [256, 8, 1]),
        ("toy", InstanceKind::Toy, [3, 3, 1]),
    ] {
        let net = shipped(name);
        let strata = select_strata(&net, &kind.strata_spec(), 0).unwrap();
        assert_eq!(strata.sizes(), sizes, "{name}");
    }
}

/// 1x8x8 input, one same-padded 3x3 convolution with two filters, 2x2 max
/// pooling and a dense softmax over 2 classes.
fn small_image(seed: u64) -> NeuralGraph<f64> {
    initialize(
        &ArchSpec {
            layers: vec![
                LayerTemplate::new(
                    LayerKind::Conv2d { in_channels: 1, filters: 2, height: 8, width: 8, kernel: 3, padding: Padding::Same },
                    Activation::Relu,
                ),
                LayerTemplate::new(LayerKind::MaxPool2d { channels: 2, height: 8, width: 8, pool: 2 }, Activation::Linear),
                LayerTemplate::new(LayerKind::Flatten { size: 32 }, Activation::Linear),
                LayerTemplate::new(LayerKind::Dense { inputs: 32, outputs: 2 }, Activation::Softmax),
            ],
            metadata: Metadata::labels(&["a", "b"]),
        },
        seed,
    )
    .unwrap()
}

#[test]
fn image_saf_matches_direct_computation() {
    for seed in 0..5 {
        let net = small_image(seed);
        let conv_w = net.layers()[0].weights.clone();
        let dense_w = net.layers()[3].weights.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let image: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..1.0)).collect();

        // convolution with zero padding, ReLU
        let px = |y: i64, x: i64| if (0..8).contains(&y) && (0..8).contains(&x) { image[(y * 8 + x) as usize] } else { 0.0 };
        let a: Vec<Vec<f64>> = (0..2)
            .map(|f| {
                (0..64)
                    .map(|c| {
                        let (y, x) = ((c / 8) as i64, (c % 8) as i64);
                        let mut z = 0.0;
                        for ky in 0..3 {
                            for kx in 0..3 {
                                z += conv_w[f * 9 + (ky * 3 + kx) as usize] * px(y + ky - 1, x + kx - 1);
                            }
                        }
                        z.max(0.0)
                    })
                    .collect()
            })
            .collect();
        let pooled: Vec<f64> = (0..2)
            .flat_map(|f| {
                let a = &a[f];
                (0..16).map(move |p| {
                    let (py, px) = (p / 4, p % 4);
                    [0, 1, 8, 9].iter().map(|o| a[py * 16 + px * 2 + o]).fold(f64::MIN, f64::max)
                })
            })
            .collect();
        let logits: Vec<f64> = (0..2).map(|c| (0..32).map(|i| pooled[i] * dense_w[i * 2 + c]).sum()).collect();
        let class = if logits[1] > logits[0] { 1 } else { 0 };
        // each pooling window routes the score gradient to exactly one cell,
        // so the mean gradient over a map is the window weights' sum over 64
        let g: Vec<f64> = (0..2).map(|f| (0..16).map(|p| dense_w[(f * 16 + p) * 2 + class]).sum::<f64>() / 64.0).collect();
        let cam: Vec<Vec<f64>> = (0..2).map(|f| a[f].iter().map(|v| (g[f] * v).max(0.0)).collect()).collect();

        let mut expected = BTreeMap::new();
        let total: f64 = cam.iter().flatten().sum();
        expected.insert("output".to_string(), total);
        for f in 0..2 {
            // a filter with g_j > 0 stays even when its map is all zero
            if g[f] > 0.0 {
                let parent = format!("filter:{f}/output");
                expected.insert(parent.clone(), cam[f].iter().sum());
                for (c, &v) in cam[f].iter().enumerate() {
                    if v > 0.0 {
                        expected.insert(format!("pixel:{}:{}/{parent}", c % 8, c / 8), v);
                    }
                }
            }
        }

        let ex = explain_image_cnn(&net, &image, &ExplainOptions::default()).unwrap();
        assert_eq!(ex.prediction.class, class);
        let got: BTreeMap<String, f64> = ex
            .gaf
            .arguments()
            .iter()
            .enumerate()
            .map(|(i, a)| (a.id.clone(), ex.sigma.get(i)))
            .collect();
        assert_eq!(got.keys().collect::<Vec<_>>(), expected.keys().collect::<Vec<_>>(), "seed {seed}");
        for (id, v) in &expected {
            assert!((got[id] - v).abs() < 1e-12, "{id}: {} vs {v}", got[id]);
        }
        assert!(ex.gaf.relations().all(|(_, _, t)| t == RelationType::Support));
        assert_eq!(check_additive_monotonicity(&ex.gaf, &ex.sigma, 1e-6).unwrap().verdict, Verdict::Pass);
    }
}

#[test]
fn text_fixture_conserves_relevance() {
    let net = shipped("text-cnn");
    let vocab = net.metadata().vocab.as_ref().unwrap().len();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..100 {
        let len = rng.random_range(1..=150);
        let tokens: Vec<usize> = (0..150).map(|p| if p < len { rng.random_range(1..vocab) } else { 0 }).collect();
        let input = Input::Tokens(tokens);
        let record = forward(&net, &input).unwrap();
        let class = (0..4).max_by(|&a, &b| record.output()[a].total_cmp(&record.output()[b])).unwrap();
        let o = NeuronId::new(net.output_layer(), class);
        let map = lrp0_backward(&net, &record, o, 1).unwrap();
        let total: f64 = word_relevance(&net, &map).unwrap().iter().sum();
        assert!((total - record.output()[class]).abs() < 1e-6);
    }
}

#[test]
fn tabular_counterfactuality_on_test_split() {
    let net = shipped("tabular-ffnn");
    let data = fixture_data(InstanceKind::TabularFfnn, 0).unwrap();
    let w = |from: NeuronId, to: NeuronId| net.effective_weight(from, to).unwrap();
    let mut critical = 0;
    let mut rerun_critical = 0;
    for input in &data.test {
        let ex = explain(&net, InstanceKind::TabularFfnn, input, &ExplainOptions::default()).unwrap();
        let o = ex.strata().output();
        let report = check_counterfactuality(&ex.gaf, &ex.sigma, 1e-6).unwrap();
        // failures can only come from hidden units with a zero output weight
        for c in &report.counterexamples {
            let parent = ex.gaf.index_of(&c.arguments[1]).unwrap();
            let j = ex.strata().node(ex.gaf.key(parent).unwrap()).neuron().unwrap();
            assert_eq!(w(j, o), 0.0, "{c:?}");
        }
        for (child, parent, t) in ex.gaf.relations() {
            if t != RelationType::CriticalSupport {
                continue;
            }
            critical += 1;
            let from = ex.strata().node(ex.gaf.key(child).unwrap()).neuron().unwrap();
            let to = ex.strata().node(ex.gaf.key(parent).unwrap()).neuron().unwrap();
            let a = |n: NeuronId| ex.record.activation(n).unwrap();
            if parent != 0 {
                // sigma(beta) - sigma(alpha) = |w_jo| (a_j - |w_ij a_i|)
                let derived = w(to, o).abs() * (a(to) - (w(from, to) * a(from)).abs());
                assert!(derived <= 1e-12);
                assert!((ex.sigma.get(parent) - ex.sigma.get(child) - derived).abs() < 1e-12);
            }
            // zeroing a source that deactivates its target is always caught
            if deactivates(&net, &ex.record, from, to).unwrap() {
                rerun_critical += 1;
            }
        }
        for (child, parent, t) in ex.gaf.relations() {
            let from = ex.strata().node(ex.gaf.key(child).unwrap()).neuron().unwrap();
            let to = ex.strata().node(ex.gaf.key(parent).unwrap()).neuron().unwrap();
            if deactivates(&net, &ex.record, from, to).unwrap() {
                assert_eq!(t, RelationType::CriticalSupport, "{from} -> {to}");
            }
        }
    }
    assert!(critical > 0);
    assert!(rerun_critical <= critical);
}

#[test]
fn deactivation_example() {
    // a_y = relu(tanh(0.5 x1 - 0.2 x2)) with x = (1, 1): removing x1 deactivates y
    let net = NeuralGraph::new(
        vec![
            dax_core::nn::Layer::new(LayerKind::Dense { inputs: 2, outputs: 1 }, Activation::Tanh, vec![0.5, -0.2], None),
            dax_core::nn::Layer::new(LayerKind::Elementwise { size: 1 }, Activation::Relu, vec![], None),
        ],
        Metadata::default(),
    )
    .unwrap();
    let record = forward(&net, &Input::Values(vec![1.0, 1.0])).unwrap();
    let y = NeuronId::new(2, 0);
    assert!(deactivates(&net, &record, NeuronId::new(0, 0), y).unwrap());
    assert!(!deactivates(&net, &record, NeuronId::new(0, 1), y).unwrap());
    assert!(deactivates(&net, &record, y, NeuronId::new(0, 0)).is_err());
}
