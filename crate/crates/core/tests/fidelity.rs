use std::collections::BTreeMap;

use dax_core::data::{tabular_arch, tabular_dataset, tabular_features};
use dax_core::fidelity::{
    deep_fidelity_eval, evaluate_pair, linear_fit, mean_relative_difference, median_ms, perturb, relative_difference,
    summarize, FidelityConfig, Perturbation,
};
use dax_core::fixtures::{tiny_text_cnn, tiny_text_input};
use dax_core::instances::InstanceKind;
use dax_core::nn::{initialize, Input};
use proptest::prelude::*;

#[test]
fn relative_difference_examples() {
    assert_eq!(relative_difference(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
    assert_eq!(relative_difference(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
    assert_eq!(relative_difference(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 1.0 / 3.0);
    assert_eq!(relative_difference(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
    assert!(relative_difference(&[1.0], &[1.0, 2.0]).is_err());
    // (1 + 2/3) / 2 per neuron
    let m = mean_relative_difference(&[1.0, 2.0], &[0.0, 4.0]).unwrap();
    assert!((m - (2.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
}

proptest! {
    #[test]
    fn relative_difference_bounds(pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 0..20)) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let d = relative_difference(&x, &y).unwrap();
        prop_assert!((0.0..=2.0).contains(&d));
        prop_assert_eq!(d, relative_difference(&y, &x).unwrap());
        prop_assert_eq!(relative_difference(&x, &x).unwrap(), 0.0);
        let m = mean_relative_difference(&x, &y).unwrap();
        prop_assert!((0.0..=2.0).contains(&m));
    }

    #[test]
    fn categorical_flip_changes_one_feature(seed in 0u64..1000, row in 0usize..50) {
        let set = tabular_dataset(4, 50);
        let columns = set.columns();
        let flip = Perturbation::categorical_flip(&columns).unwrap();
        let example = &set.examples::<f64>(&set.rows).unwrap()[row];
        let Input::Values(a) = &example.input else { unreachable!() };
        let Input::Values(b) = perturb(&example.input, &flip, seed, 0).unwrap() else { unreachable!() };
        // decode to feature values and count differences
        let value = |v: &[f64], f: &str| {
            columns.iter().zip(v).find(|(c, &x)| c.starts_with(&format!("{f}=")) && x == 1.0).map(|(c, _)| c.clone())
        };
        let features = tabular_features();
        prop_assert_eq!(features.len(), 12);
        let changed = features.iter().filter(|f| value(a, &f.name) != value(&b, &f.name)).count();
        prop_assert_eq!(changed, 1);
        prop_assert!(features.iter().all(|f| value(&b, &f.name).is_some()));
        prop_assert_eq!(b.iter().filter(|&&x| x == 1.0).count(), 12);
    }

    #[test]
    fn token_substitution_uses_synonyms(seed in 0u64..1000, rate in 0.0f64..=1.0) {
        let synonyms = BTreeMap::from([(1, 4), (4, 1), (2, 3), (3, 2)]);
        let p = Perturbation::token_substitute(rate, synonyms.clone()).unwrap();
        let input = Input::<f64>::Tokens(vec![0, 1, 2, 3, 4, 1, 0, 2]);
        let Input::Tokens(out) = perturb(&input, &p, seed, 3).unwrap() else { unreachable!() };
        let Input::Tokens(orig) = &input else { unreachable!() };
        for (a, b) in orig.iter().zip(&out) {
            prop_assert!(a == b || synonyms.get(a) == Some(b));
        }
        prop_assert_eq!(perturb(&input, &p, seed, 3).unwrap(), Input::Tokens(out));
    }
}

#[test]
fn perturbation_edge_cases() {
    let input = tiny_text_input::<f64>();
    let p = Perturbation::token_substitute(0.0, BTreeMap::from([(1, 4), (4, 1)])).unwrap();
    assert_eq!(perturb(&input, &p, 9, 9).unwrap(), input);
    assert!(Perturbation::gaussian(0.0).is_err());
    assert!(Perturbation::token_substitute(1.5, BTreeMap::new()).is_err());
    let g = Perturbation::gaussian(10.0).unwrap();
    assert!(perturb(&input, &g, 0, 0).is_err());
    let p = Perturbation::token_substitute(0.5, BTreeMap::new()).unwrap();
    assert!(perturb(&Input::Values(vec![0.5f64]), &p, 0, 0).is_err());
    assert!(Perturbation::categorical_flip(&["age".to_string()]).is_err());
}

#[test]
fn gaussian_noise_scale() {
    let g = Perturbation::gaussian(10.0).unwrap();
    let grey = Input::Values(vec![0.5f64; 20_000]);
    let Input::Values(noisy) = perturb(&grey, &g, 1, 0).unwrap() else { unreachable!() };
    let d: Vec<f64> = noisy.iter().map(|x| x * 255.0 - 127.5).collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let std = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
    // 20000 draws: the sample std is within 2% of 10 with overwhelming probability
    assert!((std - 10.0).abs() < 0.2, "{std}");
    assert!(mean.abs() < 0.3);
    let white = Input::Values(vec![1.0f64; 100]);
    let Input::Values(clamped) = perturb(&white, &g, 2, 0).unwrap() else { unreachable!() };
    assert!(clamped.iter().all(|&x| (0.0..=1.0).contains(&x)));
    assert!(clamped.iter().any(|&x| x < 1.0));
}

fn tabular_setup() -> (dax_core::nn::NeuralGraph<f64>, Vec<Input<f64>>, Perturbation) {
    let set = tabular_dataset(2, 40);
    let net = initialize::<f64>(&tabular_arch(&set, 8), 3).unwrap();
    let data = set.examples::<f64>(&set.rows).unwrap().into_iter().map(|e| e.input).collect();
    (net, data, Perturbation::categorical_flip(&set.columns()).unwrap())
}

#[test]
fn identity_pairs_are_degenerate() {
    let (net, data, _) = tabular_setup();
    let config = FidelityConfig {
        pairs: 20,
        ..FidelityConfig::default()
    };
    let report = deep_fidelity_eval(&net, InstanceKind::TabularFfnn, &data, &Perturbation::Identity, &config).unwrap();
    assert_eq!(report.pairs.len(), 20);
    assert!(report.pairs.iter().all(|p| p.activation_drel == 0.0 && p.strength_drel == 0.0));
    assert_eq!(report.summary.reduction, 0.0);
    assert!(!report.empty);
}

#[test]
fn report_invariants_and_order_independence() {
    let (net, data, flip) = tabular_setup();
    let config = FidelityConfig {
        pairs: 60,
        ..FidelityConfig::default()
    };
    let report = deep_fidelity_eval(&net, InstanceKind::TabularFfnn, &data, &flip, &config).unwrap();
    assert_eq!(report.pairs.len() + report.rejected, 60);
    for p in &report.pairs {
        assert!((0.0..=2.0).contains(&p.activation_drel) && (0.0..=2.0).contains(&p.strength_drel));
        assert!(p.delta_probability < 0.05);
        assert_eq!(p.similar_activations, p.activation_drel < 0.2);
    }
    assert_eq!(report.summary.conditional_pairs, report.histogram.conditional.iter().sum::<usize>());
    assert_eq!(report.pairs.len(), report.histogram.strength.iter().sum::<usize>());

    // pairs evaluated in reverse give the same report
    let mut reversed = Vec::new();
    let mut rejected = 0;
    for i in (0..60).rev() {
        match evaluate_pair(&net, InstanceKind::TabularFfnn, &data, &flip, &config, i).unwrap() {
            Some(p) => reversed.push(p),
            None => rejected += 1,
        }
    }
    assert_eq!(summarize(InstanceKind::TabularFfnn, &flip, &config, reversed, rejected), report);

    let csv = report.to_csv().unwrap();
    assert!(csv.starts_with("index,sample,delta_probability,activation_drel,strength_drel,similar_activations\n"));
    assert_eq!(csv.lines().count(), report.pairs.len() + 1);
}

#[test]
fn no_similar_outputs_gives_an_empty_report() {
    let net = tiny_text_cnn::<f64>();
    let data = vec![tiny_text_input::<f64>()];
    let p = Perturbation::token_substitute(1.0, BTreeMap::from([(1, 2), (2, 1), (3, 4), (4, 3)])).unwrap();
    let config = FidelityConfig {
        pairs: 3,
        output_threshold: 0.0,
        ..FidelityConfig::default()
    };
    let report = deep_fidelity_eval(&net, InstanceKind::TextCnn, &data, &p, &config).unwrap();
    assert!(report.empty);
    assert_eq!(report.rejected, 3);
    assert_eq!(report.summary.reduction, 0.0);
}

#[test]
fn line_fit() {
    let fit = linear_fit(&[(8.0, 3.0), (16.0, 5.0), (32.0, 9.0), (64.0, 17.0)]).unwrap();
    assert!((fit.slope - 0.25).abs() < 1e-12 && (fit.intercept - 1.0).abs() < 1e-12);
    assert!((fit.r_squared - 1.0).abs() < 1e-12);
    // y = (1, 3, 2): slope 0.5, r^2 = 0.25
    let fit = linear_fit(&[(0.0, 1.0), (1.0, 3.0), (2.0, 2.0)]).unwrap();
    assert!((fit.slope - 0.5).abs() < 1e-12 && (fit.r_squared - 0.25).abs() < 1e-12);
    assert!(linear_fit(&[(1.0, 1.0)]).is_err());
    assert!(median_ms(3, || Ok(())).unwrap() >= 0.0);
}
