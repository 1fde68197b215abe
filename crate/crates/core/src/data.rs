//! Synthetic datasets and the architectures of the shipped fixtures.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{encode_record, InstanceKind};
use crate::nn::{
    accuracy, train_toy, Activation, ArchSpec, Example, Input, LayerKind, LayerTemplate, Metadata, NeuralGraph, Padding,
    TrainConfig, TrainReport,
};
use crate::scalar::Scalar;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";

pub const TEXT_SEQ_LEN: usize = 150;
pub const TEXT_DIM: usize = 8;
pub const TEXT_FILTERS: usize = 20;
pub const TEXT_DOCS: usize = 2000;
pub const IMAGE_SIZE: usize = 16;
pub const IMAGE_COUNT: usize = 900;
pub const TABULAR_ROWS: usize = 2000;
pub const TABULAR_HIDDEN: usize = 8;

/// Fraction of every dataset held out as its test split.
pub const TEST_FRACTION: f64 = 0.2;

pub(crate) fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// `(train, test)` by position: the last `TEST_FRACTION` of the items.
pub fn split<X>(items: &[X]) -> (&[X], &[X]) {
    let test = (items.len() as f64 * TEST_FRACTION).round() as usize;
    items.split_at(items.len() - test)
}

// Topic vocabularies as synonym pairs; a concept is drawn, then one surface form.
const WORLD: [[&str; 2]; 20] = [
    ["government", "administration"], ["election", "vote"], ["minister", "official"],
    ["president", "leader"], ["treaty", "accord"], ["border", "frontier"],
    ["embassy", "consulate"], ["war", "conflict"], ["troops", "soldiers"],
    ["refugees", "migrants"], ["parliament", "congress"], ["summit", "talks"],
    ["sanctions", "embargo"], ["diplomat", "envoy"], ["protest", "rally"],
    ["military", "army"], ["nation", "country"], ["ceasefire", "truce"],
    ["rebels", "insurgents"], ["capital", "province"],
];
const SPORTS: [[&str; 2]; 20] = [
    ["match", "game"], ["team", "squad"], ["coach", "manager"], ["season", "campaign"],
    ["goal", "score"], ["player", "athlete"], ["championship", "title"],
    ["league", "division"], ["stadium", "arena"], ["tournament", "cup"],
    ["victory", "win"], ["defeat", "loss"], ["striker", "forward"], ["pitcher", "bowler"],
    ["medal", "trophy"], ["olympic", "olympics"], ["fans", "supporters"],
    ["injury", "strain"], ["referee", "umpire"], ["playoff", "final"],
];
const BUSINESS: [[&str; 2]; 20] = [
    ["market", "exchange"], ["shares", "stocks"], ["profit", "earnings"],
    ["revenue", "sales"], ["investor", "shareholder"], ["bank", "lender"],
    ["merger", "acquisition"], ["ceo", "executive"], ["quarter", "fiscal"],
    ["dividend", "payout"], ["inflation", "prices"], ["economy", "growth"],
    ["company", "firm"], ["deal", "agreement"], ["oil", "crude"], ["trade", "exports"],
    ["tax", "levy"], ["retail", "stores"], ["bond", "debt"], ["forecast", "outlook"],
];
const SCIENCE: [[&str; 2]; 20] = [
    ["software", "program"], ["internet", "web"], ["computer", "pc"],
    ["research", "study"], ["scientists", "researchers"], ["space", "orbit"],
    ["technology", "tech"], ["data", "information"], ["chip", "processor"],
    ["network", "broadband"], ["virus", "malware"], ["genome", "dna"],
    ["climate", "warming"], ["telescope", "observatory"], ["robot", "android"],
    ["mobile", "wireless"], ["launch", "liftoff"], ["planet", "mars"],
    ["device", "gadget"], ["laboratory", "lab"],
];
const NEUTRAL: [[&str; 2]; 40] = [
    ["said", "stated"], ["big", "large"], ["new", "fresh"], ["week", "days"],
    ["people", "persons"], ["report", "account"], ["today", "now"], ["year", "annum"],
    ["many", "several"], ["small", "little"], ["major", "key"], ["early", "initial"],
    ["late", "recent"], ["group", "body"], ["plan", "proposal"], ["show", "reveal"],
    ["help", "aid"], ["start", "begin"], ["end", "finish"], ["make", "create"],
    ["top", "leading"], ["high", "elevated"], ["low", "reduced"], ["move", "shift"],
    ["news", "headlines"], ["local", "regional"], ["public", "open"], ["long", "lengthy"],
    ["fast", "quick"], ["hard", "tough"], ["told", "informed"], ["expected", "anticipated"],
    ["announced", "declared"], ["monday", "tuesday"], ["morning", "evening"],
    ["officials", "sources"], ["statement", "remarks"], ["central", "main"],
    ["number", "count"], ["part", "portion"],
];

const TOPIC_LABELS: [&str; 4] = ["world", "sports", "business", "science"];

/// Pseudo-words filling the vocabulary with topic-neutral tokens.
fn pseudo_words(count: usize) -> Vec<String> {
    const C: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
    const V: [&str; 4] = ["a", "e", "o", "u"];
    let syllables: Vec<String> = C.iter().flat_map(|c| V.iter().map(move |v| format!("{c}{v}"))).collect();
    let mut out = Vec::with_capacity(count);
    'outer: for a in &syllables {
        for b in &syllables {
            out.push(format!("{a}{b}x"));
            if out.len() == count {
                break 'outer;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub tokens: Vec<usize>,
    pub label: usize,
}

/// A labeled token corpus with its vocabulary and substitution table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextCorpus {
    pub vocab: Vec<String>,
    pub labels: Vec<String>,
    /// Token id to interchangeable token id.
    pub synonyms: BTreeMap<usize, usize>,
    pub docs: Vec<Document>,
}

impl TextCorpus {
    pub fn examples<T: Scalar>(docs: &[Document]) -> Vec<Example<T>> {
        docs.iter()
            .map(|d| Example {
                input: Input::Tokens(d.tokens.clone()),
                label: d.label,
            })
            .collect()
    }
}

/// Words of `text` split on whitespace; unknown words map to `<unk>` when the
/// vocabulary has it.
pub fn tokenize(vocab: &[String], text: &str) -> Result<Vec<usize>> {
    let unk = vocab.iter().position(|w| w == UNK);
    text.split_whitespace()
        .enumerate()
        .map(|(position, word)| {
            let word = word.to_lowercase();
            vocab
                .iter()
                .position(|w| *w == word)
                .or(unk)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown word `{word}` at position {position}")))
        })
        .collect()
}

/// A 4-topic corpus over a vocabulary of about 500 words. Documents hold 40
/// to `TEXT_SEQ_LEN` tokens and are zero-padded to `TEXT_SEQ_LEN`.
pub fn text_corpus(seed: u64, docs: usize) -> TextCorpus {
    let topics = [&WORLD[..], &SPORTS[..], &BUSINESS[..], &SCIENCE[..]];
    let mut vocab: Vec<String> = vec![PAD.into(), UNK.into()];
    let mut synonyms = BTreeMap::new();
    let mut add_pair = |vocab: &mut Vec<String>, a: &str, b: &str| -> [usize; 2] {
        let ids = [a, b].map(|w| match vocab.iter().position(|v| v == w) {
            Some(i) => i,
            None => {
                vocab.push(w.to_string());
                vocab.len() - 1
            }
        });
        if ids[0] != ids[1] {
            synonyms.insert(ids[0], ids[1]);
            synonyms.insert(ids[1], ids[0]);
        }
        ids
    };
    let topic_ids: Vec<Vec<[usize; 2]>> = topics
        .iter()
        .map(|t| t.iter().map(|[a, b]| add_pair(&mut vocab, a, b)).collect())
        .collect();
    let neutral: Vec<[usize; 2]> = NEUTRAL.iter().map(|[a, b]| add_pair(&mut vocab, a, b)).collect();
    let pseudo = pseudo_words(500 - vocab.len());
    let filler: Vec<[usize; 2]> = pseudo
        .chunks(2)
        .map(|p| add_pair(&mut vocab, &p[0], p.get(1).unwrap_or(&p[0])))
        .collect();

    let mut r = rng(seed, 0);
    let docs = (0..docs)
        .map(|i| {
            let label = i % TOPIC_LABELS.len();
            let len = r.random_range(40..=TEXT_SEQ_LEN);
            let mut tokens: Vec<usize> = (0..len)
                .map(|_| {
                    let u: f64 = r.random();
                    let pool = if u < 0.2 {
                        &topic_ids[label]
                    } else if u < 0.24 {
                        &topic_ids[r.random_range(0..topics.len())]
                    } else if u < 0.7 {
                        &neutral
                    } else {
                        &filler
                    };
                    pool.choose(&mut r).expect("non-empty pool")[r.random_range(0..2)]
                })
                .collect();
            tokens.resize(TEXT_SEQ_LEN, 0);
            Document { tokens, label }
        })
        .collect();
    TextCorpus {
        vocab,
        labels: TOPIC_LABELS.iter().map(|s| s.to_string()).collect(),
        synonyms,
        docs,
    }
}

/// Embedding, 1D ReLU convolutions with widths cycling through 2..=5, global
/// max-pooling and a softmax layer.
pub fn text_arch(vocab: Vec<String>, labels: Vec<String>, seq_len: usize, dim: usize, filters: usize) -> ArchSpec {
    let widths: Vec<usize> = (0..filters).map(|f| 2 + f % 4).collect();
    let segments = widths.iter().map(|w| seq_len - w + 1).collect();
    let classes = labels.len();
    ArchSpec {
        layers: vec![
            LayerTemplate::new(
                LayerKind::Embedding {
                    vocab: vocab.len(),
                    dim,
                    seq_len,
                },
                Activation::Linear,
            ),
            LayerTemplate::new(
                LayerKind::Conv1d {
                    seq_len,
                    channels: dim,
                    widths,
                },
                Activation::Relu,
            ),
            LayerTemplate::new(LayerKind::GlobalMaxPool1d { segments }, Activation::Linear),
            LayerTemplate::new(
                LayerKind::Dense {
                    inputs: filters,
                    outputs: classes,
                },
                Activation::Softmax,
            ),
        ],
        metadata: Metadata {
            labels,
            vocab: Some(vocab),
            features: None,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledImage {
    /// Channel-major values in `[0, 1]`.
    pub pixels: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSet {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub labels: Vec<String>,
    pub images: Vec<LabeledImage>,
}

impl ImageSet {
    pub fn examples<T: Scalar>(images: &[LabeledImage]) -> Vec<Example<T>> {
        images
            .iter()
            .map(|i| Example {
                input: Input::Values(i.pixels.iter().map(|&v| T::lit(v)).collect()),
                label: i.label,
            })
            .collect()
    }
}

const SHAPE_LABELS: [&str; 3] = ["disc", "square", "cross"];

/// Coloured discs, squares and crosses on a dark noisy background.
pub fn shapes_dataset(seed: u64, count: usize, size: usize) -> ImageSet {
    let mut r = rng(seed, 1);
    let images = (0..count)
        .map(|i| {
            let label = i % SHAPE_LABELS.len();
            let radius = r.random_range(size as f64 * 0.2..size as f64 * 0.35);
            let cx = r.random_range(radius..size as f64 - radius);
            let cy = r.random_range(radius..size as f64 - radius);
            let colour: [f64; 3] = std::array::from_fn(|_| r.random_range(0.4..1.0));
            let mut pixels = vec![0.0; 3 * size * size];
            for y in 0..size {
                for x in 0..size {
                    let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    let inside = match label {
                        0 => dx * dx + dy * dy <= radius * radius,
                        1 => dx.abs() <= radius * 0.8 && dy.abs() <= radius * 0.8,
                        _ => (dx.abs() <= radius * 0.3 || dy.abs() <= radius * 0.3) && dx.abs().max(dy.abs()) <= radius,
                    };
                    for (c, &col) in colour.iter().enumerate() {
                        let noise: f64 = r.random_range(0.0..0.15);
                        pixels[c * size * size + y * size + x] = if inside { col } else { noise };
                    }
                }
            }
            LabeledImage { pixels, label }
        })
        .collect();
    ImageSet {
        channels: 3,
        height: size,
        width: size,
        labels: SHAPE_LABELS.iter().map(|s| s.to_string()).collect(),
        images,
    }
}

/// Two ReLU convolutions with max-pooling, then a softmax layer. The second
/// convolution has `filters` filters and is the Grad-CAM layer.
pub fn image_arch(labels: Vec<String>, size: usize, filters: usize) -> ArchSpec {
    let first = 6;
    let half = size / 2;
    let quarter = half / 2;
    ArchSpec {
        layers: vec![
            LayerTemplate::new(
                LayerKind::Conv2d {
                    in_channels: 3,
                    filters: first,
                    height: size,
                    width: size,
                    kernel: 3,
                    padding: Padding::Same,
                },
                Activation::Relu,
            ),
            LayerTemplate::new(
                LayerKind::MaxPool2d {
                    channels: first,
                    height: size,
                    width: size,
                    pool: 2,
                },
                Activation::Linear,
            ),
            LayerTemplate::new(
                LayerKind::Conv2d {
                    in_channels: first,
                    filters,
                    height: half,
                    width: half,
                    kernel: 3,
                    padding: Padding::Same,
                },
                Activation::Relu,
            ),
            LayerTemplate::new(
                LayerKind::MaxPool2d {
                    channels: filters,
                    height: half,
                    width: half,
                    pool: 2,
                },
                Activation::Linear,
            ),
            LayerTemplate::new(
                LayerKind::Flatten {
                    size: filters * quarter * quarter,
                },
                Activation::Linear,
            ),
            LayerTemplate::new(
                LayerKind::Dense {
                    inputs: filters * quarter * quarter,
                    outputs: labels.len(),
                },
                Activation::Softmax,
            ),
        ],
        metadata: Metadata::labels(&labels.iter().map(String::as_str).collect::<Vec<_>>()),
    }
}

/// A categorical feature and its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularRow {
    pub record: BTreeMap<String, String>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularSet {
    pub features: Vec<Feature>,
    pub labels: Vec<String>,
    pub rows: Vec<TabularRow>,
}

impl TabularSet {
    /// One-hot column names, `feature=value`.
    pub fn columns(&self) -> Vec<String> {
        columns(&self.features)
    }

    pub fn examples<T: Scalar>(&self, rows: &[TabularRow]) -> Result<Vec<Example<T>>> {
        let cols = self.columns();
        rows.iter()
            .map(|row| {
                Ok(Example {
                    input: Input::Values(encode_record(&cols, &row.record)?),
                    label: row.label,
                })
            })
            .collect()
    }
}

pub fn columns(features: &[Feature]) -> Vec<String> {
    features
        .iter()
        .flat_map(|f| f.values.iter().map(move |v| format!("{}={v}", f.name)))
        .collect()
}

/// Twelve categorical features with 58 values in total.
pub fn tabular_features() -> Vec<Feature> {
    let spec: [(&str, &[&str]); 12] = [
        ("sex", &["female", "male"]),
        ("age", &["18-20", "21-25", "26-35", "36-45", "46-60", "61+"]),
        ("race", &["a", "b", "c", "d", "e", "other"]),
        ("juv_fel", &["0", "1", "2+"]),
        ("juv_misd", &["0", "1", "2+"]),
        ("juv_other", &["0", "1", "2+"]),
        ("priors", &["0", "1", "2", "3-4", "5-9", "10-19", "20+"]),
        ("degree", &["felony", "misdemeanor"]),
        ("charge", &["drug", "theft", "assault", "fraud", "traffic", "weapon", "burglary", "other"]),
        ("screening", &["same-day", "1-7", "8-30", "31-90", "90+"]),
        ("custody", &["none", "1-2", "3-7", "8-30", "31-90", "90+"]),
        ("marital", &["single", "married", "separated", "divorced", "widowed", "partner", "unknown"]),
    ];
    spec.iter()
        .map(|(name, values)| Feature {
            name: name.to_string(),
            values: values.iter().map(|v| v.to_string()).collect(),
        })
        .collect()
}

/// Binary outcomes drawn from a logistic model over per-category scores.
pub fn tabular_dataset(seed: u64, rows: usize) -> TabularSet {
    let features = tabular_features();
    let mut r = rng(seed, 2);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let scores: Vec<Vec<f64>> = features
        .iter()
        .map(|f| f.values.iter().map(|_| normal.sample(&mut r) * 0.9).collect())
        .collect();
    let rows = (0..rows)
        .map(|_| {
            let mut risk = 0.0;
            let mut record = BTreeMap::new();
            for (f, s) in features.iter().zip(&scores) {
                let v = r.random_range(0..f.values.len());
                risk += s[v];
                record.insert(f.name.clone(), f.values[v].clone());
            }
            let p = 1.0 / (1.0 + (-risk).exp());
            let label = usize::from(r.random::<f64>() < p);
            TabularRow { record, label }
        })
        .collect();
    TabularSet {
        features,
        labels: vec!["no-reoffence".into(), "reoffence".into()],
        rows,
    }
}

/// Dense tanh layer, a separate ReLU stage, and a 2-unit sigmoid output.
pub fn tabular_arch(set: &TabularSet, hidden: usize) -> ArchSpec {
    let cols = set.columns();
    ArchSpec {
        layers: vec![
            LayerTemplate::new(
                LayerKind::Dense {
                    inputs: cols.len(),
                    outputs: hidden,
                },
                Activation::Tanh,
            ),
            LayerTemplate::new(LayerKind::Elementwise { size: hidden }, Activation::Relu),
            LayerTemplate::new(
                LayerKind::Dense {
                    inputs: hidden,
                    outputs: set.labels.len(),
                },
                Activation::Sigmoid,
            ),
        ],
        metadata: Metadata {
            labels: set.labels.clone(),
            vocab: None,
            features: Some(cols),
        },
    }
}

/// A trained fixture network with its training and test accuracy.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub net: NeuralGraph<f64>,
    pub report: Option<TrainReport>,
    pub test_accuracy: Option<f64>,
}

/// Training settings of each shipped fixture.
pub fn fixture_config(kind: InstanceKind, seed: u64) -> TrainConfig {
    let (learning_rate, epochs, batch_size) = match kind {
        InstanceKind::TextCnn => (0.01, 8, 32),
        InstanceKind::ImageCnn => (0.01, 12, 16),
        InstanceKind::TabularFfnn => (0.01, 30, 32),
        InstanceKind::Toy => (0.0, 0, 1),
    };
    TrainConfig {
        seed,
        learning_rate,
        epochs,
        batch_size,
    }
}

fn fit(arch: &ArchSpec, train: &[Example<f64>], test: &[Example<f64>], config: TrainConfig) -> Result<Fixture> {
    let (net, report) = train_toy(arch, train, &config)?;
    let test_accuracy = accuracy(&net, test)?;
    Ok(Fixture {
        net,
        report: Some(report),
        test_accuracy: Some(test_accuracy),
    })
}

/// Generates the dataset of `kind` from `seed` and trains its fixture network.
/// The toy network is hand-built and returned as is.
pub fn build_fixture(kind: InstanceKind, seed: u64) -> Result<Fixture> {
    let config = fixture_config(kind, seed);
    match kind {
        InstanceKind::TextCnn => {
            let corpus = text_corpus(seed, TEXT_DOCS);
            let (train, test) = split(&corpus.docs);
            let arch = text_arch(corpus.vocab.clone(), corpus.labels.clone(), TEXT_SEQ_LEN, TEXT_DIM, TEXT_FILTERS);
            fit(&arch, &TextCorpus::examples(train), &TextCorpus::examples(test), config)
        }
        InstanceKind::ImageCnn => {
            let set = shapes_dataset(seed, IMAGE_COUNT, IMAGE_SIZE);
            let (train, test) = split(&set.images);
            let arch = image_arch(set.labels.clone(), IMAGE_SIZE, 8);
            fit(&arch, &ImageSet::examples(train), &ImageSet::examples(test), config)
        }
        InstanceKind::TabularFfnn => {
            let set = tabular_dataset(seed, TABULAR_ROWS);
            let (train, test) = split(&set.rows);
            let arch = tabular_arch(&set, TABULAR_HIDDEN);
            fit(&arch, &set.examples(train)?, &set.examples(test)?, config)
        }
        InstanceKind::Toy => Ok(Fixture {
            net: crate::fixtures::toy_ffnn(),
            report: None,
            test_accuracy: None,
        }),
    }
}

/// Inputs of the dataset behind the fixture of an instance.
#[derive(Debug, Clone)]
pub struct FixtureData {
    pub train: Vec<Input<f64>>,
    pub test: Vec<Input<f64>>,
    /// Text only.
    pub synonyms: Option<BTreeMap<usize, usize>>,
    pub vocab: Option<Vec<String>>,
    /// Tabular only.
    pub columns: Option<Vec<String>>,
}

pub fn fixture_data(kind: InstanceKind, seed: u64) -> Result<FixtureData> {
    let inputs = |e: Vec<Example<f64>>| e.into_iter().map(|e| e.input).collect::<Vec<_>>();
    match kind {
        InstanceKind::TextCnn => {
            let corpus = text_corpus(seed, TEXT_DOCS);
            let (train, test) = split(&corpus.docs);
            Ok(FixtureData {
                train: inputs(TextCorpus::examples(train)),
                test: inputs(TextCorpus::examples(test)),
                synonyms: Some(corpus.synonyms.clone()),
                vocab: Some(corpus.vocab.clone()),
                columns: None,
            })
        }
        InstanceKind::ImageCnn => {
            let set = shapes_dataset(seed, IMAGE_COUNT, IMAGE_SIZE);
            let (train, test) = split(&set.images);
            Ok(FixtureData {
                train: inputs(ImageSet::examples(train)),
                test: inputs(ImageSet::examples(test)),
                synonyms: None,
                vocab: None,
                columns: None,
            })
        }
        InstanceKind::TabularFfnn => {
            let set = tabular_dataset(seed, TABULAR_ROWS);
            let (train, test) = split(&set.rows);
            Ok(FixtureData {
                train: inputs(set.examples(train)?),
                test: inputs(set.examples(test)?),
                synonyms: None,
                vocab: None,
                columns: Some(set.columns()),
            })
        }
        InstanceKind::Toy => Err(Error::InvalidDataset("the toy instance has no dataset".into())),
    }
}
