use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

mod input;

use dax_core::data::{build_fixture, fixture_data};
use dax_core::dialectics::{check_property, PropertyKind, PropertySpec, DEFAULT_MAX_COUNTEREXAMPLES, DEFAULT_TOLERANCE};
use dax_core::fidelity::{
    deep_fidelity_eval, measure_text_costs, time_single_dax, ActivationDistance, FidelityConfig, Perturbation,
    COST_REPETITIONS, COST_SIZES, PIXEL_NOISE_STD, SUBSTITUTION_RATE,
};
use dax_core::gaf::RootQuantity;
use dax_core::instances::{explain, ExplainOptions, ExplanationBundle, InstanceKind};
use dax_core::nn::{load_model, save_model, Input, NeuralGraph};
use dax_core::render::{
    build_patch_galleries, build_pie_charts, build_reference_stats, build_word_clouds, prune_top_k,
    render_conversational, render_graphical, ChiSet, ReferenceStats, TopK,
};

#[derive(Parser, Debug)]
#[command(name = "dax", version, about = "Argumentative explanations of neural network predictions")]
struct Cli {
    /// Seed for data generation, training and sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Instance {
    Text,
    Image,
    Tabular,
    Toy,
}

impl From<Instance> for InstanceKind {
    fn from(i: Instance) -> Self {
        match i {
            Instance::Text => InstanceKind::TextCnn,
            Instance::Image => InstanceKind::ImageCnn,
            Instance::Tabular => InstanceKind::TabularFfnn,
            Instance::Toy => InstanceKind::Toy,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Format {
    Graphical,
    Conversational,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Root {
    Probability,
    Logit,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Distance {
    Vector,
    NeuronMean,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a fixture's dataset and train its model.
    Train {
        #[arg(long, value_enum)]
        instance: Instance,
        #[arg(long)]
        out: PathBuf,
    },
    /// Explain one input; writes bundle.json and document.json or conversation.txt.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        instance: Instance,
        #[arg(long)]
        input: PathBuf,
        /// Supporters and attackers kept per argument: `k` or `support/attack`.
        #[arg(long, default_value = "3")]
        top_k: String,
        #[arg(long, value_enum, default_value_t = Format::Graphical)]
        format: Format,
        /// Question levels of the conversational format.
        #[arg(long, default_value_t = 3)]
        depth: usize,
        /// Reference statistics from `dax stats`, for word clouds and galleries.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Root::Probability)]
        root: Root,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check dialectical properties of an explanation bundle.
    Check {
        #[arg(long)]
        bundle: PathBuf,
        /// Defaults to the instance's properties.
        #[arg(long)]
        property: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_COUNTEREXAMPLES)]
        max_counterexamples: usize,
        /// Written to stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Deep-fidelity evaluation over perturbed test inputs.
    Fidelity {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        instance: Instance,
        #[arg(long, default_value_t = 500)]
        pairs: usize,
        /// Token substitution rate (text).
        #[arg(long, default_value_t = SUBSTITUTION_RATE)]
        rate: f64,
        /// Pixel noise std on the 0-255 scale (image).
        #[arg(long, default_value_t = PIXEL_NOISE_STD)]
        std: f64,
        #[arg(long, value_enum, default_value_t = Distance::Vector)]
        activation_distance: Distance,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reference statistics of the intermediate stratum and their artifacts.
    Stats {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        instance: Instance,
        /// Reference samples drawn from the training split.
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time explanation generation against the number of filters.
    Costs {
        #[arg(long, value_delimiter = ',', default_values_t = COST_SIZES.to_vec())]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = COST_REPETITIONS)]
        reps: usize,
        /// Also time one explanation of this tabular model.
        #[arg(long)]
        tabular_model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct StatsFile {
    stats: ReferenceStats,
    chi: ChiSet,
}

#[derive(Serialize)]
struct TrainSummary {
    instance: InstanceKind,
    seed: u64,
    train_accuracy: Option<f64>,
    test_accuracy: Option<f64>,
    final_loss: Option<f64>,
    epochs: Option<usize>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn model(path: &Path) -> Result<NeuralGraph<f64>> {
    Ok(load_model(&read(path)?).with_context(|| format!("loading model {}", path.display()))?)
}

fn json<S: Serialize>(value: &S) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

fn parse_top_k(text: &str) -> Result<Vec<TopK>> {
    let parse = |s: &str| -> Result<usize> {
        s.trim()
            .parse()
            .map_err(|_| invalid(format!("bad top-k `{text}`")))
    };
    let k = match text.split_once('/') {
        Some((s, a)) => TopK {
            support: parse(s)?,
            attack: parse(a)?,
        },
        None => {
            let k = parse(text)?;
            TopK { support: k, attack: k }
        }
    };
    Ok(vec![k])
}

fn invalid(msg: String) -> anyhow::Error {
    dax_core::error::Error::InvalidArgument(msg).into()
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Train { instance, out } => {
            let kind = InstanceKind::from(instance);
            info!("config: {}", serde_json::json!({"command": "train", "instance": kind, "seed": seed, "out": out}));
            let fixture = build_fixture(kind, seed)?;
            write(&out.join(format!("{}.model.json", kind.name())), &save_model(&fixture.net))?;
            let summary = TrainSummary {
                instance: kind,
                seed,
                train_accuracy: fixture.report.map(|r| r.accuracy),
                test_accuracy: fixture.test_accuracy,
                final_loss: fixture.report.map(|r| r.final_loss),
                epochs: fixture.report.map(|r| r.epochs),
            };
            write(&out.join(format!("{}.train.json", kind.name())), &json(&summary))
        }
        Command::Explain {
            model: model_path,
            instance,
            input,
            top_k,
            format,
            depth,
            stats,
            root,
            tolerance,
            out,
        } => {
            let kind = InstanceKind::from(instance);
            let limits = parse_top_k(&top_k)?;
            info!(
                "config: {}",
                serde_json::json!({
                    "command": "explain", "model": model_path, "instance": kind, "input": input,
                    "top_k": limits, "format": format, "depth": depth, "stats": stats, "root": root,
                    "tolerance": tolerance, "seed": seed, "out": out,
                })
            );
            let net = model(&model_path)?;
            let x = input::load(&net, kind, &read(&input)?)?;
            let options = ExplainOptions {
                root: match root {
                    Root::Probability => RootQuantity::Probability,
                    Root::Logit => RootQuantity::Logit,
                },
                tolerance,
                check_properties: true,
            };
            let ex = explain(&net, kind, &x, &options)?;
            write(&out.join("bundle.json"), &ex.bundle(&net).to_json())?;
            let pruned = prune_top_k(&ex.gaf, &ex.sigma, &limits)?;
            match format {
                Format::Graphical => {
                    let mut chi = match &stats {
                        Some(p) => serde_json::from_str::<StatsFile>(&read(p)?).map_err(dax_core::error::Error::from)?.chi,
                        None => ChiSet::new(),
                    };
                    if kind == InstanceKind::TabularFfnn {
                        chi.extend(build_pie_charts(&net, &ex));
                    }
                    let doc = render_graphical(&net, &ex, &pruned, &chi, &limits)?;
                    write(&out.join("document.json"), &doc.to_json())
                }
                Format::Conversational => {
                    let lines = render_conversational(&net, &ex, &pruned, depth)?;
                    write(&out.join("conversation.txt"), &(lines.join("\n") + "\n"))
                }
            }
        }
        Command::Check {
            bundle,
            property,
            tolerance,
            max_counterexamples,
            out,
        } => {
            info!(
                "config: {}",
                serde_json::json!({
                    "command": "check", "bundle": bundle, "property": property, "tolerance": tolerance,
                    "max_counterexamples": max_counterexamples, "out": out,
                })
            );
            let b = ExplanationBundle::from_json(&read(&bundle)?)?;
            let (gaf, sigma) = b.to_gaf::<f64>()?;
            let kinds = if property.is_empty() {
                b.instance.properties().to_vec()
            } else {
                property
                    .iter()
                    .map(|p| PropertyKind::parse(p).ok_or_else(|| invalid(format!("unknown property `{p}`"))))
                    .collect::<Result<_>>()?
            };
            let reports = kinds
                .into_iter()
                .map(|k| {
                    let mut spec = PropertySpec::new(k).with_tolerance(tolerance);
                    spec.max_counterexamples = max_counterexamples;
                    check_property(&gaf, &sigma, spec)
                })
                .collect::<dax_core::error::Result<Vec<_>>>()?;
            let text = json(&reports);
            match out {
                Some(p) => write(&p, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Fidelity {
            model: model_path,
            instance,
            pairs,
            rate,
            std,
            activation_distance,
            out,
        } => {
            let kind = InstanceKind::from(instance);
            let config = FidelityConfig {
                pairs,
                seed,
                activation_distance: match activation_distance {
                    Distance::Vector => ActivationDistance::Vector,
                    Distance::NeuronMean => ActivationDistance::NeuronMean,
                },
                ..FidelityConfig::default()
            };
            info!(
                "config: {}",
                serde_json::json!({
                    "command": "fidelity", "model": model_path, "instance": kind, "rate": rate, "std": std,
                    "fidelity": config, "out": out,
                })
            );
            let net = model(&model_path)?;
            let data = fixture_data(kind, seed)?;
            check_dataset(&net, &data)?;
            let perturbation = match kind {
                InstanceKind::TextCnn => Perturbation::token_substitute(rate, data.synonyms.clone().unwrap_or_default())?,
                InstanceKind::ImageCnn => Perturbation::gaussian(std)?,
                InstanceKind::TabularFfnn => Perturbation::categorical_flip(data.columns.as_deref().unwrap_or_default())?,
                InstanceKind::Toy => bail!("unreachable: the toy instance has no dataset"),
            };
            let report = deep_fidelity_eval(&net, kind, &data.test, &perturbation, &config)?;
            info!(
                "kept {} of {} pairs; reduction {:.3}",
                report.pairs.len(),
                pairs,
                report.summary.reduction
            );
            write(&out.join("fidelity.json"), &report.to_json())?;
            write(&out.join("fidelity.csv"), &report.to_csv()?)
        }
        Command::Stats {
            model: model_path,
            instance,
            samples,
            out,
        } => {
            let kind = InstanceKind::from(instance);
            info!(
                "config: {}",
                serde_json::json!({
                    "command": "stats", "model": model_path, "instance": kind, "samples": samples,
                    "seed": seed, "out": out,
                })
            );
            let net = model(&model_path)?;
            let data = fixture_data(kind, seed)?;
            check_dataset(&net, &data)?;
            let stats = build_reference_stats(&net, kind, &data.train, samples, seed)?;
            let chi = match kind {
                InstanceKind::TextCnn => {
                    let tokens: Vec<Vec<usize>> = data
                        .train
                        .iter()
                        .map(|x| match x {
                            Input::Tokens(t) => t.clone(),
                            Input::Values(_) => Vec::new(),
                        })
                        .collect();
                    build_word_clouds(&net, &tokens, &stats)?
                }
                InstanceKind::ImageCnn => {
                    let images: Vec<Vec<f64>> = data
                        .train
                        .iter()
                        .map(|x| match x {
                            Input::Values(v) => v.clone(),
                            Input::Tokens(_) => Vec::new(),
                        })
                        .collect();
                    build_patch_galleries(&net, &images, &stats)?
                }
                _ => ChiSet::new(),
            };
            write(&out, &json(&StatsFile { stats, chi }))
        }
        Command::Costs {
            sizes,
            reps,
            tabular_model,
            out,
        } => {
            info!(
                "config: {}",
                serde_json::json!({
                    "command": "costs", "sizes": sizes, "reps": reps, "tabular_model": tabular_model,
                    "seed": seed, "out": out,
                })
            );
            let mut report = measure_text_costs(&sizes, reps, seed)?;
            if let Some(p) = tabular_model {
                let net = model(&p)?;
                let data = fixture_data(InstanceKind::TabularFfnn, seed)?;
                check_dataset(&net, &data)?;
                let x = data.test.first().context("empty tabular test split")?;
                report.tabular_ms = Some(time_single_dax(&net, InstanceKind::TabularFfnn, x, reps)?);
            }
            info!("fit: {:?}", report.fit);
            write(&out, &report.to_json())
        }
    }
}

/// The regenerated dataset must match the model's vocabulary or columns.
fn check_dataset(net: &NeuralGraph<f64>, data: &dax_core::data::FixtureData) -> Result<()> {
    let meta = net.metadata();
    if data.vocab.is_some() && meta.vocab != data.vocab {
        return Err(invalid("model vocabulary differs from the dataset's".into()));
    }
    if data.columns.is_some() && meta.features != data.columns {
        return Err(invalid("model columns differ from the dataset's".into()));
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<dax_core::error::Error>() {
            return if e.is_validation() { 2 } else { 1 };
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            return if e.kind() == std::io::ErrorKind::NotFound { 2 } else { 1 };
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
