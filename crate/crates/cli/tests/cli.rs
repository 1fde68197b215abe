use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn dax(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dax")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = dax(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// (cli instance, model file stem, has reference stats)
const INSTANCES: [(&str, &str, bool); 4] = [
    ("text", "text-cnn", true),
    ("image", "image-cnn", true),
    ("tabular", "tabular-ffnn", false),
    ("toy", "toy", false),
];

fn explain(dir: &Path, instance: &str, stem: &str, stats: bool, extra: &[&str]) -> Output {
    let f = fixtures();
    let model = f.join(format!("{stem}.model.json"));
    let input = f.join(format!("inputs/{instance}.json"));
    let stats_path = f.join(format!("{stem}.stats.json"));
    let mut args = vec![
        "explain",
        "--model",
        path(&model),
        "--instance",
        instance,
        "--input",
        path(&input),
        "--out",
        path(dir),
    ];
    if stats {
        args.extend(["--stats", path(&stats_path)]);
    }
    args.extend(extra);
    ok(&args)
}

#[test]
fn explanations_reproduce_golden_outputs() {
    for (instance, stem, stats) in INSTANCES {
        let dir = TempDir::new().unwrap();
        explain(dir.path(), instance, stem, stats, &[]);
        explain(dir.path(), instance, stem, false, &["--format", "conversational"]);
        for file in ["bundle.json", "document.json", "conversation.txt"] {
            let golden = fs::read(fixtures().join(format!("golden/{instance}/{file}"))).unwrap();
            let got = fs::read(dir.path().join(file)).unwrap();
            assert!(got == golden, "{instance}/{file} differs from the golden copy");
        }
    }
}

#[test]
fn reruns_are_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    explain(a.path(), "tabular", "tabular-ffnn", false, &["--top-k", "2/1"]);
    explain(b.path(), "tabular", "tabular-ffnn", false, &["--top-k", "2/1"]);
    for file in ["bundle.json", "document.json"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap());
    }
}

#[test]
fn training_regenerates_shipped_models() {
    let dir = TempDir::new().unwrap();
    for (instance, stem, _) in INSTANCES {
        ok(&["train", "--instance", instance, "--out", path(dir.path())]);
        for suffix in ["model.json", "train.json"] {
            let file = format!("{stem}.{suffix}");
            assert!(
                fs::read(dir.path().join(&file)).unwrap() == fs::read(fixtures().join(&file)).unwrap(),
                "{file} differs"
            );
        }
    }
}

#[test]
fn stats_regenerate_shipped_files() {
    let dir = TempDir::new().unwrap();
    let f = fixtures();
    for stem in ["text-cnn", "image-cnn"] {
        let instance = stem.split('-').next().unwrap();
        let out = dir.path().join(format!("{stem}.stats.json"));
        let model = f.join(format!("{stem}.model.json"));
        ok(&["stats", "--model", path(&model), "--instance", instance, "--out", path(&out)]);
        assert!(fs::read(&out).unwrap() == fs::read(f.join(format!("{stem}.stats.json"))).unwrap());
    }
}

#[test]
fn check_reports_instance_properties() {
    let dir = TempDir::new().unwrap();
    let golden = fixtures().join("golden");
    let out = ok(&["check", "--bundle", path(&golden.join("toy/bundle.json"))]);
    let reports: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let verdicts: Vec<(&str, &str)> = reports
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r["property"].as_str().unwrap(), r["verdict"].as_str().unwrap()))
        .collect();
    assert_eq!(verdicts, [("dialectical-monotonicity", "pass"), ("additive-monotonicity", "fail")]);

    let file = dir.path().join("cf.json");
    ok(&[
        "check",
        "--bundle",
        path(&golden.join("tabular/bundle.json")),
        "--property",
        "counter-factuality",
        "--out",
        path(&file),
    ]);
    let reports: serde_json::Value = serde_json::from_str(&fs::read_to_string(file).unwrap()).unwrap();
    assert_eq!(reports[0]["verdict"], "pass");

    let bad = dax(&["check", "--bundle", path(&golden.join("toy/bundle.json")), "--property", "nonsense"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn conversation_depth_is_bounded() {
    let dir = TempDir::new().unwrap();
    explain(dir.path(), "toy", "toy", false, &["--format", "conversational", "--depth", "1"]);
    let text = fs::read_to_string(dir.path().join("conversation.txt")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.starts_with("User: Why does the model predict"));
    let f = fixtures();
    let out = dax(&[
        "explain",
        "--model",
        path(&f.join("toy.model.json")),
        "--instance",
        "toy",
        "--input",
        path(&f.join("inputs/toy.json")),
        "--format",
        "conversational",
        "--depth",
        "0",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn configuration_is_logged() {
    let dir = TempDir::new().unwrap();
    let out = explain(dir.path(), "toy", "toy", false, &[]);
    let log = String::from_utf8_lossy(&out.stderr);
    let line = log.lines().find(|l| l.contains("config: ")).expect("config line");
    let config: serde_json::Value = serde_json::from_str(line.split_once("config: ").unwrap().1).unwrap();
    assert_eq!(config["command"], "explain");
    assert_eq!(config["instance"], "toy");
    assert_eq!(config["seed"], 0);
}

#[test]
fn invalid_invocations_exit_with_2() {
    let dir = TempDir::new().unwrap();
    let f = fixtures();
    let text_model = f.join("text-cnn.model.json");
    let text_input = f.join("inputs/text.json");
    let toy_input = f.join("inputs/toy.json");
    let missing = dir.path().join("missing.json");
    let out = path(dir.path());
    let cases: Vec<Vec<&str>> = vec![
        vec!["explain", "--model", path(&text_model), "--instance", "fancy", "--input", path(&text_input), "--out", out],
        vec!["explain", "--model", path(&text_model), "--instance", "text", "--input", path(&toy_input), "--out", out],
        vec!["explain", "--model", path(&missing), "--instance", "text", "--input", path(&text_input), "--out", out],
        vec!["explain", "--model", path(&text_model), "--instance", "text", "--input", path(&text_input), "--top-k", "x", "--out", out],
        vec!["explain", "--model", path(&text_model), "--instance", "text", "--input", path(&text_input), "--top-k", "0", "--out", out],
        vec!["check", "--bundle", path(&missing)],
        vec!["stats", "--model", path(&text_model), "--instance", "image", "--out", out],
        vec!["frobnicate"],
    ];
    for args in cases {
        assert_eq!(dax(&args).status.code(), Some(2), "{args:?}");
    }
    assert_eq!(dax(&["--help"]).status.code(), Some(0));
}

#[test]
fn fidelity_and_costs_write_reports() {
    let dir = TempDir::new().unwrap();
    let f = fixtures();
    let model = f.join("tabular-ffnn.model.json");
    ok(&["fidelity", "--model", path(&model), "--instance", "tabular", "--pairs", "40", "--out", path(dir.path())]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("fidelity.json")).unwrap()).unwrap();
    let kept = report["pairs"].as_array().unwrap().len();
    assert_eq!(kept + report["rejected"].as_u64().unwrap() as usize, 40);
    let csv = fs::read_to_string(dir.path().join("fidelity.csv")).unwrap();
    assert_eq!(csv.lines().count(), kept + 1);

    let costs = dir.path().join("costs.json");
    ok(&["costs", "--sizes", "2,4", "--reps", "2", "--tabular-model", path(&model), "--out", path(&costs)]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(costs).unwrap()).unwrap();
    assert_eq!(report["points"].as_array().unwrap().len(), 2);
    assert!(report["tabular_ms"].as_f64().unwrap() >= 0.0);
}
