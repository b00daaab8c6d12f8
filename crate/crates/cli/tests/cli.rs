use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lipex::model::{Architecture, DenseLayer};
use lipex::{ClassLabels, Featurizer, ReferenceModel};
use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_lipex");
const FAST: [&str; 4] = ["--perturbations", "200", "--epochs", "40"];

fn lipex(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("LIPEX_SEED")
        .output()
        .expect("binary runs")
}

fn cat<'a>(parts: &[&[&'a str]]) -> Vec<&'a str> {
    parts.concat()
}

fn ok(args: &[&str]) -> String {
    let out = lipex(args);
    assert!(
        out.status.success(),
        "lipex {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic corpus and a logistic model trained on it.
struct Fixture {
    dir: TempDir,
    data: PathBuf,
    model: PathBuf,
}

fn fixture() -> Fixture {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("corpus.csv");
    let model = dir.path().join("model.json");
    ok(&[
        "synth",
        "--out",
        s(&data),
        "--classes",
        "3",
        "--docs-per-class",
        "20",
        "--seed",
        "4",
    ]);
    ok(&[
        "train",
        "--dataset",
        s(&data),
        "--out",
        s(&model),
        "--seed",
        "4",
    ]);
    Fixture { dir, data, model }
}

impl Fixture {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

#[test]
fn missing_dataset_flag_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = lipex(&["train", "--out", s(&dir.path().join("m.json"))]);
    assert_eq!(out.status.code(), Some(2));
    let out = lipex(&[
        "train",
        "--dataset",
        s(&dir.path().join("nope.csv")),
        "--out",
        s(&dir.path().join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("m.json").exists());
}

#[test]
fn training_twice_gives_identical_model_files() {
    let f = fixture();
    let again = f.path("again.json");
    ok(&[
        "train",
        "--dataset",
        s(&f.data),
        "--out",
        s(&again),
        "--seed",
        "4",
    ]);
    assert_eq!(fs::read(&f.model).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn separable_toy_dataset_reaches_full_eval_accuracy() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("toy.csv");
    let warm = ["red", "orange", "amber", "scarlet", "crimson"];
    let cold = ["blue", "teal", "azure", "navy", "cobalt"];
    let mut csv = String::from("text,label\n");
    for i in 0..40 {
        let pick = |words: &[&str]| format!("{} {}", words[i % 5], words[(i / 5 + 1) % 5]);
        csv.push_str(&format!("{},warm\n{},cold\n", pick(&warm), pick(&cold)));
    }
    fs::write(&data, csv).unwrap();
    let model = dir.path().join("m.json");
    let stdout = ok(&["train", "--dataset", s(&data), "--out", s(&model)]);
    assert!(stdout.contains("eval accuracy 1.0000"), "{stdout}");
    assert_eq!(read_json(&model)["eval_accuracy"], 1.0);
}

#[test]
fn top_k_limits_csv_columns() {
    let f = fixture();
    let out = f.path("full");
    ok(&cat(&[
        &[
            "explain",
            "--model",
            s(&f.model),
            "--dataset",
            s(&f.data),
            "--instance",
            "2",
            "--out",
            s(&out),
        ],
        &FAST[..],
    ]));
    let doc = read_json(&out.join("lipex.json"));
    let f_x = doc["explanation"]["features"].as_array().unwrap().len();
    let header = |dir: &Path| {
        fs::read_to_string(dir.join("lipex.csv"))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .split(',')
            .count()
    };
    assert_eq!(header(&out), f_x + 1);

    let limited = f.path("limited");
    let k = f_x.to_string();
    ok(&cat(&[
        &[
            "explain",
            "--model",
            s(&f.model),
            "--dataset",
            s(&f.data),
            "--instance",
            "2",
            "--out",
            s(&limited),
            "--top-k",
            &k,
        ],
        &FAST[..],
    ]));
    assert_eq!(header(&limited), f_x + 1);

    let small = f.path("small");
    ok(&cat(&[
        &[
            "explain",
            "--model",
            s(&f.model),
            "--dataset",
            s(&f.data),
            "--instance",
            "2",
            "--out",
            s(&small),
            "--top-k",
            "2",
        ],
        &FAST[..],
    ]));
    assert_eq!(header(&small), 3);
}

#[test]
fn explain_reruns_are_identical_and_respect_the_output_dir() {
    let f = fixture();
    let run = |name: &str| {
        let out = f.path(name);
        ok(&cat(&[
            &[
                "explain",
                "--model",
                s(&f.model),
                "--dataset",
                s(&f.data),
                "--instance",
                "5",
                "--out",
                s(&out),
                "--lime",
            ],
            &FAST[..],
        ]));
        (
            fs::read(out.join("lipex.json")).unwrap(),
            fs::read(out.join("lime.json")).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn out_of_range_instance_fails() {
    let f = fixture();
    let out = lipex(&[
        "explain",
        "--model",
        s(&f.model),
        "--dataset",
        s(&f.data),
        "--instance",
        "999",
        "--out",
        s(&f.path("x")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("out of range"));
}

#[test]
fn heatmap_rows_follow_descending_probabilities() {
    let f = fixture();
    let out = f.path("heat");
    ok(&cat(&[
        &[
            "compare",
            "--model",
            s(&f.model),
            "--dataset",
            s(&f.data),
            "--instance",
            "7",
            "--out",
            s(&out),
            "--heatmap",
        ],
        &FAST[..],
    ]));
    let doc = read_json(&out.join("lipex.json"));
    let classes: Vec<String> =
        serde_json::from_value(doc["prediction"]["classes"].clone()).unwrap();
    let probs: Vec<f64> = serde_json::from_value(doc["prediction"]["probs"].clone()).unwrap();
    let mut expected: Vec<usize> = (0..probs.len()).collect();
    expected.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    let expected: Vec<&str> = expected.iter().map(|&c| classes[c].as_str()).collect();

    for name in ["lipex_heatmap.svg", "lime_heatmap.svg"] {
        let svg = fs::read_to_string(out.join(name)).unwrap();
        let rows: Vec<&str> = svg
            .split("data-class=\"")
            .skip(1)
            .map(|rest| &rest[..rest.find('"').unwrap()])
            .collect();
        assert_eq!(rows, expected, "{name}");
    }
    let cmp = read_json(&out.join("comparison.json"));
    let j = cmp["jaccard"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&j));
}

#[test]
fn tv_on_uniform_model_fills_only_the_first_bin() {
    let f = fixture();
    let texts: Vec<String> = fs::read_to_string(&f.data)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect();
    let featurizer = Featurizer::build(texts.iter().map(String::as_str)).unwrap();
    let dim = featurizer.dim();
    let uniform = ReferenceModel::from_layers(
        Architecture::logistic(),
        ClassLabels::numbered(3),
        vec![DenseLayer::zeros(dim, 3)],
    )
    .unwrap()
    .with_featurizer(featurizer);
    let model = f.path("uniform.json");
    fs::write(&model, uniform.to_json().unwrap()).unwrap();

    let out = f.path("eval");
    ok(&cat(&[
        &[
            "evaluate",
            "--model",
            s(&model),
            "--dataset",
            s(&f.data),
            "--out",
            s(&out),
            "--tests",
            "tv",
            "--instances",
            "8",
        ],
        &FAST[..],
    ]));
    let report = read_json(&out.join("tv.json"));
    let counts: Vec<u64> =
        serde_json::from_value(report["aggregate"]["histogram"]["counts"].clone()).unwrap();
    assert_eq!(counts[0], 8);
    assert!(counts[1..].iter().all(|&c| c == 0));
    assert!(out.join("tv.svg").exists() && out.join("tv.csv").exists());
}

#[test]
fn jaccard_at_right_angle_reuses_the_reference_lists() {
    let f = fixture();
    let out = f.path("jac");
    ok(&cat(&[
        &[
            "evaluate",
            "--model",
            s(&f.model),
            "--dataset",
            s(&f.data),
            "--out",
            s(&out),
        ],
        &[
            "--tests",
            "jaccard",
            "--delta-grid",
            "pi/2",
            "--instances",
            "4",
            "--k",
            "3",
        ],
        &FAST[..],
    ]));
    let report = read_json(&out.join("jaccard.json"));
    let curve = report["aggregate"]["curve"].as_array().unwrap();
    assert_eq!(curve.len(), 1);
    assert_eq!(curve[0]["lipex"], 1.0);
    assert_eq!(curve[0]["lime"], 1.0);
    for rec in report["records"].as_array().unwrap() {
        let lipex: Vec<String> = serde_json::from_value(rec["lipex_reference"].clone()).unwrap();
        let lime: Vec<String> = serde_json::from_value(rec["lime_reference"].clone()).unwrap();
        let cross = rec["points"][0]["lipex_vs_lime"].as_f64().unwrap();
        let inter = lipex.iter().filter(|x| lime.contains(x)).count() as f64;
        let union = (lipex.len() + lime.len()) as f64 - inter;
        assert!((cross - inter / union).abs() < 1e-12);
    }
}

#[test]
fn evaluate_is_independent_of_output_dir_and_workers() {
    let f = fixture();
    let run = |name: &str, workers: &str| {
        let out = f.path(name);
        ok(&cat(&[
            &[
                "evaluate",
                "--model",
                s(&f.model),
                "--dataset",
                s(&f.data),
                "--out",
                s(&out),
            ],
            &[
                "--tests",
                "tv,ablation,tracking",
                "--instances",
                "5",
                "--ks",
                "1,2",
                "--workers",
                workers,
            ],
            &FAST[..],
        ]));
        ["tv.json", "ablation.json", "tracking.json", "summary.json"]
            .map(|n| fs::read(out.join(n)).unwrap())
    };
    assert_eq!(run("one", "1"), run("two", "2"));
}

#[test]
fn subprocess_model_matches_the_built_in_one() {
    let f = fixture();
    let served = format!("{BIN} serve --model {}", s(&f.model));
    let direct = f.path("direct");
    let child = f.path("child");
    let base = ["--dataset", s(&f.data), "--instance", "3"];
    ok(&cat(&[
        &["explain", "--model", s(&f.model), "--out", s(&direct)],
        &base[..],
        &FAST[..],
    ]));
    ok(&cat(&[
        &["explain", "--subprocess-cmd", &served, "--out", s(&child)],
        &base[..],
        &FAST[..],
    ]));
    let a = read_json(&direct.join("lipex.json"));
    let b = read_json(&child.join("lipex.json"));
    // the client renormalizes what the child sends, which can move the last bits
    assert_eq!(a["explanation"]["features"], b["explanation"]["features"]);
    assert_eq!(a["prediction"]["predicted"], b["prediction"]["predicted"]);
    let flat = |v: &Value| -> Vec<f64> {
        serde_json::from_value::<Vec<Vec<f64>>>(v.clone())
            .unwrap()
            .concat()
    };
    let (wa, wb) = (
        flat(&a["explanation"]["matrix"]),
        flat(&b["explanation"]["matrix"]),
    );
    assert_eq!(wa.len(), wb.len());
    assert!(wa.iter().zip(&wb).all(|(x, y)| (x - y).abs() < 1e-9));
    assert!(b["run_config"]["subprocess_cmd"].is_array());
}

#[test]
fn failed_experiment_keeps_other_artifacts_and_exits_nonzero() {
    let f = fixture();
    let served = format!("{BIN} serve --model {}", s(&f.model));
    let out = f.path("partial");
    let res = lipex(&cat(&[
        &[
            "evaluate",
            "--subprocess-cmd",
            &served,
            "--model",
            s(&f.model),
            "--dataset",
            s(&f.data),
            "--out",
            s(&out),
        ],
        &["--tests", "tv,sanity", "--instances", "3"],
        &FAST[..],
    ]));
    assert_eq!(res.status.code(), Some(1));
    assert!(out.join("tv.json").exists());
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["tests"]["tv"]["status"], "ok");
    assert_eq!(summary["tests"]["sanity"]["status"], "failed");
}

#[test]
fn flags_beat_environment_beat_config_file() {
    let f = fixture();
    let config = f.path("config.json");
    fs::write(
        &config,
        r#"{"seed": 5, "perturbations": 150, "epochs": 30}"#,
    )
    .unwrap();
    let run = |name: &str, seed_flag: Option<&str>, env: Option<&str>| {
        let out = f.path(name);
        let mut args = vec![
            "--config",
            s(&config),
            "explain",
            "--model",
            s(&f.model),
            "--text",
            "alpha beta gamma",
        ];
        args.extend(["--out", s(&out)]);
        if let Some(v) = seed_flag {
            args.extend(["--seed", v]);
        }
        let mut cmd = Command::new(BIN);
        cmd.args(&args).env_remove("LIPEX_SEED");
        if let Some(v) = env {
            cmd.env("LIPEX_SEED", v);
        }
        let res = cmd.output().unwrap();
        assert!(
            res.status.success(),
            "{}",
            String::from_utf8_lossy(&res.stderr)
        );
        read_json(&out.join("lipex.json"))["run_config"].clone()
    };
    let from_file = run("file", None, None);
    assert_eq!(from_file["seed"], 5);
    assert_eq!(from_file["explain"]["fit"]["n_perturbations"], 150);
    assert_eq!(from_file["explain"]["fit"]["max_epochs"], 30);
    assert_eq!(run("env", None, Some("11"))["seed"], 11);
    assert_eq!(run("flag", Some("9"), Some("11"))["seed"], 9);

    fs::write(&config, r#"{"sede": 5}"#).unwrap();
    let res = lipex(&[
        "--config",
        s(&config),
        "explain",
        "--model",
        s(&f.model),
        "--text",
        "x",
        "--out",
        s(&f.path("bad")),
    ]);
    assert_eq!(res.status.code(), Some(1));
}
