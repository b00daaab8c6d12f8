//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails or runs over its time budget.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use lipex::distributions::{hellinger_probs, total_variation_probs};
use lipex::evaluation::stats::non_decreasing;
use lipex::evaluation::{ablation_flip_rate, EvalInstance, EvalSetup, Method};
use lipex::explain::Target;
use lipex::ingestion::{synthetic_corpus, Split, SynthConfig};
use lipex::lipex::{loss, loss_gradient, TrainingSet};
use lipex::model::{train_on_dataset, Architecture, DenseLayer, ReferenceModel, TrainConfig};
use lipex::{
    extract_features, fit, sample_perturbations, select, ClassDistribution, ClassLabels,
    ExplainConfig, ExplanationMatrix, Featurizer, FitConfig, InstanceBundle, LimeConfig,
    LossDistance, RawInstance, SelectedFeatureSet,
};
use rand::Rng;
use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_lipex");

type Check = Result<(bool, String), String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: Box<dyn Fn(&Workspace) -> Check>,
}

fn main() {
    let t = Instant::now();
    let ws = Workspace::new();
    println!(
        "setup: corpus, logistic and MLP models trained in {:.1}s",
        t.elapsed().as_secs_f64()
    );

    let criteria = vec![
        criterion(1, "metric axioms", 5, metric_axioms),
        criterion(2, "gradient check", 10, gradient_check),
        criterion(3, "planted surrogate recovery", 30, planted_recovery),
        criterion(4, "ReLU exactness", 60, relu_exactness),
        criterion(5, "TV replication", 300, tv_replication),
        criterion(6, "noise sanity check", 600, sanity),
        criterion(7, "ablation monotonicity", 300, ablation),
        criterion(8, "Jaccard stability", 600, jaccard),
        criterion(9, "timing direction", 300, timing),
        criterion(10, "reproducibility", 1800, reproducibility),
    ];

    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| (c.run)(&ws))).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let (mut ok, mut detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        if elapsed > c.budget {
            ok = false;
            detail.push_str(&format!("; over the {}s budget", c.budget.as_secs()));
        }
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {} ({:.1}s): {detail}",
            c.id,
            if ok { "PASS" } else { "FAIL" },
            c.name,
            elapsed.as_secs_f64()
        );
    }
    println!(
        "{}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn criterion(id: u32, name: &'static str, secs: u64, f: fn(&Workspace) -> Check) -> Criterion {
    Criterion {
        id,
        name,
        budget: Duration::from_secs(secs),
        run: Box::new(f),
    }
}

/// Synthetic corpus plus models trained on it through the CLI.
struct Workspace {
    dir: TempDir,
    corpus: PathBuf,
    logistic: PathBuf,
    mlp: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = TempDir::new().expect("temp dir");
        let corpus = dir.path().join("corpus.csv");
        let logistic = dir.path().join("logistic.json");
        let mlp = dir.path().join("mlp.json");
        cli(&["synth", "--out", s(&corpus)]).expect("synth");
        cli(&["train", "--dataset", s(&corpus), "--out", s(&logistic)]).expect("train logistic");
        cli(&[
            "train",
            "--dataset",
            s(&corpus),
            "--out",
            s(&mlp),
            "--arch",
            "mlp",
            "--hidden",
            "256",
        ])
        .expect("train mlp");
        Workspace {
            dir,
            corpus,
            logistic,
            mlp,
        }
    }

    /// Runs `evaluate` with default settings apart from `extra`.
    fn evaluate(&self, name: &str, model: &Path, extra: &[&str]) -> Result<PathBuf, String> {
        let out = self.dir.path().join(name);
        let mut args = vec![
            "evaluate",
            "--model",
            s(model),
            "--dataset",
            s(&self.corpus),
            "--out",
            s(&out),
        ];
        args.extend_from_slice(extra);
        cli(&args)?;
        Ok(out)
    }
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(BIN)
        .args(args)
        .env_remove("LIPEX_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "lipex {} failed: {}",
            args[0],
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn simplex(rng: &mut impl Rng, c: usize) -> Vec<f64> {
    let sparse = rng.random_bool(0.2);
    let mut p: Vec<f64> = (0..c)
        .map(|_| {
            if sparse && rng.random_bool(0.4) {
                0.0
            } else {
                -rng.random::<f64>().max(1e-300).ln()
            }
        })
        .collect();
    if p.iter().all(|&v| v == 0.0) {
        p[rng.random_range(0..c)] = 1.0;
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

fn metric_axioms(_: &Workspace) -> Check {
    const TOL: f64 = 1e-9;
    let mut rng = lipex::seed::rng(1);
    let mut violations: BTreeMap<&str, usize> = BTreeMap::new();
    let mut bad = |name, cond: bool| {
        if !cond {
            *violations.entry(name).or_default() += 1;
        }
    };
    for _ in 0..10_000 {
        let c = rng.random_range(2..=10);
        let p = simplex(&mut rng, c);
        let q = if rng.random_bool(0.05) {
            p.clone()
        } else {
            simplex(&mut rng, c)
        };
        let r = simplex(&mut rng, c);
        for (name, d) in [
            ("hellinger", hellinger_probs as fn(&[f64], &[f64]) -> f64),
            ("tv", total_variation_probs),
        ] {
            bad(name, (d(&p, &q) - d(&q, &p)).abs() <= TOL);
            bad(name, d(&p, &p) <= TOL);
            bad(name, p == q || d(&p, &q) > 0.0);
            bad(name, d(&p, &r) <= d(&p, &q) + d(&q, &r) + TOL);
        }
        let (h, tv) = (hellinger_probs(&p, &q), total_variation_probs(&p, &q));
        bad("sandwich", h * h <= tv + TOL && tv <= 2f64.sqrt() * h + TOL);
    }
    let ok = violations.is_empty();
    Ok((
        ok,
        if ok {
            "10000 random triples, no violations".into()
        } else {
            format!("violations {violations:?}")
        },
    ))
}

fn random_training_set(rng: &mut impl Rng, c: usize, f: usize, n: usize) -> TrainingSet {
    let labels = ClassLabels::numbered(c);
    let reduced: Vec<Vec<bool>> = (0..n)
        .map(|_| (0..f).map(|_| rng.random_bool(0.6)).collect())
        .collect();
    let pis: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let outputs: Vec<ClassDistribution> = (0..n)
        .map(|_| ClassDistribution::new(simplex(rng, c), labels.clone()).expect("simplex"))
        .collect();
    TrainingSet::new(reduced, pis, outputs, f).expect("training set")
}

fn gradient_check(_: &Workspace) -> Check {
    let mut rng = lipex::seed::rng(2);
    let mut worst: f64 = 0.0;
    let mut shapes = Vec::new();
    for _ in 0..5 {
        let (c, f) = (rng.random_range(2..=6), rng.random_range(2..=9));
        shapes.push(format!("{c}x{f}"));
        let set = random_training_set(&mut rng, c, f, 60);
        let names: Vec<String> = (0..f).map(|j| format!("f{j}")).collect();
        let all: Vec<usize> = (0..set.len()).collect();
        for _ in 0..10 {
            let rows: Vec<Vec<f64>> = (0..c)
                .map(|_| (0..f).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let w = ExplanationMatrix::from_rows(ClassLabels::numbered(c), names.clone(), &rows)
                .map_err(|e| e.to_string())?;
            let lambda = 0.01;
            let g = loss_gradient(&w, &set, &all, lambda, LossDistance::SquaredHellinger)
                .map_err(|e| e.to_string())?;
            let h = 1e-6;
            for e in 0..c * f {
                let mut shifted = rows.clone();
                shifted[e / f][e % f] += h;
                let plus =
                    ExplanationMatrix::from_rows(ClassLabels::numbered(c), names.clone(), &shifted)
                        .unwrap();
                shifted[e / f][e % f] -= 2.0 * h;
                let minus =
                    ExplanationMatrix::from_rows(ClassLabels::numbered(c), names.clone(), &shifted)
                        .unwrap();
                let l = |m: &ExplanationMatrix| {
                    loss(m, &set, lambda, LossDistance::SquaredHellinger).unwrap()
                };
                let fd = (l(&plus) - l(&minus)) / (2.0 * h);
                worst = worst.max((g[e] - fd).abs() / g[e].abs().max(fd.abs()).max(1e-8));
            }
        }
    }
    Ok((
        worst < 1e-5,
        format!(
            "max relative error {worst:.2e} over shapes {}",
            shapes.join(", ")
        ),
    ))
}

fn exact_fit(epochs: usize) -> FitConfig {
    FitConfig {
        lambda: 0.0,
        learning_rate: 2.0,
        max_epochs: epochs,
        tolerance: 0.0,
        ..FitConfig::default()
    }
}

fn max_tv(w: &ExplanationMatrix, bundle: &InstanceBundle) -> f64 {
    bundle
        .perturbations
        .iter()
        .zip(&bundle.outputs)
        .map(|(y, q)| {
            let p = w
                .surrogate_predict(&select(y, &bundle.features).unwrap())
                .unwrap();
            total_variation_probs(p.probs(), q.probs())
        })
        .fold(0.0, f64::max)
}

fn planted_recovery(_: &Workspace) -> Check {
    let (mut worst_loss, mut worst_tv) = (0.0f64, 0.0f64);
    for seed in 0..5u64 {
        let mut rng = lipex::seed::rng(100 + seed);
        let (c, units) = (rng.random_range(2..=5), rng.random_range(4..=8));
        let text: Vec<String> = (0..units).map(|i| format!("w{i}")).collect();
        let vocab =
            extract_features(&RawInstance::Text(text.join(" "))).map_err(|e| e.to_string())?;
        let features = SelectedFeatureSet::all(vocab.units());
        let rows: Vec<Vec<f64>> = (0..c)
            .map(|_| (0..units).map(|_| rng.random_range(-1.5..1.5)).collect())
            .collect();
        let planted =
            ExplanationMatrix::from_rows(ClassLabels::numbered(c), features.names.clone(), &rows)
                .unwrap();
        let perturbations = sample_perturbations(&vocab, 400, seed).map_err(|e| e.to_string())?;
        let outputs = perturbations
            .iter()
            .map(|y| {
                planted
                    .surrogate_predict(&select(y, &features).unwrap())
                    .unwrap()
            })
            .collect();
        let bundle = InstanceBundle {
            vocab,
            features,
            perturbations,
            outputs,
        };
        let w = fit(&bundle, &exact_fit(3000)).map_err(|e| e.to_string())?;
        let set = TrainingSet::from_bundle(&bundle).map_err(|e| e.to_string())?;
        worst_loss = worst_loss.max(loss(&w, &set, 0.0, LossDistance::SquaredHellinger).unwrap());
        worst_tv = worst_tv.max(max_tv(&w, &bundle));
    }
    Ok((
        worst_loss < 1e-4 && worst_tv < 0.01,
        format!("5 seeds, worst loss {worst_loss:.2e}, worst per-perturbation TV {worst_tv:.2e}"),
    ))
}

fn relu_exactness(_: &Workspace) -> Check {
    let corpus = synthetic_corpus(&SynthConfig::default()).map_err(|e| e.to_string())?;
    let ds = corpus.dataset.split(0.7, 1).map_err(|e| e.to_string())?;
    let arch = Architecture::ReluMlp {
        hidden: 16,
        bias: false,
    };
    let (model, _) =
        train_on_dataset(&ds, arch, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let featurizer = model.featurizer.clone().ok_or("model has no featurizer")?;

    // the surrogate is only identifiable when the region holds enough distinct patterns
    let mut chosen = None;
    for record in ds.indices(Split::Eval) {
        let RawInstance::Text(doc) = &ds.records[record].instance else {
            return Err("expected a text record".into());
        };
        let mut words: Vec<&str> = Vec::new();
        for t in doc.split_whitespace() {
            if !words.contains(&t) && words.len() < 10 {
                words.push(t);
            }
        }
        let vocab =
            extract_features(&RawInstance::Text(words.join(" "))).map_err(|e| e.to_string())?;
        let region = model.activation_pattern(&featurizer.featurize(&words.join(" ")));
        let sampled = sample_perturbations(&vocab, 1000, 4).map_err(|e| e.to_string())?;
        let keep: Vec<usize> = (0..sampled.len())
            .filter(|&i| {
                let kept: Vec<&str> = words
                    .iter()
                    .zip(sampled.as_slice()[i].bits())
                    .filter(|(_, b)| **b)
                    .map(|(w, _)| *w)
                    .collect();
                model.activation_pattern(&featurizer.featurize_tokens(kept)) == region
            })
            .collect();
        let distinct: BTreeSet<&[bool]> =
            keep.iter().map(|&i| sampled.as_slice()[i].bits()).collect();
        if distinct.len() >= 4 * vocab.len() {
            chosen = Some((
                record,
                vocab,
                sampled.subset(&keep),
                keep.len(),
                distinct.len(),
            ));
            break;
        }
    }
    let (record, vocab, perturbations, kept, distinct) =
        chosen.ok_or("no held-out record has an identifiable linear region")?;
    let outputs = Target::new(&model)
        .predict_perturbations(&vocab, perturbations.as_slice())
        .map_err(|e| e.to_string())?;
    let features = SelectedFeatureSet::all(vocab.units());
    let bundle = InstanceBundle {
        vocab,
        features,
        perturbations,
        outputs,
    };
    let w = fit(&bundle, &exact_fit(5000)).map_err(|e| e.to_string())?;
    let tv = max_tv(&w, &bundle);
    Ok((
        kept >= 50 && tv < 0.01,
        format!("record {record}: {kept} of 1000 perturbations ({distinct} distinct) share its region, max TV {tv:.2e}"),
    ))
}

fn tv_replication(ws: &Workspace) -> Check {
    let out = ws.evaluate("tv", &ws.logistic, &["--tests", "tv"])?;
    let a = &read_json(&out.join("tv.json"))?["aggregate"];
    let (n, median, share) = (
        a["instances"].as_u64().unwrap_or(0),
        num(&a["median"]),
        num(&a["share_below_0_2"]),
    );
    Ok((
        n >= 100 && median < 0.1 && share >= 0.8,
        format!(
            "{n} instances, median {median:.4}, {:.1}% below 0.2",
            share * 100.0
        ),
    ))
}

fn sanity(ws: &Workspace) -> Check {
    let out = ws.evaluate("sanity", &ws.logistic, &["--tests", "sanity"])?;
    let report = read_json(&out.join("sanity.json"))?;
    let a = &report["aggregate"];
    let settings = &report["config"]["settings"];
    let sigmas = settings["sigmas"].as_array().map_or(0, Vec::len);
    let trials = settings["trials"].as_u64().unwrap_or(0);
    let rho = num(&a["spearman"]);
    let (m, g) = (
        a["model_curve_non_decreasing"] == true,
        a["surrogate_curve_non_decreasing"] == true,
    );
    let curve = |key: &str| -> Vec<String> {
        a["points"]
            .as_array()
            .into_iter()
            .flatten()
            .map(|p| format!("{:.3}", num(&p[key]["mean"])))
            .collect()
    };
    Ok((
        sigmas >= 6 && trials >= 20 && m && g && rho > 0.9,
        format!(
            "{sigmas} sigmas x {trials} trials, spearman {rho:.4}, model [{}], surrogate [{}]",
            curve("model_drift").join(" "),
            curve("surrogate_drift").join(" ")
        ),
    ))
}

fn oracle_instances() -> (ReferenceModel, Vec<EvalInstance>) {
    let words = ["amber", "basil", "cedar", "dune", "ember", "fjord"];
    let mut layer = DenseLayer::zeros(words.len(), 2);
    layer.weights[words.len()] = 8.0;
    layer.bias = vec![0.0, -4.0];
    let model = ReferenceModel::from_layers(
        Architecture::logistic(),
        ClassLabels::numbered(2),
        vec![layer],
    )
    .expect("oracle model")
    .with_featurizer(Featurizer::with_vocabulary(
        words.map(String::from).to_vec(),
        0,
    ));
    let mut rng = lipex::seed::rng(5);
    let inst = (0..20)
        .map(|index| {
            let mut w = words.to_vec();
            for i in (1..w.len()).rev() {
                w.swap(i, rng.random_range(0..=i));
            }
            EvalInstance {
                index,
                raw: RawInstance::Text(w.join(" ")),
            }
        })
        .collect();
    (model, inst)
}

fn ablation(ws: &Workspace) -> Check {
    let out = ws.evaluate("ablation", &ws.logistic, &["--tests", "ablation"])?;
    let a = &read_json(&out.join("ablation.json"))?["aggregate"];
    let mut detail = Vec::new();
    let mut ok = true;
    for name in ["lipex_flip", "lime_flip"] {
        let curve = a["curves"]
            .as_array()
            .and_then(|cs| cs.iter().find(|c| c["name"] == name))
            .ok_or(format!("missing curve {name}"))?;
        let means: Vec<f64> = curve["rate"]
            .as_array()
            .into_iter()
            .flatten()
            .map(|r| num(&r["mean"]))
            .collect();
        ok &= means.len() == 5 && non_decreasing(&means, 0.0);
        detail.push(format!(
            "{name} {:?}",
            means
                .iter()
                .map(|m| (m * 1000.0).round() / 1000.0)
                .collect::<Vec<_>>()
        ));
    }

    let (model, inst) = oracle_instances();
    let (explain, lime) = (ExplainConfig::default(), LimeConfig::default());
    let setup = EvalSetup::new(&model, &explain, &lime, 0);
    for method in [Method::Lipex, Method::Lime] {
        let c = ablation_flip_rate(&setup, &inst, method, &[1], 3).map_err(|e| e.to_string())?;
        ok &= c.means() == vec![1.0];
        detail.push(format!("oracle {} at K=1: {}", method.name(), c.means()[0]));
    }
    Ok((ok, detail.join("; ")))
}

fn jaccard(ws: &Workspace) -> Check {
    let out = ws.evaluate("jaccard", &ws.logistic, &["--tests", "jaccard"])?;
    let a = &read_json(&out.join("jaccard.json"))?["aggregate"];
    let curve = a["curve"].as_array().ok_or("missing curve")?;
    let (first, last) = (
        curve.first().ok_or("empty curve")?,
        curve.last().ok_or("empty curve")?,
    );
    let n = first["instances"].as_u64().unwrap_or(0);
    let smallest_ok = num(&first["lipex"]) >= num(&first["lime"]);
    let right_angle = (num(&last["delta"]) - std::f64::consts::FRAC_PI_2).abs() < 1e-12
        && num(&last["lipex"]) == 1.0
        && num(&last["lime"]) == 1.0;
    let cross: Vec<String> = curve
        .iter()
        .map(|p| {
            format!(
                "{:.3}{}",
                num(&p["lipex_vs_lime"]),
                if num(&p["lipex_vs_lime"]) <= 0.5 {
                    ""
                } else {
                    "!"
                }
            )
        })
        .collect();
    Ok((
        n >= 50 && smallest_ok && right_angle,
        format!(
            "{n} instances; smallest delta {:.4}: lipex {:.3} vs lime {:.3}; at pi/2 lipex {:.3} lime {:.3}; cross per delta [{}] (logged, `!` marks > 0.5)",
            num(&first["delta"]),
            num(&first["lipex"]),
            num(&first["lime"]),
            num(&last["lipex"]),
            num(&last["lime"]),
            cross.join(" ")
        ),
    ))
}

/// `(lipex seconds, lime seconds, lipex calls, lime calls)`.
fn timing_of(ws: &Workspace, name: &str, model: &Path) -> Result<(f64, f64, f64, f64), String> {
    let out = ws.evaluate(name, model, &["--tests", "timing"])?;
    let a = &read_json(&out.join("timing.json"))?["aggregate"];
    let csv = fs::read_to_string(out.join("timing.csv")).map_err(|e| e.to_string())?;
    let seconds = |method: &str| -> f64 {
        csv.lines()
            .find(|l| l.starts_with(&format!("{method},")))
            .and_then(|l| l.split(',').nth(3))
            .and_then(|v| v.parse().ok())
            .unwrap_or(f64::NAN)
    };
    Ok((
        seconds("lipex"),
        seconds("lime"),
        num(&a["mean_lipex_calls"]),
        num(&a["mean_lime_calls"]),
    ))
}

fn timing(ws: &Workspace) -> Check {
    let (lipex, lime, lipex_calls, lime_calls) = timing_of(ws, "timing_mlp", &ws.mlp)?;
    let (lg_lipex, lg_lime, _, _) = timing_of(ws, "timing_logistic", &ws.logistic)?;
    Ok((
        lipex < lime && lipex_calls == 1000.0 && lime_calls == 5000.0,
        format!(
            "ReLU MLP (256 hidden): lipex {:.1} ms / {lipex_calls} calls, lime {:.1} ms / {lime_calls} calls; \
             logistic model for reference: lipex {:.1} ms, lime {:.1} ms",
            lipex * 1e3,
            lime * 1e3,
            lg_lipex * 1e3,
            lg_lime * 1e3
        ),
    ))
}

fn json_files(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.extension().is_some_and(|e| e == "json") {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            files.insert(name, fs::read(&path).map_err(|e| e.to_string())?);
        }
    }
    Ok(files)
}

fn reproducibility(ws: &Workspace) -> Check {
    let runs = (1..=3)
        .map(|i| {
            ws.evaluate(&format!("full{i}"), &ws.logistic, &[])
                .and_then(|d| json_files(&d))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let names: Vec<&String> = runs[0].keys().collect();
    let differing: Vec<&String> = names
        .iter()
        .copied()
        .filter(|n| runs[1..].iter().any(|r| r.get(*n) != runs[0].get(*n)))
        .collect();
    let same_sets = runs.iter().all(|r| r.keys().eq(runs[0].keys()));
    Ok((
        names.len() >= 6 && same_sets && differing.is_empty(),
        format!(
            "3 full evaluate runs, {} JSON files each, {}",
            names.len(),
            if differing.is_empty() {
                "all byte-identical".to_string()
            } else {
                format!("differing: {differing:?}")
            }
        ),
    ))
}
