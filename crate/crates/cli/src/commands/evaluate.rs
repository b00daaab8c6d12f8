use std::path::Path;

use anyhow::{anyhow, Context, Result};
use lipex::evaluation::{
    ablation_study, jaccard_stability, sanity_check, timing_comparison, tv_replication,
    AblationStudy, EvalInstance, EvalSetup, ExperimentReport, DEFAULT_ROUNDS, SEGMENT_DELTAS,
    TEXT_DELTAS,
};
use lipex::perturbation::Modality;
use lipex::{extract_features, load_dataset};
use serde_json::{json, Value};

use crate::args::{EvaluateArgs, TESTS};
use crate::config::{FileConfig, RunConfig};
use crate::io::{instances, write, write_json, LoadedModel};

pub const DEFAULT_INSTANCES: usize = 100;
pub const DEFAULT_SANITY_INSTANCES: usize = 10;
pub const DEFAULT_TIMING_INSTANCES: usize = 10;
pub const DEFAULT_TRIALS: usize = 20;
pub const DEFAULT_SIGMAS: [f64; 6] = [0.0, 0.1, 0.25, 0.5, 1.0, 2.0];
pub const DEFAULT_KS: [usize; 5] = [1, 2, 3, 4, 5];
pub const DEFAULT_K: usize = 5;

/// Fully resolved experiment settings.
#[derive(Debug, Clone, serde::Serialize)]
struct Plan {
    tests: Vec<String>,
    deltas: Vec<f64>,
    delta_grid: Option<String>,
    k: usize,
    ks: Vec<usize>,
    sigmas: Vec<f64>,
    trials: usize,
    rounds: usize,
    instances: usize,
    sanity_instances: usize,
    timing_instances: usize,
    workers: usize,
}

/// Runs the requested tests. Returns false when any of them failed; the
/// artifacts of the others are still written.
pub fn evaluate(args: &EvaluateArgs, file: &FileConfig) -> Result<bool> {
    let tuning = args.tuning.over(&file.tuning);
    let knobs = args.knobs.over(&file.knobs);
    let loaded = LoadedModel::load(&args.source)?;
    let ds = load_dataset(&args.dataset, args.format)
        .with_context(|| format!("loading {}", args.dataset.display()))?;
    let eval_idx = loaded.eval_indices(&ds)?;
    if eval_idx.is_empty() {
        return Err(anyhow!("no held-out records to evaluate on"));
    }
    let modality = extract_features(&ds.records[eval_idx[0]].instance)?.modality();

    let tests = knobs
        .tests
        .clone()
        .unwrap_or_else(|| TESTS.map(String::from).to_vec());
    if let Some(t) = tests.iter().find(|t| !TESTS.contains(&t.as_str())) {
        return Err(anyhow!("unknown test `{t}`"));
    }
    let default_deltas = match modality {
        Modality::Text => TEXT_DELTAS,
        Modality::Segments => SEGMENT_DELTAS,
    };
    let plan = Plan {
        tests: TESTS
            .iter()
            .filter(|t| tests.iter().any(|x| x == *t))
            .map(|t| t.to_string())
            .collect(),
        deltas: knobs
            .delta_grid
            .as_ref()
            .map_or(default_deltas.to_vec(), |g| g.values.clone()),
        delta_grid: knobs.delta_grid.as_ref().map(|g| g.text.clone()),
        k: knobs.k.unwrap_or(DEFAULT_K),
        ks: knobs.ks.clone().unwrap_or(DEFAULT_KS.to_vec()),
        sigmas: knobs.sigmas.clone().unwrap_or(DEFAULT_SIGMAS.to_vec()),
        trials: knobs.trials.unwrap_or(DEFAULT_TRIALS),
        rounds: knobs.rounds.unwrap_or(DEFAULT_ROUNDS),
        instances: knobs.instances.unwrap_or(DEFAULT_INSTANCES),
        sanity_instances: knobs.sanity_instances.unwrap_or(DEFAULT_SANITY_INSTANCES),
        timing_instances: knobs.timing_instances.unwrap_or(DEFAULT_TIMING_INSTANCES),
        workers: tuning.workers.unwrap_or(0),
    };

    let explain_cfg = tuning.explain_config()?;
    let lime_cfg = tuning.lime_config(modality)?;
    let seed = tuning.seed();
    let setup = EvalSetup::new(&loaded.classifier, &explain_cfg, &lime_cfg, seed)
        .with_featurizer(loaded.featurizer.as_ref())
        .with_workers(plan.workers);

    let mut run = RunConfig::new("evaluate", seed);
    loaded.describe(&args.source, &mut run);
    run.dataset = Some(args.dataset.display().to_string());
    run.explain = Some(explain_cfg.clone());
    run.lime = Some(lime_cfg.clone());
    let mut settings = serde_json::to_value(&plan)?;
    // worker count does not change results
    settings
        .as_object_mut()
        .expect("plan is an object")
        .remove("workers");
    run.settings = settings;
    let config = run.to_value();

    let main = instances(&ds, &eval_idx, plan.instances);
    let out = args.out.as_path();
    let mut status = serde_json::Map::new();
    let mut ablation: Option<AblationStudy> = None;
    for test in &plan.tests {
        let outcome = match test.as_str() {
            "tv" => run_tv(&setup, &main, &config, out),
            "sanity" => run_sanity(
                &setup,
                &loaded,
                &instances(&ds, &eval_idx, plan.sanity_instances),
                &plan,
                &config,
                out,
            ),
            "ablation" | "tracking" => {
                run_ablation(&setup, &main, &plan, &config, out, test, &mut ablation)
            }
            "jaccard" => run_jaccard(&setup, &main, &plan, &config, out),
            "timing" => run_timing(
                &setup,
                &instances(&ds, &eval_idx, plan.timing_instances),
                &config,
                out,
            ),
            _ => unreachable!("tests are validated"),
        };
        let entry = match outcome {
            Ok(line) => {
                println!("{test}: {line}");
                json!({"status": "ok", "summary": line})
            }
            Err(e) => {
                eprintln!("{test}: failed: {e:#}");
                json!({"status": "failed", "error": format!("{e:#}")})
            }
        };
        status.insert(test.clone(), entry);
    }
    let ok = status.values().all(|v| v["status"] == "ok");
    write_json(
        &out.join("summary.json"),
        &json!({"version": lipex::VERSION, "run_config": config, "tests": status}),
    )?;
    Ok(ok)
}

fn save(
    out: &Path,
    name: &str,
    report: &ExperimentReport,
    csv: &str,
    svg: Option<&str>,
) -> Result<()> {
    write(&out.join(format!("{name}.json")), &report.to_json()?)?;
    write(&out.join(format!("{name}.csv")), csv)?;
    if let Some(svg) = svg {
        write(&out.join(format!("{name}.svg")), svg)?;
    }
    Ok(())
}

fn run_tv(
    setup: &EvalSetup<'_>,
    inst: &[EvalInstance],
    config: &Value,
    out: &Path,
) -> Result<String> {
    let r = tv_replication(setup, inst)?;
    save(
        out,
        "tv",
        &r.report(config.clone())?,
        &r.csv()?,
        Some(&r.svg()),
    )?;
    let s = &r.summary;
    Ok(format!(
        "{} instances, median {:.4}, share below 0.2 {:.3}, {} failed",
        s.instances, s.median, s.share_below_0_2, s.failed
    ))
}

fn run_sanity(
    setup: &EvalSetup<'_>,
    loaded: &LoadedModel,
    inst: &[EvalInstance],
    plan: &Plan,
    config: &Value,
    out: &Path,
) -> Result<String> {
    let base = loaded
        .classifier
        .as_reference()
        .ok_or_else(|| anyhow!("the sanity check needs a built-in model"))?;
    let r = sanity_check(setup, base, inst, &plan.sigmas, plan.trials)?;
    save(
        out,
        "sanity",
        &r.report(config.clone())?,
        &r.csv()?,
        Some(&r.svg()),
    )?;
    let s = &r.summary;
    Ok(format!(
        "spearman {:.4}, model curve non-decreasing {}, surrogate curve non-decreasing {}",
        s.spearman, s.model_curve_non_decreasing, s.surrogate_curve_non_decreasing
    ))
}

fn run_ablation(
    setup: &EvalSetup<'_>,
    inst: &[EvalInstance],
    plan: &Plan,
    config: &Value,
    out: &Path,
    test: &str,
    cache: &mut Option<AblationStudy>,
) -> Result<String> {
    if cache.is_none() {
        let with_lime = plan.tests.iter().any(|t| t == "ablation");
        *cache = Some(ablation_study(
            setup,
            inst,
            &plan.ks,
            plan.rounds,
            with_lime,
        )?);
    }
    let mut study = cache.clone().expect("computed above");
    let (title, keep): (&str, &[&str]) = match test {
        "ablation" => (
            "Prediction flips after removing top-K features",
            &["lipex_flip", "lime_flip"],
        ),
        _ => (
            "Model and surrogate agree after removing top-K features",
            &["lipex_tracking"],
        ),
    };
    study
        .summary
        .curves
        .retain(|c| keep.contains(&c.name.as_str()));
    save(
        out,
        test,
        &study.report(test, config.clone())?,
        &study.csv()?,
        Some(&study.svg(title)),
    )?;
    Ok(study
        .summary
        .curves
        .iter()
        .map(|c| {
            format!(
                "{} {:?}",
                c.name,
                c.means()
                    .iter()
                    .map(|m| (m * 1e4).round() / 1e4)
                    .collect::<Vec<_>>()
            )
        })
        .collect::<Vec<_>>()
        .join("; "))
}

fn run_jaccard(
    setup: &EvalSetup<'_>,
    inst: &[EvalInstance],
    plan: &Plan,
    config: &Value,
    out: &Path,
) -> Result<String> {
    let r = jaccard_stability(setup, inst, &plan.deltas, plan.k)?;
    save(
        out,
        "jaccard",
        &r.report(config.clone())?,
        &r.csv()?,
        Some(&r.svg()),
    )?;
    Ok(r.summary
        .curve
        .iter()
        .map(|p| {
            format!(
                "delta {:.4}: lipex {:.3} lime {:.3} cross {:.3}",
                p.delta, p.lipex, p.lime, p.lipex_vs_lime
            )
        })
        .collect::<Vec<_>>()
        .join("; "))
}

fn run_timing(
    setup: &EvalSetup<'_>,
    inst: &[EvalInstance],
    config: &Value,
    out: &Path,
) -> Result<String> {
    let r = timing_comparison(&setup.with_workers(1), inst)?;
    save(out, "timing", &r.report(config.clone())?, &r.csv()?, None)?;
    let (a, b) = (r.lipex_seconds(), r.lime_seconds());
    println!(
        "timing: lipex {:.4}s, lime {:.4}s per instance",
        a.mean, b.mean
    );
    // wall-clock seconds stay out of the summary so reruns are byte-identical
    Ok(format!(
        "lipex {} calls, lime {} calls per instance",
        r.summary.mean_lipex_calls, r.summary.mean_lime_calls
    ))
}
