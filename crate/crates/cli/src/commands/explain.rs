use anyhow::{bail, Context, Result};
use lipex::evaluation::stats::jaccard;
use lipex::evaluation::EvalSetup;
use lipex::export::{descending_order, heatmap_svg, MatrixDocument};
use lipex::{explain_instance, explain_lime, extract_features, load_dataset, RawInstance};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::ExplainArgs;
use crate::config::{FileConfig, RunConfig};
use crate::io::{write, write_json, LoadedModel};

const DEFAULT_COMPARE_K: usize = 5;

#[derive(Serialize)]
struct ExplanationFile<'a> {
    version: &'a str,
    run_config: &'a Value,
    instance: &'a Value,
    prediction: Value,
    explanation: &'a MatrixDocument,
}

pub fn explain(args: &ExplainArgs, file: &FileConfig, compare: bool) -> Result<()> {
    let tuning = args.tuning.over(&file.tuning);
    let loaded = LoadedModel::load(&args.source)?;

    let (index, raw, instance_desc) = match (&args.dataset, args.instance, &args.text) {
        (Some(path), Some(i), _) => {
            let ds = load_dataset(path, args.format)
                .with_context(|| format!("loading {}", path.display()))?;
            let Some(rec) = ds.records.get(i) else {
                bail!(
                    "instance {i} out of range: dataset has {} records",
                    ds.len()
                );
            };
            (
                i,
                rec.instance.clone(),
                json!({"dataset": path.display().to_string(), "index": i, "label": rec.label}),
            )
        }
        (_, _, Some(text)) => (0, RawInstance::Text(text.clone()), json!({"text": text})),
        _ => bail!("give --dataset with --instance, or --text"),
    };
    let modality = extract_features(&raw)?.modality();

    let explain_cfg = tuning.explain_config()?;
    let lime_cfg = tuning.lime_config(modality)?;
    let seed = tuning.seed();
    let setup = EvalSetup::new(&loaded.classifier, &explain_cfg, &lime_cfg, seed)
        .with_featurizer(loaded.featurizer.as_ref());
    let with_lime = compare || args.lime;

    let mut run = RunConfig::new(if compare { "compare" } else { "explain" }, seed);
    loaded.describe(&args.source, &mut run);
    run.dataset = args.dataset.as_ref().map(|p| p.display().to_string());
    run.explain = Some(setup.explain_for(index));
    run.lime = with_lime.then(|| setup.lime_for(index));
    run.settings = json!({"top_k": args.top_k, "heatmap": args.heatmap, "lime": with_lime});
    let run = run.to_value();

    let target = setup.target();
    let e = explain_instance(&target, &raw, &setup.explain_for(index))?;
    let output = e.instance_output();
    let probs = output.probs().to_vec();
    let predicted = output.argmax();
    let prediction =
        json!({"classes": output.labels().as_slice(), "probs": probs, "predicted": predicted});
    let order = descending_order(&probs);

    let doc = MatrixDocument::lipex(&e.matrix);
    let lipex_cols = args
        .top_k
        .map(|k| e.matrix.top_k(predicted, k))
        .transpose()?;
    emit(
        args,
        "lipex",
        &run,
        &instance_desc,
        &prediction,
        &doc,
        lipex_cols.as_deref(),
        &order,
        &probs,
    )?;
    let k = args
        .top_k
        .unwrap_or(DEFAULT_COMPARE_K.min(e.matrix.n_features()));
    let lipex_top = e.matrix.top_k_features(predicted, k)?;
    println!(
        "predicted {} ({:.4})",
        output.labels().get(predicted).unwrap_or("?"),
        probs[predicted]
    );
    println!("lipex top features: {}", lipex_top.join(", "));

    if with_lime {
        let l = explain_lime(&target, &raw, &e.bundle.features, &setup.lime_for(index))?;
        let ldoc = MatrixDocument::lime(&l);
        let lime_cols = args.top_k.map(|k| l.top_k(predicted, k)).transpose()?;
        emit(
            args,
            "lime",
            &run,
            &instance_desc,
            &prediction,
            &ldoc,
            lime_cols.as_deref(),
            &order,
            &probs,
        )?;
        let lime_top = lipex::lime_top_k(&l, predicted, k)?;
        println!("lime top features:  {}", lime_top.join(", "));
        if compare {
            let j = jaccard(&lipex_top, &lime_top);
            write_json(
                &args.out.join("comparison.json"),
                &json!({
                    "version": lipex::VERSION,
                    "run_config": run,
                    "instance": instance_desc,
                    "prediction": prediction,
                    "k": lipex_top.len(),
                    "lipex_top": lipex_top,
                    "lime_top": lime_top,
                    "jaccard": j,
                    "modality": modality,
                }),
            )?;
            println!("jaccard {j:.4}");
        }
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn emit(
    args: &ExplainArgs,
    name: &str,
    run: &Value,
    instance: &Value,
    prediction: &Value,
    doc: &MatrixDocument,
    columns: Option<&[usize]>,
    order: &[usize],
    probs: &[f64],
) -> Result<()> {
    let file = ExplanationFile {
        version: lipex::VERSION,
        run_config: run,
        instance,
        prediction: prediction.clone(),
        explanation: doc,
    };
    write_json(&args.out.join(format!("{name}.json")), &file)?;
    write(&args.out.join(format!("{name}.csv")), &doc.to_csv(columns)?)?;
    if args.heatmap {
        write(
            &args.out.join(format!("{name}_heatmap.svg")),
            &heatmap_svg(doc, order, Some(probs)),
        )?;
    }
    Ok(())
}
