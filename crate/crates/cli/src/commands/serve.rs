use std::io::{BufRead, Write};

use anyhow::{bail, Result};
use lipex::model::BlackBox;
use serde_json::{json, Value};

use crate::args::{ServeArgs, ServeInput};
use crate::io::read_model_file;

/// Answers protocol requests on stdin until it closes.
pub fn serve(args: &ServeArgs) -> Result<()> {
    let (model, _) = read_model_file(&args.model)?;
    let text = args.input == ServeInput::Text;
    if text && model.featurizer.is_none() {
        bail!("text input needs a model with a featurizer; use --input vector");
    }
    let stdin = std::io::stdin();
    let mut out = std::io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = answer(&model, text, &line);
        writeln!(out, "{reply}")?;
        out.flush()?;
    }
    Ok(())
}

fn answer(model: &lipex::ReferenceModel, text: bool, line: &str) -> Value {
    let req: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return json!({"id": 0, "error": format!("bad request: {e}")}),
    };
    let id = req.get("id").and_then(Value::as_u64).unwrap_or(0);
    match req.get("op").and_then(Value::as_str) {
        Some("info") => json!({
            "classes": model.class_labels().as_slice(),
            "input_dim": model.input_dim(),
            "input": if text { "text" } else { "vector" },
        }),
        Some("predict") => match predict(model, text, req.get("instances")) {
            Ok(probs) => json!({"id": id, "probs": probs}),
            Err(e) => json!({"id": id, "error": e.to_string()}),
        },
        other => json!({"id": id, "error": format!("unknown op {other:?}")}),
    }
}

fn predict(
    model: &lipex::ReferenceModel,
    text: bool,
    instances: Option<&Value>,
) -> Result<Vec<Vec<f64>>> {
    let Some(instances) = instances else {
        bail!("missing `instances`");
    };
    let out = if text {
        let batch: Vec<String> = serde_json::from_value(instances.clone())?;
        model.predict_text(&batch)?
    } else {
        let batch: Vec<Vec<f64>> = serde_json::from_value(instances.clone())?;
        model.predict(&batch)?
    };
    Ok(out.into_iter().map(|d| d.into_probs()).collect())
}
