use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use lipex::evaluation::EvalInstance;
use lipex::ingestion::Split;
use lipex::model::Classifier;
use lipex::{Featurizer, LabeledDataset, ReferenceModel, SubprocessModel};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::ModelSource;
use crate::config::RunConfig;

/// How the training run split the dataset, so later commands can pick
/// held-out records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub train_ratio: f64,
    pub seed: u64,
}

/// What `train` writes: the model plus the run that produced it.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: String,
    pub run_config: Value,
    pub split: Option<SplitInfo>,
    pub train_accuracy: f64,
    pub eval_accuracy: Option<f64>,
    pub model: ReferenceModel,
}

/// A model file, or a bare serialized reference model.
pub fn read_model_file(path: &Path) -> Result<(ReferenceModel, Option<SplitInfo>)> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    let value: Value =
        serde_json::from_str(&text).with_context(|| format!("parsing model {}", path.display()))?;
    let (model, split) = match value.get("model") {
        Some(m) => {
            let split = value
                .get("split")
                .cloned()
                .map(serde_json::from_value::<Option<SplitInfo>>)
                .transpose()?
                .flatten();
            (ReferenceModel::from_json(&m.to_string())?, split)
        }
        None => (ReferenceModel::from_json(&text)?, None),
    };
    Ok((model, split))
}

/// The black box with whatever the model file adds to it.
pub struct LoadedModel {
    pub classifier: Classifier,
    /// Featurizer for a vector-input child, taken from `--model`.
    pub featurizer: Option<Featurizer>,
    pub split: Option<SplitInfo>,
}

impl LoadedModel {
    pub fn load(source: &ModelSource) -> Result<Self> {
        let file = source.model.as_deref().map(read_model_file).transpose()?;
        match &source.subprocess_cmd {
            Some(cmd) => {
                let argv: Vec<String> = cmd.split_whitespace().map(String::from).collect();
                if argv.is_empty() {
                    bail!("--subprocess-cmd is empty");
                }
                let child =
                    SubprocessModel::spawn(&argv).with_context(|| format!("starting `{cmd}`"))?;
                let (featurizer, split) = match file {
                    Some((m, s)) => (m.featurizer, s),
                    None => (None, None),
                };
                Ok(LoadedModel {
                    classifier: Classifier::Subprocess(child),
                    featurizer,
                    split,
                })
            }
            None => {
                let (m, split) = file.expect("clap requires a model source");
                Ok(LoadedModel {
                    classifier: Classifier::Reference(m),
                    featurizer: None,
                    split,
                })
            }
        }
    }

    pub fn describe(&self, source: &ModelSource, run: &mut RunConfig) {
        run.model = source.model.as_ref().map(|p| p.display().to_string());
        run.subprocess_cmd = source
            .subprocess_cmd
            .as_ref()
            .map(|c| c.split_whitespace().map(String::from).collect());
    }

    /// Held-out records when the training split is known, else all.
    pub fn eval_indices(&self, ds: &LabeledDataset) -> Result<Vec<usize>> {
        match self.split {
            Some(s) => Ok(ds
                .clone()
                .split(s.train_ratio, s.seed)?
                .indices(Split::Eval)
                .collect()),
            None => Ok((0..ds.len()).collect()),
        }
    }
}

pub fn instances(ds: &LabeledDataset, indices: &[usize], n: usize) -> Vec<EvalInstance> {
    indices
        .iter()
        .take(n)
        .map(|&index| EvalInstance {
            index,
            raw: ds.records[index].instance.clone(),
        })
        .collect()
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut body = contents.to_string();
    if !body.ends_with('\n') {
        body.push('\n');
    }
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, &serde_json::to_string_pretty(value)?)
}
