use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{bail, Context, Result};
use lipex::perturbation::Modality;
use lipex::{ExplainConfig, LimeConfig};
use serde::Serialize;
use serde_json::Value;

use crate::args::{EvalKnobs, Tuning};

/// Contents of a `--config` file: any subset of the tuning and experiment
/// flags, keyed by their long names in snake case.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileConfig {
    pub tuning: Tuning,
    pub knobs: EvalKnobs,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        let Value::Object(map) = &value else {
            bail!("config must be a JSON object");
        };
        let known: BTreeSet<String> = [
            serde_json::to_value(Tuning::default())?,
            serde_json::to_value(EvalKnobs::default())?,
        ]
        .iter()
        .filter_map(Value::as_object)
        .flat_map(|m| m.keys().cloned())
        .collect();
        if let Some(k) = map.keys().find(|k| !known.contains(*k)) {
            bail!("unknown config key `{k}`");
        }
        Ok(FileConfig {
            tuning: serde_json::from_value(value.clone())?,
            knobs: serde_json::from_value(value)?,
        })
    }
}

macro_rules! prefer {
    ($flags:expr, $file:expr; $($f:ident),+) => {{
        let mut out = $flags.clone();
        $( if out.$f.is_none() { out.$f = $file.$f.clone(); } )+
        out
    }};
}

impl Tuning {
    /// Flag values, falling back to `file` field by field.
    pub fn over(&self, file: &Tuning) -> Tuning {
        prefer!(self, file; seed, perturbations, lambda, lr, batch_size, epochs, per_class_k,
            lime_perturbations, kernel_width, workers)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn explain_config(&self) -> Result<ExplainConfig> {
        let mut cfg = ExplainConfig::default();
        let fit = &mut cfg.fit;
        if let Some(v) = self.perturbations {
            fit.n_perturbations = v;
        }
        if let Some(v) = self.lambda {
            fit.lambda = v;
        }
        if let Some(v) = self.lr {
            fit.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            fit.batch_size = v;
        }
        if let Some(v) = self.epochs {
            fit.max_epochs = v;
        }
        if let Some(v) = self.per_class_k {
            cfg.per_class_k = v;
        }
        cfg.fit.validate()?;
        Ok(cfg)
    }

    pub fn lime_config(&self, modality: Modality) -> Result<LimeConfig> {
        let mut cfg = LimeConfig::for_modality(modality);
        if let Some(v) = self.lime_perturbations {
            cfg.n_perturbations = v;
        }
        if let Some(v) = self.kernel_width {
            cfg.kernel_width = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl EvalKnobs {
    pub fn over(&self, file: &EvalKnobs) -> EvalKnobs {
        prefer!(self, file; tests, delta_grid, k, ks, sigmas, trials, rounds, instances,
            sanity_instances, timing_instances)
    }
}

/// Resolved settings of one run, embedded in every output file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subprocess_cmd: Option<Vec<String>>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explain: Option<ExplainConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lime: Option<LimeConfig>,
    /// Command-specific settings.
    pub settings: Value,
}

impl RunConfig {
    pub fn new(command: &str, seed: u64) -> Self {
        RunConfig {
            command: command.into(),
            version: lipex::VERSION.into(),
            dataset: None,
            model: None,
            subprocess_cmd: None,
            seed,
            explain: None,
            lime: None,
            settings: Value::Null,
        }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("run config serializes")
    }
}
