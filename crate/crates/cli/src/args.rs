use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lipex::DatasetFormat;
use serde::{Deserialize, Serialize};

use crate::grid;

#[derive(Debug, Parser)]
#[command(
    name = "lipex",
    version,
    about = "Matrix explanations for black-box classifiers"
)]
pub struct Cli {
    /// JSON file with defaults for any tuning flag; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a built-in reference classifier and write it as JSON.
    Train(TrainArgs),
    /// Fit an explanation matrix for one instance.
    Explain(ExplainArgs),
    /// Explain one instance with both methods side by side.
    Compare(ExplainArgs),
    /// Run the evaluation suite over a dataset.
    Evaluate(EvaluateArgs),
    /// Serve a model file over the line-delimited JSON protocol on stdio.
    Serve(ServeArgs),
    /// Write the synthetic keyword corpus as CSV.
    Synth(SynthArgs),
}

/// Tuning knobs shared by the commands that fit explanations. Every field
/// can also come from the config file.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct Tuning {
    /// Global seed.
    #[arg(long, env = "LIPEX_SEED")]
    pub seed: Option<u64>,
    /// Perturbations per explanation.
    #[arg(long)]
    pub perturbations: Option<usize>,
    /// Frobenius penalty on the matrix.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Features taken per class by forward selection.
    #[arg(long)]
    pub per_class_k: Option<usize>,
    /// Perturbations for the baseline (default by modality).
    #[arg(long)]
    pub lime_perturbations: Option<usize>,
    #[arg(long)]
    pub kernel_width: Option<f64>,
    /// Worker threads; 0 means available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
}

/// Where the black box comes from.
#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = true)]
pub struct ModelSource {
    /// Model file written by `train`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Command of a child process speaking the JSON-lines protocol,
    /// split on whitespace. With `--model` as well, the model file only
    /// supplies the featurizer and split.
    #[arg(long, value_name = "CMD")]
    pub subprocess_cmd: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Logistic,
    Mlp,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_parser = parse_format, default_value = "csv")]
    pub format: DatasetFormat,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Arch::Logistic)]
    pub arch: Arch,
    /// Hidden width for `--arch mlp`.
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long)]
    pub train_epochs: Option<usize>,
    #[arg(long)]
    pub train_lr: Option<f64>,
    /// Share of records in the train split.
    #[arg(long, default_value_t = 0.7)]
    pub train_ratio: f64,
    #[arg(long, env = "LIPEX_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub source: ModelSource,
    #[arg(long, requires = "instance")]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_parser = parse_format, default_value = "csv")]
    pub format: DatasetFormat,
    /// Record index in the dataset.
    #[arg(long, requires = "dataset", conflicts_with = "text")]
    pub instance: Option<usize>,
    /// Raw text to explain instead of a dataset record.
    #[arg(long, required_unless_present = "instance")]
    pub text: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Restrict CSV columns to the top-k features of the predicted class.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Also fit the baseline on the same features.
    #[arg(long)]
    pub lime: bool,
    /// Write SVG heatmaps with classes in descending predicted probability.
    #[arg(long)]
    pub heatmap: bool,
    #[command(flatten)]
    pub tuning: Tuning,
}

/// Experiment knobs of `evaluate`; all can come from the config file.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalKnobs {
    /// Comma-separated subset of tv,sanity,ablation,tracking,jaccard,timing.
    #[arg(long, value_delimiter = ',', value_parser = parse_test)]
    pub tests: Option<Vec<String>>,
    /// Angles such as `pi/16,pi/8,0.5`.
    #[arg(long, value_parser = grid::parse_delta_list)]
    pub delta_grid: Option<grid::DeltaGrid>,
    /// Top-k size for the stability test.
    #[arg(long)]
    pub k: Option<usize>,
    /// K values of the ablation and tracking tests.
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    /// Noise levels of the sanity check.
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Instances for tv, ablation, tracking and jaccard.
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub sanity_instances: Option<usize>,
    #[arg(long)]
    pub timing_instances: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub source: ModelSource,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_parser = parse_format, default_value = "csv")]
    pub format: DatasetFormat,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub knobs: EvalKnobs,
    #[command(flatten)]
    pub tuning: Tuning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ServeInput {
    Text,
    Vector,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Input announced in the handshake; text needs a featurizer.
    #[arg(long, value_enum, default_value_t = ServeInput::Text)]
    pub input: ServeInput,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub docs_per_class: usize,
    #[arg(long, env = "LIPEX_SEED")]
    pub seed: Option<u64>,
}

pub const TESTS: [&str; 6] = ["tv", "sanity", "ablation", "tracking", "jaccard", "timing"];

fn parse_test(s: &str) -> Result<String, String> {
    let t = s.trim();
    if TESTS.contains(&t) {
        Ok(t.to_string())
    } else {
        Err(format!(
            "unknown test `{t}`, expected one of {}",
            TESTS.join(",")
        ))
    }
}

fn parse_format(s: &str) -> Result<DatasetFormat, String> {
    s.parse().map_err(|e: lipex::Error| e.to_string())
}
