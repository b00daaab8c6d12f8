//! Local explanations of multi-class classifiers as a full class-by-feature
//! matrix.
//!
//! For an instance `x` with interpretable units (words or image segments),
//! the library samples Boolean perturbations, queries the black box once
//! per perturbation, selects a small feature space by forward selection and
//! fits a surrogate `softmax(W z″)` under a π-weighted squared Hellinger
//! loss. The `C × f_x` matrix `W` is the explanation. A per-class weighted
//! ridge baseline and an evaluation harness are included.

pub mod distributions;
pub mod error;
pub mod evaluation;
pub mod explain;
pub mod export;
pub mod feature_selection;
pub mod ingestion;
pub mod lime;
mod linalg;
pub mod lipex;
pub mod model;
pub mod perturbation;
pub mod seed;

pub use distributions::{
    hellinger, softmax, squared_hellinger, total_variation, ClassDistribution, ClassLabels,
};
pub use error::{Error, Result};
pub use explain::{explain_instance, explain_lime, ExplainConfig, Explanation, Target};
pub use feature_selection::{build_feature_space, select, SelectedFeatureSet};
pub use ingestion::{load_dataset, DatasetFormat, Featurizer, LabeledDataset};
pub use lime::{fit_lime_all_classes, lime_top_k, LimeConfig, LimeExplanation};
pub use lipex::{
    fit, surrogate_predict, top_k_features, ExplanationMatrix, FitConfig, InstanceBundle,
    LossDistance,
};
pub use model::{BlackBox, Classifier, ReferenceModel, SubprocessModel};
pub use perturbation::{
    extract_features, materialize, pi_weight, restrict_by_angle, sample_perturbations,
    BooleanPerturbation, FeatureVocabulary, PerturbationSet, RawInstance,
};

/// Crate version, embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
