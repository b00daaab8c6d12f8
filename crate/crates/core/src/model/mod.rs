//! The black-box classifier abstraction and its backends.

mod reference;
mod subprocess;

pub use reference::{
    distort_last_layer, train_reference, Architecture, DenseLayer, DistortionConfig,
    ReferenceModel, TrainConfig, TrainReport, TrainingData,
};
pub use subprocess::{InputKind, SubprocessModel};

use crate::distributions::{ClassDistribution, ClassLabels};
use crate::error::{Error, Result};
use crate::ingestion::{Featurizer, LabeledDataset, Split};
use crate::perturbation::RawInstance;

/// Opaque map from model inputs to class distributions.
///
/// Implementations must be deterministic: identical inputs give identical
/// outputs.
pub trait BlackBox: Send + Sync {
    fn class_labels(&self) -> &ClassLabels;

    /// Width `d` of dense inputs.
    fn input_dim(&self) -> usize;

    fn predict(&self, batch: &[Vec<f64>]) -> Result<Vec<ClassDistribution>>;

    /// Whether the model consumes raw text rather than featurized vectors.
    fn accepts_text(&self) -> bool {
        false
    }

    fn predict_text(&self, _batch: &[String]) -> Result<Vec<ClassDistribution>> {
        Err(Error::Unsupported(
            "this model does not take raw text".into(),
        ))
    }

    fn num_classes(&self) -> usize {
        self.class_labels().len()
    }
}

/// A classifier with one of the supported backends.
#[derive(Debug)]
pub enum Classifier {
    Reference(ReferenceModel),
    Subprocess(SubprocessModel),
}

impl Classifier {
    pub fn backend_name(&self) -> &'static str {
        match self {
            Classifier::Reference(m) => m.architecture.name(),
            Classifier::Subprocess(_) => "subprocess",
        }
    }

    pub fn as_reference(&self) -> Option<&ReferenceModel> {
        match self {
            Classifier::Reference(m) => Some(m),
            Classifier::Subprocess(_) => None,
        }
    }

    /// Built-in backends only.
    pub fn distort_last_layer(&self, cfg: &DistortionConfig) -> Result<Classifier> {
        match self {
            Classifier::Reference(m) => Ok(Classifier::Reference(distort_last_layer(m, cfg))),
            Classifier::Subprocess(_) => Err(Error::Unsupported(
                "last-layer distortion needs a built-in model".into(),
            )),
        }
    }
}

impl BlackBox for Classifier {
    fn class_labels(&self) -> &ClassLabels {
        match self {
            Classifier::Reference(m) => m.class_labels(),
            Classifier::Subprocess(m) => m.class_labels(),
        }
    }

    fn input_dim(&self) -> usize {
        match self {
            Classifier::Reference(m) => m.input_dim(),
            Classifier::Subprocess(m) => m.input_dim(),
        }
    }

    fn predict(&self, batch: &[Vec<f64>]) -> Result<Vec<ClassDistribution>> {
        match self {
            Classifier::Reference(m) => m.predict(batch),
            Classifier::Subprocess(m) => m.predict(batch),
        }
    }

    fn accepts_text(&self) -> bool {
        match self {
            Classifier::Reference(m) => m.accepts_text(),
            Classifier::Subprocess(m) => m.accepts_text(),
        }
    }

    fn predict_text(&self, batch: &[String]) -> Result<Vec<ClassDistribution>> {
        match self {
            Classifier::Reference(m) => m.predict_text(batch),
            Classifier::Subprocess(m) => m.predict_text(batch),
        }
    }
}

pub fn predict(model: &dyn BlackBox, batch: &[Vec<f64>]) -> Result<Vec<ClassDistribution>> {
    model.predict(batch)
}

/// Rows of `split` in model input space: bag-of-words for text, the base
/// vector for segment bundles.
pub fn dataset_rows(
    ds: &LabeledDataset,
    featurizer: Option<&Featurizer>,
    split: Split,
) -> Result<TrainingData> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for i in ds.indices(split) {
        let row = match (&ds.records[i].instance, featurizer) {
            (RawInstance::Text(t), Some(f)) => f.featurize(t),
            (RawInstance::Text(_), None) => {
                return Err(Error::invalid("text records need a featurizer"))
            }
            (RawInstance::Segments(b), _) => b.base.clone(),
        };
        features.push(row);
        labels.push(ds.label_index(i));
    }
    Ok(TrainingData {
        features,
        labels,
        classes: ds.labels.clone(),
    })
}

/// Trains a built-in model on the train split. Text datasets get a
/// featurizer built from the train split, stored in the model.
pub fn train_on_dataset(
    ds: &LabeledDataset,
    architecture: Architecture,
    cfg: &TrainConfig,
) -> Result<(ReferenceModel, TrainReport)> {
    let texts = ds.texts(Split::Train);
    let featurizer = if texts.is_empty() {
        None
    } else {
        Some(Featurizer::build(texts)?)
    };
    let data = dataset_rows(ds, featurizer.as_ref(), Split::Train)?;
    let (model, report) = train_reference(&data, architecture, cfg)?;
    Ok((
        match featurizer {
            Some(f) => model.with_featurizer(f),
            None => model,
        },
        report,
    ))
}

/// Accuracy on `split`; `None` when the split is empty.
pub fn split_accuracy(
    model: &ReferenceModel,
    ds: &LabeledDataset,
    split: Split,
) -> Result<Option<f64>> {
    let data = dataset_rows(ds, model.featurizer.as_ref(), split)?;
    Ok((!data.features.is_empty()).then(|| model.accuracy(&data)))
}
