//! End-to-end explanation of one instance: extract units, sample
//! perturbations, materialize and query the model once per perturbation,
//! select features, then fit.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::distributions::ClassDistribution;
use crate::error::{Error, Result};
use crate::feature_selection::{
    build_feature_space, SelectedFeatureSet, DEFAULT_PER_CLASS_K, DEFAULT_SELECTION_RIDGE,
};
use crate::ingestion::Featurizer;
use crate::lime::{fit_lime_all_classes, LimeConfig, LimeExplanation};
use crate::lipex::{fit, ExplanationMatrix, FitConfig, InstanceBundle};
use crate::model::BlackBox;
use crate::perturbation::{
    extract_features, materialize, sample_perturbations, BooleanPerturbation, FeatureVocabulary,
    Materialized, PerturbationSet, RawInstance,
};

const PREDICT_CHUNK: usize = 512;

/// A black box seen through the `T` map, counting every inference.
///
/// Text reaches the model as raw strings when it accepts them; otherwise
/// it is featurized with the adapter's own featurizer.
pub struct Target<'a> {
    model: &'a dyn BlackBox,
    featurizer: Option<&'a Featurizer>,
    calls: AtomicUsize,
}

impl<'a> Target<'a> {
    pub fn new(model: &'a dyn BlackBox) -> Self {
        Target {
            model,
            featurizer: None,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_featurizer(mut self, featurizer: &'a Featurizer) -> Self {
        self.featurizer = Some(featurizer);
        self
    }

    pub fn model(&self) -> &dyn BlackBox {
        self.model
    }

    /// Inferences made so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset_calls(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }

    pub fn predict_materialized(&self, items: &[Materialized]) -> Result<Vec<ClassDistribution>> {
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(PREDICT_CHUNK) {
            out.extend(self.predict_chunk(chunk)?);
        }
        Ok(out)
    }

    fn predict_chunk(&self, items: &[Materialized]) -> Result<Vec<ClassDistribution>> {
        self.calls.fetch_add(items.len(), Ordering::Relaxed);
        let all_text = items.iter().all(|m| matches!(m, Materialized::Text(_)));
        if all_text && self.model.accepts_text() {
            let texts: Vec<String> = items
                .iter()
                .map(|m| match m {
                    Materialized::Text(t) => t.clone(),
                    Materialized::Dense(_) => unreachable!(),
                })
                .collect();
            return self.model.predict_text(&texts);
        }
        let dense = items
            .iter()
            .map(|m| match m {
                Materialized::Dense(v) => Ok(v.clone()),
                Materialized::Text(t) => self.featurizer.map(|f| f.featurize(t)).ok_or_else(|| {
                    Error::Unsupported("text instance needs a featurizer for this model".into())
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        self.model.predict(&dense)
    }

    /// Model output on the perturbations of `vocab`, in order.
    pub fn predict_perturbations(
        &self,
        vocab: &FeatureVocabulary,
        perturbations: &[BooleanPerturbation],
    ) -> Result<Vec<ClassDistribution>> {
        let items = perturbations
            .iter()
            .map(|y| materialize(vocab, y))
            .collect::<Result<Vec<_>>>()?;
        self.predict_materialized(&items)
    }

    /// Model output on the raw instance, through the all-ones perturbation.
    pub fn predict_instance(&self, vocab: &FeatureVocabulary) -> Result<ClassDistribution> {
        let y = BooleanPerturbation::all_ones(vocab.len());
        Ok(self
            .predict_perturbations(vocab, std::slice::from_ref(&y))?
            .remove(0))
    }
}

/// Pipeline settings. The default fit uses [`FitConfig::calibrated`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    pub fit: FitConfig,
    pub per_class_k: usize,
    pub selection_ridge: f64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            fit: FitConfig::calibrated(),
            per_class_k: DEFAULT_PER_CLASS_K,
            selection_ridge: DEFAULT_SELECTION_RIDGE,
        }
    }
}

/// Samples `n` perturbations, queries the model once for each and
/// returns the vocabulary, perturbations and outputs.
pub fn sample_and_predict(
    target: &Target<'_>,
    raw: &RawInstance,
    n: usize,
    seed: u64,
) -> Result<(FeatureVocabulary, PerturbationSet, Vec<ClassDistribution>)> {
    let vocab = extract_features(raw)?;
    let set = sample_perturbations(&vocab, n, seed)?;
    let outputs = target.predict_perturbations(&vocab, set.as_slice())?;
    Ok((vocab, set, outputs))
}

/// Bundle with a freshly selected feature space.
pub fn prepare_bundle(
    target: &Target<'_>,
    raw: &RawInstance,
    cfg: &ExplainConfig,
) -> Result<InstanceBundle> {
    let (vocab, perturbations, outputs) =
        sample_and_predict(target, raw, cfg.fit.n_perturbations, cfg.fit.seed)?;
    let features = build_feature_space(
        &perturbations,
        &outputs,
        vocab.units(),
        cfg.per_class_k,
        cfg.selection_ridge,
    )?;
    Ok(InstanceBundle {
        vocab,
        features,
        perturbations,
        outputs,
    })
}

/// Bundle over a given feature space, for the baseline.
pub fn prepare_lime_bundle(
    target: &Target<'_>,
    raw: &RawInstance,
    features: &SelectedFeatureSet,
    cfg: &LimeConfig,
) -> Result<InstanceBundle> {
    let (vocab, perturbations, outputs) =
        sample_and_predict(target, raw, cfg.n_perturbations, cfg.seed)?;
    if vocab.len() != features.width {
        return Err(Error::dim(
            features.width,
            vocab.len(),
            "feature space width",
        ));
    }
    Ok(InstanceBundle {
        vocab,
        features: features.clone(),
        perturbations,
        outputs,
    })
}

/// A fitted explanation together with the data it was fitted on.
#[derive(Debug, Clone)]
pub struct Explanation {
    pub bundle: InstanceBundle,
    pub matrix: ExplanationMatrix,
}

impl Explanation {
    pub fn instance_output(&self) -> &ClassDistribution {
        self.bundle.instance_output()
    }
}

pub fn explain_instance(
    target: &Target<'_>,
    raw: &RawInstance,
    cfg: &ExplainConfig,
) -> Result<Explanation> {
    let bundle = prepare_bundle(target, raw, cfg)?;
    let matrix = fit(&bundle, &cfg.fit)?;
    Ok(Explanation { bundle, matrix })
}

/// Baseline on the feature space of an existing explanation.
pub fn explain_lime(
    target: &Target<'_>,
    raw: &RawInstance,
    features: &SelectedFeatureSet,
    cfg: &LimeConfig,
) -> Result<LimeExplanation> {
    let bundle = prepare_lime_bundle(target, raw, features, cfg)?;
    fit_lime_all_classes(&bundle, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::ClassLabels;
    use crate::model::{Architecture, DenseLayer, ReferenceModel};

    fn keyword_model() -> (ReferenceModel, Featurizer) {
        let vocab: Vec<String> = ["alpha", "beta", "gamma", "delta"]
            .map(String::from)
            .to_vec();
        let f = Featurizer::with_vocabulary(vocab, 0);
        let mut layer = DenseLayer::zeros(4, 2);
        layer.weights[0] = 3.0; // alpha pushes class 0
        layer.weights[4 + 1] = 3.0; // beta pushes class 1
        let m = ReferenceModel::from_layers(
            Architecture::logistic(),
            ClassLabels::numbered(2),
            vec![layer],
        )
        .unwrap()
        .with_featurizer(f.clone());
        (m, f)
    }

    #[test]
    fn counts_one_call_per_perturbation() {
        let (m, _) = keyword_model();
        let t = Target::new(&m);
        let raw = RawInstance::Text("alpha beta gamma delta zeta".into());
        let cfg = ExplainConfig {
            fit: FitConfig {
                n_perturbations: 300,
                ..FitConfig::default()
            },
            ..ExplainConfig::default()
        };
        let e = explain_instance(&t, &raw, &cfg).unwrap();
        assert_eq!(t.calls(), 300);
        assert_eq!(e.bundle.outputs.len(), 300);
        assert_eq!(e.matrix.n_classes(), 2);
        t.reset_calls();
        let lime = explain_lime(
            &t,
            &raw,
            &e.bundle.features,
            &LimeConfig {
                n_perturbations: 700,
                ..LimeConfig::default()
            },
        )
        .unwrap();
        assert_eq!(t.calls(), 700);
        assert_eq!(lime.features, e.matrix.features());
    }

    #[test]
    fn featurizer_fallback_matches_text_path() {
        let (m, f) = keyword_model();
        let bare = ReferenceModel {
            featurizer: None,
            ..m.clone()
        };
        let raw = RawInstance::Text("alpha gamma beta".into());
        let vocab = extract_features(&raw).unwrap();
        let via_text = Target::new(&m).predict_instance(&vocab).unwrap();
        let via_vec = Target::new(&bare)
            .with_featurizer(&f)
            .predict_instance(&vocab)
            .unwrap();
        assert_eq!(via_text, via_vec);
        assert!(Target::new(&bare).predict_instance(&vocab).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let (m, _) = keyword_model();
        let raw = RawInstance::Text("alpha beta gamma delta".into());
        let cfg = ExplainConfig::default();
        let a = explain_instance(&Target::new(&m), &raw, &cfg).unwrap();
        let b = explain_instance(&Target::new(&m), &raw, &cfg).unwrap();
        assert_eq!(a.matrix, b.matrix);
        assert_eq!(a.bundle.features, b.bundle.features);
    }
}
