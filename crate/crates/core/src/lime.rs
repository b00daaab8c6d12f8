//! The per-class weighted ridge baseline over the same Boolean
//! perturbations and selected features as the matrix fit.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::distributions::ClassLabels;
use crate::error::{Error, Result};
use crate::feature_selection::select;
use crate::linalg::{centered_cross, ridge_solve, CenteredGram};
use crate::lipex::{top_k_by_magnitude, InstanceBundle};
use crate::perturbation::{BooleanPerturbation, Modality};

pub const TEXT_PERTURBATIONS: usize = 5000;
pub const IMAGE_PERTURBATIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimeConfig {
    pub n_perturbations: usize,
    /// Width of the exponential kernel over cosine distance.
    pub kernel_width: f64,
    /// Ridge penalty on the slopes; the intercept is not penalized.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            n_perturbations: TEXT_PERTURBATIONS,
            kernel_width: 0.25,
            alpha: 1.0,
            seed: 0,
        }
    }
}

impl LimeConfig {
    /// Default budget for the modality: 5000 for text, 1000 for segments.
    pub fn for_modality(modality: Modality) -> Self {
        let n_perturbations = match modality {
            Modality::Text => TEXT_PERTURBATIONS,
            Modality::Segments => IMAGE_PERTURBATIONS,
        };
        LimeConfig {
            n_perturbations,
            ..LimeConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_width.is_nan() || self.kernel_width <= 0.0 {
            return Err(Error::invalid("kernel width must be positive"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("ridge alpha must be non-negative"));
        }
        Ok(())
    }
}

/// `exp(−d²/width²)` with `d` the cosine distance from all-ones. An
/// infinite width gives weight 1.
pub fn kernel_weight(y: &BooleanPerturbation, width: f64) -> f64 {
    let d = 1.0 - y.cosine();
    (-(d * d) / (width * width)).exp()
}

/// Weighted ridge `min Σ wᵢ(yᵢ − β·xᵢ − b)² + α‖β‖²` in closed form.
/// Weights are rescaled to mean 1 first, so the solution does not depend
/// on their overall scale.
pub fn fit_lime_class(
    x: &[Vec<f64>],
    y: &[f64],
    sample_weights: &[f64],
    alpha: f64,
) -> Result<(Vec<f64>, f64)> {
    let n = x.len();
    if n < 2 {
        return Err(Error::invalid("weighted ridge needs at least two rows"));
    }
    if y.len() != n || sample_weights.len() != n {
        return Err(Error::dim(
            n,
            y.len().min(sample_weights.len()),
            "ridge rows",
        ));
    }
    let p = x[0].len();
    if x.iter().any(|r| r.len() != p) {
        return Err(Error::invalid("ragged design matrix"));
    }
    if sample_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::invalid(
            "sample weights must be finite and non-negative",
        ));
    }
    let total: f64 = sample_weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("sample weights sum to zero"));
    }
    let scale = n as f64 / total;
    let w: Vec<f64> = sample_weights.iter().map(|v| v * scale).collect();

    let cg = CenteredGram::new(x, Some(&w));
    let (cross, y_mean, _) = centered_cross(x, y, Some(&w));
    let beta = if p == 0 {
        DVector::zeros(0)
    } else {
        if alpha == 0.0 && !well_conditioned(&cg.gram) {
            return Err(Error::Singular { alpha });
        }
        ridge_solve(&cg.gram, &cross, alpha).ok_or(Error::Singular { alpha })?
    };
    let intercept = y_mean - beta.dot(&cg.means);
    Ok((beta.iter().copied().collect(), intercept))
}

/// Cholesky pivots bounded away from zero relative to the diagonal.
fn well_conditioned(gram: &nalgebra::DMatrix<f64>) -> bool {
    let scale = (0..gram.nrows()).map(|i| gram[(i, i)]).fold(0.0, f64::max);
    if scale <= 0.0 {
        return false;
    }
    match gram.clone().cholesky() {
        Some(c) => {
            let l = c.l();
            (0..l.nrows()).all(|i| l[(i, i)] * l[(i, i)] > 1e-10 * scale)
        }
        None => false,
    }
}

/// One independently fitted row per class, plus intercepts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeExplanation {
    pub classes: ClassLabels,
    pub features: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub config: LimeConfig,
}

impl LimeExplanation {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.weights[c]
    }

    pub fn top_k(&self, class: usize, k: usize) -> Result<Vec<usize>> {
        if class >= self.n_classes() {
            return Err(Error::Range {
                requested: class + 1,
                available: self.n_classes(),
            });
        }
        top_k_by_magnitude(&self.weights[class], k)
    }
}

/// Same contract as the matrix top-k, applied to the baseline's row.
pub fn lime_top_k(expl: &LimeExplanation, class: usize, k: usize) -> Result<Vec<String>> {
    Ok(expl
        .top_k(class, k)?
        .into_iter()
        .map(|j| expl.features[j].clone())
        .collect())
}

/// Fits every class of `bundle` with kernel weights from `cfg`, in class
/// order. `n_perturbations` in `cfg` describes how the bundle was sampled
/// and is not re-checked here.
pub fn fit_lime_all_classes(bundle: &InstanceBundle, cfg: &LimeConfig) -> Result<LimeExplanation> {
    let order: Vec<usize> = (0..bundle.classes().len()).collect();
    fit_lime_classes_in_order(bundle, cfg, &order)
}

/// As [`fit_lime_all_classes`], fitting classes in the given order. Rows
/// are always stored in class order.
pub fn fit_lime_classes_in_order(
    bundle: &InstanceBundle,
    cfg: &LimeConfig,
    order: &[usize],
) -> Result<LimeExplanation> {
    cfg.validate()?;
    if bundle.outputs.len() != bundle.perturbations.len() {
        return Err(Error::dim(
            bundle.perturbations.len(),
            bundle.outputs.len(),
            "model outputs per perturbation",
        ));
    }
    let classes = bundle.classes().clone();
    let x: Vec<Vec<f64>> = bundle
        .perturbations
        .iter()
        .map(|y| select(y, &bundle.features).map(|z| z.into_iter().map(f64::from).collect()))
        .collect::<Result<_>>()?;
    let sw: Vec<f64> = bundle
        .perturbations
        .iter()
        .map(|y| kernel_weight(y, cfg.kernel_width))
        .collect();
    let mut weights = vec![Vec::new(); classes.len()];
    let mut intercepts = vec![0.0; classes.len()];
    for &c in order {
        let y: Vec<f64> = bundle.outputs.iter().map(|o| o.probs()[c]).collect();
        let (beta, b) = fit_lime_class(&x, &y, &sw, cfg.alpha)?;
        weights[c] = beta;
        intercepts[c] = b;
    }
    if weights.iter().any(Vec::is_empty) && !bundle.features.is_empty() {
        return Err(Error::invalid("class order must cover every class"));
    }
    Ok(LimeExplanation {
        classes,
        features: bundle.features.names.clone(),
        weights,
        intercepts,
        config: cfg.clone(),
    })
}
