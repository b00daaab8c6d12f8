//! The explanation matrix `W` and its fit: a softmax-linear surrogate over
//! the selected features, trained by minibatch gradient descent on the
//! π-weighted squared-Hellinger risk plus `(λ/2)‖W‖²_F`.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::distributions::{softmax_into, ClassDistribution, ClassLabels};
use crate::error::{Error, Result};
use crate::feature_selection::{select, SelectedFeatureSet};
use crate::perturbation::{FeatureVocabulary, PerturbationSet};
use crate::seed;

/// Distance between surrogate and model outputs inside the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossDistance {
    #[default]
    SquaredHellinger,
    /// Subgradient descent on the total variation distance.
    TotalVariation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub learning_rate: f64,
    /// Frobenius penalty coefficient λ.
    pub lambda: f64,
    pub batch_size: usize,
    pub n_perturbations: usize,
    pub max_epochs: usize,
    /// Stop when the full-data loss changes by less than this between epochs.
    pub tolerance: f64,
    pub seed: u64,
    pub distance: LossDistance,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            learning_rate: 0.01,
            lambda: 0.001,
            batch_size: 128,
            n_perturbations: 1000,
            max_epochs: 200,
            tolerance: 1e-7,
            seed: 0,
            distance: LossDistance::SquaredHellinger,
        }
    }
}

/// Learning rate of [`FitConfig::calibrated`]. Plain gradient descent at
/// the default 0.01 stops well short of the optimum within 200 epochs on
/// desk-scale problems; 0.1 reaches it.
pub const CALIBRATED_LEARNING_RATE: f64 = 0.1;

impl FitConfig {
    /// Defaults with [`CALIBRATED_LEARNING_RATE`]; used by the command line
    /// and the evaluation harness.
    pub fn calibrated() -> Self {
        FitConfig {
            learning_rate: CALIBRATED_LEARNING_RATE,
            ..FitConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        Ok(())
    }
}

/// Everything a fit needs for one instance: the perturbations, the
/// selected feature space and one cached model output per perturbation.
#[derive(Debug, Clone)]
pub struct InstanceBundle {
    pub vocab: FeatureVocabulary,
    pub features: SelectedFeatureSet,
    pub perturbations: PerturbationSet,
    pub outputs: Vec<ClassDistribution>,
}

impl InstanceBundle {
    pub fn classes(&self) -> &ClassLabels {
        self.outputs[0].labels()
    }

    /// Model output on the unperturbed instance.
    pub fn instance_output(&self) -> &ClassDistribution {
        &self.outputs[0]
    }

    /// Same bundle restricted to perturbations within `delta` of all-ones.
    /// The feature space is kept.
    pub fn restrict_by_angle(&self, delta: f64) -> Result<InstanceBundle> {
        crate::perturbation::restrict_by_angle(&self.perturbations, delta)?;
        let keep = self.perturbations.indices_within(delta);
        Ok(InstanceBundle {
            vocab: self.vocab.clone(),
            features: self.features.clone(),
            perturbations: self.perturbations.subset(&keep),
            outputs: keep.iter().map(|&i| self.outputs[i].clone()).collect(),
        })
    }
}

/// `(select(y), π(1, y), h(T(y)))` triples over a fixed feature space.
///
/// Distinct reduced vectors are stored once; the surrogate only has to be
/// evaluated per distinct vector.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    /// Per example: index into `patterns`.
    pattern_of: Vec<usize>,
    pi: Vec<f64>,
    /// Model outputs and their square roots, row-major `n × C`.
    target: Vec<f64>,
    sqrt_target: Vec<f64>,
    /// `π·√q` per example, row-major `n × C`.
    weighted_sqrt: Vec<f64>,
    /// Active coordinates of each distinct reduced vector.
    patterns: Vec<Vec<usize>>,
    /// Per pattern: `Σ π` and `Σ π·√q` over its examples.
    pattern_pi: Vec<f64>,
    pattern_sqrt: Vec<f64>,
    classes: ClassLabels,
    n_features: usize,
}

impl TrainingSet {
    pub fn from_bundle(bundle: &InstanceBundle) -> Result<Self> {
        if bundle.outputs.len() != bundle.perturbations.len() {
            return Err(Error::dim(
                bundle.perturbations.len(),
                bundle.outputs.len(),
                "model outputs per perturbation",
            ));
        }
        let reduced = bundle
            .perturbations
            .iter()
            .map(|y| select(y, &bundle.features))
            .collect::<Result<Vec<_>>>()?;
        let pis = bundle
            .perturbations
            .iter()
            .map(|y| y.pi_weight())
            .collect::<Result<Vec<_>>>()?;
        Self::new(reduced, pis, bundle.outputs.clone(), bundle.features.len())
    }

    /// Explicit reduced vectors, π weights and model outputs.
    pub fn new(
        reduced: Vec<Vec<bool>>,
        pis: Vec<f64>,
        outputs: Vec<ClassDistribution>,
        n_features: usize,
    ) -> Result<Self> {
        if outputs.is_empty() {
            return Err(Error::invalid("empty training set"));
        }
        if reduced.len() != outputs.len() || pis.len() != outputs.len() {
            return Err(Error::dim(
                outputs.len(),
                reduced.len().min(pis.len()),
                "training set",
            ));
        }
        let classes = outputs[0].labels().clone();
        let mut ids: HashMap<Vec<bool>, usize> = HashMap::new();
        let mut patterns = Vec::new();
        let n = outputs.len();
        let mut pattern_of = Vec::with_capacity(n);
        let mut pi_all = Vec::with_capacity(n);
        let mut target = Vec::with_capacity(n * classes.len());
        for ((z, pi), q) in reduced.into_iter().zip(pis).zip(outputs) {
            if z.len() != n_features {
                return Err(Error::dim(n_features, z.len(), "reduced perturbation"));
            }
            if q.num_classes() != classes.len() {
                return Err(Error::dim(classes.len(), q.num_classes(), "model output"));
            }
            let next = patterns.len();
            let pattern = *ids.entry(z).or_insert_with_key(|z| {
                patterns.push((0..z.len()).filter(|&j| z[j]).collect());
                next
            });
            pattern_of.push(pattern);
            pi_all.push(pi);
            target.extend_from_slice(q.probs());
        }
        let c = classes.len();
        let sqrt_target: Vec<f64> = target.iter().map(|p| p.sqrt()).collect();
        let weighted_sqrt: Vec<f64> = sqrt_target
            .iter()
            .enumerate()
            .map(|(e, s)| pi_all[e / c] * s)
            .collect();
        let mut pattern_pi = vec![0.0; patterns.len()];
        let mut pattern_sqrt = vec![0.0; patterns.len() * c];
        for (i, &z) in pattern_of.iter().enumerate() {
            pattern_pi[z] += pi_all[i];
            for k in 0..c {
                pattern_sqrt[z * c + k] += weighted_sqrt[i * c + k];
            }
        }
        Ok(TrainingSet {
            pattern_of,
            pi: pi_all,
            sqrt_target,
            weighted_sqrt,
            target,
            patterns,
            pattern_pi,
            pattern_sqrt,
            classes,
            n_features,
        })
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn classes(&self) -> &ClassLabels {
        &self.classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    fn example(&self, i: usize) -> (f64, &[f64], &[f64]) {
        let c = self.classes.len();
        (
            self.pi[i],
            &self.target[i * c..(i + 1) * c],
            &self.sqrt_target[i * c..(i + 1) * c],
        )
    }

    /// Number of distinct reduced vectors.
    pub fn n_patterns(&self) -> usize {
        self.patterns.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epochs: usize,
    pub converged: bool,
    pub seed: u64,
    /// Full-data loss after each epoch.
    pub loss_history: Vec<f64>,
}

/// `C × f_x` matrix; entry `(c, j)` is feature `j`'s contribution to the
/// class-`c` logit of the surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationMatrix {
    classes: ClassLabels,
    features: Vec<String>,
    weights: Vec<f64>,
    pub diagnostics: Option<FitDiagnostics>,
}

impl ExplanationMatrix {
    pub fn zeros(classes: ClassLabels, features: Vec<String>) -> Self {
        let n = classes.len() * features.len();
        ExplanationMatrix {
            classes,
            features,
            weights: vec![0.0; n],
            diagnostics: None,
        }
    }

    /// Row-major weights.
    pub fn from_rows(
        classes: ClassLabels,
        features: Vec<String>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        if rows.len() != classes.len() {
            return Err(Error::dim(classes.len(), rows.len(), "matrix rows"));
        }
        let mut weights = Vec::with_capacity(classes.len() * features.len());
        for r in rows {
            if r.len() != features.len() {
                return Err(Error::dim(features.len(), r.len(), "matrix row"));
            }
            if r.iter().any(|w| !w.is_finite()) {
                return Err(Error::invalid("non-finite matrix entry"));
            }
            weights.extend_from_slice(r);
        }
        Ok(ExplanationMatrix {
            classes,
            features,
            weights,
            diagnostics: None,
        })
    }

    pub fn classes(&self) -> &ClassLabels {
        &self.classes
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn get(&self, c: usize, j: usize) -> f64 {
        self.weights[c * self.features.len() + j]
    }

    pub fn row(&self, c: usize) -> &[f64] {
        let f = self.features.len();
        &self.weights[c * f..(c + 1) * f]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_classes())
            .map(|c| self.row(c).to_vec())
            .collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.weights.iter_mut().for_each(|w| *w *= alpha);
        out
    }

    /// `softmax(W z″)`.
    pub fn surrogate_predict(&self, z: &[bool]) -> Result<ClassDistribution> {
        if z.len() != self.n_features() {
            return Err(Error::dim(
                self.n_features(),
                z.len(),
                "reduced perturbation",
            ));
        }
        let active: Vec<usize> = (0..z.len()).filter(|&j| z[j]).collect();
        let mut logits = vec![0.0; self.n_classes()];
        self.logits_into(&active, &mut logits);
        let mut probs = vec![0.0; logits.len()];
        softmax_into(&logits, &mut probs);
        ClassDistribution::normalized(probs, self.classes.clone(), 1e-9)
    }

    fn logits_into(&self, active: &[usize], out: &mut [f64]) {
        let f = self.features.len();
        for (c, o) in out.iter_mut().enumerate() {
            let row = &self.weights[c * f..(c + 1) * f];
            *o = active.iter().map(|&j| row[j]).sum();
        }
    }

    /// Column indices of the `k` largest `|W[c, ·]|`, descending; ties go
    /// to the smaller index.
    pub fn top_k(&self, class: usize, k: usize) -> Result<Vec<usize>> {
        if class >= self.n_classes() {
            return Err(Error::Range {
                requested: class + 1,
                available: self.n_classes(),
            });
        }
        top_k_by_magnitude(self.row(class), k)
    }

    /// Feature names of [`Self::top_k`].
    pub fn top_k_features(&self, class: usize, k: usize) -> Result<Vec<String>> {
        Ok(self
            .top_k(class, k)?
            .into_iter()
            .map(|j| self.features[j].clone())
            .collect())
    }
}

pub(crate) fn top_k_by_magnitude(row: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > row.len() {
        return Err(Error::Range {
            requested: k,
            available: row.len(),
        });
    }
    let mut idx: Vec<usize> = (0..row.len()).collect();
    // stable sort keeps smaller indices first among equal magnitudes
    idx.sort_by(|&a, &b| row[b].abs().total_cmp(&row[a].abs()));
    idx.truncate(k);
    Ok(idx)
}

/// Free-function form of [`ExplanationMatrix::surrogate_predict`].
pub fn surrogate_predict(w: &ExplanationMatrix, z: &[bool]) -> Result<ClassDistribution> {
    w.surrogate_predict(z)
}

/// Free-function form of [`ExplanationMatrix::top_k_features`].
pub fn top_k_features(w: &ExplanationMatrix, class: usize, k: usize) -> Result<Vec<String>> {
    w.top_k_features(class, k)
}

fn check_shape(w: &ExplanationMatrix, set: &TrainingSet) -> Result<()> {
    if w.n_features() != set.n_features {
        return Err(Error::dim(set.n_features, w.n_features(), "matrix columns"));
    }
    if w.n_classes() != set.classes.len() {
        return Err(Error::dim(set.classes.len(), w.n_classes(), "matrix rows"));
    }
    Ok(())
}

/// Surrogate probabilities (and their square roots) per pattern, filled
/// lazily and invalidated by bumping `stamp`. Gradient accumulators have
/// their own stamp so probabilities can outlive a batch.
struct PatternCache {
    stamp: u64,
    seen: Vec<u64>,
    grad_stamp: u64,
    grad_seen: Vec<u64>,
    probs: Vec<f64>,
    sqrt_probs: Vec<f64>,
    /// Per-pattern logit-gradient accumulator.
    grad: Vec<f64>,
    touched: Vec<usize>,
    logits: Vec<f64>,
    /// `exp((W[k, j] − max_k W[·, j]) / 2)`; a pattern's unnormalized
    /// `√p_k` is the product over its active columns.
    factors: Vec<f64>,
    factors_stamp: u64,
    factored: bool,
    c: usize,
}

impl PatternCache {
    fn new(set: &TrainingSet) -> Self {
        let c = set.classes.len();
        let n = set.patterns.len();
        PatternCache {
            stamp: 0,
            seen: vec![u64::MAX; n],
            grad_stamp: 0,
            grad_seen: vec![u64::MAX; n],
            probs: vec![0.0; n * c],
            sqrt_probs: vec![0.0; n * c],
            grad: vec![0.0; n * c],
            touched: Vec::new(),
            logits: vec![0.0; c],
            factors: Vec::new(),
            factors_stamp: u64::MAX,
            factored: false,
            c,
        }
    }

    fn invalidate(&mut self) {
        self.stamp += 1;
        self.begin_batch();
    }

    fn begin_batch(&mut self) {
        self.grad_stamp += 1;
        self.touched.clear();
    }

    /// Falls back to direct softmax when the column spreads are wide enough
    /// for the products to underflow.
    fn refresh_factors(&mut self, w: &ExplanationMatrix) {
        let (c, f) = (self.c, w.n_features());
        self.factors_stamp = self.stamp;
        self.factors.resize(c * f, 0.0);
        let mut spread = 0.0;
        for j in 0..f {
            let column = (0..c).map(|k| w.weights[k * f + j]);
            let hi = column.clone().fold(f64::NEG_INFINITY, f64::max);
            let lo = column.fold(f64::INFINITY, f64::min);
            spread += 0.5 * (hi - lo);
            for k in 0..c {
                self.factors[k * f + j] = (0.5 * (w.weights[k * f + j] - hi)).exp();
            }
        }
        self.factored = spread < 300.0;
    }

    /// Ensures pattern `z` is evaluated under `w`; returns its offset.
    fn get(&mut self, w: &ExplanationMatrix, set: &TrainingSet, z: usize) -> usize {
        let off = z * self.c;
        if self.seen[z] != self.stamp {
            self.seen[z] = self.stamp;
            if self.factors_stamp != self.stamp {
                self.refresh_factors(w);
            }
            let (c, active) = (self.c, &set.patterns[z]);
            if self.factored {
                let f = w.n_features();
                let mut total = 0.0;
                for k in 0..c {
                    let row = &self.factors[k * f..(k + 1) * f];
                    let s: f64 = active.iter().map(|&j| row[j]).product();
                    self.sqrt_probs[off + k] = s;
                    total += s * s;
                }
                for k in 0..c {
                    let s = self.sqrt_probs[off + k];
                    let p = s * s / total;
                    self.probs[off + k] = p;
                    self.sqrt_probs[off + k] = p.sqrt();
                }
            } else {
                w.logits_into(active, &mut self.logits);
                let p = &mut self.probs[off..off + c];
                softmax_into(&self.logits, p);
                for (s, &pk) in self.sqrt_probs[off..off + c].iter_mut().zip(p.iter()) {
                    *s = pk.sqrt();
                }
            }
        }
        if self.grad_seen[z] != self.grad_stamp {
            self.grad_seen[z] = self.grad_stamp;
            self.touched.push(z);
            self.grad[off..off + self.c]
                .iter_mut()
                .for_each(|g| *g = 0.0);
        }
        off
    }
}

/// Per-example distance and, optionally, its gradient with respect to the
/// surrogate logits added into `grad`.
fn example_term(
    probs: &[f64],
    sqrt_probs: &[f64],
    (pi, target, sqrt_target): (f64, &[f64], &[f64]),
    distance: LossDistance,
    grad: Option<&mut [f64]>,
) -> f64 {
    match distance {
        LossDistance::SquaredHellinger => {
            let mut value = 0.0;
            let mut bc = 0.0;
            for c in 0..probs.len() {
                let d = sqrt_probs[c] - sqrt_target[c];
                value += d * d;
                bc += sqrt_probs[c] * sqrt_target[c];
            }
            if let Some(g) = grad {
                // ∂H²/∂s_k = ½ (p_k·BC − √(p_k q_k)); the model side is constant.
                for k in 0..probs.len() {
                    g[k] += 0.5 * pi * (probs[k] * bc - sqrt_probs[k] * sqrt_target[k]);
                }
            }
            0.5 * value
        }
        LossDistance::TotalVariation => {
            let mut value = 0.0;
            let mut mean_sign = 0.0;
            for c in 0..probs.len() {
                let d = probs[c] - target[c];
                value += d.abs();
                mean_sign += d.signum() * probs[c];
            }
            if let Some(g) = grad {
                for k in 0..probs.len() {
                    let s = (probs[k] - target[k]).signum();
                    g[k] += 0.5 * pi * probs[k] * (s - mean_sign);
                }
            }
            0.5 * value
        }
    }
}

/// Empirical risk: `(1/|S|) Σ π(1,y)·D(g(select(y)), h(T(y))) + (λ/2)‖W‖²_F`.
pub fn loss(
    w: &ExplanationMatrix,
    set: &TrainingSet,
    lambda: f64,
    distance: LossDistance,
) -> Result<f64> {
    check_shape(w, set)?;
    Ok(loss_cached(
        w,
        set,
        lambda,
        distance,
        &mut PatternCache::new(set),
        false,
    ))
}

/// With `per_pattern`, the squared Hellinger term is summed in closed form
/// per distinct vector, which is faster but loses a few ulps near zero.
fn loss_cached(
    w: &ExplanationMatrix,
    set: &TrainingSet,
    lambda: f64,
    distance: LossDistance,
    cache: &mut PatternCache,
    per_pattern: bool,
) -> f64 {
    cache.invalidate();
    let c = cache.c;
    let mut data = 0.0;
    match distance {
        // Σ_e π_e·H²(p, q_e) = Σ π − √p·Σ π√q for normalized p and q
        LossDistance::SquaredHellinger if per_pattern => {
            for z in 0..set.patterns.len() {
                let a = set.pattern_pi[z];
                if a == 0.0 {
                    continue;
                }
                let off = cache.get(w, set, z);
                let b = &set.pattern_sqrt[z * c..(z + 1) * c];
                let bc: f64 = cache.sqrt_probs[off..off + c]
                    .iter()
                    .zip(b)
                    .map(|(s, b)| s * b)
                    .sum();
                data += a - bc;
            }
        }
        _ => {
            for i in 0..set.len() {
                let pi = set.pi[i];
                if pi == 0.0 {
                    continue;
                }
                let off = cache.get(w, set, set.pattern_of[i]);
                let (p, sp) = (&cache.probs[off..off + c], &cache.sqrt_probs[off..off + c]);
                data += pi * example_term(p, sp, set.example(i), distance, None);
            }
        }
    }
    let reg: f64 = w.weights.iter().map(|v| v * v).sum();
    data / set.len() as f64 + 0.5 * lambda * reg
}

/// Analytic gradient of the minibatch risk over `batch` (indices into the
/// training set), row-major like the weights.
pub fn loss_gradient(
    w: &ExplanationMatrix,
    set: &TrainingSet,
    batch: &[usize],
    lambda: f64,
    distance: LossDistance,
) -> Result<Vec<f64>> {
    check_shape(w, set)?;
    let mut grad = vec![0.0; w.weights.len()];
    accumulate_gradient(
        w,
        set,
        batch,
        lambda,
        distance,
        &mut grad,
        &mut PatternCache::new(set),
        false,
    );
    Ok(grad)
}

#[allow(clippy::too_many_arguments)]
fn accumulate_gradient(
    w: &ExplanationMatrix,
    set: &TrainingSet,
    batch: &[usize],
    lambda: f64,
    distance: LossDistance,
    grad: &mut [f64],
    cache: &mut PatternCache,
    weights_unchanged: bool,
) {
    let c = cache.c;
    let f = w.n_features();
    if weights_unchanged {
        cache.begin_batch();
    } else {
        cache.invalidate();
    }
    for &i in batch {
        let z = set.pattern_of[i];
        if set.pi[i] == 0.0 || set.patterns[z].is_empty() {
            continue;
        }
        let off = cache.get(w, set, z);
        let PatternCache {
            probs,
            sqrt_probs,
            grad: pg,
            ..
        } = cache;
        match distance {
            // collect Σ π√q per pattern; the gradient is formed below
            LossDistance::SquaredHellinger => {
                for (g, v) in pg[off..off + c]
                    .iter_mut()
                    .zip(&set.weighted_sqrt[i * c..(i + 1) * c])
                {
                    *g += v;
                }
            }
            LossDistance::TotalVariation => {
                example_term(
                    &probs[off..off + c],
                    &sqrt_probs[off..off + c],
                    set.example(i),
                    distance,
                    Some(&mut pg[off..off + c]),
                );
            }
        }
    }
    if distance == LossDistance::SquaredHellinger {
        // ∂/∂s_k Σ π·H² = ½ (p_k·√p·B − √p_k·B_k) with B = Σ π√q
        for &z in &cache.touched {
            let off = z * c;
            let (p, sp) = (&cache.probs[off..off + c], &cache.sqrt_probs[off..off + c]);
            let b = &mut cache.grad[off..off + c];
            let bc: f64 = sp.iter().zip(b.iter()).map(|(s, b)| s * b).sum();
            for k in 0..c {
                b[k] = 0.5 * (p[k] * bc - sp[k] * b[k]);
            }
        }
    }
    grad.iter_mut().for_each(|g| *g = 0.0);
    for &z in &cache.touched {
        let gz = &cache.grad[z * c..(z + 1) * c];
        for (k, gk) in gz.iter().enumerate() {
            let row = &mut grad[k * f..(k + 1) * f];
            for &j in &set.patterns[z] {
                row[j] += gk;
            }
        }
    }
    let inv = 1.0 / batch.len().max(1) as f64;
    for (g, wv) in grad.iter_mut().zip(&w.weights) {
        *g = *g * inv + lambda * wv;
    }
}

/// Fits `W` from zero by minibatch gradient descent. Stops after
/// `max_epochs` or when the epoch-to-epoch loss change drops below
/// `tolerance`; returns the lowest-loss iterate.
pub fn fit(bundle: &InstanceBundle, cfg: &FitConfig) -> Result<ExplanationMatrix> {
    let set = TrainingSet::from_bundle(bundle)?;
    fit_training_set(&set, bundle.features.names.clone(), cfg)
}

pub fn fit_training_set(
    set: &TrainingSet,
    feature_names: Vec<String>,
    cfg: &FitConfig,
) -> Result<ExplanationMatrix> {
    cfg.validate()?;
    if feature_names.len() != set.n_features {
        return Err(Error::dim(
            set.n_features,
            feature_names.len(),
            "feature names",
        ));
    }
    let mut w = ExplanationMatrix::zeros(set.classes.clone(), feature_names);
    let mut cache = PatternCache::new(set);
    let initial_loss = loss_cached(&w, set, cfg.lambda, cfg.distance, &mut cache, false);
    let initial = loss_cached(&w, set, cfg.lambda, cfg.distance, &mut cache, true);
    let mut best = w.weights.clone();
    let mut best_loss = initial;
    let mut prev = initial;
    let mut history = Vec::with_capacity(cfg.max_epochs);
    let mut converged = false;
    let mut rng = seed::rng(cfg.seed);
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut grad = vec![0.0; w.weights.len()];

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            // the first batch sees the weights the last loss pass evaluated
            accumulate_gradient(
                &w,
                set,
                batch,
                cfg.lambda,
                cfg.distance,
                &mut grad,
                &mut cache,
                b == 0,
            );
            for (wv, g) in w.weights.iter_mut().zip(&grad) {
                *wv -= cfg.learning_rate * g;
            }
        }
        let current = loss_cached(&w, set, cfg.lambda, cfg.distance, &mut cache, true);
        if !current.is_finite() {
            return Err(Error::Divergence {
                epoch: epoch + 1,
                learning_rate: cfg.learning_rate,
            });
        }
        history.push(current);
        if current < best_loss {
            best_loss = current;
            best.copy_from_slice(&w.weights);
        }
        if (prev - current).abs() < cfg.tolerance {
            converged = true;
            break;
        }
        prev = current;
    }
    w.weights = best;
    let final_loss = loss_cached(&w, set, cfg.lambda, cfg.distance, &mut cache, false);
    w.diagnostics = Some(FitDiagnostics {
        initial_loss,
        final_loss,
        epochs: history.len(),
        converged,
        seed: cfg.seed,
        loss_history: history,
    });
    Ok(w)
}
