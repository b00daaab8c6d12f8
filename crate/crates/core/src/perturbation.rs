//! Interpretable units of an instance, Boolean perturbations over them and
//! the map that turns a perturbation back into a model input.

use std::f64::consts::FRAC_PI_2;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::tokenize;
use crate::seed;

/// Slack on the inclusive angle boundary. `acos(√(k/n))` can land one ulp
/// above the closed-form angle (e.g. π/4 for k/n = 1/2).
const ANGLE_SLACK: f64 = 1e-12;

/// A raw instance before feature extraction.
#[derive(Debug, Clone, PartialEq)]
pub enum RawInstance {
    Text(String),
    Segments(SegmentBundle),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: u64,
    pub indices: Vec<usize>,
}

/// A flat base vector plus segment masks over its entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentBundle {
    pub base: Vec<f64>,
    pub shape: Vec<usize>,
    pub segments: Vec<Segment>,
    /// Fill value for dropped segments.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub baseline: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl SegmentBundle {
    pub fn validate(&self) -> Result<()> {
        let d = self.base.len();
        if self.shape.iter().product::<usize>() != d {
            return Err(Error::invalid(format!(
                "segment bundle shape {:?} does not match base length {d}",
                self.shape
            )));
        }
        let mut ids: Vec<u64> = self.segments.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate segment id"));
        }
        if let Some(i) = self
            .segments
            .iter()
            .flat_map(|s| &s.indices)
            .find(|&&i| i >= d)
        {
            return Err(Error::invalid(format!(
                "segment index {i} out of range for base length {d}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Segments,
}

#[derive(Debug, Clone, PartialEq)]
enum Context {
    Text {
        tokens: Vec<String>,
        /// Unit index of each token position.
        unit_of_token: Vec<usize>,
    },
    Segments(SegmentBundle),
}

/// The `|x|` interpretable units of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVocabulary {
    units: Vec<String>,
    context: Context,
}

impl FeatureVocabulary {
    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn modality(&self) -> Modality {
        match self.context {
            Context::Text { .. } => Modality::Text,
            Context::Segments(_) => Modality::Segments,
        }
    }

    pub fn unit_index(&self, name: &str) -> Option<usize> {
        self.units.iter().position(|u| u == name)
    }
}

/// Deterministic vocabulary of an instance. Text is tokenized and repeated
/// tokens collapse to a single unit in order of first occurrence.
pub fn extract_features(raw: &RawInstance) -> Result<FeatureVocabulary> {
    match raw {
        RawInstance::Text(text) => {
            let tokens = tokenize(text);
            if tokens.is_empty() {
                return Err(Error::invalid("instance has no tokens"));
            }
            let mut units: Vec<String> = Vec::new();
            let mut index = std::collections::HashMap::new();
            let unit_of_token = tokens
                .iter()
                .map(|&t| {
                    *index.entry(t).or_insert_with(|| {
                        units.push(t.to_owned());
                        units.len() - 1
                    })
                })
                .collect();
            Ok(FeatureVocabulary {
                units,
                context: Context::Text {
                    tokens: tokens.into_iter().map(str::to_owned).collect(),
                    unit_of_token,
                },
            })
        }
        RawInstance::Segments(bundle) => {
            if bundle.segments.is_empty() {
                return Err(Error::invalid("segment bundle has no segments"));
            }
            bundle.validate()?;
            Ok(FeatureVocabulary {
                units: bundle.segments.iter().map(|s| s.id.to_string()).collect(),
                context: Context::Segments(bundle.clone()),
            })
        }
    }
}

/// A subset of units retained, as a bit vector over the vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BooleanPerturbation {
    bits: Vec<bool>,
    ones: usize,
}

impl BooleanPerturbation {
    pub fn new(bits: Vec<bool>) -> Self {
        let ones = bits.iter().filter(|b| **b).count();
        BooleanPerturbation { bits, ones }
    }

    pub fn all_ones(width: usize) -> Self {
        BooleanPerturbation {
            bits: vec![true; width],
            ones: width,
        }
    }

    /// All ones except the listed positions.
    pub fn dropping(width: usize, dropped: &[usize]) -> Self {
        let mut bits = vec![true; width];
        for &d in dropped {
            bits[d] = false;
        }
        Self::new(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn width(&self) -> usize {
        self.bits.len()
    }

    pub fn ones(&self) -> usize {
        self.ones
    }

    pub fn is_all_ones(&self) -> bool {
        self.ones == self.bits.len()
    }

    /// Cosine of the angle to the all-ones vector, `√(k/|x|)`.
    pub fn cosine(&self) -> f64 {
        (self.ones as f64 / self.bits.len() as f64).sqrt()
    }

    /// Angle to the all-ones vector in radians.
    pub fn angle(&self) -> f64 {
        self.cosine().min(1.0).acos()
    }

    /// `π(1, y) = 1 − yᵀ1 / (‖y‖·‖1‖) = 1 − √(k/|x|)`.
    pub fn pi_weight(&self) -> Result<f64> {
        if self.ones == 0 {
            return Err(Error::UndefinedWeight);
        }
        Ok(1.0 - self.cosine())
    }

    /// Same vector with the given positions cleared.
    pub fn with_dropped(&self, dropped: &[usize]) -> Self {
        let mut bits = self.bits.clone();
        for &d in dropped {
            bits[d] = false;
        }
        Self::new(bits)
    }

    pub fn and(&self, other: &Self) -> Self {
        Self::new(
            self.bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a && *b)
                .collect(),
        )
    }
}

/// Free-function form of [`BooleanPerturbation::pi_weight`].
pub fn pi_weight(y: &BooleanPerturbation) -> Result<f64> {
    y.pi_weight()
}

/// Sampled perturbations of one instance. The all-ones vector comes first
/// and appears exactly once; the all-zeros vector never appears.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSet {
    perturbations: Vec<BooleanPerturbation>,
    seed: u64,
    width: usize,
}

impl PerturbationSet {
    pub fn as_slice(&self) -> &[BooleanPerturbation] {
        &self.perturbations
    }

    pub fn len(&self) -> usize {
        self.perturbations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perturbations.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn iter(&self) -> std::slice::Iter<'_, BooleanPerturbation> {
        self.perturbations.iter()
    }

    /// Builds a set from explicit vectors, enforcing the set invariants.
    pub fn from_vectors(perturbations: Vec<BooleanPerturbation>, seed: u64) -> Result<Self> {
        let width = perturbations
            .first()
            .map(BooleanPerturbation::width)
            .ok_or_else(|| Error::invalid("empty perturbation set"))?;
        if !perturbations[0].is_all_ones() {
            return Err(Error::invalid(
                "perturbation set must start with the all-ones vector",
            ));
        }
        for p in &perturbations[1..] {
            if p.width() != width {
                return Err(Error::dim(width, p.width(), "perturbation width"));
            }
            if p.ones() == 0 {
                return Err(Error::invalid("all-zeros perturbation"));
            }
            if p.is_all_ones() {
                return Err(Error::invalid("all-ones perturbation repeated"));
            }
        }
        Ok(PerturbationSet {
            perturbations,
            seed,
            width,
        })
    }

    /// Indices of perturbations within `delta` of the all-ones vector.
    pub fn indices_within(&self, delta: f64) -> Vec<usize> {
        self.perturbations
            .iter()
            .enumerate()
            .filter(|(_, p)| p.angle() <= delta + ANGLE_SLACK)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        PerturbationSet {
            perturbations: indices
                .iter()
                .map(|&i| self.perturbations[i].clone())
                .collect(),
            seed: self.seed,
            width: self.width,
        }
    }
}

/// `n` perturbations: all-ones first, then `n − 1` draws that drop a
/// uniformly random number of units in `1..|x|`, chosen uniformly.
pub fn sample_perturbations(
    vocab: &FeatureVocabulary,
    n: usize,
    seed: u64,
) -> Result<PerturbationSet> {
    if n == 0 {
        return Err(Error::invalid("need at least one perturbation"));
    }
    let width = vocab.len();
    if n > 1 && width < 2 {
        return Err(Error::DegenerateInstance(format!(
            "instance has {width} unit(s); only the all-ones vector exists"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut perturbations = Vec::with_capacity(n);
    perturbations.push(BooleanPerturbation::all_ones(width));
    for _ in 1..n {
        let drop = rng.random_range(1..width);
        let dropped = rand::seq::index::sample(&mut rng, width, drop).into_vec();
        perturbations.push(BooleanPerturbation::dropping(width, &dropped));
    }
    Ok(PerturbationSet {
        perturbations,
        seed,
        width,
    })
}

/// Keeps perturbations whose angle to all-ones is at most `delta`
/// (inclusive).
pub fn restrict_by_angle(set: &PerturbationSet, delta: f64) -> Result<PerturbationSet> {
    if !(delta > 0.0 && delta <= FRAC_PI_2 + ANGLE_SLACK) {
        return Err(Error::invalid(format!("delta {delta} outside (0, π/2]")));
    }
    Ok(set.subset(&set.indices_within(delta)))
}

/// A perturbation lifted back to the model's input space.
#[derive(Debug, Clone, PartialEq)]
pub enum Materialized {
    Text(String),
    Dense(Vec<f64>),
}

/// Text: every occurrence of a dropped unit is removed and the remaining
/// tokens are joined by single spaces. Segments: entries of dropped
/// segments are set to the bundle's baseline.
pub fn materialize(vocab: &FeatureVocabulary, y: &BooleanPerturbation) -> Result<Materialized> {
    if y.width() != vocab.len() {
        return Err(Error::dim(vocab.len(), y.width(), "perturbation width"));
    }
    match &vocab.context {
        Context::Text {
            tokens,
            unit_of_token,
        } => {
            let mut out = String::new();
            for (tok, &u) in tokens.iter().zip(unit_of_token) {
                if y.bits[u] {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(tok);
                }
            }
            Ok(Materialized::Text(out))
        }
        Context::Segments(bundle) => {
            let mut v = bundle.base.clone();
            for (seg, &keep) in bundle.segments.iter().zip(&y.bits) {
                if !keep {
                    for &i in &seg.indices {
                        v[i] = bundle.baseline;
                    }
                }
            }
            Ok(Materialized::Dense(v))
        }
    }
}
