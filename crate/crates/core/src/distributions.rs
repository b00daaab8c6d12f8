//! Points on the class simplex and the distances between them.
//!
//! Every distance has a slice-level form (`*_probs`) used by the hot loops
//! and a [`ClassDistribution`]-level form that also checks the class
//! ordering.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-entry tolerance for simplex membership and distribution equality.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Shared, ordered class names. Cloning is a reference-count bump.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct ClassLabels(Arc<[String]>);

impl ClassLabels {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ClassLabels(names.into_iter().map(Into::into).collect())
    }

    /// `class_0 .. class_{n-1}`.
    pub fn numbered(n: usize) -> Self {
        Self::new((0..n).map(|c| format!("class_{c}")))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn get(&self, c: usize) -> Option<&str> {
        self.0.get(c).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|n| n == name)
    }

    fn same_as(&self, other: &ClassLabels) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0 == other.0
    }
}

impl fmt::Debug for ClassLabels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl From<Vec<String>> for ClassLabels {
    fn from(v: Vec<String>) -> Self {
        ClassLabels(v.into())
    }
}

impl From<ClassLabels> for Vec<String> {
    fn from(l: ClassLabels) -> Self {
        l.0.to_vec()
    }
}

/// A probability vector over an ordered set of classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    probs: Vec<f64>,
    labels: ClassLabels,
}

impl ClassDistribution {
    /// Validates non-negativity and that the entries sum to one within
    /// [`SIMPLEX_TOL`].
    pub fn new(probs: Vec<f64>, labels: ClassLabels) -> Result<Self> {
        if probs.len() != labels.len() {
            return Err(Error::dim(labels.len(), probs.len(), "class distribution"));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!("probabilities sum to {total}")));
        }
        Ok(ClassDistribution { probs, labels })
    }

    /// Accepts a vector that sums to one within `tol` and renormalizes it.
    /// Used for outputs that crossed a text serialization boundary.
    pub fn normalized(mut probs: Vec<f64>, labels: ClassLabels, tol: f64) -> Result<Self> {
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > tol {
            return Err(Error::invalid(format!("probabilities sum to {total}")));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Self::new(probs, labels)
    }

    pub fn uniform(labels: ClassLabels) -> Self {
        let c = labels.len();
        ClassDistribution {
            probs: vec![1.0 / c as f64; c],
            labels,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn labels(&self) -> &ClassLabels {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Index of the largest probability; ties go to the smaller index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    /// Entry-wise equality within [`SIMPLEX_TOL`].
    pub fn approx_eq(&self, other: &ClassDistribution) -> bool {
        self.probs.len() == other.probs.len()
            && self
                .probs
                .iter()
                .zip(&other.probs)
                .all(|(a, b)| (a - b).abs() <= SIMPLEX_TOL)
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax into a caller-provided buffer.
pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

pub fn softmax_probs(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    out
}

/// Softmax over `logits`, labelled with `labels`.
pub fn softmax(logits: &[f64], labels: ClassLabels) -> Result<ClassDistribution> {
    if logits.len() < 2 {
        return Err(Error::invalid("softmax needs at least two classes"));
    }
    if logits.len() != labels.len() {
        return Err(Error::dim(labels.len(), logits.len(), "softmax logits"));
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::invalid("non-finite logit"));
    }
    Ok(ClassDistribution {
        probs: softmax_probs(logits),
        labels,
    })
}

fn check_pair(p: &ClassDistribution, q: &ClassDistribution) -> Result<()> {
    if p.probs.len() != q.probs.len() {
        return Err(Error::dim(
            p.probs.len(),
            q.probs.len(),
            "distribution pair",
        ));
    }
    if !p.labels.same_as(&q.labels) {
        return Err(Error::invalid(
            "distributions use different class orderings",
        ));
    }
    Ok(())
}

/// `Σ (√p − √q)² / 2`, no square roots taken at the end.
pub fn squared_hellinger_probs(p: &[f64], q: &[f64]) -> f64 {
    let s: f64 = p
        .iter()
        .zip(q)
        .map(|(a, b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum();
    (0.5 * s).min(1.0)
}

pub fn hellinger_probs(p: &[f64], q: &[f64]) -> f64 {
    squared_hellinger_probs(p, q).sqrt()
}

pub fn total_variation_probs(p: &[f64], q: &[f64]) -> f64 {
    let s: f64 = p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum();
    (0.5 * s).min(1.0)
}

pub fn kl_divergence_probs(p: &[f64], q: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (c, (&a, &b)) in p.iter().zip(q).enumerate() {
        if a > 0.0 {
            if b <= 0.0 {
                return Err(Error::DivergenceUndefined { class: c });
            }
            total += a * (a / b).ln();
        }
    }
    Ok(total.max(0.0))
}

pub fn hellinger(p: &ClassDistribution, q: &ClassDistribution) -> Result<f64> {
    check_pair(p, q)?;
    Ok(hellinger_probs(&p.probs, &q.probs))
}

pub fn squared_hellinger(p: &ClassDistribution, q: &ClassDistribution) -> Result<f64> {
    check_pair(p, q)?;
    Ok(squared_hellinger_probs(&p.probs, &q.probs))
}

pub fn total_variation(p: &ClassDistribution, q: &ClassDistribution) -> Result<f64> {
    check_pair(p, q)?;
    Ok(total_variation_probs(&p.probs, &q.probs))
}

/// KL(p ‖ q) in nats.
pub fn kl_divergence(p: &ClassDistribution, q: &ClassDistribution) -> Result<f64> {
    check_pair(p, q)?;
    kl_divergence_probs(&p.probs, &q.probs)
}
