//! Greedy forward selection scored by ridge R², run once per class, and
//! the union of the per-class picks that defines the explanation's
//! feature space.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::ClassDistribution;
use crate::error::{Error, Result};
use crate::linalg::{centered_cross, ridge_solve, CenteredGram};
use crate::perturbation::{BooleanPerturbation, PerturbationSet};

pub const DEFAULT_PER_CLASS_K: usize = 5;
pub const DEFAULT_SELECTION_RIDGE: f64 = 1.0;

/// Design matrix with its centred Gram precomputed, so each candidate fit
/// costs one small Cholesky solve.
pub struct SelectionDesign {
    rows: Vec<Vec<f64>>,
    gram: CenteredGram,
}

impl SelectionDesign {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::dim(p, r.len(), "design row"));
        }
        let gram = CenteredGram::new(&rows, None);
        Ok(SelectionDesign { rows, gram })
    }

    pub fn from_perturbations(perts: &[BooleanPerturbation]) -> Result<Self> {
        Self::from_rows(
            perts
                .iter()
                .map(|p| {
                    p.bits()
                        .iter()
                        .map(|&b| if b { 1.0 } else { 0.0 })
                        .collect()
                })
                .collect(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.gram.means.len()
    }
}

/// Ordered picks of one forward-selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub picks: Vec<usize>,
    /// Training R² after each pick.
    pub r2: Vec<f64>,
    /// Target had no variance; `picks` are the first `k` columns.
    pub degenerate_target: bool,
}

/// Greedy forward selection with ridge regression (intercept unpenalised),
/// scored by training R². Ties go to the smaller column index.
pub fn forward_select(
    design: &SelectionDesign,
    y: &[f64],
    k: usize,
    ridge: f64,
) -> Result<Selection> {
    let n = design.n_rows();
    let p = design.n_features();
    if y.len() != n {
        return Err(Error::dim(n, y.len(), "selection target"));
    }
    if k > p {
        return Err(Error::Range {
            requested: k,
            available: p,
        });
    }
    if k == 0 {
        return Ok(Selection {
            picks: Vec::new(),
            r2: Vec::new(),
            degenerate_target: false,
        });
    }
    if n < 2 {
        return Err(Error::invalid("forward selection needs at least two rows"));
    }
    let (cross, _, sst) = centered_cross(&design.rows, y, None);
    let scale: f64 = y.iter().map(|v| v * v).sum::<f64>().max(1.0);
    if sst <= 1e-14 * scale {
        log::warn!("constant selection target; returning the first {k} features");
        return Ok(Selection {
            picks: (0..k).collect(),
            r2: vec![f64::NAN; k],
            degenerate_target: true,
        });
    }
    let g = &design.gram.gram;
    let mut picks: Vec<usize> = Vec::with_capacity(k);
    let mut scores = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        let mut subset = picks.clone();
        subset.push(0);
        for j in (0..p).filter(|j| !picks.contains(j)) {
            *subset.last_mut().unwrap() = j;
            let score = ridge_r2(g, &cross, sst, &subset, ridge)?;
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        let (j, s) = best.expect("at least one candidate remains");
        picks.push(j);
        scores.push(s);
    }
    Ok(Selection {
        picks,
        r2: scores,
        degenerate_target: false,
    })
}

fn ridge_r2(
    gram: &DMatrix<f64>,
    cross: &DVector<f64>,
    sst: f64,
    subset: &[usize],
    ridge: f64,
) -> Result<f64> {
    let m = subset.len();
    let g = DMatrix::from_fn(m, m, |a, b| gram[(subset[a], subset[b])]);
    let b = DVector::from_fn(m, |a, _| cross[subset[a]]);
    let beta = ridge_solve(&g, &b, ridge).ok_or(Error::Singular { alpha: ridge })?;
    let sse = sst - 2.0 * beta.dot(&b) + (g * &beta).dot(&beta);
    Ok(1.0 - sse / sst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTrace {
    pub class: String,
    pub picks: Vec<usize>,
    pub r2: Vec<f64>,
    pub degenerate_target: bool,
}

/// The `f_x` selected units, in order of first appearance across the
/// per-class passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedFeatureSet {
    pub indices: Vec<usize>,
    pub names: Vec<String>,
    /// `|x|`, the width of the full perturbation vectors.
    pub width: usize,
    pub trace: Vec<ClassTrace>,
}

impl SelectedFeatureSet {
    /// Every unit, in vocabulary order.
    pub fn all(names: &[String]) -> Self {
        SelectedFeatureSet {
            indices: (0..names.len()).collect(),
            names: names.to_vec(),
            width: names.len(),
            trace: Vec::new(),
        }
    }

    /// Explicit indices into a vocabulary of `names`.
    pub fn from_indices(indices: Vec<usize>, names: &[String]) -> Result<Self> {
        let mut seen = vec![false; names.len()];
        for &i in &indices {
            if i >= names.len() {
                return Err(Error::Range {
                    requested: i + 1,
                    available: names.len(),
                });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!("feature {i} selected twice")));
            }
        }
        Ok(SelectedFeatureSet {
            names: indices.iter().map(|&i| names[i].clone()).collect(),
            indices,
            width: names.len(),
            trace: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn trace_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.trace)?)
    }
}

/// Runs [`forward_select`] once per class column of `outputs` and unions
/// the picks. `per_class_k` is capped at `|x|`.
pub fn build_feature_space(
    set: &PerturbationSet,
    outputs: &[ClassDistribution],
    unit_names: &[String],
    per_class_k: usize,
    ridge: f64,
) -> Result<SelectedFeatureSet> {
    if outputs.len() != set.len() {
        return Err(Error::dim(
            set.len(),
            outputs.len(),
            "model outputs per perturbation",
        ));
    }
    if unit_names.len() != set.width() {
        return Err(Error::dim(set.width(), unit_names.len(), "unit names"));
    }
    let design = SelectionDesign::from_perturbations(set.as_slice())?;
    let k = per_class_k.min(set.width());
    let classes = outputs.first().map_or(0, ClassDistribution::num_classes);
    let labels = outputs.first().map(|o| o.labels().clone());
    let mut indices = Vec::new();
    let mut trace = Vec::with_capacity(classes);
    for c in 0..classes {
        let y: Vec<f64> = outputs.iter().map(|o| o.probs()[c]).collect();
        let sel = forward_select(&design, &y, k, ridge)?;
        for &j in &sel.picks {
            if !indices.contains(&j) {
                indices.push(j);
            }
        }
        trace.push(ClassTrace {
            class: labels
                .as_ref()
                .and_then(|l| l.get(c))
                .unwrap_or_default()
                .to_string(),
            picks: sel.picks,
            r2: sel.r2,
            degenerate_target: sel.degenerate_target,
        });
    }
    Ok(SelectedFeatureSet {
        names: indices.iter().map(|&i| unit_names[i].clone()).collect(),
        indices,
        width: set.width(),
        trace,
    })
}

/// Projection of a full-width perturbation onto the selected coordinates.
pub fn select(y: &BooleanPerturbation, feats: &SelectedFeatureSet) -> Result<Vec<bool>> {
    if y.width() != feats.width {
        return Err(Error::dim(feats.width, y.width(), "perturbation width"));
    }
    Ok(feats.indices.iter().map(|&i| y.bits()[i]).collect())
}
