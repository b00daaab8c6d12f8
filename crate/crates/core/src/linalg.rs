//! Ridge solves on small dense normal equations.

use nalgebra::{DMatrix, DVector};

/// Solves `(G + αI) β = b` by Cholesky. `None` when the system is not
/// positive definite.
pub(crate) fn ridge_solve(
    gram: &DMatrix<f64>,
    rhs: &DVector<f64>,
    alpha: f64,
) -> Option<DVector<f64>> {
    let mut a = gram.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += alpha;
    }
    a.cholesky().map(|c| c.solve(rhs))
}

/// Weighted Gram data with the intercept profiled out: weighted column
/// means, centred `XᵀWX` and the weighted mean of the target.
pub(crate) struct CenteredGram {
    pub means: DVector<f64>,
    pub gram: DMatrix<f64>,
}

impl CenteredGram {
    /// `weights` must be non-negative with a positive sum.
    pub fn new(rows: &[Vec<f64>], weights: Option<&[f64]>) -> Self {
        let p = rows.first().map_or(0, Vec::len);
        let total: f64 = weights.map_or(rows.len() as f64, |w| w.iter().sum());
        let mut means = DVector::zeros(p);
        let mut raw = DMatrix::zeros(p, p);
        for (i, r) in rows.iter().enumerate() {
            let w = weights.map_or(1.0, |w| w[i]);
            if w == 0.0 {
                continue;
            }
            let nz: Vec<usize> = (0..p).filter(|&j| r[j] != 0.0).collect();
            for &a in &nz {
                means[a] += w * r[a];
                for &b in &nz {
                    raw[(a, b)] += w * r[a] * r[b];
                }
            }
        }
        means /= total;
        let gram = raw - (&means * means.transpose()) * total;
        CenteredGram { means, gram }
    }
}

/// Centred cross-moment `XᵀW(y − ȳ)`, the weighted mean `ȳ` and the
/// weighted total sum of squares.
pub(crate) fn centered_cross(
    rows: &[Vec<f64>],
    y: &[f64],
    weights: Option<&[f64]>,
) -> (DVector<f64>, f64, f64) {
    let p = rows.first().map_or(0, Vec::len);
    let total: f64 = weights.map_or(rows.len() as f64, |w| w.iter().sum());
    let y_mean = y
        .iter()
        .enumerate()
        .map(|(i, v)| weights.map_or(1.0, |w| w[i]) * v)
        .sum::<f64>()
        / total;
    let mut cross = DVector::zeros(p);
    let mut sst = 0.0;
    for (i, r) in rows.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        let dy = y[i] - y_mean;
        sst += w * dy * dy;
        for j in 0..p {
            if r[j] != 0.0 {
                cross[j] += w * r[j] * dy;
            }
        }
    }
    (cross, y_mean, sst)
}
