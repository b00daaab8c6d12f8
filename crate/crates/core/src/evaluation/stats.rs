//! Small summary statistics used by the experiments.

use serde::{Deserialize, Serialize};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        MeanStd {
            mean: mean(xs),
            std: std_dev(xs),
        }
    }
}

/// Equal-width bins on `[lo, hi]`; the last bin is closed. Values outside
/// the range are clamped into the end bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize, lo: f64, hi: f64) -> Self {
        let mut counts = vec![0; bins];
        let width = (hi - lo) / bins as f64;
        for &v in values {
            let b = ((v - lo) / width).floor();
            let b = if b.is_nan() || b < 0.0 {
                0
            } else {
                (b as usize).min(bins - 1)
            };
            counts[b] += 1;
        }
        Histogram { lo, hi, counts }
    }

    pub fn edges(&self) -> Vec<f64> {
        let n = self.counts.len();
        (0..=n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / n as f64)
            .collect()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation: Pearson correlation of average ranks. NaN
/// when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "spearman needs equal lengths");
    let (ra, rb) = (ranks(a), ranks(b));
    let (ma, mb) = (mean(&ra), mean(&rb));
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

/// `|A ∩ B| / |A ∪ B|`; two empty sets give 1.
pub fn jaccard<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let mut uniq_a: Vec<&T> = Vec::new();
    for x in a {
        if !uniq_a.contains(&x) {
            uniq_a.push(x);
        }
    }
    let mut union = uniq_a.len();
    let mut inter = 0;
    let mut seen_b: Vec<&T> = Vec::new();
    for y in b {
        if seen_b.contains(&y) {
            continue;
        }
        seen_b.push(y);
        if uniq_a.contains(&y) {
            inter += 1;
        } else {
            union += 1;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Whether `xs` never decreases by more than `slack`.
pub fn non_decreasing(xs: &[f64], slack: f64) -> bool {
    xs.windows(2).all(|w| w[1] >= w[0] - slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard(&["a", "b"], &["a", "b"]), 1.0);
        assert_eq!(jaccard(&["a"], &["b"]), 0.0);
        assert_eq!(jaccard(&["a", "b", "c"], &["b", "c", "d"]), 0.5);
        assert_eq!(jaccard::<u8>(&[], &[]), 1.0);
    }

    #[test]
    fn summary_values() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let ms = MeanStd::of(&[1.0, 3.0]);
        assert_eq!((ms.mean, ms.std), (2.0, 1.0));
        assert!(non_decreasing(&[0.0, 0.1, 0.1, 0.3], 0.0));
        assert!(!non_decreasing(&[0.0, 0.2, 0.1], 0.0));
    }

    #[test]
    fn histogram_binning() {
        let h = Histogram::new(&[0.0, 0.049, 0.05, 0.99, 1.0, 1.2, -0.1], 20, 0.0, 1.0);
        assert_eq!(h.counts[0], 3);
        assert_eq!(h.counts[1], 1);
        assert_eq!(h.counts[19], 3);
        assert_eq!(h.total(), 7);
        assert_eq!(h.edges().len(), 21);
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        // ties: ranks (1.5, 1.5, 3) vs (1, 2, 3); cov 1.5, variances 1.5 and 2
        assert!((spearman(&[0.0, 0.0, 1.0], &[1.0, 2.0, 3.0]) - 1.5 / 3f64.sqrt()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn jaccard_bounds_and_symmetry(a in proptest::collection::vec(0u8..10, 0..8), b in proptest::collection::vec(0u8..10, 0..8)) {
            let j = jaccard(&a, &b);
            prop_assert!((0.0..=1.0).contains(&j));
            prop_assert_eq!(j, jaccard(&b, &a));
            prop_assert_eq!(jaccard(&a, &a), 1.0);
        }
    }
}
