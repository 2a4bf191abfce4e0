//! Quantile binning of a feature matrix for histogram split finding.

use rayon::prelude::*;

use crate::features::FeatureMatrix;

/// Per-feature discretization: bin `b` of feature `f` holds values `v`
/// with `edges[f][b-1] < v <= edges[f][b]`; the reserved id
/// `edges[f].len()` marks missing. Bin membership depends only on value
/// ranks, so any rank-preserving transform of a column leaves it
/// unchanged.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    /// Row-major bin ids, `n_rows x n_features`.
    bins: Vec<u16>,
    pub n_features: usize,
    /// Ascending bin upper edges per feature; the last edge is the
    /// feature's maximum, so every non-missing value maps.
    pub edges: Vec<Vec<f64>>,
}

impl BinnedMatrix {
    pub fn n_rows(&self) -> usize {
        if self.n_features == 0 {
            0
        } else {
            self.bins.len() / self.n_features
        }
    }

    #[inline]
    pub fn bin(&self, row: usize, feature: usize) -> u16 {
        self.bins[row * self.n_features + feature]
    }

    /// Number of value bins for a feature (missing id excluded).
    pub fn n_bins(&self, feature: usize) -> usize {
        self.edges[feature].len()
    }

    #[inline]
    pub fn missing_id(&self, feature: usize) -> u16 {
        self.edges[feature].len() as u16
    }
}

fn feature_edges(mut values: Vec<f64>, max_bins: usize) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut distinct: Vec<f64> = Vec::new();
    for &v in &values {
        if distinct.last() != Some(&v) {
            distinct.push(v);
        }
    }
    // A cut at sample value v becomes the midpoint to the next distinct
    // value, so decision boundaries sit between classes instead of on
    // training points; the final edge is the maximum itself.
    let midpoint_above = |v: f64| -> f64 {
        match distinct.iter().find(|&&d| d > v) {
            Some(&next) => v + (next - v) / 2.0,
            None => v,
        }
    };
    if distinct.len() <= max_bins {
        return distinct.iter().map(|&v| midpoint_above(v)).collect();
    }
    // Edges at empirical quantiles: the j/b rank of the sorted sample.
    let n = values.len();
    let mut edges = Vec::with_capacity(max_bins);
    for j in 1..=max_bins {
        let rank = (j * n) / max_bins;
        edges.push(midpoint_above(values[rank.max(1) - 1]));
    }
    edges.dedup_by(|a, b| a == b);
    debug_assert_eq!(*edges.last().unwrap(), *values.last().unwrap());
    edges
}

/// Discretize every column at empirical quantiles. Columns with at most
/// `max_bins` distinct values get one bin per value.
pub fn quantile_bin(matrix: &FeatureMatrix, max_bins: usize) -> BinnedMatrix {
    assert!((2..=u16::MAX as usize).contains(&max_bins));
    let n_rows = matrix.n_rows();
    let n_features = matrix.n_cols();

    let edges: Vec<Vec<f64>> = (0..n_features)
        .into_par_iter()
        .map(|f| {
            let values: Vec<f64> = (0..n_rows)
                .map(|r| matrix.value(r, f))
                .filter(|v| !v.is_nan())
                .collect();
            feature_edges(values, max_bins)
        })
        .collect();

    let mut bins = vec![0u16; n_rows * n_features];
    bins.par_chunks_mut(n_features)
        .enumerate()
        .for_each(|(r, row_bins)| {
            for (f, slot) in row_bins.iter_mut().enumerate() {
                let v = matrix.value(r, f);
                *slot = if v.is_nan() {
                    edges[f].len() as u16
                } else {
                    edges[f].partition_point(|&e| e < v) as u16
                };
            }
        });

    BinnedMatrix {
        bins,
        n_features,
        edges,
    }
}
