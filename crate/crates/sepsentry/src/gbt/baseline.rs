//! L2-regularized logistic regression, the pipeline's linear sanity
//! check. Columns are standardized; missing values impute to the column
//! mean (zero after centering).

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

use super::loss::sigmoid;

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineParams {
    pub l2: f64,
    pub epochs: usize,
    pub step: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            l2: 1e-3,
            epochs: 600,
            step: 0.05,
        }
    }
}

/// Linear model over standardized columns.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    pub feature_names: Vec<String>,
    means: Vec<f64>,
    stds: Vec<f64>,
    weights: Vec<f64>,
    intercept: f64,
}

fn column_moments(matrix: &FeatureMatrix) -> (Vec<f64>, Vec<f64>) {
    let cols = matrix.n_cols();
    let mut means = vec![0.0; cols];
    let mut stds = vec![1.0; cols];
    for c in 0..cols {
        let mut sum = 0.0;
        let mut count = 0usize;
        for r in 0..matrix.n_rows() {
            let v = matrix.value(r, c);
            if !v.is_nan() {
                sum += v;
                count += 1;
            }
        }
        if count == 0 {
            continue; // all-missing column contributes nothing
        }
        let mean = sum / count as f64;
        let mut var = 0.0;
        for r in 0..matrix.n_rows() {
            let v = matrix.value(r, c);
            if !v.is_nan() {
                var += (v - mean) * (v - mean);
            }
        }
        var /= count as f64;
        means[c] = mean;
        if var > 0.0 {
            stds[c] = var.sqrt();
        }
    }
    (means, stds)
}

/// Full-batch gradient descent on the regularized logistic loss. The
/// intercept is unregularized. Deterministic given (data, params).
pub fn train_logistic_baseline(
    matrix: &FeatureMatrix,
    params: &BaselineParams,
) -> Result<LogisticModel> {
    let n = matrix.n_rows();
    let cols = matrix.n_cols();
    let positives = matrix.labels.iter().filter(|l| l.is_positive()).count();
    if positives == 0 || positives == n {
        return Err(Error::DegenerateLabels);
    }

    let (means, stds) = column_moments(matrix);
    // Standardize once up front.
    let mut design = vec![0.0f64; n * cols];
    for r in 0..n {
        for c in 0..cols {
            let v = matrix.value(r, c);
            design[r * cols + c] = if v.is_nan() { 0.0 } else { (v - means[c]) / stds[c] };
        }
    }
    let targets: Vec<f64> = matrix.labels.iter().map(|l| l.as_u8() as f64).collect();

    let mut weights = vec![0.0f64; cols];
    let mut intercept = 0.0f64;
    let inv_n = 1.0 / n as f64;
    for _ in 0..params.epochs {
        let mut grad_w = vec![0.0f64; cols];
        let mut grad_b = 0.0f64;
        for r in 0..n {
            let row = &design[r * cols..(r + 1) * cols];
            let margin = intercept + row.iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>();
            let err = sigmoid(margin) - targets[r];
            grad_b += err;
            for (gw, x) in grad_w.iter_mut().zip(row) {
                *gw += err * x;
            }
        }
        for (w, gw) in weights.iter_mut().zip(&grad_w) {
            *w -= params.step * (gw * inv_n + params.l2 * *w);
        }
        intercept -= params.step * grad_b * inv_n;
    }

    Ok(LogisticModel {
        feature_names: matrix.column_names.clone(),
        means,
        stds,
        weights,
        intercept,
    })
}

impl LogisticModel {
    pub fn predict_proba(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        if matrix.column_names != self.feature_names {
            let missing: Vec<String> = self
                .feature_names
                .iter()
                .filter(|n| !matrix.column_names.contains(n))
                .cloned()
                .collect();
            let extra: Vec<String> = matrix
                .column_names
                .iter()
                .filter(|n| !self.feature_names.contains(n))
                .cloned()
                .collect();
            return Err(Error::ColumnMismatch { missing, extra });
        }
        let cols = self.feature_names.len();
        Ok((0..matrix.n_rows())
            .map(|r| {
                let mut margin = self.intercept;
                for c in 0..cols {
                    let v = matrix.value(r, c);
                    let x = if v.is_nan() { 0.0 } else { (v - self.means[c]) / self.stds[c] };
                    margin += self.weights[c] * x;
                }
                sigmoid(margin)
            })
            .collect())
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}
