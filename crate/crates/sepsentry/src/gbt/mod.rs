//! Second-order gradient-boosted decision trees for binary
//! classification: quantile binning, histogram split finding, depth-wise
//! and leaf-wise growth, learned missing-value directions, class
//! weighting, and a lossless text model format.

pub mod baseline;
pub mod binning;
pub mod grow;
pub mod io;
pub mod loss;
pub mod split;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

use binning::quantile_bin;
use grow::{grow_tree, Tree};
use loss::{base_score, logistic_grad_hess, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Growth {
    Depthwise,
    Leafwise,
}

impl Growth {
    pub fn as_str(self) -> &'static str {
        match self {
            Growth::Depthwise => "depthwise",
            Growth::Leafwise => "leafwise",
        }
    }

    pub fn from_str_opt(s: &str) -> Option<Growth> {
        match s {
            "depthwise" => Some(Growth::Depthwise),
            "leafwise" => Some(Growth::Leafwise),
            _ => None,
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub growth: Growth,
    pub num_trees: usize,
    pub learning_rate: f64,
    /// Depth cap for depth-wise growth.
    pub max_depth: usize,
    /// Leaf cap for leaf-wise growth.
    pub max_leaves: usize,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Per-split gain penalty.
    pub gamma: f64,
    /// Minimum hessian sum per child.
    pub min_child_weight: f64,
    pub min_samples_leaf: usize,
    pub max_bins: usize,
    /// Weight multiplier on positive-class gradients.
    pub pos_weight: f64,
    /// Per-tree row sampling fraction, without replacement.
    pub subsample: f64,
    /// Per-tree feature sampling fraction.
    pub colsample: f64,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            growth: Growth::Leafwise,
            num_trees: 200,
            learning_rate: 0.1,
            max_depth: 6,
            max_leaves: 31,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1e-3,
            min_samples_leaf: 1,
            max_bins: 255,
            pos_weight: 1.0,
            subsample: 1.0,
            colsample: 1.0,
            seed: 0,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Params(msg.to_string()))
            }
        };
        check(self.learning_rate > 0.0, "learning_rate must be > 0")?;
        check(self.max_depth >= 1, "max_depth must be >= 1")?;
        check(self.max_leaves >= 2, "max_leaves must be >= 2")?;
        check(self.lambda >= 0.0, "lambda must be >= 0")?;
        check(self.gamma >= 0.0, "gamma must be >= 0")?;
        check(self.min_child_weight >= 0.0, "min_child_weight must be >= 0")?;
        check(
            (2..=u16::MAX as usize).contains(&self.max_bins),
            "max_bins must be in 2..=65535",
        )?;
        check(self.pos_weight >= 0.0, "pos_weight must be >= 0")?;
        check(
            self.subsample > 0.0 && self.subsample <= 1.0,
            "subsample must be in (0, 1]",
        )?;
        check(
            self.colsample > 0.0 && self.colsample <= 1.0,
            "colsample must be in (0, 1]",
        )?;
        Ok(())
    }
}

/// A trained ensemble. Tree thresholds are real bin edges, so prediction
/// is independent of the binning.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostedModel {
    pub base_score: f64,
    pub trees: Vec<Tree>,
    pub feature_names: Vec<String>,
    pub params: BoostParams,
}

/// Sorted sample of `k` distinct indices from `0..n`.
fn sample_indices(rng: &mut ChaCha8Rng, n: usize, fraction: f64) -> Vec<usize> {
    if fraction >= 1.0 {
        return (0..n).collect();
    }
    let k = ((n as f64 * fraction).floor() as usize).max(1);
    let mut picked = rand::seq::index::sample(rng, n, k).into_vec();
    picked.sort_unstable();
    picked
}

/// Fit an ensemble on the matrix's labels. Deterministic given
/// (data, params, seed); sampling draws from a seeded ChaCha stream.
pub fn train(matrix: &FeatureMatrix, params: &BoostParams) -> Result<BoostedModel> {
    params.validate()?;
    let n = matrix.n_rows();
    if n < 2 {
        return Err(Error::Params("training needs at least 2 rows".to_string()));
    }
    let positives = matrix.labels.iter().filter(|l| l.is_positive()).count();
    if positives == 0 || positives == n {
        return Err(Error::DegenerateLabels);
    }

    let binned = quantile_bin(matrix, params.max_bins);
    let base = base_score(&matrix.labels, params.pos_weight);
    let mut margins = vec![base; n];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut trees = Vec::with_capacity(params.num_trees);

    for _ in 0..params.num_trees {
        let mut grad = vec![0.0f64; n];
        let mut hess = vec![0.0f64; n];
        for r in 0..n {
            let (g, h) = logistic_grad_hess(matrix.labels[r], margins[r], params.pos_weight);
            grad[r] = g;
            hess[r] = h;
        }
        let rows: Vec<u32> = sample_indices(&mut rng, n, params.subsample)
            .into_iter()
            .map(|r| r as u32)
            .collect();
        let cols = sample_indices(&mut rng, matrix.n_cols(), params.colsample);
        let tree = grow_tree(&binned, &grad, &hess, rows, &cols, params);

        let outputs: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|r| tree.output(|f| matrix.value(r, f)))
            .collect();
        for (m, o) in margins.iter_mut().zip(&outputs) {
            *m += params.learning_rate * o;
        }
        trees.push(tree);
    }

    Ok(BoostedModel {
        base_score: base,
        trees,
        feature_names: matrix.column_names.clone(),
        params: params.clone(),
    })
}

impl BoostedModel {
    /// Map the model's features onto the matrix's columns, by name.
    fn column_map(&self, matrix: &FeatureMatrix) -> Result<Vec<usize>> {
        let mut map = Vec::with_capacity(self.feature_names.len());
        let mut missing = Vec::new();
        for name in &self.feature_names {
            match matrix.column_index(name) {
                Some(i) => map.push(i),
                None => missing.push(name.clone()),
            }
        }
        let extra: Vec<String> = matrix
            .column_names
            .iter()
            .filter(|n| !self.feature_names.contains(n))
            .cloned()
            .collect();
        if !missing.is_empty() || !extra.is_empty() {
            return Err(Error::ColumnMismatch { missing, extra });
        }
        Ok(map)
    }

    /// Raw margins `base + eta * sum(tree outputs)`.
    pub fn predict_margin(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        let map = self.column_map(matrix)?;
        Ok((0..matrix.n_rows())
            .into_par_iter()
            .map(|r| {
                let mut margin = self.base_score;
                for tree in &self.trees {
                    margin += self.params.learning_rate * tree.output(|f| matrix.value(r, map[f]));
                }
                margin
            })
            .collect())
    }

    /// Probabilities `sigmoid(margin)`; a strictly increasing function of
    /// the margin, so rank metrics agree on either scale.
    pub fn predict_proba(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        Ok(self.predict_margin(matrix)?.into_iter().map(sigmoid).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::Label;
    use crate::metrics::auc;
    use rand::rngs::StdRng;
    use rand::Rng;

    fn separable_matrix(rows: usize) -> FeatureMatrix {
        let mut m = FeatureMatrix::new(vec!["x".to_string(), "noise".to_string()]);
        let mut rng = StdRng::seed_from_u64(5);
        for r in 0..rows {
            let label = if r % 2 == 0 { Label::Positive } else { Label::Negative };
            let x = if label.is_positive() {
                rng.gen_range(1.0..2.0)
            } else {
                rng.gen_range(-2.0..-1.0)
            };
            m.push_row(
                format!("u{r}"),
                format!("p{r}"),
                label,
                vec![x, rng.gen_range(-1.0..1.0)],
            );
        }
        m
    }

    #[test]
    fn zero_trees_predicts_prevalence() {
        let m = separable_matrix(50);
        let params = BoostParams {
            num_trees: 0,
            ..BoostParams::default()
        };
        let model = train(&m, &params).unwrap();
        let probs = model.predict_proba(&m).unwrap();
        for p in probs {
            assert!((p - 0.5).abs() < 1e-12); // 25 of 50 positive
        }
        assert!((model.base_score - 0.0).abs() < 1e-12);
    }

    #[test]
    fn base_score_matches_paper_prevalence() {
        let mut m = FeatureMatrix::new(vec!["x".to_string()]);
        for i in 0..1000 {
            let label = if i < 244 { Label::Positive } else { Label::Negative };
            m.push_row(format!("u{i}"), format!("p{i}"), label, vec![i as f64]);
        }
        let params = BoostParams {
            num_trees: 0,
            ..BoostParams::default()
        };
        let model = train(&m, &params).unwrap();
        assert!((model.base_score - (-1.131)).abs() < 1e-3);
    }

    #[test]
    fn separable_data_trains_to_auc_one() {
        let m = separable_matrix(50);
        let params = BoostParams {
            num_trees: 20,
            learning_rate: 0.3,
            ..BoostParams::default()
        };
        let model = train(&m, &params).unwrap();
        let probs = model.predict_proba(&m).unwrap();
        assert_eq!(auc(&probs, &m.labels).unwrap(), 1.0);
    }

    #[test]
    fn pos_weight_one_is_identity() {
        let m = separable_matrix(60);
        let a = train(&m, &BoostParams { num_trees: 5, ..Default::default() }).unwrap();
        let b = train(
            &m,
            &BoostParams {
                num_trees: 5,
                pos_weight: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        let pa = a.predict_proba(&m).unwrap();
        let pb = b.predict_proba(&m).unwrap();
        for (x, y) in pa.iter().zip(&pb) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn degenerate_labels_error() {
        let mut m = FeatureMatrix::new(vec!["x".to_string()]);
        for i in 0..10 {
            m.push_row(format!("u{i}"), format!("p{i}"), Label::Negative, vec![i as f64]);
        }
        assert!(matches!(
            train(&m, &BoostParams::default()),
            Err(Error::DegenerateLabels)
        ));
    }

    #[test]
    fn training_is_seed_deterministic() {
        let m = separable_matrix(80);
        let params = BoostParams {
            num_trees: 8,
            subsample: 0.7,
            colsample: 0.5,
            seed: 42,
            ..BoostParams::default()
        };
        let a = train(&m, &params).unwrap();
        let b = train(&m, &params).unwrap();
        assert_eq!(a.trees, b.trees);
        let pa = a.predict_proba(&m).unwrap();
        let pb = b.predict_proba(&m).unwrap();
        for (x, y) in pa.iter().zip(&pb) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn all_missing_row_predicts_finite() {
        let m = separable_matrix(40);
        let model = train(&m, &BoostParams { num_trees: 10, ..Default::default() }).unwrap();
        let mut probe = FeatureMatrix::new(m.column_names.clone());
        probe.push_row(
            "u".to_string(),
            "p".to_string(),
            Label::Negative,
            vec![f64::NAN, f64::NAN],
        );
        let p = model.predict_proba(&probe).unwrap();
        assert!(p[0].is_finite());
        assert!(p[0] > 0.0 && p[0] < 1.0);
    }

    #[test]
    fn column_mismatch_lists_names() {
        let m = separable_matrix(40);
        let model = train(&m, &BoostParams { num_trees: 2, ..Default::default() }).unwrap();
        let mut probe = FeatureMatrix::new(vec!["x".to_string(), "unexpected".to_string()]);
        probe.push_row("u".to_string(), "p".to_string(), Label::Negative, vec![0.0, 0.0]);
        match model.predict_proba(&probe) {
            Err(Error::ColumnMismatch { missing, extra }) => {
                assert_eq!(missing, vec!["noise".to_string()]);
                assert_eq!(extra, vec!["unexpected".to_string()]);
            }
            other => panic!("expected column mismatch, got {other:?}"),
        }
    }

    #[test]
    fn training_logloss_non_increasing() {
        let mut rng = StdRng::seed_from_u64(3);
        let mut m = FeatureMatrix::new(vec!["a".to_string(), "b".to_string()]);
        for r in 0..200 {
            let a: f64 = rng.gen_range(-2.0..2.0);
            let b: f64 = rng.gen_range(-2.0..2.0);
            let p = 1.0 / (1.0 + (-(a + 0.5 * b + rng.gen_range(-0.5..0.5))).exp());
            let label = if rng.gen_bool(p) { Label::Positive } else { Label::Negative };
            m.push_row(format!("u{r}"), format!("p{r}"), label, vec![a, b]);
        }
        let params = BoostParams {
            num_trees: 30,
            learning_rate: 0.2,
            ..BoostParams::default()
        };
        let model = train(&m, &params).unwrap();

        // Replay the margins round by round.
        let mut margins = vec![model.base_score; m.n_rows()];
        let mut last_loss = f64::INFINITY;
        for tree in &model.trees {
            for r in 0..m.n_rows() {
                margins[r] += params.learning_rate * tree.output(|f| m.value(r, f));
            }
            let loss: f64 = (0..m.n_rows())
                .map(|r| loss::logistic_loss(m.labels[r], margins[r], params.pos_weight))
                .sum();
            assert!(loss <= last_loss + 1e-9, "{loss} > {last_loss}");
            last_loss = loss;
        }
    }

    #[test]
    fn margin_order_matches_probability_order() {
        let m = separable_matrix(30);
        let model = train(&m, &BoostParams { num_trees: 5, ..Default::default() }).unwrap();
        let margins = model.predict_margin(&m).unwrap();
        let probs = model.predict_proba(&m).unwrap();
        let a = auc(&margins, &m.labels).unwrap();
        let b = auc(&probs, &m.labels).unwrap();
        assert!((a - b).abs() < 1e-15);
    }
}
