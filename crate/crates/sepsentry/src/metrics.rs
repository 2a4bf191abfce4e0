//! Imbalance-aware evaluation: ROC analysis, Mann-Whitney AUC,
//! confusion-derived precision/recall/F1, threshold policies, and the
//! structured evaluation report.

use serde::{Deserialize, Serialize};

use crate::cohort::Label;
use crate::error::{Error, Result};

/// Mann-Whitney AUC: `(#{pos > neg} + 0.5 * #{ties}) / (P * N)`.
///
/// Exact pair counting via a single descending sweep over distinct
/// scores; all intermediate quantities are integer-valued in f64.
pub fn auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    assert_eq!(scores.len(), labels.len());
    let pos_total = labels.iter().filter(|l| l.is_positive()).count();
    let neg_total = labels.len() - pos_total;
    if pos_total == 0 || neg_total == 0 {
        return Err(Error::UndefinedAuc);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut wins = 0.0f64; // pos > neg pairs
    let mut tie_halves = 0.0f64; // 0.5 per tied pair
    let mut neg_above = 0.0f64; // negatives with strictly higher score
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut pos_in_group = 0.0f64;
        let mut neg_in_group = 0.0f64;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]].is_positive() {
                pos_in_group += 1.0;
            } else {
                neg_in_group += 1.0;
            }
            j += 1;
        }
        // Each positive here beats every negative strictly below it.
        let neg_below = neg_total as f64 - neg_above - neg_in_group;
        wins += pos_in_group * neg_below;
        tie_halves += 0.5 * pos_in_group * neg_in_group;
        neg_above += neg_in_group;
        i = j;
    }
    Ok((wins + tie_halves) / (pos_total as f64 * neg_total as f64))
}

/// One ROC operating point. `threshold` is the score cutoff (predicted
/// positive iff score >= threshold); the leading (0,0) point carries
/// `+inf`, which JSON represents as null.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    #[serde(with = "json_threshold")]
    pub threshold: f64,
}

mod json_threshold {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        if value.is_finite() {
            serializer.serialize_some(value)
        } else {
            serializer.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(deserializer)?.unwrap_or(f64::INFINITY))
    }
}

/// ROC curve with one point per distinct score, descending, plus the
/// leading (0,0). Tied scores collapse to a single point.
pub fn roc_curve(scores: &[f64], labels: &[Label]) -> Result<Vec<RocPoint>> {
    assert_eq!(scores.len(), labels.len());
    let pos_total = labels.iter().filter(|l| l.is_positive()).count();
    let neg_total = labels.len() - pos_total;
    if pos_total == 0 || neg_total == 0 {
        return Err(Error::UndefinedAuc);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]].is_positive() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg_total as f64,
            tpr: tp as f64 / pos_total as f64,
            threshold,
        });
    }
    Ok(points)
}

/// Trapezoidal area under an ROC curve.
pub fn roc_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// Confusion counts and derived rates at a fixed threshold.
/// `degenerate` marks any 0/0 rate that was clamped to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
}

/// Predicted positive iff score >= threshold (inclusive).
pub fn confusion_metrics(scores: &[f64], labels: &[Label], threshold: f64) -> ConfusionMetrics {
    assert_eq!(scores.len(), labels.len());
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l.is_positive()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let mut degenerate = false;
    let mut ratio = |num: usize, den: usize| -> f64 {
        if den == 0 {
            degenerate = true;
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        degenerate = true;
        0.0
    };
    ConfusionMetrics {
        tp,
        fp,
        tn,
        fn_,
        precision,
        recall,
        f1,
        degenerate,
    }
}

/// F1 from already-computed precision and recall.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// How the operating threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThresholdPolicy {
    /// Maximize F1; the returned cutoff is the midpoint between the best
    /// operating score and the next lower distinct score.
    MaxF1,
    /// Highest threshold whose recall is at least the target.
    RecallAtLeast(f64),
    Fixed(f64),
}

impl Default for ThresholdPolicy {
    /// Recall is prioritized; 0.80 is the default floor.
    fn default() -> Self {
        ThresholdPolicy::RecallAtLeast(0.80)
    }
}

/// Select a score threshold under the given policy. Ties prefer the
/// lower threshold.
pub fn select_threshold(scores: &[f64], labels: &[Label], policy: ThresholdPolicy) -> Result<f64> {
    let pos_total = labels.iter().filter(|l| l.is_positive()).count();
    let neg_total = labels.len() - pos_total;
    if pos_total == 0 || neg_total == 0 {
        return Err(Error::UndefinedAuc);
    }
    match policy {
        ThresholdPolicy::Fixed(t) => Ok(t),
        ThresholdPolicy::RecallAtLeast(target) => {
            if !(0.0..=1.0).contains(&target) || target <= 0.0 {
                return Err(Error::InfeasibleRecall(target));
            }
            // Threshold at the k-th largest positive score, where k is the
            // smallest count with k/P >= target, keeps recall at or above
            // the floor; no higher cutoff can.
            let mut pos_scores: Vec<f64> = scores
                .iter()
                .zip(labels)
                .filter(|(_, l)| l.is_positive())
                .map(|(&s, _)| s)
                .collect();
            pos_scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let needed = (1..=pos_total)
                .find(|&k| k as f64 / pos_total as f64 >= target)
                .unwrap_or(pos_total);
            Ok(pos_scores[needed - 1])
        }
        ThresholdPolicy::MaxF1 => {
            // Sweep distinct scores descending, tracking confusion counts
            // incrementally.
            let mut order: Vec<usize> = (0..scores.len()).collect();
            order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
            let mut tp = 0usize;
            let mut fp = 0usize;
            let mut best: Option<(f64, usize)> = None; // (f1, index into distinct list)
            let mut distinct: Vec<f64> = Vec::new();
            let mut i = 0;
            while i < order.len() {
                let s = scores[order[i]];
                while i < order.len() && scores[order[i]] == s {
                    if labels[order[i]].is_positive() {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                    i += 1;
                }
                distinct.push(s);
                let precision = tp as f64 / (tp + fp) as f64;
                let recall = tp as f64 / pos_total as f64;
                let f1 = f1_score(precision, recall);
                // >= so equal F1 resolves to the lower threshold.
                let better = match best {
                    None => true,
                    Some((best_f1, _)) => f1 >= best_f1,
                };
                if better {
                    best = Some((f1, distinct.len() - 1));
                }
            }
            let (_, idx) = best.unwrap();
            let at = distinct[idx];
            // Midpoint convention: any cutoff in (next_lower, at] selects
            // the same operating point; report the midpoint.
            Ok(match distinct.get(idx + 1) {
                Some(&next_lower) => (at + next_lower) / 2.0,
                None => at,
            })
        }
    }
}

/// Metrics for one cross-validation fold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub auc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
    pub confusion: Confusion,
    pub train_time_s: f64,
}

/// Bare confusion counts, serialized by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

impl From<ConfusionMetrics> for Confusion {
    fn from(m: ConfusionMetrics) -> Self {
        Confusion {
            tp: m.tp,
            fp: m.fp,
            tn: m.tn,
            fn_: m.fn_,
        }
    }
}

/// Unweighted means of the per-fold metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub auc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub train_time_s: f64,
}

/// Metrics over the pooled out-of-fold predictions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PooledMetrics {
    pub auc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
    pub confusion: Confusion,
    pub train_time_s: f64,
}

/// Full evaluation report: per-fold, fold-mean, and pooled metrics plus
/// the pooled ROC curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub folds: Vec<FoldMetrics>,
    pub mean: MeanMetrics,
    pub pooled: PooledMetrics,
    pub roc_points: Vec<RocPoint>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    pub fn from_json(text: &str) -> Result<EvalReport> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "report".to_string(),
            line: e.line(),
            msg: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn labels(bits: &[u8]) -> Vec<Label> {
        bits.iter().map(|&b| Label::from_u8(b).unwrap()).collect()
    }

    /// Literal O(n^2) pair-counting oracle.
    fn auc_pair_oracle(scores: &[f64], labels: &[Label]) -> f64 {
        let mut wins = 0.0;
        let mut ties = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            if !labels[i].is_positive() {
                continue;
            }
            for (j, &sj) in scores.iter().enumerate() {
                if labels[j].is_positive() {
                    continue;
                }
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    ties += 1.0;
                }
            }
        }
        (wins + 0.5 * ties) / pairs
    }

    #[test]
    fn auc_perfect_separation() {
        let s = [0.9, 0.8, 0.7, 0.1];
        let l = labels(&[1, 1, 0, 0]);
        assert_eq!(auc(&s, &l).unwrap(), 1.0);
    }

    #[test]
    fn auc_hand_counted() {
        // pos {0.8, 0.3}, neg {0.5, 0.2}: wins = 2 + 1, of 4 pairs.
        let s = [0.8, 0.3, 0.5, 0.2];
        let l = labels(&[1, 1, 0, 0]);
        assert_eq!(auc(&s, &l).unwrap(), 0.75);
    }

    #[test]
    fn auc_tie_counts_half() {
        let s = [0.5, 0.5, 0.1];
        let l = labels(&[1, 0, 0]);
        assert_eq!(auc(&s, &l).unwrap(), 0.75);
    }

    #[test]
    fn auc_single_class_errors() {
        let s = [0.5, 0.6];
        assert!(matches!(auc(&s, &labels(&[1, 1])), Err(Error::UndefinedAuc)));
    }

    #[test]
    fn auc_matches_pair_oracle_randomized() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..300 {
            let n = rng.gen_range(2..60);
            // Draw from a small grid to force ties.
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..8) as f64 / 7.0).collect();
            let lab: Vec<Label> = (0..n)
                .map(|_| if rng.gen_bool(0.4) { Label::Positive } else { Label::Negative })
                .collect();
            let pos = lab.iter().filter(|l| l.is_positive()).count();
            if pos == 0 || pos == n {
                continue;
            }
            let got = auc(&scores, &lab).unwrap();
            let want = auc_pair_oracle(&scores, &lab);
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn roc_perfect_separation_collapsed() {
        let s = [0.9, 0.9, 0.1, 0.1];
        let l = labels(&[1, 1, 0, 0]);
        let pts = roc_curve(&s, &l).unwrap();
        let xy: Vec<(f64, f64)> = pts.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(xy, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
    }

    #[test]
    fn roc_constant_scores_straight_line() {
        let s = [0.3, 0.3, 0.3];
        let l = labels(&[1, 0, 1]);
        let pts = roc_curve(&s, &l).unwrap();
        let xy: Vec<(f64, f64)> = pts.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(xy, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert!((roc_area(&pts) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn roc_area_equals_auc_randomized() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..300 {
            let n = rng.gen_range(2..80);
            let scores: Vec<f64> = (0..n)
                .map(|_| if rng.gen_bool(0.3) { rng.gen_range(0..5) as f64 } else { rng.gen::<f64>() })
                .collect();
            let lab: Vec<Label> = (0..n)
                .map(|_| if rng.gen_bool(0.35) { Label::Positive } else { Label::Negative })
                .collect();
            let pos = lab.iter().filter(|l| l.is_positive()).count();
            if pos == 0 || pos == n {
                continue;
            }
            let a = auc(&scores, &lab).unwrap();
            let area = roc_area(&roc_curve(&scores, &lab).unwrap());
            assert!((a - area).abs() < 1e-12, "{a} vs {area}");
        }
    }

    #[test]
    fn confusion_definitional() {
        // tp=3, fp=1, fn=2, tn=4 at threshold 0.5.
        let scores = [0.9, 0.8, 0.7, 0.6, 0.1, 0.2, 0.3, 0.3, 0.2, 0.1];
        let l = labels(&[1, 1, 1, 0, 1, 1, 0, 0, 0, 0]);
        let m = confusion_metrics(&scores, &l, 0.5);
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (3, 1, 2, 4));
        assert!((m.precision - 0.75).abs() < 1e-15);
        assert!((m.recall - 0.6).abs() < 1e-15);
        assert!((m.f1 - 0.6667).abs() < 1e-4);
        assert!(!m.degenerate);
    }

    #[test]
    fn f1_of_reported_precision_recall() {
        let f1 = f1_score(0.839, 0.827);
        assert!((f1 - 0.833).abs() <= 0.002, "got {f1}");
    }

    #[test]
    fn confusion_threshold_above_max_degenerate() {
        let s = [0.4, 0.2];
        let l = labels(&[1, 0]);
        let m = confusion_metrics(&s, &l, 0.9);
        assert_eq!((m.tp, m.fp), (0, 0));
        assert_eq!(m.precision, 0.0);
        assert!(m.degenerate);
    }

    #[test]
    fn threshold_max_f1_midpoint_on_separable() {
        let s = [0.9, 0.8, 0.3, 0.1];
        let l = labels(&[1, 1, 0, 0]);
        let t = select_threshold(&s, &l, ThresholdPolicy::MaxF1).unwrap();
        assert!((t - 0.55).abs() < 1e-12, "got {t}");
        let m = confusion_metrics(&s, &l, t);
        assert_eq!(m.f1, 1.0);
    }

    #[test]
    fn threshold_full_recall_at_min_positive() {
        let s = [0.9, 0.4, 0.6, 0.1];
        let l = labels(&[1, 1, 0, 0]);
        let t = select_threshold(&s, &l, ThresholdPolicy::RecallAtLeast(1.0)).unwrap();
        assert!(t <= 0.4);
        let m = confusion_metrics(&s, &l, t);
        assert_eq!(m.recall, 1.0);
    }

    #[test]
    fn threshold_matches_sweep_oracle() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.gen_range(4..40);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..10) as f64 / 9.0).collect();
            let lab: Vec<Label> = (0..n)
                .map(|_| if rng.gen_bool(0.4) { Label::Positive } else { Label::Negative })
                .collect();
            let pos = lab.iter().filter(|l| l.is_positive()).count();
            if pos == 0 || pos == n {
                continue;
            }
            let t = select_threshold(&scores, &lab, ThresholdPolicy::MaxF1).unwrap();
            let got = confusion_metrics(&scores, &lab, t).f1;
            // Exhaustive sweep over all candidate cutoffs.
            let best = scores
                .iter()
                .map(|&c| confusion_metrics(&scores, &lab, c).f1)
                .fold(0.0f64, f64::max);
            assert!((got - best).abs() < 1e-12, "{got} vs {best}");
        }
    }

    #[test]
    fn threshold_infeasible_recall_errors() {
        let s = [0.9, 0.1];
        let l = labels(&[1, 0]);
        assert!(select_threshold(&s, &l, ThresholdPolicy::RecallAtLeast(1.5)).is_err());
        assert!(select_threshold(&s, &l, ThresholdPolicy::RecallAtLeast(0.0)).is_err());
    }

    #[test]
    fn auc_label_flip_symmetry() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..100 {
            let n = rng.gen_range(4..50);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let lab: Vec<Label> = (0..n)
                .map(|_| if rng.gen_bool(0.5) { Label::Positive } else { Label::Negative })
                .collect();
            let pos = lab.iter().filter(|l| l.is_positive()).count();
            if pos == 0 || pos == n {
                continue;
            }
            let flipped: Vec<Label> = lab
                .iter()
                .map(|l| if l.is_positive() { Label::Negative } else { Label::Positive })
                .collect();
            let a = auc(&scores, &lab).unwrap();
            let b = auc(&scores, &flipped).unwrap();
            assert!((a + b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_monotone_transform_invariance() {
        let mut rng = StdRng::seed_from_u64(9);
        let n = 40;
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let lab: Vec<Label> = (0..n)
            .map(|i| if i % 3 == 0 { Label::Positive } else { Label::Negative })
            .collect();
        let transformed: Vec<f64> = scores.iter().map(|&s| (2.0 * s + 1.0).tanh()).collect();
        let a = auc(&scores, &lab).unwrap();
        let b = auc(&transformed, &lab).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}
