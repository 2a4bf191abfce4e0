//! Grouped, stratified k-fold splitting by patient and the
//! cross-validation driver.
//!
//! A patient's units always travel together, so no unit's patient can
//! appear on both sides of a fold. Stratification is greedy: patients
//! are placed, largest and most positive first, into whichever fold
//! keeps its positive rate closest to the global rate.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cohort::Label;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::gbt::baseline::{train_logistic_baseline, BaselineParams};
use crate::gbt::{train, BoostParams};
use crate::metrics::{
    auc, confusion_metrics, roc_curve, select_threshold, EvalReport, FoldMetrics,
    MeanMetrics, PooledMetrics, ThresholdPolicy,
};

/// A partition of patients into k folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold(&self, patient_id: &str) -> usize {
        self.fold_of[patient_id]
    }
}

/// Greedy stratified grouped k-fold. Patients are sorted by
/// (positive units desc, units desc, id asc); the seed shuffles only
/// runs of equal-key patients. Each lands in the fold minimizing
/// (summed |fold positive rate - global rate| over folds, fold unit
/// count, fold index), after every fold has been seeded non-empty.
pub fn stratified_group_kfold(
    patient_ids: &[String],
    labels: &[Label],
    k: usize,
    seed: u64,
) -> Result<FoldAssignment> {
    assert_eq!(patient_ids.len(), labels.len());
    if k < 2 {
        return Err(Error::Params("k must be >= 2".to_string()));
    }
    let mut per_patient: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (id, label) in patient_ids.iter().zip(labels) {
        let entry = per_patient.entry(id).or_insert((0, 0));
        entry.0 += label.is_positive() as usize;
        entry.1 += 1;
    }
    if per_patient.len() < k {
        return Err(Error::Params(format!(
            "fewer patients ({}) than folds ({k})",
            per_patient.len()
        )));
    }

    // (pos desc, units desc, id asc), then shuffle equal (pos, units) runs.
    let mut patients: Vec<(&str, usize, usize)> = per_patient
        .iter()
        .map(|(&id, &(pos, units))| (id, pos, units))
        .collect();
    patients.sort_by(|a, b| (b.1, b.2, a.0).cmp(&(a.1, a.2, b.0)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut at = 0;
    while at < patients.len() {
        let mut end = at + 1;
        while end < patients.len()
            && (patients[end].1, patients[end].2) == (patients[at].1, patients[at].2)
        {
            end += 1;
        }
        patients[at..end].shuffle(&mut rng);
        at = end;
    }

    let total_pos: usize = patients.iter().map(|p| p.1).sum();
    let total_units: usize = patients.iter().map(|p| p.2).sum();
    let global_rate = total_pos as f64 / total_units as f64;

    let mut fold_pos = vec![0usize; k];
    let mut fold_units = vec![0usize; k];
    let mut fold_of = BTreeMap::new();
    let deviation = |pos: usize, units: usize| -> f64 {
        if units == 0 {
            0.0
        } else {
            (pos as f64 / units as f64 - global_rate).abs()
        }
    };
    for &(id, pos, units) in &patients {
        // Seed empty folds first so every fold ends non-empty (k = number
        // of patients degenerates to leave-one-patient-out). Afterwards,
        // place each patient where the summed positive-rate deviation
        // across folds ends up smallest; scoring the whole partition
        // rather than the target fold alone keeps one fold from soaking
        // up every negative patient.
        let best = match (0..k).find(|&f| fold_units[f] == 0) {
            Some(empty) => empty,
            None => {
                let mut best = 0usize;
                let mut best_key = (f64::INFINITY, usize::MAX);
                for f in 0..k {
                    let mut total = 0.0;
                    for g in 0..k {
                        if g == f {
                            total += deviation(fold_pos[g] + pos, fold_units[g] + units);
                        } else {
                            total += deviation(fold_pos[g], fold_units[g]);
                        }
                    }
                    let key = (total, fold_units[f] + units);
                    if key.0 < best_key.0 || (key.0 == best_key.0 && key.1 < best_key.1) {
                        best_key = key;
                        best = f;
                    }
                }
                best
            }
        };
        fold_pos[best] += pos;
        fold_units[best] += units;
        fold_of.insert(id.to_string(), best);
    }
    Ok(FoldAssignment { k, fold_of })
}

/// What `run_cv` trains on each fold.
#[derive(Debug, Clone)]
pub enum ModelSpec {
    Boosted(BoostParams),
    Logistic(BaselineParams),
}

impl ModelSpec {
    pub fn name(&self) -> String {
        match self {
            ModelSpec::Boosted(p) => format!("gbdt-{}", p.growth.as_str()),
            ModelSpec::Logistic(_) => "logistic".to_string(),
        }
    }
}

/// One out-of-fold prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct OofRecord {
    pub unit_id: String,
    pub patient_id: String,
    pub fold: usize,
    pub label: Label,
    pub score: f64,
}

/// `unit_id,patient_id,fold,label,score` CSV.
pub fn write_oof_csv<W: Write>(records: &[OofRecord], mut writer: W) -> Result<()> {
    writer.write_all(b"unit_id,patient_id,fold,label,score\n")?;
    for r in records {
        writer.write_all(
            format!(
                "{},{},{},{},{}\n",
                r.unit_id,
                r.patient_id,
                r.fold,
                r.label.as_u8(),
                r.score
            )
            .as_bytes(),
        )?;
    }
    Ok(())
}

/// Cross-validate with a precomputed fold assignment. Per fold: train on
/// the other folds, score the held-out fold, pick the operating
/// threshold on the training-side predictions (the held-out side stays
/// untouched until evaluation). The pooled block rescores the
/// concatenated out-of-fold predictions under the same policy.
pub fn run_cv_with_folds(
    matrix: &FeatureMatrix,
    spec: &ModelSpec,
    folds: &FoldAssignment,
    policy: ThresholdPolicy,
) -> Result<(EvalReport, Vec<OofRecord>)> {
    let k = folds.k;
    let mut fold_metrics = Vec::with_capacity(k);
    let mut oof: Vec<OofRecord> = Vec::with_capacity(matrix.n_rows());

    for f in 0..k {
        let mut train_rows = Vec::new();
        let mut val_rows = Vec::new();
        for r in 0..matrix.n_rows() {
            if folds.fold(&matrix.patient_ids[r]) == f {
                val_rows.push(r);
            } else {
                train_rows.push(r);
            }
        }
        let train_matrix = matrix.subset(&train_rows);
        let val_matrix = matrix.subset(&val_rows);
        let single_class = |labels: &[Label]| {
            let pos = labels.iter().filter(|l| l.is_positive()).count();
            pos == 0 || pos == labels.len()
        };
        if train_matrix.n_rows() == 0 || single_class(&train_matrix.labels) {
            return Err(Error::DegenerateFold(f));
        }
        if val_matrix.n_rows() == 0 || single_class(&val_matrix.labels) {
            return Err(Error::DegenerateFold(f));
        }

        let started = Instant::now();
        let (train_scores, val_scores) = match spec {
            ModelSpec::Boosted(params) => {
                let model = train(&train_matrix, params)?;
                (
                    model.predict_proba(&train_matrix)?,
                    model.predict_proba(&val_matrix)?,
                )
            }
            ModelSpec::Logistic(params) => {
                let model = train_logistic_baseline(&train_matrix, params)?;
                (
                    model.predict_proba(&train_matrix)?,
                    model.predict_proba(&val_matrix)?,
                )
            }
        };
        let train_time_s = started.elapsed().as_secs_f64();

        let threshold = select_threshold(&train_scores, &train_matrix.labels, policy)?;
        let fold_auc = auc(&val_scores, &val_matrix.labels)?;
        let cm = confusion_metrics(&val_scores, &val_matrix.labels, threshold);
        fold_metrics.push(FoldMetrics {
            fold: f,
            auc: fold_auc,
            precision: cm.precision,
            recall: cm.recall,
            f1: cm.f1,
            threshold,
            confusion: cm.into(),
            train_time_s,
        });
        for (i, &r) in val_rows.iter().enumerate() {
            oof.push(OofRecord {
                unit_id: matrix.unit_ids[r].clone(),
                patient_id: matrix.patient_ids[r].clone(),
                fold: f,
                label: matrix.labels[r],
                score: val_scores[i],
            });
        }
    }

    let mean = MeanMetrics {
        auc: fold_metrics.iter().map(|m| m.auc).sum::<f64>() / k as f64,
        precision: fold_metrics.iter().map(|m| m.precision).sum::<f64>() / k as f64,
        recall: fold_metrics.iter().map(|m| m.recall).sum::<f64>() / k as f64,
        f1: fold_metrics.iter().map(|m| m.f1).sum::<f64>() / k as f64,
        train_time_s: fold_metrics.iter().map(|m| m.train_time_s).sum::<f64>() / k as f64,
    };

    let scores: Vec<f64> = oof.iter().map(|r| r.score).collect();
    let labels: Vec<Label> = oof.iter().map(|r| r.label).collect();
    let pooled_auc = auc(&scores, &labels)?;
    let pooled_threshold = select_threshold(&scores, &labels, policy)?;
    let pooled_cm = confusion_metrics(&scores, &labels, pooled_threshold);
    let pooled = PooledMetrics {
        auc: pooled_auc,
        precision: pooled_cm.precision,
        recall: pooled_cm.recall,
        f1: pooled_cm.f1,
        threshold: pooled_threshold,
        confusion: pooled_cm.into(),
        train_time_s: fold_metrics.iter().map(|m| m.train_time_s).sum(),
    };
    let roc_points = roc_curve(&scores, &labels)?;

    let report = EvalReport {
        model: spec.name(),
        folds: fold_metrics,
        mean,
        pooled,
        roc_points,
    };
    Ok((report, oof))
}

/// Cross-validate with folds derived from (matrix, k, seed); the same
/// inputs always yield the same folds.
pub fn run_cv(
    matrix: &FeatureMatrix,
    spec: &ModelSpec,
    k: usize,
    seed: u64,
    policy: ThresholdPolicy,
) -> Result<(EvalReport, Vec<OofRecord>)> {
    let folds = stratified_group_kfold(&matrix.patient_ids, &matrix.labels, k, seed)?;
    run_cv_with_folds(matrix, spec, &folds, policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::Rng;

    fn cohort_labels(spec: &[(&str, usize, usize)]) -> (Vec<String>, Vec<Label>) {
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        for &(id, pos, total) in spec {
            for i in 0..total {
                ids.push(id.to_string());
                labels.push(if i < pos { Label::Positive } else { Label::Negative });
            }
        }
        (ids, labels)
    }

    #[test]
    fn four_patient_trace() {
        // Two all-positive and two all-negative patients, k=2: each fold
        // must get one of each, hitting the global rate exactly.
        let (ids, labels) = cohort_labels(&[("a", 2, 2), ("b", 2, 2), ("c", 0, 2), ("d", 0, 2)]);
        let folds = stratified_group_kfold(&ids, &labels, 2, 0).unwrap();
        for pair in [("a", "b"), ("c", "d")] {
            assert_ne!(folds.fold(pair.0), folds.fold(pair.1));
        }
    }

    #[test]
    fn leave_one_patient_out() {
        let (ids, labels) = cohort_labels(&[("a", 1, 2), ("b", 0, 2), ("c", 1, 1), ("d", 0, 3)]);
        let folds = stratified_group_kfold(&ids, &labels, 4, 7).unwrap();
        let mut used: Vec<usize> = folds.fold_of.values().copied().collect();
        used.sort_unstable();
        assert_eq!(used, vec![0, 1, 2, 3]);
    }

    #[test]
    fn same_seed_same_assignment() {
        let (ids, labels) = cohort_labels(&[
            ("a", 1, 3),
            ("b", 1, 3),
            ("c", 1, 3),
            ("d", 0, 3),
            ("e", 0, 3),
            ("f", 0, 3),
        ]);
        let a = stratified_group_kfold(&ids, &labels, 3, 11).unwrap();
        let b = stratified_group_kfold(&ids, &labels, 3, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_patients_errors() {
        let (ids, labels) = cohort_labels(&[("a", 1, 2), ("b", 0, 2)]);
        assert!(stratified_group_kfold(&ids, &labels, 3, 0).is_err());
    }

    #[test]
    fn group_integrity_randomized() {
        let mut rng = StdRng::seed_from_u64(19);
        for _ in 0..100 {
            let n_patients = rng.gen_range(5..40);
            let k = rng.gen_range(2..=5.min(n_patients));
            let mut ids = Vec::new();
            let mut labels = Vec::new();
            for p in 0..n_patients {
                let units = rng.gen_range(1..8);
                for _ in 0..units {
                    ids.push(format!("p{p:03}"));
                    labels.push(if rng.gen_bool(0.3) { Label::Positive } else { Label::Negative });
                }
            }
            let folds = stratified_group_kfold(&ids, &labels, k, rng.gen()).unwrap();
            // Partition: every patient in exactly one fold in [0, k).
            for f in folds.fold_of.values() {
                assert!(*f < k);
            }
            let patients: std::collections::BTreeSet<&String> = ids.iter().collect();
            assert_eq!(patients.len(), folds.fold_of.len());
        }
    }

    #[test]
    fn balanced_cohorts_stratify_within_tolerance() {
        let mut rng = StdRng::seed_from_u64(29);
        for _ in 0..20 {
            // >= 20 patients per class, each with the same unit count.
            let mut ids = Vec::new();
            let mut labels = Vec::new();
            for p in 0..50 {
                let positive_patient = p % 2 == 0;
                for _ in 0..4 {
                    ids.push(format!("p{p:03}"));
                    labels.push(if positive_patient { Label::Positive } else { Label::Negative });
                }
            }
            let k = 5;
            let folds = stratified_group_kfold(&ids, &labels, k, rng.gen()).unwrap();
            let global = 0.5;
            let mut pos = vec![0usize; k];
            let mut tot = vec![0usize; k];
            for (id, label) in ids.iter().zip(&labels) {
                let f = folds.fold(id);
                tot[f] += 1;
                pos[f] += label.is_positive() as usize;
            }
            for f in 0..k {
                let rate = pos[f] as f64 / tot[f] as f64;
                assert!((rate - global).abs() <= 0.05, "fold {f} rate {rate}");
            }
        }
    }

    fn signal_matrix(n_patients: usize, units_each: usize) -> FeatureMatrix {
        let mut rng = StdRng::seed_from_u64(4);
        let mut m = FeatureMatrix::new(vec!["x".to_string(), "y".to_string()]);
        for p in 0..n_patients {
            for u in 0..units_each {
                let label = if p % 3 == 0 { Label::Positive } else { Label::Negative };
                let x = if label.is_positive() {
                    rng.gen_range(1.0..2.0)
                } else {
                    rng.gen_range(-2.0..-1.0)
                };
                m.push_row(
                    format!("p{p:03}:{u}"),
                    format!("p{p:03}"),
                    label,
                    vec![x, rng.gen_range(-1.0..1.0)],
                );
            }
        }
        m
    }

    #[test]
    fn every_unit_predicted_exactly_once() {
        let m = signal_matrix(12, 3);
        let spec = ModelSpec::Boosted(BoostParams {
            num_trees: 5,
            ..Default::default()
        });
        let (report, oof) = run_cv(&m, &spec, 3, 1, ThresholdPolicy::default()).unwrap();
        assert_eq!(oof.len(), m.n_rows());
        let mut seen: Vec<&String> = oof.iter().map(|r| &r.unit_id).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), m.n_rows());
        assert_eq!(report.folds.len(), 3);
        assert_eq!(report.pooled.confusion.total(), m.n_rows());
    }

    #[test]
    fn perfect_signal_pools_to_auc_one() {
        let m = signal_matrix(15, 4);
        let spec = ModelSpec::Boosted(BoostParams {
            num_trees: 30,
            learning_rate: 0.3,
            ..Default::default()
        });
        let (report, _) = run_cv(&m, &spec, 3, 2, ThresholdPolicy::default()).unwrap();
        assert!(report.pooled.auc > 0.995, "auc {}", report.pooled.auc);
        assert!(report.mean.train_time_s >= 0.0);
    }

    #[test]
    fn report_json_roundtrip() {
        let m = signal_matrix(12, 3);
        let spec = ModelSpec::Logistic(BaselineParams::default());
        let (report, _) = run_cv(&m, &spec, 2, 3, ThresholdPolicy::MaxF1).unwrap();
        let json = report.to_json();
        let back = EvalReport::from_json(&json).unwrap();
        assert_eq!(back.model, "logistic");
        assert_eq!(back.folds.len(), report.folds.len());
        assert!((back.pooled.auc - report.pooled.auc).abs() < 1e-15);
        for key in ["auc", "precision", "recall", "f1", "threshold", "train_time_s"] {
            assert!(json.contains(key), "report json missing {key}");
        }
    }
}
