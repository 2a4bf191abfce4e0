//! Seeded random-search hyperparameter optimization scored by mean
//! out-of-fold AUC. Every trial evaluates on one shared fold assignment
//! so comparisons are paired.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cv::{run_cv_with_folds, stratified_group_kfold, ModelSpec};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::gbt::{BoostParams, Growth};
use crate::metrics::ThresholdPolicy;

/// Distribution of one hyperparameter.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamDistribution {
    Uniform(f64, f64),
    LogUniform(f64, f64),
    IntUniform(i64, i64),
    /// Uniform over explicit values, e.g. growth names or weights.
    Choice(Vec<String>),
}

/// Ordered parameter-name -> distribution pairs; parameters absent from
/// the space keep their `BoostParams` defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchSpace {
    pub entries: Vec<(String, ParamDistribution)>,
}

const TUNABLE: [&str; 12] = [
    "growth",
    "num_trees",
    "learning_rate",
    "max_depth",
    "max_leaves",
    "lambda",
    "gamma",
    "min_child_weight",
    "min_samples_leaf",
    "pos_weight",
    "subsample",
    "colsample",
];

impl SearchSpace {
    pub fn add(mut self, name: &str, dist: ParamDistribution) -> Self {
        self.entries.push((name.to_string(), dist));
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, dist) in &self.entries {
            if !TUNABLE.contains(&name.as_str()) {
                return Err(Error::Params(format!("unknown search parameter: {name}")));
            }
            match dist {
                ParamDistribution::Uniform(lo, hi) => {
                    if !(lo < hi) {
                        return Err(Error::Params(format!("{name}: need lo < hi")));
                    }
                }
                ParamDistribution::LogUniform(lo, hi) => {
                    if !(*lo > 0.0 && lo < hi) {
                        return Err(Error::Params(format!("{name}: need 0 < lo < hi")));
                    }
                }
                ParamDistribution::IntUniform(lo, hi) => {
                    if !(lo < hi) {
                        return Err(Error::Params(format!("{name}: need lo < hi")));
                    }
                }
                ParamDistribution::Choice(values) => {
                    if values.is_empty() {
                        return Err(Error::Params(format!("{name}: empty choice list")));
                    }
                }
            }
        }
        Ok(())
    }

    /// The declared default space around a cohort's prevalence.
    pub fn default_for_prevalence(prevalence: f64) -> SearchSpace {
        let balanced_weight = (1.0 - prevalence) / prevalence;
        SearchSpace::default()
            .add("learning_rate", ParamDistribution::LogUniform(0.01, 0.3))
            .add("max_leaves", ParamDistribution::IntUniform(7, 63))
            .add("max_depth", ParamDistribution::IntUniform(3, 8))
            .add("lambda", ParamDistribution::LogUniform(1e-2, 10.0))
            .add(
                "pos_weight",
                ParamDistribution::Choice(vec!["1".to_string(), balanced_weight.to_string()]),
            )
            .add(
                "growth",
                ParamDistribution::Choice(vec!["leafwise".to_string(), "depthwise".to_string()]),
            )
    }
}

fn apply_param(params: &mut BoostParams, name: &str, value: &str) -> Result<()> {
    let bad = || Error::Params(format!("cannot set {name} to {value}"));
    match name {
        "growth" => params.growth = Growth::from_str_opt(value).ok_or_else(bad)?,
        "num_trees" => params.num_trees = value.parse().map_err(|_| bad())?,
        "learning_rate" => params.learning_rate = value.parse().map_err(|_| bad())?,
        "max_depth" => params.max_depth = value.parse().map_err(|_| bad())?,
        "max_leaves" => params.max_leaves = value.parse().map_err(|_| bad())?,
        "lambda" => params.lambda = value.parse().map_err(|_| bad())?,
        "gamma" => params.gamma = value.parse().map_err(|_| bad())?,
        "min_child_weight" => params.min_child_weight = value.parse().map_err(|_| bad())?,
        "min_samples_leaf" => params.min_samples_leaf = value.parse().map_err(|_| bad())?,
        "pos_weight" => params.pos_weight = value.parse().map_err(|_| bad())?,
        "subsample" => params.subsample = value.parse().map_err(|_| bad())?,
        "colsample" => params.colsample = value.parse().map_err(|_| bad())?,
        _ => return Err(Error::Params(format!("unknown search parameter: {name}"))),
    }
    Ok(())
}

/// Draw one parameter set; each entry is sampled independently in
/// listed order, so a given rng state always yields the same draw.
pub fn sample_params(space: &SearchSpace, rng: &mut ChaCha8Rng) -> Result<BoostParams> {
    let mut params = BoostParams::default();
    for (name, dist) in &space.entries {
        let value = match dist {
            ParamDistribution::Uniform(lo, hi) => rng.gen_range(*lo..*hi).to_string(),
            ParamDistribution::LogUniform(lo, hi) => {
                (rng.gen_range(lo.ln()..hi.ln())).exp().to_string()
            }
            ParamDistribution::IntUniform(lo, hi) => rng.gen_range(*lo..=*hi).to_string(),
            ParamDistribution::Choice(values) => values[rng.gen_range(0..values.len())].clone(),
        };
        apply_param(&mut params, name, &value)?;
    }
    params.validate()?;
    Ok(params)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrialStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub params: BoostParams,
    pub mean_auc: f64,
    pub mean_recall: f64,
    pub mean_train_time_s: f64,
    pub status: TrialStatus,
}

/// Random search over the space: `trials` draws, each cross-validated on
/// the same fold assignment; the winner has the highest mean
/// out-of-fold AUC, earliest trial on ties. Failed trials are recorded
/// and skipped.
pub fn random_search(
    matrix: &FeatureMatrix,
    space: &SearchSpace,
    trials: usize,
    k: usize,
    seed: u64,
    policy: ThresholdPolicy,
) -> Result<(BoostParams, Vec<TrialRecord>)> {
    if trials == 0 {
        return Err(Error::Params("trials must be >= 1".to_string()));
    }
    space.validate()?;
    let folds = stratified_group_kfold(&matrix.patient_ids, &matrix.labels, k, seed)?;

    // All draws come from one seeded stream, up front, so the table is a
    // pure function of (seed, space, data).
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drawn = Vec::with_capacity(trials);
    for _ in 0..trials {
        drawn.push(sample_params(space, &mut rng)?);
    }

    let mut table = Vec::with_capacity(trials);
    for (trial, params) in drawn.into_iter().enumerate() {
        let spec = ModelSpec::Boosted(params.clone());
        match run_cv_with_folds(matrix, &spec, &folds, policy) {
            Ok((report, _)) => table.push(TrialRecord {
                trial,
                params,
                mean_auc: report.mean.auc,
                mean_recall: report.mean.recall,
                mean_train_time_s: report.mean.train_time_s,
                status: TrialStatus::Ok,
            }),
            Err(e) => table.push(TrialRecord {
                trial,
                params,
                mean_auc: f64::NAN,
                mean_recall: f64::NAN,
                mean_train_time_s: f64::NAN,
                status: TrialStatus::Failed(e.to_string()),
            }),
        }
    }

    let mut best: Option<&TrialRecord> = None;
    for record in &table {
        if record.status != TrialStatus::Ok {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => record.mean_auc > b.mean_auc,
        };
        if better {
            best = Some(record);
        }
    }
    match best {
        Some(record) => Ok((record.params.clone(), table.clone())),
        None => Err(Error::Params("all trials failed".to_string())),
    }
}

/// `trial,params_json,mean_auc,mean_recall,mean_train_time_s,status` CSV.
pub fn write_trials_csv<W: Write>(table: &[TrialRecord], writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["trial", "params_json", "mean_auc", "mean_recall", "mean_train_time_s", "status"])
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for r in table {
        let params_json = serde_json::to_string(&r.params).expect("params serialize");
        let status = match &r.status {
            TrialStatus::Ok => "ok".to_string(),
            TrialStatus::Failed(msg) => format!("failed: {msg}"),
        };
        csv.write_record([
            r.trial.to_string(),
            params_json,
            r.mean_auc.to_string(),
            r.mean_recall.to_string(),
            r.mean_train_time_s.to_string(),
            status,
        ])
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    csv.flush()?;
    Ok(())
}
