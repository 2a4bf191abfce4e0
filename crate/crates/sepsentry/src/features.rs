//! Window-to-row feature engineering: lags, trailing-window statistics,
//! DFT magnitudes, lagged differences, and demographic encodings.
//!
//! Every feature of a unit is a function of that unit's 72-step grid and
//! static demographics only; nothing after the window end can reach a
//! row. Missing values stay the sentinel and flow to the model's native
//! missing handling.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::cohort::{
    CohortDataset, Demographics, Gender, Label, VitalChannel, WindowUnit, MISSING, WINDOW_STEPS,
};
use crate::error::{Error, Result};

/// The seven trailing-window statistics, in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatKind {
    Mean,
    Std,
    Max,
    Min,
    Kurtosis,
    Median,
    Skewness,
}

impl StatKind {
    pub const ALL: [StatKind; 7] = [
        StatKind::Mean,
        StatKind::Std,
        StatKind::Max,
        StatKind::Min,
        StatKind::Kurtosis,
        StatKind::Median,
        StatKind::Skewness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StatKind::Mean => "mean",
            StatKind::Std => "std",
            StatKind::Max => "max",
            StatKind::Min => "min",
            StatKind::Kurtosis => "kurtosis",
            StatKind::Median => "median",
            StatKind::Skewness => "skewness",
        }
    }
}

/// Which features to build. The default yields the 138-column layout:
/// 8 channels x (4 lags + 4 diffs + 7 stats + 2 DFT) + age + gender.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecipe {
    pub lag_steps: Vec<usize>,
    pub stat_window_steps: Vec<usize>,
    pub stats: Vec<StatKind>,
    pub dft_harmonics: usize,
    pub diff_steps: Vec<usize>,
    pub include_demographics: bool,
    /// One-of-k ethnicity columns; excluded from the default layout.
    pub ethnicity_categories: Vec<String>,
}

impl Default for FeatureRecipe {
    fn default() -> Self {
        FeatureRecipe {
            lag_steps: vec![1, 3, 6, 12],
            stat_window_steps: vec![WINDOW_STEPS],
            stats: StatKind::ALL.to_vec(),
            dft_harmonics: 2,
            diff_steps: vec![1, 3, 6, 12],
            include_demographics: true,
            ethnicity_categories: Vec::new(),
        }
    }
}

impl FeatureRecipe {
    pub fn validate(&self) -> Result<()> {
        for &lag in &self.lag_steps {
            if lag >= WINDOW_STEPS {
                return Err(Error::Recipe(format!("lag {lag} must be < {WINDOW_STEPS}")));
            }
        }
        for &d in &self.diff_steps {
            if d >= WINDOW_STEPS {
                return Err(Error::Recipe(format!("diff step {d} must be < {WINDOW_STEPS}")));
            }
        }
        for &w in &self.stat_window_steps {
            if w == 0 || w > WINDOW_STEPS {
                return Err(Error::Recipe(format!(
                    "stat window {w} must be in 1..={WINDOW_STEPS}"
                )));
            }
        }
        if self.dft_harmonics >= WINDOW_STEPS / 2 {
            return Err(Error::Recipe(format!(
                "dft harmonics {} must be < {}",
                self.dft_harmonics,
                WINDOW_STEPS / 2
            )));
        }
        Ok(())
    }

    /// Column names, a pure function of the recipe.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for channel in VitalChannel::ALL {
            for &lag in &self.lag_steps {
                names.push(format!("{channel}_lag_{lag}"));
            }
            for &d in &self.diff_steps {
                names.push(format!("{channel}_diff_{d}"));
            }
            for &w in &self.stat_window_steps {
                for stat in &self.stats {
                    names.push(format!("{channel}_{}_{w}", stat.name()));
                }
            }
            for k in 1..=self.dft_harmonics {
                names.push(format!("{channel}_dft_{k}"));
            }
        }
        if self.include_demographics {
            names.push("age".to_string());
            names.push("gender".to_string());
            for cat in &self.ethnicity_categories {
                names.push(format!("ethnicity_{cat}"));
            }
        }
        names
    }
}

/// Grid value at step `len - 1 - lag`, sentinel for an all-missing
/// channel.
pub fn lag_value(values: &[f64], lag: usize) -> f64 {
    debug_assert!(lag < values.len());
    values[values.len() - 1 - lag]
}

/// Signed difference `x_last - x_{last-step}`.
pub fn lagged_difference(values: &[f64], step: usize) -> f64 {
    debug_assert!(step < values.len());
    values[values.len() - 1] - values[values.len() - 1 - step]
}

/// Central moments of the trailing `window` values (population, 1/n).
pub struct WindowStats {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub min: f64,
    pub kurtosis: f64,
    pub median: f64,
    pub skewness: f64,
}

/// Statistics over the trailing window ending at the series' last step.
/// Skewness and excess kurtosis are sentinel when the window has zero
/// variance.
pub fn rolling_stats(values: &[f64], window: usize) -> WindowStats {
    debug_assert!(window >= 1 && window <= values.len());
    let w = &values[values.len() - window..];
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in w {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = w.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sorted = w.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0
    };
    let (skewness, kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (MISSING, MISSING)
    };
    WindowStats {
        mean,
        std: m2.sqrt(),
        max,
        min,
        kurtosis,
        median,
        skewness,
    }
}

impl WindowStats {
    pub fn get(&self, kind: StatKind) -> f64 {
        match kind {
            StatKind::Mean => self.mean,
            StatKind::Std => self.std,
            StatKind::Max => self.max,
            StatKind::Min => self.min,
            StatKind::Kurtosis => self.kurtosis,
            StatKind::Median => self.median,
            StatKind::Skewness => self.skewness,
        }
    }
}

/// Normalized DFT magnitudes `|X_k| / n` for `k = 1..=harmonics`,
/// evaluated with the Goertzel recurrence (one pass per harmonic).
pub fn dft_magnitudes(values: &[f64], harmonics: usize) -> Vec<f64> {
    let n = values.len();
    debug_assert!(n >= 2);
    let mut out = Vec::with_capacity(harmonics);
    for k in 1..=harmonics {
        let omega = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let coeff = 2.0 * omega.cos();
        let (mut s_prev, mut s_prev2) = (0.0f64, 0.0f64);
        for &x in values {
            let s = x + coeff * s_prev - s_prev2;
            s_prev2 = s_prev;
            s_prev = s;
        }
        let power = s_prev * s_prev + s_prev2 * s_prev2 - coeff * s_prev * s_prev2;
        out.push(power.max(0.0).sqrt() / n as f64);
    }
    out
}

/// Age and gender codes: male 0, female 1, unknown sentinel.
pub fn encode_demographics(demo: Option<&Demographics>) -> (f64, f64) {
    match demo {
        None => (MISSING, MISSING),
        Some(d) => {
            let age = d.age.map(|a| a as f64).unwrap_or(MISSING);
            let gender = match d.gender {
                Gender::Male => 0.0,
                Gender::Female => 1.0,
                Gender::Unknown => MISSING,
            };
            (age, gender)
        }
    }
}

fn ethnicity_one_hot(demo: Option<&Demographics>, categories: &[String], out: &mut Vec<f64>) {
    let current = demo.and_then(|d| d.ethnicity.as_deref());
    for cat in categories {
        out.push(if current == Some(cat.as_str()) { 1.0 } else { 0.0 });
    }
}

/// Dense row-per-unit matrix with named columns and group tags.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub column_names: Vec<String>,
    values: Vec<f64>, // row-major
    pub unit_ids: Vec<String>,
    pub patient_ids: Vec<String>,
    pub labels: Vec<Label>,
}

impl FeatureMatrix {
    pub fn new(column_names: Vec<String>) -> Self {
        FeatureMatrix {
            column_names,
            values: Vec::new(),
            unit_ids: Vec::new(),
            patient_ids: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.n_cols()..(r + 1) * self.n_cols()]
    }

    pub fn value(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.n_cols() + c]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|n| n == name)
    }

    pub fn push_row(
        &mut self,
        unit_id: String,
        patient_id: String,
        label: Label,
        row: Vec<f64>,
    ) {
        assert_eq!(row.len(), self.n_cols());
        self.values.extend(row);
        self.unit_ids.push(unit_id);
        self.patient_ids.push(patient_id);
        self.labels.push(label);
    }

    /// Rows re-indexed by `keep`, in the given order.
    pub fn subset(&self, keep: &[usize]) -> FeatureMatrix {
        let mut out = FeatureMatrix::new(self.column_names.clone());
        for &r in keep {
            out.push_row(
                self.unit_ids[r].clone(),
                self.patient_ids[r].clone(),
                self.labels[r],
                self.row(r).to_vec(),
            );
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        let mut header = String::from("unit_id,patient_id,label");
        for name in &self.column_names {
            header.push(',');
            header.push_str(name);
        }
        header.push('\n');
        writer.write_all(header.as_bytes())?;
        for r in 0..self.n_rows() {
            let mut row = format!(
                "{},{},{}",
                self.unit_ids[r],
                self.patient_ids[r],
                self.labels[r].as_u8()
            );
            for &v in self.row(r) {
                row.push(',');
                if !v.is_nan() {
                    row.push_str(&v.to_string());
                }
            }
            row.push('\n');
            writer.write_all(row.as_bytes())?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R, path: &str) -> Result<FeatureMatrix> {
        let mut lines = reader.lines();
        let header = match lines.next() {
            Some(h) => h?,
            None => return Err(Error::parse(path, 1, "empty file")),
        };
        let cols: Vec<&str> = header.trim_end().split(',').collect();
        if cols.len() < 4 || cols[0] != "unit_id" || cols[1] != "patient_id" || cols[2] != "label" {
            return Err(Error::parse(
                path,
                1,
                "header must start with unit_id,patient_id,label",
            ));
        }
        let column_names: Vec<String> = cols[3..].iter().map(|s| s.to_string()).collect();
        let mut matrix = FeatureMatrix::new(column_names);
        for (idx, line) in lines.enumerate() {
            let line = line?;
            let lineno = idx + 2;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() {
                return Err(Error::parse(path, lineno, "wrong field count"));
            }
            let label = fields[2]
                .parse::<u8>()
                .ok()
                .and_then(Label::from_u8)
                .ok_or_else(|| Error::parse(path, lineno, "label must be 0 or 1"))?;
            let mut row = Vec::with_capacity(cols.len() - 3);
            for cell in &fields[3..] {
                if cell.is_empty() {
                    row.push(MISSING);
                } else {
                    row.push(
                        cell.parse()
                            .map_err(|_| Error::parse(path, lineno, "bad numeric cell"))?,
                    );
                }
            }
            matrix.push_row(fields[0].to_string(), fields[1].to_string(), label, row);
        }
        Ok(matrix)
    }
}

/// One unit's feature row under the recipe.
fn unit_row(unit: &WindowUnit, demo: Option<&Demographics>, recipe: &FeatureRecipe) -> Vec<f64> {
    let mut row = Vec::new();
    for channel in VitalChannel::ALL {
        let values = unit.channel_values(channel);
        let all_missing = values.iter().all(|v| v.is_nan());
        if all_missing {
            let per_channel = recipe.lag_steps.len()
                + recipe.diff_steps.len()
                + recipe.stat_window_steps.len() * recipe.stats.len()
                + recipe.dft_harmonics;
            row.extend(std::iter::repeat(MISSING).take(per_channel));
            continue;
        }
        for &lag in &recipe.lag_steps {
            row.push(lag_value(values, lag));
        }
        for &d in &recipe.diff_steps {
            row.push(lagged_difference(values, d));
        }
        for &w in &recipe.stat_window_steps {
            let stats = rolling_stats(values, w);
            for &kind in &recipe.stats {
                row.push(stats.get(kind));
            }
        }
        row.extend(dft_magnitudes(values, recipe.dft_harmonics));
    }
    if recipe.include_demographics {
        let (age, gender) = encode_demographics(demo);
        row.push(age);
        row.push(gender);
        ethnicity_one_hot(demo, &recipe.ethnicity_categories, &mut row);
    }
    row
}

/// Build the feature matrix: one row per unit, ordered by
/// (patient_id, start_time). Row construction is parallel over units;
/// rows land by index so the result is worker-count independent.
pub fn build_feature_matrix(dataset: &CohortDataset, recipe: &FeatureRecipe) -> Result<FeatureMatrix> {
    recipe.validate()?;
    let mut order: Vec<usize> = (0..dataset.units.len()).collect();
    order.sort_by(|&a, &b| {
        let ua = &dataset.units[a];
        let ub = &dataset.units[b];
        (&ua.patient_id, ua.start_time).cmp(&(&ub.patient_id, ub.start_time))
    });

    let rows: Vec<Vec<f64>> = order
        .par_iter()
        .map(|&i| {
            let unit = &dataset.units[i];
            unit_row(unit, dataset.demographics.get(&unit.patient_id), recipe)
        })
        .collect();

    let mut matrix = FeatureMatrix::new(recipe.column_names());
    for (&i, row) in order.iter().zip(rows) {
        let unit = &dataset.units[i];
        matrix.push_row(unit.unit_id.clone(), unit.patient_id.clone(), unit.label, row);
    }
    Ok(matrix)
}

/// Convenience for tests and describe: matrix from bare units without
/// demographics.
pub fn matrix_from_units(units: &[WindowUnit], recipe: &FeatureRecipe) -> Result<FeatureMatrix> {
    let dataset = CohortDataset {
        units: units.to_vec(),
        demographics: BTreeMap::new(),
        provenance: crate::cohort::Provenance::Source("units".to_string()),
    };
    build_feature_matrix(&dataset, recipe)
}
