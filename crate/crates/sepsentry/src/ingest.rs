//! Vitals/demographics/onset file parsing, observation normalization,
//! pulse-pressure derivation, plausibility filtering, and qSOFA scoring.
//!
//! Vitals come in two CSV layouts, auto-detected from the header:
//! long (`patient_id,timestamp,channel,value`) and wide
//! (`patient_id,timestamp,<channel columns...>` with empty cells for
//! missing). Bad rows are counted and skipped; parsing keeps going.

use std::collections::BTreeMap;
use std::io::Read;

use crate::cohort::{Demographics, Gender, PatientSeries, VitalChannel};
use crate::error::{Error, Result};

/// Inclusive per-channel plausibility bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct PlausibilityTable {
    bounds: [(f64, f64); VitalChannel::COUNT],
}

impl Default for PlausibilityTable {
    fn default() -> Self {
        let mut bounds = [(0.0, 0.0); VitalChannel::COUNT];
        bounds[VitalChannel::SystolicBp.index()] = (40.0, 300.0);
        bounds[VitalChannel::DiastolicBp.index()] = (20.0, 200.0);
        bounds[VitalChannel::MeanBp.index()] = (30.0, 250.0);
        bounds[VitalChannel::HeartRate.index()] = (20.0, 300.0);
        bounds[VitalChannel::Respiration.index()] = (4.0, 80.0);
        bounds[VitalChannel::Spo2.index()] = (50.0, 100.0);
        bounds[VitalChannel::PulsePressure.index()] = (5.0, 250.0);
        bounds[VitalChannel::Gcs.index()] = (3.0, 15.0);
        PlausibilityTable { bounds }
    }
}

impl PlausibilityTable {
    pub fn bounds(&self, channel: VitalChannel) -> (f64, f64) {
        self.bounds[channel.index()]
    }

    pub fn set_bounds(&mut self, channel: VitalChannel, min: f64, max: f64) -> Result<()> {
        if !(min < max) {
            return Err(Error::Params(format!(
                "plausibility bounds for {channel} must satisfy min < max, got [{min}, {max}]"
            )));
        }
        self.bounds[channel.index()] = (min, max);
        Ok(())
    }

    pub fn contains(&self, channel: VitalChannel, value: f64) -> bool {
        let (lo, hi) = self.bounds(channel);
        value >= lo && value <= hi
    }
}

/// Counts of rejected rows by reason, plus per-patient rejected units
/// (filled by window validation).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RejectionReport {
    pub malformed: usize,
    pub non_finite: usize,
    pub out_of_range: usize,
    pub duplicate_timestamp: usize,
    pub rejected_units: BTreeMap<String, usize>,
}

impl RejectionReport {
    pub fn total_rows(&self) -> usize {
        self.malformed + self.non_finite + self.out_of_range + self.duplicate_timestamp
    }

    /// Merge another report into this one; associative and commutative.
    pub fn merge(&mut self, other: &RejectionReport) {
        self.malformed += other.malformed;
        self.non_finite += other.non_finite;
        self.out_of_range += other.out_of_range;
        self.duplicate_timestamp += other.duplicate_timestamp;
        for (patient, count) in &other.rejected_units {
            *self.rejected_units.entry(patient.clone()).or_insert(0) += count;
        }
    }
}

enum VitalsLayout {
    Long,
    Wide(Vec<(usize, VitalChannel)>),
}

/// Parse a vitals CSV into per-patient series. Observations end up
/// sorted ascending per channel; duplicate (patient, channel, timestamp)
/// rows keep the last occurrence in file order and count one rejection.
pub fn parse_vitals<R: Read>(
    reader: R,
    path: &str,
) -> Result<(BTreeMap<String, PatientSeries>, RejectionReport)> {
    let mut csv = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    if headers.len() == 0 {
        return Err(Error::parse(path, 1, "missing header row"));
    }
    let col = |name: &str| headers.iter().position(|h| h == name);
    let patient_col = col("patient_id")
        .ok_or_else(|| Error::parse(path, 1, "header must name patient_id"))?;
    let ts_col = col("timestamp")
        .ok_or_else(|| Error::parse(path, 1, "header must name timestamp"))?;

    let layout = if let (Some(chan_col), Some(value_col)) = (col("channel"), col("value")) {
        let _ = (chan_col, value_col);
        VitalsLayout::Long
    } else {
        let channel_cols: Vec<(usize, VitalChannel)> = headers
            .iter()
            .enumerate()
            .filter_map(|(i, h)| VitalChannel::from_name(h).map(|c| (i, c)))
            .collect();
        if channel_cols.is_empty() {
            return Err(Error::parse(
                path,
                1,
                "header must name channel/value columns or at least one channel",
            ));
        }
        VitalsLayout::Wide(channel_cols)
    };
    let chan_col = col("channel");
    let value_col = col("value");

    let mut report = RejectionReport::default();
    // (patient, channel) -> (timestamp, value, file order)
    let mut raw: BTreeMap<String, Vec<Vec<(i64, f64, usize)>>> = BTreeMap::new();
    let mut order = 0usize;

    for record in csv.records() {
        let record = match record {
            Ok(r) => r,
            Err(_) => {
                report.malformed += 1;
                continue;
            }
        };
        let field = |i: usize| record.get(i).unwrap_or("");
        let patient = field(patient_col);
        let timestamp: i64 = match field(ts_col).trim().parse() {
            Ok(t) => t,
            Err(_) => {
                report.malformed += 1;
                continue;
            }
        };
        if patient.is_empty() {
            report.malformed += 1;
            continue;
        }

        match &layout {
            VitalsLayout::Long => {
                let channel = match VitalChannel::from_name(field(chan_col.unwrap()).trim()) {
                    Some(c) => c,
                    None => {
                        report.malformed += 1;
                        continue;
                    }
                };
                let value: f64 = match field(value_col.unwrap()).trim().parse() {
                    Ok(v) => v,
                    Err(_) => {
                        report.malformed += 1;
                        continue;
                    }
                };
                if !value.is_finite() {
                    report.non_finite += 1;
                    continue;
                }
                raw.entry(patient.to_string())
                    .or_insert_with(|| vec![Vec::new(); VitalChannel::COUNT])[channel.index()]
                    .push((timestamp, value, order));
                order += 1;
            }
            VitalsLayout::Wide(channel_cols) => {
                // Validate all non-empty cells before committing any; a bad
                // cell rejects the whole row.
                let mut parsed: Vec<(VitalChannel, f64)> = Vec::new();
                let mut row_ok = true;
                let mut row_finite = true;
                for &(i, channel) in channel_cols {
                    let cell = field(i).trim();
                    if cell.is_empty() {
                        continue;
                    }
                    match cell.parse::<f64>() {
                        Ok(v) if v.is_finite() => parsed.push((channel, v)),
                        Ok(_) => {
                            row_finite = false;
                            break;
                        }
                        Err(_) => {
                            row_ok = false;
                            break;
                        }
                    }
                }
                if !row_ok {
                    report.malformed += 1;
                    continue;
                }
                if !row_finite {
                    report.non_finite += 1;
                    continue;
                }
                let series = raw
                    .entry(patient.to_string())
                    .or_insert_with(|| vec![Vec::new(); VitalChannel::COUNT]);
                for (channel, value) in parsed {
                    series[channel.index()].push((timestamp, value, order));
                    order += 1;
                }
            }
        }
    }

    let mut out = BTreeMap::new();
    for (patient_id, channels) in raw {
        let mut series = PatientSeries::new(patient_id.clone());
        for (ci, mut obs) in channels.into_iter().enumerate() {
            // Ascending by time; among duplicates the last file occurrence
            // wins.
            obs.sort_by(|a, b| (a.0, a.2).cmp(&(b.0, b.2)));
            let mut kept: Vec<(i64, f64)> = Vec::with_capacity(obs.len());
            for (t, v, _) in obs {
                if let Some(last) = kept.last_mut() {
                    if last.0 == t {
                        *last = (t, v);
                        report.duplicate_timestamp += 1;
                        continue;
                    }
                }
                kept.push((t, v));
            }
            series.observations[ci] = kept;
        }
        out.insert(patient_id, series);
    }
    Ok((out, report))
}

/// Parse `patient_id,age,gender,ethnicity`. Empty or unknown cells map
/// to the unknown category; a later duplicate record replaces the
/// earlier one and counts as a duplicate rejection.
pub fn parse_demographics<R: Read>(
    reader: R,
    path: &str,
) -> Result<(BTreeMap<String, Demographics>, RejectionReport)> {
    let mut csv = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let patient_col = col("patient_id")
        .ok_or_else(|| Error::parse(path, 1, "header must name patient_id"))?;
    let age_col = col("age");
    let gender_col = col("gender");
    let ethnicity_col = col("ethnicity");

    let mut report = RejectionReport::default();
    let mut out: BTreeMap<String, Demographics> = BTreeMap::new();
    for record in csv.records() {
        let record = match record {
            Ok(r) => r,
            Err(_) => {
                report.malformed += 1;
                continue;
            }
        };
        let field = |i: Option<usize>| i.and_then(|i| record.get(i)).unwrap_or("").trim().to_string();
        let patient_id = field(Some(patient_col));
        if patient_id.is_empty() {
            report.malformed += 1;
            continue;
        }
        let age_text = field(age_col);
        let age = if age_text.is_empty() || age_text.eq_ignore_ascii_case("unknown") {
            None
        } else {
            match age_text.parse::<u32>() {
                Ok(a) => Some(a),
                Err(_) => {
                    report.malformed += 1;
                    continue;
                }
            }
        };
        let gender = match field(gender_col).to_ascii_lowercase().as_str() {
            "male" | "m" => Gender::Male,
            "female" | "f" => Gender::Female,
            _ => Gender::Unknown,
        };
        let ethnicity_text = field(ethnicity_col);
        let ethnicity = if ethnicity_text.is_empty() || ethnicity_text.eq_ignore_ascii_case("unknown")
        {
            None
        } else {
            Some(ethnicity_text)
        };
        if out
            .insert(
                patient_id.clone(),
                Demographics {
                    patient_id,
                    age,
                    gender,
                    ethnicity,
                },
            )
            .is_some()
        {
            report.duplicate_timestamp += 1;
        }
    }
    Ok((out, report))
}

/// Parse `patient_id,onset_timestamp` into ascending, deduplicated
/// per-patient onset lists.
pub fn parse_onsets<R: Read>(
    reader: R,
    path: &str,
) -> Result<(BTreeMap<String, Vec<i64>>, RejectionReport)> {
    let mut csv = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let patient_col = col("patient_id")
        .ok_or_else(|| Error::parse(path, 1, "header must name patient_id"))?;
    let onset_col = col("onset_timestamp")
        .ok_or_else(|| Error::parse(path, 1, "header must name onset_timestamp"))?;

    let mut report = RejectionReport::default();
    let mut out: BTreeMap<String, Vec<i64>> = BTreeMap::new();
    for record in csv.records() {
        let record = match record {
            Ok(r) => r,
            Err(_) => {
                report.malformed += 1;
                continue;
            }
        };
        let patient = record.get(patient_col).unwrap_or("").trim();
        let onset: i64 = match record.get(onset_col).unwrap_or("").trim().parse() {
            Ok(t) => t,
            Err(_) => {
                report.malformed += 1;
                continue;
            }
        };
        if patient.is_empty() {
            report.malformed += 1;
            continue;
        }
        out.entry(patient.to_string()).or_default().push(onset);
    }
    for onsets in out.values_mut() {
        onsets.sort_unstable();
        onsets.dedup();
    }
    Ok((out, report))
}

/// Add pulse-pressure observations wherever systolic and diastolic
/// readings share a timestamp. Existing pp observations are never
/// overwritten.
pub fn derive_pulse_pressure(mut series: PatientSeries) -> PatientSeries {
    let systolic = series.channel(VitalChannel::SystolicBp);
    let diastolic = series.channel(VitalChannel::DiastolicBp);

    let mut derived: Vec<(i64, f64)> = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    while i < systolic.len() && j < diastolic.len() {
        match systolic[i].0.cmp(&diastolic[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                derived.push((systolic[i].0, systolic[i].1 - diastolic[j].1));
                i += 1;
                j += 1;
            }
        }
    }

    let existing = series.channel_mut(VitalChannel::PulsePressure);
    let mut merged: Vec<(i64, f64)> = Vec::with_capacity(existing.len() + derived.len());
    let (mut a, mut b) = (0usize, 0usize);
    while a < existing.len() || b < derived.len() {
        match (existing.get(a), derived.get(b)) {
            (Some(&(te, ve)), Some(&(td, _))) if te == td => {
                merged.push((te, ve)); // keep the recorded value
                a += 1;
                b += 1;
            }
            (Some(&(te, ve)), Some(&(td, vd))) => {
                if te < td {
                    merged.push((te, ve));
                    a += 1;
                } else {
                    merged.push((td, vd));
                    b += 1;
                }
            }
            (Some(&obs), None) => {
                merged.push(obs);
                a += 1;
            }
            (None, Some(&obs)) => {
                merged.push(obs);
                b += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    *existing = merged;
    series
}

/// Drop observations outside the channel's plausibility bounds.
pub fn sanity_filter(
    mut series: PatientSeries,
    table: &PlausibilityTable,
) -> (PatientSeries, RejectionReport) {
    let mut report = RejectionReport::default();
    for channel in VitalChannel::ALL {
        let obs = series.channel_mut(channel);
        let before = obs.len();
        obs.retain(|&(_, v)| table.contains(channel, v));
        report.out_of_range += before - obs.len();
    }
    (series, report)
}

/// qSOFA result; `gcs_missing` marks that the GCS criterion could not be
/// evaluated and contributed 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Qsofa {
    pub score: u8,
    pub gcs_missing: bool,
}

/// qSOFA: respiratory rate >= 22, systolic BP <= 100, GCS < 15.
pub fn compute_qsofa(respiration: f64, systolic_bp: f64, gcs: Option<f64>) -> Qsofa {
    let mut score = 0u8;
    if respiration >= 22.0 {
        score += 1;
    }
    if systolic_bp <= 100.0 {
        score += 1;
    }
    let gcs_missing = gcs.is_none();
    if let Some(g) = gcs {
        if g < 15.0 {
            score += 1;
        }
    }
    Qsofa { score, gcs_missing }
}
