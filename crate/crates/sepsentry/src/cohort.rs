//! Shared domain vocabulary: vital-sign channels, per-patient series,
//! resampled windows, labels, and the cohort container used by every
//! downstream stage.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Grid step in seconds (5 minutes).
pub const STEP_SECONDS: i64 = 300;
/// Steps per window (6 hours at 5-minute steps).
pub const WINDOW_STEPS: usize = 72;
/// Label horizon in steps (3 hours).
pub const HORIZON_STEPS: usize = 36;
/// Missing-value sentinel used in grids and feature matrices.
pub const MISSING: f64 = f64::NAN;

/// The eight vital-sign channels, in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VitalChannel {
    SystolicBp,
    DiastolicBp,
    MeanBp,
    HeartRate,
    Respiration,
    Spo2,
    PulsePressure,
    Gcs,
}

impl VitalChannel {
    pub const ALL: [VitalChannel; 8] = [
        VitalChannel::SystolicBp,
        VitalChannel::DiastolicBp,
        VitalChannel::MeanBp,
        VitalChannel::HeartRate,
        VitalChannel::Respiration,
        VitalChannel::Spo2,
        VitalChannel::PulsePressure,
        VitalChannel::Gcs,
    ];

    pub const COUNT: usize = 8;

    /// Canonical lowercase column name.
    pub fn name(self) -> &'static str {
        match self {
            VitalChannel::SystolicBp => "systolicbp",
            VitalChannel::DiastolicBp => "diastolicbp",
            VitalChannel::MeanBp => "meanbp",
            VitalChannel::HeartRate => "heartrate",
            VitalChannel::Respiration => "respiration",
            VitalChannel::Spo2 => "spo2",
            VitalChannel::PulsePressure => "pp",
            VitalChannel::Gcs => "gcs",
        }
    }

    pub fn from_name(name: &str) -> Option<VitalChannel> {
        VitalChannel::ALL.iter().copied().find(|c| c.name() == name)
    }

    /// Position in the canonical channel order.
    pub fn index(self) -> usize {
        VitalChannel::ALL.iter().position(|&c| c == self).unwrap()
    }
}

impl std::fmt::Display for VitalChannel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One raw timestamped observation of a single channel.
#[derive(Debug, Clone, PartialEq)]
pub struct VitalSample {
    pub patient_id: String,
    pub timestamp: i64,
    pub channel: VitalChannel,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unknown => "unknown",
        }
    }
}

/// Static per-patient attributes. Absent fields map to unknown rather
/// than dropping the patient.
#[derive(Debug, Clone, PartialEq)]
pub struct Demographics {
    pub patient_id: String,
    pub age: Option<u32>,
    pub gender: Gender,
    pub ethnicity: Option<String>,
}

impl Demographics {
    pub fn unknown(patient_id: impl Into<String>) -> Self {
        Demographics {
            patient_id: patient_id.into(),
            age: None,
            gender: Gender::Unknown,
            ethnicity: None,
        }
    }
}

/// All observations for one patient, per channel, sorted by timestamp.
#[derive(Debug, Clone, Default)]
pub struct PatientSeries {
    pub patient_id: String,
    /// Per-channel (timestamp, value) observations, strictly increasing
    /// in timestamp after normalization.
    pub observations: [Vec<(i64, f64)>; VitalChannel::COUNT],
    pub demographics: Option<Demographics>,
    /// Recorded sepsis onset instants, ascending.
    pub onset_times: Vec<i64>,
}

impl PatientSeries {
    pub fn new(patient_id: impl Into<String>) -> Self {
        PatientSeries {
            patient_id: patient_id.into(),
            ..Default::default()
        }
    }

    pub fn channel(&self, channel: VitalChannel) -> &[(i64, f64)] {
        &self.observations[channel.index()]
    }

    pub fn channel_mut(&mut self, channel: VitalChannel) -> &mut Vec<(i64, f64)> {
        &mut self.observations[channel.index()]
    }

    pub fn total_observations(&self) -> usize {
        self.observations.iter().map(Vec::len).sum()
    }

    /// Earliest observation timestamp across all channels.
    pub fn first_timestamp(&self) -> Option<i64> {
        self.observations
            .iter()
            .filter_map(|obs| obs.first().map(|&(t, _)| t))
            .min()
    }

    /// Latest observation timestamp across all channels.
    pub fn last_timestamp(&self) -> Option<i64> {
        self.observations
            .iter()
            .filter_map(|obs| obs.last().map(|&(t, _)| t))
            .max()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn is_positive(self) -> bool {
        matches!(self, Label::Positive)
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Label::Negative => 0,
            Label::Positive => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::Negative),
            1 => Some(Label::Positive),
            _ => None,
        }
    }
}

/// One resampled, gap-filled 6-hour window with its 3-hour-horizon label.
///
/// `grid[c][i]` is channel `c` at time `start_time + i * 300 s`. A channel
/// left all-sentinel by filling (possible only for an exempted channel)
/// stays `MISSING` throughout.
#[derive(Debug, Clone)]
pub struct WindowUnit {
    /// Stable identifier: `{patient_id}:{start_time}`.
    pub unit_id: String,
    pub patient_id: String,
    pub start_time: i64,
    pub grid: [Vec<f64>; VitalChannel::COUNT],
    pub label: Label,
    /// Raw (pre-fill) observation count per channel inside
    /// `[start_time, end_time())`.
    pub channel_observed_counts: [usize; VitalChannel::COUNT],
}

impl WindowUnit {
    pub fn make_id(patient_id: &str, start_time: i64) -> String {
        format!("{patient_id}:{start_time}")
    }

    /// Exclusive window end: `start_time + 72 * 300 s`.
    pub fn end_time(&self) -> i64 {
        self.start_time + WINDOW_STEPS as i64 * STEP_SECONDS
    }

    pub fn channel_values(&self, channel: VitalChannel) -> &[f64] {
        &self.grid[channel.index()]
    }

    /// True when every cell of the channel is the missing sentinel.
    pub fn channel_all_missing(&self, channel: VitalChannel) -> bool {
        self.grid[channel.index()].iter().all(|v| v.is_nan())
    }
}

/// Where a cohort came from: a named source, or the synthetic generator
/// with its seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Source(String),
    Synthetic { name: String, seed: u64 },
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Source(name) => write!(f, "{name}"),
            Provenance::Synthetic { name, seed } => write!(f, "{name} (seed {seed})"),
        }
    }
}

/// A set of labeled window units plus the demographics they refer to.
#[derive(Debug, Clone)]
pub struct CohortDataset {
    pub units: Vec<WindowUnit>,
    pub demographics: BTreeMap<String, Demographics>,
    pub provenance: Provenance,
}

impl CohortDataset {
    /// Patients whose units have no demographics record.
    pub fn demographics_missing(&self) -> Vec<String> {
        let mut missing: Vec<String> = self
            .units
            .iter()
            .filter(|u| !self.demographics.contains_key(&u.patient_id))
            .map(|u| u.patient_id.clone())
            .collect();
        missing.sort();
        missing.dedup();
        missing
    }
}

/// Fraction of positive units in the cohort.
pub fn prevalence(dataset: &CohortDataset) -> Result<f64> {
    if dataset.units.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let positives = dataset
        .units
        .iter()
        .filter(|u| u.label.is_positive())
        .count();
    Ok(positives as f64 / dataset.units.len() as f64)
}
