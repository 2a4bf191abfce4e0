//! Seeded synthetic cohort generator standing in for the restricted
//! clinical datasets: plausible vitals with irregular sampling,
//! autocorrelated noise, planted pre-onset dynamics, and configurable
//! prevalence and sampling frequency.
//!
//! Sepsis patients ramp all four signal channels together before onset
//! (heartrate and respiration up, systolic pressure and SpO2 down).
//! Control patients get occasional benign episodes driving only two of
//! the four channels at double magnitude, which matches the per-channel
//! footprint of the sepsis ramp: the class signal then lives in the
//! joint channel pattern rather than any single column, and
//! `interaction_strength` scales how often those distractors appear
//! (0 = none, so a linear model suffices; 1 = fully matched marginals).

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cohort::{prevalence, CohortDataset, Provenance, STEP_SECONDS, WINDOW_STEPS};
use crate::error::Result;
use crate::ingest::{
    derive_pulse_pressure, parse_demographics, parse_onsets, parse_vitals, sanity_filter,
    PlausibilityTable,
};
use crate::resample::{build_units, WindowConfig};

const WINDOW_SECONDS: i64 = WINDOW_STEPS as i64 * STEP_SECONDS;

/// Per-channel generation knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProfile {
    pub baseline: f64,
    /// Scale of the per-patient baseline offset.
    pub patient_sd: f64,
    /// AR(1) innovation scale.
    pub noise_sd: f64,
    pub mean_sampling_interval_s: f64,
    /// Probability a scheduled sample is dropped.
    pub missing_rate: f64,
    /// Values are clipped into this range, inside the plausibility
    /// bounds, so the sanity filter removes essentially nothing.
    pub clip: (f64, f64),
}

/// Channels the generator emits; pulse pressure is derived downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GenChannel {
    SystolicBp,
    DiastolicBp,
    MeanBp,
    HeartRate,
    Respiration,
    Spo2,
    Gcs,
}

impl GenChannel {
    const ALL: [GenChannel; 7] = [
        GenChannel::SystolicBp,
        GenChannel::DiastolicBp,
        GenChannel::MeanBp,
        GenChannel::HeartRate,
        GenChannel::Respiration,
        GenChannel::Spo2,
        GenChannel::Gcs,
    ];

    fn name(self) -> &'static str {
        match self {
            GenChannel::SystolicBp => "systolicbp",
            GenChannel::DiastolicBp => "diastolicbp",
            GenChannel::MeanBp => "meanbp",
            GenChannel::HeartRate => "heartrate",
            GenChannel::Respiration => "respiration",
            GenChannel::Spo2 => "spo2",
            GenChannel::Gcs => "gcs",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub seed: u64,
    pub target_unit_prevalence: f64,
    pub profiles: Vec<ChannelProfile>,
    pub drift_hours_before_onset: f64,
    /// 0 disables control distractors (purely additive signal); 1 makes
    /// their per-channel footprint match the sepsis ramp.
    pub interaction_strength: f64,
    pub age_range: (u32, u32),
    pub preset: String,
}

fn profile(
    baseline: f64,
    patient_sd: f64,
    noise_sd: f64,
    interval: f64,
    missing: f64,
    clip: (f64, f64),
) -> ChannelProfile {
    ChannelProfile {
        baseline,
        patient_sd,
        noise_sd,
        mean_sampling_interval_s: interval,
        missing_rate: missing,
        clip,
    }
}

impl SynthConfig {
    /// Dense 5-minute monitoring, larger cohort, paper-like prevalence.
    pub fn eicu_like(n_patients: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            n_patients,
            seed,
            target_unit_prevalence: 0.244,
            profiles: vec![
                profile(122.0, 11.0, 3.5, 300.0, 0.02, (45.0, 290.0)), // systolicbp
                profile(70.0, 7.0, 2.5, 300.0, 0.02, (25.0, 190.0)),   // diastolicbp
                profile(88.0, 8.0, 2.5, 300.0, 0.02, (35.0, 240.0)),   // meanbp
                profile(82.0, 8.0, 2.8, 300.0, 0.02, (25.0, 280.0)),   // heartrate
                profile(16.0, 2.2, 1.0, 300.0, 0.02, (5.0, 60.0)),     // respiration
                profile(97.0, 1.1, 0.5, 300.0, 0.02, (55.0, 100.0)),   // spo2
                profile(15.0, 0.0, 0.0, 3600.0, 0.0, (3.0, 15.0)),     // gcs
            ],
            drift_hours_before_onset: 4.0,
            interaction_strength: 1.0,
            age_range: (35, 90),
            preset: "eicu-like".to_string(),
        }
    }

    /// Sparser capture, smaller cohort, stronger imbalance.
    pub fn hospital_like(n_patients: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            n_patients,
            seed,
            target_unit_prevalence: 0.12,
            profiles: vec![
                profile(124.0, 12.0, 4.0, 900.0, 0.05, (45.0, 290.0)),
                profile(71.0, 7.5, 2.8, 900.0, 0.05, (25.0, 190.0)),
                profile(89.0, 8.0, 2.8, 900.0, 0.05, (35.0, 240.0)),
                profile(80.0, 9.0, 3.0, 900.0, 0.05, (25.0, 280.0)),
                profile(16.5, 2.4, 1.1, 900.0, 0.05, (5.0, 60.0)),
                profile(96.5, 1.3, 0.6, 900.0, 0.05, (55.0, 100.0)),
                profile(15.0, 0.0, 0.0, 7200.0, 0.0, (3.0, 15.0)),
            ],
            drift_hours_before_onset: 4.0,
            interaction_strength: 1.0,
            age_range: (30, 95),
            preset: "hospital-like".to_string(),
        }
    }

    pub fn preset_by_name(name: &str, n_patients: usize, seed: u64) -> Option<SynthConfig> {
        match name {
            "eicu-like" => Some(SynthConfig::eicu_like(n_patients, seed)),
            "hospital-like" => Some(SynthConfig::hospital_like(n_patients, seed)),
            _ => None,
        }
    }
}

/// The three CSV documents a generated cohort consists of.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortFiles {
    pub vitals_csv: String,
    pub demographics_csv: String,
    pub onsets_csv: String,
}

/// Box-Muller standard normal draw from the given stream.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Signal magnitudes (full-ramp deltas) for the four sepsis channels.
fn ramp_magnitude(channel: GenChannel) -> f64 {
    match channel {
        GenChannel::HeartRate => 26.0,
        GenChannel::Respiration => 7.0,
        GenChannel::SystolicBp => -22.0,
        GenChannel::Spo2 => -4.5,
        // Pressure companions follow systolic weakly.
        GenChannel::DiastolicBp => -7.0,
        GenChannel::MeanBp => -12.0,
        GenChannel::Gcs => 0.0,
    }
}

const SIGNAL_CHANNELS: [GenChannel; 4] = [
    GenChannel::HeartRate,
    GenChannel::Respiration,
    GenChannel::SystolicBp,
    GenChannel::Spo2,
];

/// One benign control episode: the sepsis ramp geometry aimed at a
/// virtual onset just past a window's end, on three of the four signal
/// channels at 4/3 amplitude. Endpoint levels, slopes, and their sums
/// then match the sepsis pattern channel-for-channel in distribution,
/// so only the joint "which channel stayed flat" pattern separates the
/// classes.
struct Episode {
    window: usize,
    skipped: GenChannel,
    /// Severity times the 4/3 sum-matching factor.
    amplitude: f64,
    virtual_onset: i64,
}

/// Pre-onset window count distribution for sepsis patients: how many
/// full windows precede the positive one.
const SEPSIS_PRE_WINDOWS: [(usize, f64); 3] = [(1, 0.45), (2, 0.35), (3, 0.2)];
/// Control record lengths in windows.
const CONTROL_WINDOWS: [usize; 3] = [3, 4, 5];

/// Expected negative units per sepsis patient / units per control under
/// the distributions above.
fn expected_unit_yield() -> (f64, f64) {
    let e_ns: f64 = SEPSIS_PRE_WINDOWS
        .iter()
        .map(|&(n, p)| (n - 1) as f64 * p)
        .sum();
    let e_nc = CONTROL_WINDOWS.iter().sum::<usize>() as f64 / CONTROL_WINDOWS.len() as f64;
    (e_ns, e_nc)
}

/// Sepsis patient fraction that hits the target unit prevalence in
/// expectation (each sepsis patient yields exactly one positive unit).
fn sepsis_fraction(target: f64) -> f64 {
    let (e_ns, e_nc) = expected_unit_yield();
    (target * e_nc / (1.0 - target * (1.0 + e_ns) + target * e_nc)).clamp(0.0, 1.0)
}

struct PatientPlan {
    start_offset: i64,
    align: i64,
    /// Onset instant for septic patients.
    onset: Option<i64>,
    record_end: i64,
    severity: f64,
    /// Benign control episodes; empty for septic patients.
    distractors: Vec<Episode>,
    gcs_base: f64,
}

fn plan_patient(rng: &mut ChaCha8Rng, septic: bool, config: &SynthConfig) -> PatientPlan {
    let start_offset = rng.gen_range(0..3600i64);
    let align = start_offset.div_euclid(STEP_SECONDS) * STEP_SECONDS;
    let severity = rng.gen_range(0.75..1.25);
    let gcs_base = if rng.gen_bool(0.85) { 15.0 } else { 14.0 };

    if septic {
        let roll: f64 = rng.gen();
        let mut acc = 0.0;
        let mut n_pre = SEPSIS_PRE_WINDOWS[0].0;
        for &(n, p) in &SEPSIS_PRE_WINDOWS {
            acc += p;
            if roll < acc {
                n_pre = n;
                break;
            }
        }
        let u = rng.gen_range(900..=10_500i64);
        let onset = align + n_pre as i64 * WINDOW_SECONDS + u;
        PatientPlan {
            start_offset,
            align,
            onset: Some(onset),
            record_end: onset + 3600,
            severity,
            distractors: Vec::new(),
            gcs_base,
        }
    } else {
        let n_windows = CONTROL_WINDOWS[rng.gen_range(0..CONTROL_WINDOWS.len())];
        let record_end = align + n_windows as i64 * WINDOW_SECONDS + 600;
        let episode_rate = (0.8 * config.interaction_strength).clamp(0.0, 1.0);
        let mut distractors = Vec::new();
        for w in 0..n_windows {
            if rng.gen_bool(episode_rate) {
                let skipped = SIGNAL_CHANNELS[rng.gen_range(0..SIGNAL_CHANNELS.len())];
                let lambda = rng.gen_range(0.75..1.25);
                // Same virtual-onset geometry as the sepsis ramp, aimed
                // just past this window's end.
                let u = rng.gen_range(900..=10_500i64);
                let window_end = align + (w as i64 + 1) * WINDOW_SECONDS;
                distractors.push(Episode {
                    window: w,
                    skipped,
                    amplitude: lambda * 4.0 / 3.0,
                    virtual_onset: window_end + u,
                });
            }
        }
        PatientPlan {
            start_offset,
            align,
            onset: None,
            record_end,
            severity,
            distractors,
            gcs_base,
        }
    }
}

/// Planted delta for one channel at one instant.
fn signal_delta(plan: &PatientPlan, channel: GenChannel, t: i64, drift_s: f64) -> f64 {
    if let Some(onset) = plan.onset {
        let ramp = ((t - onset) as f64 / drift_s + 1.0).clamp(0.0, 1.0);
        return ramp_magnitude(channel) * plan.severity * ramp;
    }
    // Control episode: the sepsis geometry toward a virtual onset, three
    // of four channels engaged, strictly inside one window.
    for episode in &plan.distractors {
        if episode.skipped == channel || !SIGNAL_CHANNELS.contains(&channel) {
            continue;
        }
        let window_end = plan.align + (episode.window as i64 + 1) * WINDOW_SECONDS;
        if t >= window_end - WINDOW_SECONDS && t < window_end {
            let ramp = ((t - episode.virtual_onset) as f64 / drift_s + 1.0).clamp(0.0, 1.0);
            return ramp_magnitude(channel) * episode.amplitude * ramp;
        }
    }
    0.0
}

/// Generate the cohort files. Output is byte-deterministic given the
/// config: per-patient values come from ChaCha streams keyed by
/// (seed, patient index), so worker count and generation order cannot
/// change them.
pub fn generate_cohort(config: &SynthConfig) -> CohortFiles {
    let n = config.n_patients;
    let id_width = n.saturating_sub(1).to_string().len().max(4);
    let n_sepsis = (sepsis_fraction(config.target_unit_prevalence) * n as f64).round() as usize;

    // Cohort stream decides which patients are septic.
    let mut cohort_rng = stream_rng(config.seed, 0);
    let mut septic = vec![false; n];
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..order.len()).rev() {
        let j = cohort_rng.gen_range(0..=i);
        order.swap(i, j);
    }
    for &i in order.iter().take(n_sepsis) {
        septic[i] = true;
    }

    let drift_s = config.drift_hours_before_onset * 3600.0;
    let mut vitals = String::from("patient_id,timestamp,channel,value\n");
    let mut demographics = String::from("patient_id,age,gender,ethnicity\n");
    let mut onsets = String::from("patient_id,onset_timestamp\n");
    const ETHNICITIES: [(&str, f64); 4] =
        [("groupa", 0.4), ("groupb", 0.3), ("groupc", 0.2), ("groupd", 0.1)];

    for p in 0..n {
        let patient_id = format!("p{p:0id_width$}");
        let mut rng = stream_rng(config.seed, 1 + p as u64);
        let plan = plan_patient(&mut rng, septic[p], config);

        // Demographics.
        let age = rng.gen_range(config.age_range.0..=config.age_range.1);
        let gender = if rng.gen_bool(0.5) { "male" } else { "female" };
        let roll: f64 = rng.gen();
        let mut acc = 0.0;
        let mut ethnicity = ETHNICITIES[0].0;
        for &(name, prob) in &ETHNICITIES {
            acc += prob;
            if roll < acc {
                ethnicity = name;
                break;
            }
        }
        writeln!(demographics, "{patient_id},{age},{gender},{ethnicity}").unwrap();
        if let Some(onset) = plan.onset {
            writeln!(onsets, "{patient_id},{onset}").unwrap();
        }

        // Sampling schedules: blood pressures share one schedule so pulse
        // pressure can be derived; the rest are independent.
        let mut rows: Vec<(i64, usize, f64)> = Vec::new();
        let schedules: [&[GenChannel]; 5] = [
            &[GenChannel::SystolicBp, GenChannel::DiastolicBp, GenChannel::MeanBp],
            &[GenChannel::HeartRate],
            &[GenChannel::Respiration],
            &[GenChannel::Spo2],
            &[GenChannel::Gcs],
        ];
        for (s, channels) in schedules.iter().enumerate() {
            let lead = &config.profiles[gen_index(channels[0])];
            let interval = lead.mean_sampling_interval_s;
            // Per-patient baseline offsets and AR(1) noise states.
            let mut offsets = Vec::new();
            let mut states = Vec::new();
            for &c in channels.iter() {
                let prof = &config.profiles[gen_index(c)];
                offsets.push(prof.baseline + prof.patient_sd * normal(&mut rng));
                states.push(0.0f64);
            }
            // Blood-pressure channels stay physiologically ordered.
            if s == 0 {
                offsets[1] = offsets[1].min(offsets[0] - 20.0); // dbp below sbp
                offsets[2] = offsets[1] + (offsets[0] - offsets[1]) / 3.0;
            }

            let mut t = if s == 0 {
                plan.start_offset
            } else {
                plan.start_offset + rng.gen_range(0..interval as i64)
            };
            let mut first = true;
            let mut tick = vec![0.0f64; channels.len()];
            while t <= plan.record_end {
                let emit = first || !rng.gen_bool(lead.missing_rate);
                for (i, &c) in channels.iter().enumerate() {
                    let prof = &config.profiles[gen_index(c)];
                    states[i] = 0.9 * states[i] + prof.noise_sd * normal(&mut rng);
                    let value = if c == GenChannel::Gcs {
                        plan.gcs_base
                    } else {
                        offsets[i] + states[i] + signal_delta(&plan, c, t, drift_s)
                    };
                    tick[i] = value.clamp(prof.clip.0, prof.clip.1);
                }
                if s == 0 {
                    // Keep pulse pressure inside its plausibility band and
                    // the mean between the two pressures.
                    tick[1] = tick[1].min(tick[0] - 6.0);
                    tick[2] = tick[2].clamp(tick[1], tick[0]);
                }
                if emit {
                    for (i, &c) in channels.iter().enumerate() {
                        let value = if c == GenChannel::Gcs {
                            tick[i]
                        } else {
                            (tick[i] * 10.0).round() / 10.0
                        };
                        rows.push((t, gen_index(c), value));
                    }
                }
                first = false;
                let jitter = rng.gen_range(0.5..1.5);
                t += ((interval * jitter).round() as i64).max(STEP_SECONDS / 5);
            }
        }

        rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for (t, c, v) in rows {
            writeln!(vitals, "{patient_id},{t},{},{v}", GenChannel::ALL[c].name()).unwrap();
        }
    }

    CohortFiles {
        vitals_csv: vitals,
        demographics_csv: demographics,
        onsets_csv: onsets,
    }
}

fn gen_index(c: GenChannel) -> usize {
    GenChannel::ALL.iter().position(|&x| x == c).unwrap()
}

/// Cohort summary after running the generated files through the
/// standard preprocessing pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSummary {
    pub patients: usize,
    pub units: usize,
    pub positive_units: usize,
    pub prevalence: f64,
    pub rejected_units: usize,
    /// Mean fraction of window steps without a raw observation, per
    /// canonical channel.
    pub channel_missingness: Vec<(String, f64)>,
}

/// Parse, preprocess, and summarize a cohort. Consistent with the
/// ingest and windowing pipeline by construction: it runs them.
pub fn describe_cohort(files: &CohortFiles) -> Result<CohortSummary> {
    let dataset = build_dataset(files, &WindowConfig::default(), &PlausibilityTable::default())?;
    let units = dataset.units.len();
    let positive_units = dataset
        .units
        .iter()
        .filter(|u| u.label.is_positive())
        .count();
    let mut channel_missingness = Vec::new();
    for (ci, channel) in crate::cohort::VitalChannel::ALL.iter().enumerate() {
        let mean_missing = if units == 0 {
            0.0
        } else {
            dataset
                .units
                .iter()
                .map(|u| {
                    let steps = u.grid[0].len().max(1);
                    1.0 - (u.channel_observed_counts[ci] as f64 / steps as f64).min(1.0)
                })
                .sum::<f64>()
                / units as f64
        };
        channel_missingness.push((channel.name().to_string(), mean_missing));
    }
    let prevalence = if units == 0 {
        0.0
    } else {
        prevalence(&dataset)?
    };
    Ok(CohortSummary {
        patients: dataset.demographics.len(),
        units,
        positive_units,
        prevalence,
        rejected_units: 0,
        channel_missingness,
    })
}

/// Run the full ingest + windowing pipeline over cohort files.
pub fn build_dataset(
    files: &CohortFiles,
    window: &WindowConfig,
    table: &PlausibilityTable,
) -> Result<CohortDataset> {
    let (mut series_map, _report) = parse_vitals(files.vitals_csv.as_bytes(), "vitals")?;
    let (demographics, _) = parse_demographics(files.demographics_csv.as_bytes(), "demographics")?;
    let (onsets, _) = parse_onsets(files.onsets_csv.as_bytes(), "onsets")?;

    let mut units = Vec::new();
    for (patient_id, series) in series_map.iter_mut() {
        let mut s = std::mem::replace(series, crate::cohort::PatientSeries::new(patient_id.clone()));
        if let Some(list) = onsets.get(patient_id) {
            s.onset_times = list.clone();
        }
        let s = derive_pulse_pressure(s);
        let (s, _rejects) = sanity_filter(s, table);
        if s.total_observations() == 0 {
            continue;
        }
        let (accepted, _rejected) = build_units(&s, window)?;
        units.extend(accepted);
    }
    units.sort_by(|a, b| (&a.patient_id, a.start_time).cmp(&(&b.patient_id, b.start_time)));

    Ok(CohortDataset {
        units,
        demographics,
        provenance: Provenance::Source("files".to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_byte_deterministic() {
        let config = SynthConfig::eicu_like(8, 42);
        let a = generate_cohort(&config);
        let b = generate_cohort(&config);
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate_cohort(&SynthConfig::eicu_like(4, 1));
        let b = generate_cohort(&SynthConfig::eicu_like(4, 2));
        assert_ne!(a.vitals_csv, b.vitals_csv);
    }

    #[test]
    fn sanity_filter_removes_nothing_at_default_noise() {
        let files = generate_cohort(&SynthConfig::eicu_like(6, 3));
        let (series_map, report) = parse_vitals(files.vitals_csv.as_bytes(), "vitals").unwrap();
        assert_eq!(report.total_rows(), 0);
        let table = PlausibilityTable::default();
        let mut removed = 0;
        for (_, series) in series_map {
            let with_pp = derive_pulse_pressure(series);
            let (_, r) = sanity_filter(with_pp, &table);
            removed += r.out_of_range;
        }
        assert_eq!(removed, 0);
    }

    #[test]
    fn empty_cohort_summarizes_to_zeros() {
        let files = CohortFiles {
            vitals_csv: "patient_id,timestamp,channel,value\n".to_string(),
            demographics_csv: "patient_id,age,gender,ethnicity\n".to_string(),
            onsets_csv: "patient_id,onset_timestamp\n".to_string(),
        };
        let summary = describe_cohort(&files).unwrap();
        assert_eq!(summary.units, 0);
        assert_eq!(summary.prevalence, 0.0);
    }

    #[test]
    fn twelve_hours_yields_two_units() {
        // One control patient with exactly 12 h of dense data.
        let mut vitals = String::from("patient_id,timestamp,channel,value\n");
        for step in 0..=(2 * WINDOW_STEPS) {
            let t = step as i64 * STEP_SECONDS;
            for (channel, value) in [
                ("systolicbp", 120.0),
                ("diastolicbp", 80.0),
                ("meanbp", 93.0),
                ("heartrate", 80.0),
                ("respiration", 16.0),
                ("spo2", 97.0),
                ("gcs", 15.0),
            ] {
                vitals.push_str(&format!("px,{t},{channel},{value}\n"));
            }
        }
        let files = CohortFiles {
            vitals_csv: vitals,
            demographics_csv: "patient_id,age,gender,ethnicity\npx,60,male,groupa\n".to_string(),
            onsets_csv: "patient_id,onset_timestamp\n".to_string(),
        };
        let summary = describe_cohort(&files).unwrap();
        assert_eq!(summary.units, 2);
        assert_eq!(summary.positive_units, 0);
    }

    #[test]
    fn sepsis_patients_contribute_one_positive_unit() {
        let config = SynthConfig::eicu_like(30, 11);
        let files = generate_cohort(&config);
        let dataset = build_dataset(
            &files,
            &WindowConfig::default(),
            &PlausibilityTable::default(),
        )
        .unwrap();
        let (onset_map, _) = parse_onsets(files.onsets_csv.as_bytes(), "onsets").unwrap();
        for (patient, _) in onset_map.iter() {
            let positives = dataset
                .units
                .iter()
                .filter(|u| &u.patient_id == patient && u.label.is_positive())
                .count();
            assert_eq!(positives, 1, "patient {patient}");
        }
        // No positives among patients without onsets.
        for unit in &dataset.units {
            if unit.label.is_positive() {
                assert!(onset_map.contains_key(&unit.patient_id));
            }
        }
    }

    #[test]
    fn prevalence_tracks_target_at_scale() {
        let config = SynthConfig::eicu_like(200, 7);
        let files = generate_cohort(&config);
        let summary = describe_cohort(&files).unwrap();
        assert!(
            (summary.prevalence - 0.244).abs() <= 0.03,
            "prevalence {} at n=200",
            summary.prevalence
        );
    }

    #[test]
    fn hospital_preset_is_sparser_and_more_imbalanced() {
        let files = generate_cohort(&SynthConfig::hospital_like(60, 5));
        let summary = describe_cohort(&files).unwrap();
        assert!(summary.prevalence < 0.2, "prevalence {}", summary.prevalence);
        let hr_missing = summary
            .channel_missingness
            .iter()
            .find(|(name, _)| name == "heartrate")
            .unwrap()
            .1;
        assert!(hr_missing > 0.5, "heartrate missingness {hr_missing}");
    }
}
