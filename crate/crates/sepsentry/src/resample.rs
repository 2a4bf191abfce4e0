//! 5-minute grid alignment, gap filling, non-overlapping 6-hour
//! windowing, 3-hour-horizon labeling, and unit validation.
//!
//! The stage order is resample -> fill -> segment -> label -> validate;
//! `build_units` runs the whole chain for one patient.

use std::io::{BufRead, Write};

use crate::cohort::{
    Label, PatientSeries, VitalChannel, WindowUnit, HORIZON_STEPS, MISSING, STEP_SECONDS,
    WINDOW_STEPS,
};
use crate::error::{Error, Result};
use crate::ingest::{compute_qsofa, Qsofa};

/// A per-patient series aligned to the 300 s grid. Cell `i` of a channel
/// holds the last observation at or before `grid_start + i * 300`, or
/// the missing sentinel. Raw observation timestamps are kept so
/// segmentation can count pre-fill coverage.
#[derive(Debug, Clone)]
pub struct GridSeries {
    pub patient_id: String,
    /// First cell time; always a multiple of 300.
    pub grid_start: i64,
    pub channels: [Vec<f64>; VitalChannel::COUNT],
    raw_times: [Vec<i64>; VitalChannel::COUNT],
}

impl GridSeries {
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_time(&self, step: usize) -> i64 {
        self.grid_start + step as i64 * STEP_SECONDS
    }

    /// Channels with no observation anywhere in the record; these stay
    /// all-sentinel through filling.
    pub fn all_missing_channels(&self) -> Vec<VitalChannel> {
        VitalChannel::ALL
            .iter()
            .copied()
            .filter(|c| self.raw_times[c.index()].is_empty())
            .collect()
    }
}

fn floor_to_step(t: i64) -> i64 {
    t.div_euclid(STEP_SECONDS) * STEP_SECONDS
}

fn ceil_to_step(t: i64) -> i64 {
    -((-t).div_euclid(STEP_SECONDS)) * STEP_SECONDS
}

/// Align a series to the 300 s grid. The grid runs from
/// `floor(first_obs / 300) * 300` to `ceil(last_obs / 300) * 300` so the
/// final observation lands in a cell; each cell carries the last
/// observation at or before its time.
pub fn resample_to_grid(series: &PatientSeries) -> Result<GridSeries> {
    let first = series
        .first_timestamp()
        .ok_or_else(|| Error::EmptySeries(series.patient_id.clone()))?;
    let last = series.last_timestamp().unwrap();
    let grid_start = floor_to_step(first);
    let grid_end = ceil_to_step(last);
    let len = ((grid_end - grid_start) / STEP_SECONDS) as usize + 1;

    let mut channels: [Vec<f64>; VitalChannel::COUNT] = Default::default();
    let mut raw_times: [Vec<i64>; VitalChannel::COUNT] = Default::default();
    for channel in VitalChannel::ALL {
        let obs = series.channel(channel);
        let mut values = vec![MISSING; len];
        let mut at = 0usize;
        let mut current = MISSING;
        for (i, cell) in values.iter_mut().enumerate() {
            let cell_time = grid_start + i as i64 * STEP_SECONDS;
            while at < obs.len() && obs[at].0 <= cell_time {
                current = obs[at].1;
                at += 1;
            }
            *cell = current;
        }
        channels[channel.index()] = values;
        raw_times[channel.index()] = obs.iter().map(|&(t, _)| t).collect();
    }
    Ok(GridSeries {
        patient_id: series.patient_id.clone(),
        grid_start,
        channels,
        raw_times,
    })
}

/// Forward-fill then backward-fill each channel. Channels with no
/// observations at all stay sentinel.
pub fn fill_missing(mut grid: GridSeries) -> GridSeries {
    for values in grid.channels.iter_mut() {
        let mut carry = MISSING;
        for v in values.iter_mut() {
            if v.is_nan() {
                *v = carry;
            } else {
                carry = *v;
            }
        }
        let mut carry = MISSING;
        for v in values.iter_mut().rev() {
            if v.is_nan() {
                *v = carry;
            } else {
                carry = *v;
            }
        }
    }
    grid
}

/// Cut consecutive full windows from the grid start; the trailing
/// partial window is discarded. Labels are placeholders until
/// `label_and_prune` runs. Observed counts cover raw timestamps in
/// `[window_start, window_end)`.
pub fn segment_windows(
    grid: &GridSeries,
    window_steps: usize,
    stride_steps: usize,
) -> Result<Vec<WindowUnit>> {
    if window_steps < 1 {
        return Err(Error::Params("window_steps must be >= 1".to_string()));
    }
    if stride_steps != window_steps {
        return Err(Error::Params(
            "stride_steps must equal window_steps (windows do not overlap)".to_string(),
        ));
    }
    let n_windows = grid.len() / window_steps;
    let mut units = Vec::with_capacity(n_windows);
    for w in 0..n_windows {
        let begin = w * window_steps;
        let start_time = grid.cell_time(begin);
        let end_time = start_time + window_steps as i64 * STEP_SECONDS;
        let mut window_grid: [Vec<f64>; VitalChannel::COUNT] = Default::default();
        let mut counts = [0usize; VitalChannel::COUNT];
        for channel in VitalChannel::ALL {
            let ci = channel.index();
            window_grid[ci] = grid.channels[ci][begin..begin + window_steps].to_vec();
            let times = &grid.raw_times[ci];
            let lo = times.partition_point(|&t| t < start_time);
            let hi = times.partition_point(|&t| t < end_time);
            counts[ci] = hi - lo;
        }
        units.push(WindowUnit {
            unit_id: WindowUnit::make_id(&grid.patient_id, start_time),
            patient_id: grid.patient_id.clone(),
            start_time,
            grid: window_grid,
            label: Label::Negative,
            channel_observed_counts: counts,
        });
    }
    Ok(units)
}

/// Assign 3-hour-horizon labels and drop units that contain or follow
/// the first onset. A unit is positive iff an onset lies in
/// `(end, end + horizon_steps * 300]`.
pub fn label_and_prune(
    units: Vec<WindowUnit>,
    onset_times: &[i64],
    horizon_steps: usize,
) -> Vec<WindowUnit> {
    debug_assert!(onset_times.windows(2).all(|w| w[0] <= w[1]));
    let horizon = horizon_steps as i64 * STEP_SECONDS;
    let first_onset = onset_times.first().copied();
    units
        .into_iter()
        .filter_map(|mut unit| {
            let end = unit.start_time + unit.grid[0].len() as i64 * STEP_SECONDS;
            if let Some(first) = first_onset {
                if first <= end {
                    return None; // contains or follows the onset
                }
            }
            let positive = onset_times
                .iter()
                .any(|&t| t > end && t <= end + horizon);
            unit.label = if positive { Label::Positive } else { Label::Negative };
            Some(unit)
        })
        .collect()
}

/// Outcome of unit validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Validation {
    Accept,
    Reject(String),
}

impl Validation {
    pub fn is_accept(&self) -> bool {
        matches!(self, Validation::Accept)
    }
}

/// Reject units with sparse raw coverage or channels left all-sentinel
/// by filling. GCS is exempt from the coverage rule and, when
/// `gcs_optional` is set, from the all-sentinel rule too.
pub fn validate_unit(unit: &WindowUnit, min_obs_per_channel: usize, gcs_optional: bool) -> Validation {
    for channel in VitalChannel::ALL {
        let is_gcs = channel == VitalChannel::Gcs;
        if !is_gcs && unit.channel_observed_counts[channel.index()] < min_obs_per_channel {
            return Validation::Reject(format!("sparse:{channel}"));
        }
        if unit.channel_all_missing(channel) && !(is_gcs && gcs_optional) {
            return Validation::Reject(format!("empty:{channel}"));
        }
    }
    Validation::Accept
}

/// qSOFA at the unit's prediction point (its last grid step).
pub fn unit_qsofa(unit: &WindowUnit) -> Qsofa {
    let last = unit.grid[0].len() - 1;
    let resp = unit.grid[VitalChannel::Respiration.index()][last];
    let sbp = unit.grid[VitalChannel::SystolicBp.index()][last];
    let gcs = unit.grid[VitalChannel::Gcs.index()][last];
    compute_qsofa(resp, sbp, if gcs.is_nan() { None } else { Some(gcs) })
}

/// Windowing configuration shared by the pipeline stages.
#[derive(Debug, Clone)]
pub struct WindowConfig {
    pub window_steps: usize,
    pub horizon_steps: usize,
    pub min_obs_per_channel: usize,
    pub gcs_optional: bool,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window_steps: WINDOW_STEPS,
            horizon_steps: HORIZON_STEPS,
            min_obs_per_channel: 1,
            gcs_optional: false,
        }
    }
}

/// Run resample -> fill -> segment -> label -> validate for one patient.
/// Returns the accepted units plus the number rejected by validation.
pub fn build_units(
    series: &PatientSeries,
    config: &WindowConfig,
) -> Result<(Vec<WindowUnit>, usize)> {
    let grid = resample_to_grid(series)?;
    let grid = fill_missing(grid);
    let units = segment_windows(&grid, config.window_steps, config.window_steps)?;
    let labeled = label_and_prune(units, &series.onset_times, config.horizon_steps);
    let mut accepted = Vec::with_capacity(labeled.len());
    let mut rejected = 0usize;
    for unit in labeled {
        match validate_unit(&unit, config.min_obs_per_channel, config.gcs_optional) {
            Validation::Accept => accepted.push(unit),
            Validation::Reject(_) => rejected += 1,
        }
    }
    Ok((accepted, rejected))
}

fn write_cell(out: &mut String, v: f64) {
    if !v.is_nan() {
        out.push_str(&v.to_string());
    }
}

/// Write the per-step unit file: one row per step,
/// `unit_id,patient_id,step,<channels...>,label`.
pub fn write_units_csv<W: Write>(units: &[WindowUnit], mut writer: W) -> Result<()> {
    let mut header = String::from("unit_id,patient_id,step");
    for channel in VitalChannel::ALL {
        header.push(',');
        header.push_str(channel.name());
    }
    header.push_str(",label\n");
    writer.write_all(header.as_bytes())?;
    for unit in units {
        for step in 0..unit.grid[0].len() {
            let mut row = format!("{},{},{step}", unit.unit_id, unit.patient_id);
            for channel in VitalChannel::ALL {
                row.push(',');
                write_cell(&mut row, unit.grid[channel.index()][step]);
            }
            row.push(',');
            row.push_str(&unit.label.as_u8().to_string());
            row.push('\n');
            writer.write_all(row.as_bytes())?;
        }
    }
    Ok(())
}

/// Read a per-step unit file back. Rows of one unit must be contiguous
/// and step-ordered, as written by `write_units_csv`. The unit start
/// time is recovered from the `{patient_id}:{start_time}` id; observed
/// counts are not stored and come back as zero.
pub fn read_units_csv<R: BufRead>(reader: R, path: &str) -> Result<Vec<WindowUnit>> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => return Err(Error::parse(path, 1, "empty file")),
    };
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    let expect: Vec<String> = {
        let mut e = vec!["unit_id".to_string(), "patient_id".to_string(), "step".to_string()];
        e.extend(VitalChannel::ALL.iter().map(|c| c.name().to_string()));
        e.push("label".to_string());
        e
    };
    if cols != expect.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::parse(path, 1, format!("unexpected header: {header}")));
    }

    let mut units: Vec<WindowUnit> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let lineno = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expect.len() {
            return Err(Error::parse(path, lineno, "wrong field count"));
        }
        let unit_id = fields[0];
        let patient_id = fields[1];
        let step: usize = fields[2]
            .parse()
            .map_err(|_| Error::parse(path, lineno, "bad step"))?;
        let label_bit: u8 = fields[expect.len() - 1]
            .parse()
            .map_err(|_| Error::parse(path, lineno, "bad label"))?;
        let label = Label::from_u8(label_bit)
            .ok_or_else(|| Error::parse(path, lineno, "label must be 0 or 1"))?;

        if step == 0 {
            let start_time: i64 = unit_id
                .rsplit(':')
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(path, lineno, "unit_id must end in :start_time"))?;
            units.push(WindowUnit {
                unit_id: unit_id.to_string(),
                patient_id: patient_id.to_string(),
                start_time,
                grid: Default::default(),
                label,
                channel_observed_counts: [0; VitalChannel::COUNT],
            });
        }
        let unit = units
            .last_mut()
            .filter(|u| u.unit_id == unit_id)
            .ok_or_else(|| Error::parse(path, lineno, "unit rows out of order"))?;
        if unit.grid[0].len() != step {
            return Err(Error::parse(path, lineno, "non-contiguous step"));
        }
        for channel in VitalChannel::ALL {
            let cell = fields[3 + channel.index()];
            let v = if cell.is_empty() {
                MISSING
            } else {
                cell.parse()
                    .map_err(|_| Error::parse(path, lineno, format!("bad {channel} value")))?
            };
            unit.grid[channel.index()].push(v);
        }
        unit.label = label;
    }
    Ok(units)
}

/// Write the per-unit summary: label, qSOFA screen, and raw coverage.
pub fn write_units_summary_csv<W: Write>(
    units: &[WindowUnit],
    qsofa_flag_threshold: u8,
    mut writer: W,
) -> Result<()> {
    let mut header = String::from("unit_id,patient_id,start_time,label,qsofa,qsofa_gcs_missing,qsofa_flag");
    for channel in VitalChannel::ALL {
        header.push_str(",obs_");
        header.push_str(channel.name());
    }
    header.push('\n');
    writer.write_all(header.as_bytes())?;
    for unit in units {
        let q = unit_qsofa(unit);
        let mut row = format!(
            "{},{},{},{},{},{},{}",
            unit.unit_id,
            unit.patient_id,
            unit.start_time,
            unit.label.as_u8(),
            q.score,
            q.gcs_missing as u8,
            (q.score >= qsofa_flag_threshold) as u8,
        );
        for channel in VitalChannel::ALL {
            row.push(',');
            row.push_str(&unit.channel_observed_counts[channel.index()].to_string());
        }
        row.push('\n');
        writer.write_all(row.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(obs: &[(VitalChannel, i64, f64)]) -> PatientSeries {
        let mut s = PatientSeries::new("p1");
        for &(c, t, v) in obs {
            s.channel_mut(c).push((t, v));
        }
        s
    }

    #[test]
    fn resample_locf() {
        let s = series(&[(VitalChannel::HeartRate, 0, 80.0), (VitalChannel::HeartRate, 460, 90.0)]);
        let g = resample_to_grid(&s).unwrap();
        assert_eq!(g.grid_start, 0);
        let hr = &g.channels[VitalChannel::HeartRate.index()];
        assert_eq!(hr, &[80.0, 80.0, 90.0]);
    }

    #[test]
    fn resample_single_observation() {
        let s = series(&[(VitalChannel::HeartRate, 0, 80.0)]);
        let g = resample_to_grid(&s).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.channels[VitalChannel::HeartRate.index()], vec![80.0]);
    }

    #[test]
    fn resample_unaligned_observation_extends_grid() {
        // A lone reading at t=460: cell 300 precedes it, cell 600 takes it.
        let s = series(&[(VitalChannel::HeartRate, 460, 88.0)]);
        let g = resample_to_grid(&s).unwrap();
        assert_eq!(g.grid_start, 300);
        let hr = &g.channels[VitalChannel::HeartRate.index()];
        assert_eq!(hr.len(), 2);
        assert!(hr[0].is_nan());
        assert_eq!(hr[1], 88.0);
    }

    #[test]
    fn resample_empty_series_errors() {
        let s = PatientSeries::new("p1");
        assert!(matches!(resample_to_grid(&s), Err(Error::EmptySeries(_))));
    }

    #[test]
    fn fill_forward_then_backward() {
        let s = series(&[(VitalChannel::HeartRate, 300, 5.0), (VitalChannel::HeartRate, 900, 7.0)]);
        let mut g = resample_to_grid(&s).unwrap();
        // Force the [NA, 5, NA, 7] shape.
        g.channels[VitalChannel::HeartRate.index()] = vec![MISSING, 5.0, MISSING, 7.0];
        let g = fill_missing(g);
        assert_eq!(g.channels[VitalChannel::HeartRate.index()], vec![5.0, 5.0, 5.0, 7.0]);
    }

    #[test]
    fn fill_leaves_empty_channel_flagged() {
        let s = series(&[(VitalChannel::HeartRate, 0, 80.0), (VitalChannel::HeartRate, 600, 82.0)]);
        let g = fill_missing(resample_to_grid(&s).unwrap());
        assert!(g.channels[VitalChannel::Gcs.index()].iter().all(|v| v.is_nan()));
        assert!(g.all_missing_channels().contains(&VitalChannel::Gcs));
    }

    #[test]
    fn fill_trailing_forward() {
        let s = series(&[(VitalChannel::HeartRate, 0, 3.0)]);
        let mut g = resample_to_grid(&s).unwrap();
        g.channels[VitalChannel::HeartRate.index()] = vec![3.0, MISSING, MISSING];
        let g = fill_missing(g);
        assert_eq!(g.channels[VitalChannel::HeartRate.index()], vec![3.0, 3.0, 3.0]);
    }

    fn dense_series(steps: usize) -> PatientSeries {
        let mut s = PatientSeries::new("p1");
        for c in VitalChannel::ALL {
            for i in 0..steps {
                s.channel_mut(c).push((i as i64 * 300, 50.0 + i as f64));
            }
        }
        s
    }

    #[test]
    fn segment_counts_and_trailing_discard() {
        let s = dense_series(150);
        let g = fill_missing(resample_to_grid(&s).unwrap());
        let units = segment_windows(&g, 72, 72).unwrap();
        assert_eq!(units.len(), 2);
        assert_eq!(units[0].start_time, 0);
        assert_eq!(units[1].start_time, 72 * 300);
        for u in &units {
            assert_eq!(u.grid[0].len(), 72);
            assert_eq!(u.channel_observed_counts[0], 72);
        }
    }

    #[test]
    fn segment_exactly_one_window() {
        let s = dense_series(72);
        let g = fill_missing(resample_to_grid(&s).unwrap());
        assert_eq!(segment_windows(&g, 72, 72).unwrap().len(), 1);
    }

    #[test]
    fn segment_short_grid_empty() {
        let s = dense_series(10);
        let g = fill_missing(resample_to_grid(&s).unwrap());
        assert!(segment_windows(&g, 72, 72).unwrap().is_empty());
    }

    #[test]
    fn segment_rejects_overlap() {
        let s = dense_series(72);
        let g = fill_missing(resample_to_grid(&s).unwrap());
        assert!(segment_windows(&g, 72, 36).is_err());
    }

    fn units_for_label_tests() -> Vec<WindowUnit> {
        let s = dense_series(150);
        let g = fill_missing(resample_to_grid(&s).unwrap());
        segment_windows(&g, 72, 72).unwrap()
    }

    #[test]
    fn label_within_horizon_positive() {
        let units = label_and_prune(units_for_label_tests(), &[30_000], 36);
        // Window [0, 21600) end 21600: onset 30000 <= 32400 -> positive.
        assert_eq!(units.len(), 1);
        assert_eq!(units[0].label, Label::Positive);
    }

    #[test]
    fn label_beyond_horizon_negative() {
        let units = label_and_prune(units_for_label_tests(), &[33_000], 36);
        assert_eq!(units.len(), 1);
        assert_eq!(units[0].label, Label::Negative);
    }

    #[test]
    fn label_onset_inside_window_drops_unit() {
        let units = label_and_prune(units_for_label_tests(), &[10_000], 36);
        assert!(units.is_empty());
    }

    #[test]
    fn label_horizon_boundary_exact() {
        // end = 21600; horizon edge at 32400.
        let at_edge = label_and_prune(units_for_label_tests(), &[32_400], 36);
        assert_eq!(at_edge[0].label, Label::Positive);
        let past_edge = label_and_prune(units_for_label_tests(), &[32_401], 36);
        assert_eq!(past_edge[0].label, Label::Negative);
    }

    #[test]
    fn label_onset_at_window_end_drops() {
        let units = label_and_prune(units_for_label_tests(), &[21_600], 36);
        // First window's end equals the onset -> dropped; second contains it -> dropped.
        assert!(units.is_empty());
    }

    #[test]
    fn validate_accepts_full_coverage() {
        let units = units_for_label_tests();
        assert!(validate_unit(&units[0], 1, false).is_accept());
    }

    #[test]
    fn validate_rejects_sparse_channel() {
        let mut unit = units_for_label_tests().remove(0);
        unit.channel_observed_counts[VitalChannel::Respiration.index()] = 0;
        assert_eq!(
            validate_unit(&unit, 1, false),
            Validation::Reject("sparse:respiration".to_string())
        );
    }

    #[test]
    fn validate_gcs_optional() {
        let mut unit = units_for_label_tests().remove(0);
        unit.grid[VitalChannel::Gcs.index()] = vec![MISSING; 72];
        unit.channel_observed_counts[VitalChannel::Gcs.index()] = 0;
        assert!(validate_unit(&unit, 1, true).is_accept());
        assert_eq!(
            validate_unit(&unit, 1, false),
            Validation::Reject("empty:gcs".to_string())
        );
    }

    #[test]
    fn units_csv_roundtrip_bit_exact() {
        let mut units = units_for_label_tests();
        units[0].grid[VitalChannel::Gcs.index()] = vec![MISSING; 72];
        units[0].grid[VitalChannel::HeartRate.index()][3] = 80.123456789012345;
        units[1].label = Label::Positive;
        let mut buf = Vec::new();
        write_units_csv(&units, &mut buf).unwrap();
        let back = read_units_csv(std::io::BufReader::new(&buf[..]), "test").unwrap();
        assert_eq!(back.len(), units.len());
        for (a, b) in units.iter().zip(&back) {
            assert_eq!(a.unit_id, b.unit_id);
            assert_eq!(a.label, b.label);
            assert_eq!(a.start_time, b.start_time);
            for c in VitalChannel::ALL {
                let (va, vb) = (a.channel_values(c), b.channel_values(c));
                assert_eq!(va.len(), vb.len());
                for (x, y) in va.iter().zip(vb) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }

    #[test]
    fn fill_conservation_property() {
        // Every non-sentinel grid value must equal some raw observation of
        // the same channel.
        let mut s = PatientSeries::new("p1");
        s.channel_mut(VitalChannel::HeartRate).extend([(100, 61.5), (700, 62.5), (1400, 63.5)]);
        s.channel_mut(VitalChannel::Spo2).extend([(350, 97.5)]);
        let g = fill_missing(resample_to_grid(&s).unwrap());
        for c in [VitalChannel::HeartRate, VitalChannel::Spo2] {
            let raw: Vec<f64> = s.channel(c).iter().map(|&(_, v)| v).collect();
            for &v in &g.channels[c.index()] {
                if !v.is_nan() {
                    assert!(raw.contains(&v));
                }
            }
        }
    }

    #[test]
    fn unit_qsofa_uses_last_step() {
        let mut unit = units_for_label_tests().remove(0);
        unit.grid[VitalChannel::Respiration.index()][71] = 24.0;
        unit.grid[VitalChannel::SystolicBp.index()][71] = 95.0;
        unit.grid[VitalChannel::Gcs.index()][71] = 13.0;
        let q = unit_qsofa(&unit);
        assert_eq!(q.score, 3);
        assert!(!q.gcs_missing);
    }
}
