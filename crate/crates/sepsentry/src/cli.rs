//! Batch command-line front door: synth -> preprocess -> featurize ->
//! train/cv/tune -> predict/roc-export/report.
//!
//! Stages communicate through the documented CSV/JSON files, so each is
//! independently runnable and resumable. All outputs are deterministic
//! given inputs and seed; wall-clock... timing lives only in the report's
//! `train_time_s` fields and the run metadata file.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::cohort::{CohortDataset, Label, PatientSeries, Provenance};
use crate::cv::{run_cv, write_oof_csv, ModelSpec};
use crate::error::{Error, Result};
use crate::features::{build_feature_matrix, FeatureMatrix, FeatureRecipe, StatKind};
use crate::gbt::baseline::BaselineParams;
use crate::gbt::io::{load_model, save_model};
use crate::gbt::{train, BoostParams, Growth};
use crate::ingest::{
    derive_pulse_pressure, parse_demographics, parse_onsets, parse_vitals, sanity_filter,
    PlausibilityTable, RejectionReport,
};
use crate::metrics::{roc_curve, EvalReport, ThresholdPolicy};
use crate::resample::{
    build_units, unit_qsofa, write_units_csv, write_units_summary_csv, read_units_csv,
    WindowConfig,
};
use crate::synth::{describe_cohort, generate_cohort, SynthConfig};
use crate::tune::{random_search, write_trials_csv, SearchSpace};

/// Flat `key = value` run configuration with `#` comments. Unknown and
/// duplicate keys are errors, so typos cannot pass silently.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, (usize, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum KeyType {
    Text,
    Usize,
    U64,
    F64,
    Bool,
    StepList,
    Policy,
}

const KNOWN_KEYS: [(&str, KeyType); 33] = [
    ("vitals", KeyType::Text),
    ("demographics", KeyType::Text),
    ("onsets", KeyType::Text),
    ("out", KeyType::Text),
    ("k", KeyType::Usize),
    ("seed", KeyType::U64),
    ("preset", KeyType::Text),
    ("patients", KeyType::Usize),
    ("workers", KeyType::Usize),
    ("threshold_policy", KeyType::Policy),
    ("min_obs_per_channel", KeyType::Usize),
    ("gcs_optional", KeyType::Bool),
    ("lags", KeyType::StepList),
    ("diffs", KeyType::StepList),
    ("stat_windows", KeyType::StepList),
    ("dft_harmonics", KeyType::Usize),
    ("include_demographics", KeyType::Bool),
    ("ethnicities", KeyType::Text),
    ("growth", KeyType::Text),
    ("num_trees", KeyType::Usize),
    ("learning_rate", KeyType::F64),
    ("max_depth", KeyType::Usize),
    ("max_leaves", KeyType::Usize),
    ("lambda", KeyType::F64),
    ("gamma", KeyType::F64),
    ("min_child_weight", KeyType::F64),
    ("min_samples_leaf", KeyType::Usize),
    ("max_bins", KeyType::Usize),
    ("pos_weight", KeyType::F64),
    ("subsample", KeyType::F64),
    ("colsample", KeyType::F64),
    ("trials", KeyType::Usize),
    ("interaction_strength", KeyType::F64),
];

fn check_key_type(key_type: KeyType, value: &str) -> bool {
    match key_type {
        KeyType::Text => true,
        KeyType::Usize => value.parse::<usize>().is_ok(),
        KeyType::U64 => value.parse::<u64>().is_ok(),
        KeyType::F64 => value.parse::<f64>().is_ok(),
        KeyType::Bool => matches!(value, "true" | "false" | "1" | "0" | "yes" | "no"),
        KeyType::StepList => value.split(',').all(|part| part.trim().parse::<usize>().is_ok()),
        KeyType::Policy => parse_policy(value).is_some(),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(Error::Config {
                line: lineno,
                msg: format!("expected key = value, got: {raw}"),
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            let key_type = KNOWN_KEYS
                .iter()
                .find(|(name, _)| *name == key)
                .map(|&(_, t)| t)
                .ok_or_else(|| Error::Config {
                    line: lineno,
                    msg: format!("unknown key: {key}"),
                })?;
            if values.contains_key(&key) {
                return Err(Error::Config {
                    line: lineno,
                    msg: format!("duplicate key: {key}"),
                });
            }
            if !check_key_type(key_type, &value) {
                return Err(Error::Config {
                    line: lineno,
                    msg: format!("bad value for {key}: {value}"),
                });
            }
            values.insert(key, (lineno, value));
        }
        Ok(RunConfig { values })
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::file(path.display().to_string(), e))?;
        RunConfig::parse(&text)
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((line, value)) => value.parse().map(Some).map_err(|_| Error::Config {
                line: *line,
                msg: format!("bad value for {key}: {value}"),
            }),
        }
    }

    fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((line, value)) => match value.as_str() {
                "true" | "1" | "yes" => Ok(Some(true)),
                "false" | "0" | "no" => Ok(Some(false)),
                _ => Err(Error::Config {
                    line: *line,
                    msg: format!("bad boolean for {key}: {value}"),
                }),
            },
        }
    }

    fn get_list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((line, value)) => value
                .split(',')
                .map(|part| part.trim().parse())
                .collect::<std::result::Result<Vec<usize>, _>>()
                .map(Some)
                .map_err(|_| Error::Config {
                    line: *line,
                    msg: format!("bad list for {key}: {value}"),
                }),
        }
    }

    fn get_policy(&self) -> Result<Option<ThresholdPolicy>> {
        match self.values.get("threshold_policy") {
            None => Ok(None),
            Some((line, value)) => match parse_policy(value) {
                Some(policy) => Ok(Some(policy)),
                None => Err(Error::Config {
                    line: *line,
                    msg: format!("bad threshold_policy: {value}"),
                }),
            },
        }
    }
}

/// `max_f1`, `recall_at_least:<r>`, or `fixed:<t>`.
pub fn parse_policy(text: &str) -> Option<ThresholdPolicy> {
    if text == "max_f1" {
        return Some(ThresholdPolicy::MaxF1);
    }
    if let Some(rest) = text.strip_prefix("recall_at_least:") {
        return rest.parse().ok().map(ThresholdPolicy::RecallAtLeast);
    }
    if let Some(rest) = text.strip_prefix("fixed:") {
        return rest.parse().ok().map(ThresholdPolicy::Fixed);
    }
    None
}

#[derive(Parser, Debug)]
#[command(
    name = "sepsentry",
    version,
    about = "Early sepsis detection pipeline: synthesize, preprocess, featurize, train, evaluate"
)]
struct Cli {
    /// Worker threads; 0 uses all cores. Never changes results.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Flat key = value config file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct BoostArgs {
    /// Tree growth strategy: leafwise or depthwise.
    #[arg(long)]
    growth: Option<String>,
    #[arg(long)]
    num_trees: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    max_leaves: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    min_child_weight: Option<f64>,
    #[arg(long)]
    min_samples_leaf: Option<usize>,
    #[arg(long)]
    max_bins: Option<usize>,
    #[arg(long)]
    pos_weight: Option<f64>,
    #[arg(long)]
    subsample: Option<f64>,
    #[arg(long)]
    colsample: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic cohort (vitals, demographics, onsets CSVs).
    Synth {
        /// eicu-like or hospital-like.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        patients: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        prevalence: Option<f64>,
        #[arg(long)]
        interaction_strength: Option<f64>,
        /// Also run the pipeline and print a cohort summary.
        #[arg(long, default_value_t = false)]
        describe: bool,
    },
    /// Parse and window raw files into labeled units.
    Preprocess {
        #[arg(long)]
        vitals: Option<PathBuf>,
        #[arg(long)]
        demographics: Option<PathBuf>,
        #[arg(long)]
        onsets: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        min_obs_per_channel: Option<usize>,
        #[arg(long)]
        gcs_optional: Option<bool>,
    },
    /// Turn units into the feature matrix.
    Featurize {
        #[arg(long)]
        units: PathBuf,
        #[arg(long)]
        demographics: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        lags: Option<String>,
        #[arg(long)]
        diffs: Option<String>,
        #[arg(long)]
        stat_windows: Option<String>,
        #[arg(long)]
        dft_harmonics: Option<usize>,
        #[arg(long)]
        include_demographics: Option<bool>,
        /// Comma-separated ethnicity categories for one-of-k columns.
        #[arg(long)]
        ethnicities: Option<String>,
    },
    /// Train a boosted model on a feature matrix.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        model_out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        boost: BoostArgs,
    },
    /// Grouped stratified cross-validation.
    Cv {
        #[arg(long)]
        features: PathBuf,
        #[arg(short, long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// gbdt or logistic.
        #[arg(long, default_value = "gbdt")]
        model: String,
        #[arg(long)]
        threshold_policy: Option<String>,
        #[command(flatten)]
        boost: BoostArgs,
    },
    /// Random-search hyperparameter tuning.
    Tune {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(short, long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threshold_policy: Option<String>,
    },
    /// Score a feature matrix with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export an ROC curve from scored predictions.
    RocExport {
        /// CSV with label and score columns (cv oof or predict output).
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render report JSONs as a fixed-width comparison table.
    Report {
        /// One or more report.json files.
        reports: Vec<PathBuf>,
        /// pooled or mean rows.
        #[arg(long, default_value = "pooled")]
        stat: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Entry point behind the binary; returns the process exit code.
/// 0 success, 1 runtime or data error, 2 usage error.
pub fn run_cli<I>(argv: I) -> i32
where
    I: IntoIterator,
    I::Item: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let config = match &cli.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return 1;
            }
        },
        None => RunConfig::default(),
    };
    let workers = cli.workers;
    let run = move || dispatch(cli.command, &config);
    let outcome = if workers == 0 {
        run()
    } else {
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(run),
            Err(e) => Err(Error::Params(format!("cannot build worker pool: {e}"))),
        }
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::file(path.display().to_string(), e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::file(parent.display().to_string(), e))?;
    }
    fs::write(path, contents).map_err(|e| Error::file(path.display().to_string(), e))
}

fn out_dir(out: Option<PathBuf>, config: &RunConfig) -> Result<PathBuf> {
    let dir = match out {
        Some(d) => d,
        None => config
            .get::<PathBuf>("out")?
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    fs::create_dir_all(&dir).map_err(|e| Error::file(dir.display().to_string(), e))?;
    Ok(dir)
}

fn parse_list_arg(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|part| part.trim().parse())
        .collect::<std::result::Result<Vec<usize>, _>>()
        .map_err(|_| Error::Params(format!("bad step list: {text}")))
}

fn boost_params(args: &BoostArgs, config: &RunConfig, seed: Option<u64>) -> Result<BoostParams> {
    let mut p = BoostParams::default();
    let growth_text = args
        .growth
        .clone()
        .or(config.get::<String>("growth")?);
    if let Some(text) = growth_text {
        p.growth = Growth::from_str_opt(&text)
            .ok_or_else(|| Error::Params(format!("bad growth: {text}")))?;
    }
    macro_rules! take {
        ($field:ident) => {
            if let Some(v) = args.$field.or(config.get(stringify!($field))?) {
                p.$field = v;
            }
        };
    }
    take!(num_trees);
    take!(learning_rate);
    take!(max_depth);
    take!(max_leaves);
    take!(lambda);
    take!(gamma);
    take!(min_child_weight);
    take!(min_samples_leaf);
    take!(max_bins);
    take!(pos_weight);
    take!(subsample);
    take!(colsample);
    if let Some(s) = seed.or(config.get("seed")?) {
        p.seed = s;
    }
    p.validate()?;
    Ok(p)
}

fn dispatch(command: Command, config: &RunConfig) -> Result<()> {
    match command {
        Command::Synth {
            preset,
            patients,
            seed,
            out,
            prevalence,
            interaction_strength,
            describe,
        } => {
            let preset_name = preset
                .or(config.get::<String>("preset")?)
                .unwrap_or_else(|| "eicu-like".to_string());
            let patients = patients.or(config.get("patients")?).unwrap_or(500);
            let seed = seed.or(config.get("seed")?).unwrap_or(7);
            let mut synth_config = SynthConfig::preset_by_name(&preset_name, patients, seed)
                .ok_or_else(|| Error::Params(format!("unknown preset: {preset_name}")))?;
            if let Some(p) = prevalence {
                synth_config.target_unit_prevalence = p;
            }
            if let Some(s) = interaction_strength.or(config.get("interaction_strength")?) {
                synth_config.interaction_strength = s;
            }
            let dir = out_dir(out, config)?;
            let files = generate_cohort(&synth_config);
            write_file(&dir.join("vitals.csv"), &files.vitals_csv)?;
            write_file(&dir.join("demographics.csv"), &files.demographics_csv)?;
            write_file(&dir.join("onsets.csv"), &files.onsets_csv)?;
            println!(
                "synth: wrote {} patients ({} preset, seed {seed}) to {}",
                patients,
                synth_config.preset,
                dir.display()
            );
            if describe {
                let summary = describe_cohort(&files)?;
                println!(
                    "cohort: {} patients, {} units, prevalence {:.4}",
                    summary.patients, summary.units, summary.prevalence
                );
                for (channel, missing) in &summary.channel_missingness {
                    println!("  missingness {channel}: {missing:.3}");
                }
            }
            Ok(())
        }

        Command::Preprocess {
            vitals,
            demographics,
            onsets,
            out,
            min_obs_per_channel,
            gcs_optional,
        } => {
            let vitals_path = vitals
                .or(config.get("vitals")?)
                .ok_or_else(|| Error::Params("preprocess needs --vitals".to_string()))?;
            let dir = out_dir(out, config)?;
            let mut window = WindowConfig::default();
            if let Some(m) = min_obs_per_channel.or(config.get("min_obs_per_channel")?) {
                window.min_obs_per_channel = m;
            }
            if let Some(g) = gcs_optional.or(config.get_bool("gcs_optional")?) {
                window.gcs_optional = g;
            }

            let (mut series_map, mut report) =
                parse_vitals(read_file(&vitals_path)?.as_bytes(), &vitals_path.display().to_string())?;
            let demo_map = match demographics.or(config.get("demographics")?) {
                Some(path) => {
                    let (map, demo_report) =
                        parse_demographics(read_file(&path)?.as_bytes(), &path.display().to_string())?;
                    report.merge(&demo_report);
                    map
                }
                None => BTreeMap::new(),
            };
            if let Some(path) = onsets.or(config.get::<PathBuf>("onsets")?) {
                let (onset_map, onset_report) =
                    parse_onsets(read_file(&path)?.as_bytes(), &path.display().to_string())?;
                report.merge(&onset_report);
                for (patient, series) in series_map.iter_mut() {
                    if let Some(list) = onset_map.get(patient) {
                        series.onset_times = list.clone();
                    }
                }
            }

            let table = PlausibilityTable::default();
            let patients: Vec<(String, PatientSeries)> = series_map.into_iter().collect();
            let results: Vec<(Vec<crate::cohort::WindowUnit>, usize, RejectionReport)> = patients
                .par_iter()
                .map(|(_, series)| {
                    let with_pp = derive_pulse_pressure(series.clone());
                    let (filtered, filter_report) = sanity_filter(with_pp, &table);
                    if filtered.total_observations() == 0 {
                        return (Vec::new(), 0, filter_report);
                    }
                    match build_units(&filtered, &window) {
                        Ok((units, rejected)) => (units, rejected, filter_report),
                        Err(_) => (Vec::new(), 0, filter_report),
                    }
                })
                .collect();

            let mut units = Vec::new();
            for ((patient_id, _), (accepted, rejected, filter_report)) in
                patients.iter().zip(results)
            {
                report.merge(&filter_report);
                if rejected > 0 {
                    *report.rejected_units.entry(patient_id.clone()).or_insert(0) += rejected;
                }
                units.extend(accepted);
            }
            units.sort_by(|a, b| (&a.patient_id, a.start_time).cmp(&(&b.patient_id, b.start_time)));

            let units_path = dir.join("units.csv");
            let mut writer = BufWriter::new(
                fs::File::create(&units_path)
                    .map_err(|e| Error::file(units_path.display().to_string(), e))?,
            );
            write_units_csv(&units, &mut writer)?;
            writer.flush()?;
            let summary_path = dir.join("units_summary.csv");
            let mut writer = BufWriter::new(
                fs::File::create(&summary_path)
                    .map_err(|e| Error::file(summary_path.display().to_string(), e))?,
            );
            write_units_summary_csv(&units, 2, &mut writer)?;
            writer.flush()?;

            let positives = units.iter().filter(|u| u.label.is_positive()).count();
            let flagged = units.iter().filter(|u| unit_qsofa(u).score >= 2).count();
            println!(
                "preprocess: {} units ({} positive, prevalence {:.4}), {} rejected; qsofa>=2 on {} units",
                units.len(),
                positives,
                if units.is_empty() { 0.0 } else { positives as f64 / units.len() as f64 },
                report.rejected_units.values().sum::<usize>(),
                flagged,
            );
            println!(
                "rejected rows: {} malformed, {} non-finite, {} out-of-range, {} duplicate",
                report.malformed, report.non_finite, report.out_of_range, report.duplicate_timestamp
            );
            // Demographics are carried through featurize; nothing to write here.
            let _ = demo_map;
            Ok(())
        }

        Command::Featurize {
            units,
            demographics,
            out,
            lags,
            diffs,
            stat_windows,
            dft_harmonics,
            include_demographics,
            ethnicities,
        } => {
            let dir = out_dir(out, config)?;
            let mut recipe = FeatureRecipe::default();
            if let Some(text) = lags {
                recipe.lag_steps = parse_list_arg(&text)?;
            } else if let Some(list) = config.get_list("lags")? {
                recipe.lag_steps = list;
            }
            if let Some(text) = diffs {
                recipe.diff_steps = parse_list_arg(&text)?;
            } else if let Some(list) = config.get_list("diffs")? {
                recipe.diff_steps = list;
            }
            if let Some(text) = stat_windows {
                recipe.stat_window_steps = parse_list_arg(&text)?;
            } else if let Some(list) = config.get_list("stat_windows")? {
                recipe.stat_window_steps = list;
            }
            if let Some(k) = dft_harmonics.or(config.get("dft_harmonics")?) {
                recipe.dft_harmonics = k;
            }
            if let Some(d) = include_demographics.or(config.get_bool("include_demographics")?) {
                recipe.include_demographics = d;
            }
            let ethnicity_text = ethnicities.or(config.get::<String>("ethnicities")?);
            if let Some(text) = ethnicity_text {
                recipe.ethnicity_categories =
                    text.split(',').map(|s| s.trim().to_string()).collect();
            }
            recipe.stats = StatKind::ALL.to_vec();

            let units_text = read_file(&units)?;
            let parsed = read_units_csv(
                BufReader::new(units_text.as_bytes()),
                &units.display().to_string(),
            )?;
            let demographics_map = match demographics.or(config.get("demographics")?) {
                Some(path) => {
                    parse_demographics(read_file(&path)?.as_bytes(), &path.display().to_string())?.0
                }
                None => BTreeMap::new(),
            };
            let dataset = CohortDataset {
                units: parsed,
                demographics: demographics_map,
                provenance: Provenance::Source(units.display().to_string()),
            };
            let matrix = build_feature_matrix(&dataset, &recipe)?;
            let features_path = dir.join("features.csv");
            let mut writer = BufWriter::new(
                fs::File::create(&features_path)
                    .map_err(|e| Error::file(features_path.display().to_string(), e))?,
            );
            matrix.write_csv(&mut writer)?;
            writer.flush()?;
            println!(
                "featurize: {} rows x {} columns -> {}",
                matrix.n_rows(),
                matrix.n_cols(),
                features_path.display()
            );
            Ok(())
        }

        Command::Train {
            features,
            model_out,
            seed,
            boost,
        } => {
            let matrix = FeatureMatrix::read_csv(
                BufReader::new(read_file(&features)?.as_bytes()),
                &features.display().to_string(),
            )?;
            let params = boost_params(&boost, config, seed)?;
            let model = train(&matrix, &params)?;
            let path = model_out.unwrap_or_else(|| PathBuf::from("model.txt"));
            write_file(&path, &save_model(&model))?;
            println!(
                "train: {} trees ({}) on {} rows -> {}",
                model.trees.len(),
                params.growth.as_str(),
                matrix.n_rows(),
                path.display()
            );
            Ok(())
        }

        Command::Cv {
            features,
            k,
            seed,
            out,
            model,
            threshold_policy,
            boost,
        } => {
            let dir = out_dir(out, config)?;
            let matrix = FeatureMatrix::read_csv(
                BufReader::new(read_file(&features)?.as_bytes()),
                &features.display().to_string(),
            )?;
            let k = k.or(config.get("k")?).unwrap_or(5);
            let seed = seed.or(config.get("seed")?).unwrap_or(0);
            let policy = match threshold_policy {
                Some(text) => parse_policy(&text)
                    .ok_or_else(|| Error::Params(format!("bad threshold policy: {text}")))?,
                None => config.get_policy()?.unwrap_or_default(),
            };
            let spec = match model.as_str() {
                "gbdt" => ModelSpec::Boosted(boost_params(&boost, config, Some(seed))?),
                "logistic" => ModelSpec::Logistic(BaselineParams::default()),
                other => return Err(Error::Params(format!("unknown model: {other}"))),
            };
            let (report, oof) = run_cv(&matrix, &spec, k, seed, policy)?;
            write_file(&dir.join("report.json"), &report.to_json())?;
            let oof_path = dir.join("oof.csv");
            let mut writer = BufWriter::new(
                fs::File::create(&oof_path)
                    .map_err(|e| Error::file(oof_path.display().to_string(), e))?,
            );
            write_oof_csv(&oof, &mut writer)?;
            writer.flush()?;
            println!(
                "cv: {} k={k} pooled auc {:.4} precision {:.4} recall {:.4} f1 {:.4} (threshold {:.4})",
                report.model,
                report.pooled.auc,
                report.pooled.precision,
                report.pooled.recall,
                report.pooled.f1,
                report.pooled.threshold,
            );
            Ok(())
        }

        Command::Tune {
            features,
            trials,
            k,
            seed,
            out,
            threshold_policy,
        } => {
            let dir = out_dir(out, config)?;
            let matrix = FeatureMatrix::read_csv(
                BufReader::new(read_file(&features)?.as_bytes()),
                &features.display().to_string(),
            )?;
            let trials = trials.or(config.get("trials")?).unwrap_or(25);
            let k = k.or(config.get("k")?).unwrap_or(5);
            let seed = seed.or(config.get("seed")?).unwrap_or(0);
            let policy = match threshold_policy {
                Some(text) => parse_policy(&text)
                    .ok_or_else(|| Error::Params(format!("bad threshold policy: {text}")))?,
                None => config.get_policy()?.unwrap_or_default(),
            };
            let positives = matrix.labels.iter().filter(|l| l.is_positive()).count();
            let prevalence = positives as f64 / matrix.n_rows().max(1) as f64;
            let space = SearchSpace::default_for_prevalence(prevalence);
            let (best, table) = random_search(&matrix, &space, trials, k, seed, policy)?;
            let trials_path = dir.join("trials.csv");
            let mut writer = BufWriter::new(
                fs::File::create(&trials_path)
                    .map_err(|e| Error::file(trials_path.display().to_string(), e))?,
            );
            write_trials_csv(&table, &mut writer)?;
            writer.flush()?;
            write_file(
                &dir.join("best_params.json"),
                &serde_json::to_string_pretty(&best).expect("params serialize"),
            )?;
            let best_auc = table
                .iter()
                .filter(|t| t.status == crate::tune::TrialStatus::Ok)
                .map(|t| t.mean_auc)
                .fold(f64::NEG_INFINITY, f64::max);
            println!(
                "tune: {trials} trials, best mean auc {best_auc:.4} -> {}",
                trials_path.display()
            );
            Ok(())
        }

        Command::Predict {
            model,
            features,
            out,
        } => {
            let loaded = load_model(&read_file(&model)?)?;
            let matrix = FeatureMatrix::read_csv(
                BufReader::new(read_file(&features)?.as_bytes()),
                &features.display().to_string(),
            )?;
            let scores = loaded.predict_proba(&matrix)?;
            let path = out.unwrap_or_else(|| PathBuf::from("predictions.csv"));
            let mut text = String::from("unit_id,patient_id,label,score\n");
            for r in 0..matrix.n_rows() {
                text.push_str(&format!(
                    "{},{},{},{}\n",
                    matrix.unit_ids[r],
                    matrix.patient_ids[r],
                    matrix.labels[r].as_u8(),
                    scores[r]
                ));
            }
            write_file(&path, &text)?;
            println!("predict: {} rows -> {}", matrix.n_rows(), path.display());
            Ok(())
        }

        Command::RocExport { scores, out } => {
            let text = read_file(&scores)?;
            let (labels, score_values) =
                parse_scored_csv(&text, &scores.display().to_string())?;
            let points = roc_curve(&score_values, &labels)?;
            let path = out.unwrap_or_else(|| PathBuf::from("roc.csv"));
            let mut csv_text = String::from("threshold,fpr,tpr\n");
            for p in &points {
                csv_text.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
            }
            write_file(&path, &csv_text)?;
            println!("roc-export: {} points -> {}", points.len(), path.display());
            Ok(())
        }

        Command::Report { reports, stat, out } => {
            if reports.is_empty() {
                return Err(Error::Params("report needs at least one report.json".to_string()));
            }
            let mut parsed = Vec::new();
            for path in &reports {
                parsed.push(EvalReport::from_json(&read_file(path)?)?);
            }
            let table = render_report_table(&parsed, &stat)?;
            match out {
                Some(path) => write_file(&path, &table)?,
                None => print!("{table}"),
            }
            Ok(())
        }
    }
}

/// Pull (label, score) columns out of a scored CSV (cv oof output or
/// predict output).
fn parse_scored_csv(text: &str, path: &str) -> Result<(Vec<Label>, Vec<f64>)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    let label_col = cols
        .iter()
        .position(|c| *c == "label")
        .ok_or_else(|| Error::parse(path, 1, "missing label column"))?;
    let score_col = cols
        .iter()
        .position(|c| *c == "score")
        .ok_or_else(|| Error::parse(path, 1, "missing score column"))?;
    let mut labels = Vec::new();
    let mut scores = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let label = fields
            .get(label_col)
            .and_then(|v| v.parse::<u8>().ok())
            .and_then(Label::from_u8)
            .ok_or_else(|| Error::parse(path, lineno, "bad label"))?;
        let score: f64 = fields
            .get(score_col)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(path, lineno, "bad score"))?;
        labels.push(label);
        scores.push(score);
    }
    Ok((labels, scores))
}

/// Fixed-width comparison table with the Model, AUC, Precision, Recall,
/// F-1 Score, Time(s) columns.
pub fn render_report_table(reports: &[EvalReport], stat: &str) -> Result<String> {
    let mut table = String::new();
    table.push_str(&format!(
        "{:<18} {:>7} {:>10} {:>8} {:>10} {:>9}\n",
        "Model", "AUC", "Precision", "Recall", "F-1 Score", "Time(s)"
    ));
    for report in reports {
        let (auc, precision, recall, f1, time) = match stat {
            "pooled" => (
                report.pooled.auc,
                report.pooled.precision,
                report.pooled.recall,
                report.pooled.f1,
                report.mean.train_time_s,
            ),
            "mean" => (
                report.mean.auc,
                report.mean.precision,
                report.mean.recall,
                report.mean.f1,
                report.mean.train_time_s,
            ),
            other => return Err(Error::Params(format!("unknown stat: {other}"))),
        };
        table.push_str(&format!(
            "{:<18} {:>7.3} {:>10.3} {:>8.3} {:>10.3} {:>9.3}\n",
            report.model, auc, precision, recall, f1, time
        ));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses_values_and_comments() {
        let config = RunConfig::parse("# run setup\nk = 5\nseed = 9 # trailing\n").unwrap();
        assert_eq!(config.get::<usize>("k").unwrap(), Some(5));
        assert_eq!(config.get::<u64>("seed").unwrap(), Some(9));
        assert_eq!(config.get::<usize>("trials").unwrap(), None);
    }

    #[test]
    fn config_rejects_duplicate_key() {
        let err = RunConfig::parse("seed = 1\nseed = 2\n").unwrap_err();
        match err {
            Error::Config { line, msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("duplicate"));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn config_rejects_unknown_key() {
        let err = RunConfig::parse("sead = 1\n").unwrap_err();
        match err {
            Error::Config { line, msg } => {
                assert_eq!(line, 1);
                assert!(msg.contains("unknown key"));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn config_type_mismatch_names_line() {
        let err = RunConfig::parse("\nk = five\n").unwrap_err();
        match err {
            Error::Config { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn empty_config_is_all_defaults() {
        let config = RunConfig::parse("").unwrap();
        assert!(config.values.is_empty());
    }

    #[test]
    fn policy_parsing() {
        assert_eq!(parse_policy("max_f1"), Some(ThresholdPolicy::MaxF1));
        assert_eq!(
            parse_policy("recall_at_least:0.9"),
            Some(ThresholdPolicy::RecallAtLeast(0.9))
        );
        assert_eq!(parse_policy("fixed:0.25"), Some(ThresholdPolicy::Fixed(0.25)));
        assert_eq!(parse_policy("bogus"), None);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run_cli(["sepsentry", "--help"]), 0);
    }

    #[test]
    fn unknown_subcommand_exits_two() {
        assert_eq!(run_cli(["sepsentry", "frobnicate"]), 2);
    }

    #[test]
    fn missing_input_exits_one() {
        assert_eq!(
            run_cli([
                "sepsentry",
                "train",
                "--features",
                "/nonexistent/features.csv"
            ]),
            1
        );
    }
}
