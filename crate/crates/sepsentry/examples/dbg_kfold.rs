use std::time::Instant;

use sepsentry::cv::{run_cv, ModelSpec};
use sepsentry::features::FeatureRecipe;
use sepsentry::gbt::baseline::BaselineParams;
use sepsentry::gbt::{BoostParams, Growth};
use sepsentry::ingest::PlausibilityTable;
use sepsentry::metrics::ThresholdPolicy;
use sepsentry::resample::WindowConfig;
use sepsentry::synth::{build_dataset, generate_cohort, SynthConfig};
use sepsentry::features::build_feature_matrix;

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(500);
    let strength: f64 = std::env::args().nth(2).and_then(|a| a.parse().ok()).unwrap_or(1.0);
    let total = Instant::now();
    let mut config = SynthConfig::eicu_like(n, 7);
    config.interaction_strength = strength;
    let t = Instant::now();
    let files = generate_cohort(&config);
    println!("generate: {:.2}s ({} vitals bytes)", t.elapsed().as_secs_f64(), files.vitals_csv.len());

    let t = Instant::now();
    let dataset = build_dataset(&files, &WindowConfig::default(), &PlausibilityTable::default()).unwrap();
    let pos = dataset.units.iter().filter(|u| u.label.is_positive()).count();
    println!(
        "preprocess: {:.2}s -> {} units, {} positive, prevalence {:.4}",
        t.elapsed().as_secs_f64(),
        dataset.units.len(),
        pos,
        pos as f64 / dataset.units.len() as f64
    );

    let t = Instant::now();
    let matrix = build_feature_matrix(&dataset, &FeatureRecipe::default()).unwrap();
    println!("featurize: {:.2}s -> {} x {}", t.elapsed().as_secs_f64(), matrix.n_rows(), matrix.n_cols());

    for growth in [Growth::Leafwise, Growth::Depthwise] {
        let t = Instant::now();
        let spec = ModelSpec::Boosted(BoostParams { growth, ..Default::default() });
        let (report, _) = run_cv(&matrix, &spec, 5, 7, ThresholdPolicy::default()).unwrap();
        println!(
            "cv {}: {:.2}s pooled auc {:.4} mean auc {:.4} recall {:.4} (mean fold train {:.3}s)",
            report.model,
            t.elapsed().as_secs_f64(),
            report.pooled.auc,
            report.mean.auc,
            report.pooled.recall,
            report.mean.train_time_s,
        );
    }
    let t = Instant::now();
    let (lr_report, _) = run_cv(&matrix, &ModelSpec::Logistic(BaselineParams::default()), 5, 7, ThresholdPolicy::default()).unwrap();
    println!(
        "cv logistic: {:.2}s pooled auc {:.4} mean auc {:.4}",
        t.elapsed().as_secs_f64(),
        lr_report.pooled.auc,
        lr_report.mean.auc,
    );
    println!("total: {:.2}s", total.elapsed().as_secs_f64());
}
