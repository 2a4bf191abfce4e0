//! Early sepsis detection from vital-sign time series.
//!
//! The pipeline: ingest raw vitals -> resample to a 5-minute grid ->
//! cut non-overlapping 6-hour windows labeled by a 3-hour onset
//! horizon -> engineer lag/moment/spectral features -> train gradient
//! boosted trees -> evaluate with grouped, stratified cross-validation.
//! A seeded synthetic cohort generator stands in for restricted
//! clinical data.
//!
//! See the `examples/` directory for one runnable walkthrough per
//! capability, or the `sepsentry` binary for the batch CLI.

pub mod cohort;
pub mod cv;
pub mod error;
pub mod features;
pub mod gbt;
pub mod ingest;
pub mod metrics;
pub mod resample;
pub mod synth;
pub mod tune;

pub mod cli;

pub use cohort::{
    prevalence, CohortDataset, Demographics, Label, PatientSeries, VitalChannel, WindowUnit,
};
pub use error::{Error, Result};
pub use features::{build_feature_matrix, FeatureMatrix, FeatureRecipe};
pub use gbt::{train, BoostParams, BoostedModel, Growth};
pub use metrics::{auc, roc_curve, EvalReport, ThresholdPolicy};
