//! Pipeline for longitudinal clinical progression modeling: ingest cohort
//! CSVs, factor the preprocessed design into a 2-D progression space with
//! rank-2 NMF, discover low/moderate/high progression subtypes with a
//! BIC-selected Gaussian mixture, and predict each subject's future zone
//! with a cross-validated random forest.
//!
//! Every stage is seeded and deterministic; parallel sections derive
//! per-task RNG streams so outputs never depend on scheduling.

pub mod cohort;
pub mod error;
pub mod forest;
pub mod gmm;
pub mod metrics;
pub mod nmf;
pub mod seeding;
pub mod synth;

pub use error::{Error, Result};
