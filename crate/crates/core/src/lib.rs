//! Uncertainty scoring and evaluation for unified open-set recognition.
//!
//! Every evaluated sample is an in-distribution correct (InC), an
//! in-distribution wrong (InW) or an out-of-distribution (OoD) sample.
//! Scorers map logits or features to uncertainties (higher means reject),
//! and [`metrics::evaluate`] reports AUROC for the UOSR, OSR and SP tasks,
//! the pairwise group AUROCs, AUPR, AURC and ECE in one [`metrics::MetricReport`].
//!
//! - [`tensorio`]: binary and CSV matrices, evaluation bundles.
//! - [`outcomes`]: InC/InW/OoD assignment and task ground truths.
//! - [`scorers`]: MSP, entropy, max-logit, energy and Gini with temperature.
//! - [`knn`]: exact top-K cosine scoring against training and reference banks.
//! - [`fusion`]: sigmoid-gated FS-KNNS fusion and its baselines.
//! - [`fewshot`]: the seeded few-shot reference protocol.
//! - [`sweep`]: K/α/β grids over a shared partition.
//! - [`synth`]: synthetic scores, feature bundles and calibration scenarios.
//! - [`cli`]: the `uosr` command-line front end.

pub mod cli;
pub mod error;
pub mod fewshot;
pub mod fusion;
pub mod knn;
pub mod metrics;
pub mod outcomes;
pub mod scorers;
pub mod sweep;
pub mod synth;
pub mod tensorio;

pub use error::{Error, Result};
