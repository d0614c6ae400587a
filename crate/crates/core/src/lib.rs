//! SHAP-guided global feature selection with post-selection inference.
//!
//! The pipeline explains a fitted black-box regressor in three stages:
//!
//! 1. per-sample Shapley attributions are aggregated into global scores
//!    `I_j = mean_i |phi_ij|` and the top `M` features are retained;
//! 2. a linear surrogate is selected on the black-box's own predictions
//!    (LARS-lasso, fixed-lambda lasso or forward stepwise);
//! 3. the selected surrogate coefficients get p-values and confidence
//!    intervals that account for the selection, either through the
//!    truncated-normal law on a polyhedral selection event or by classical
//!    t-inference on an independent inference split.
//!
//! The result is a [`pipeline::FeatureTable`] with one row per feature.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod data;
pub mod error;
pub mod linalg;
pub mod pipeline;
pub mod predictors;
pub mod report;
pub mod rng;
pub mod selection;
pub mod selinf;
pub mod serde_ext;
pub mod shap;

pub use error::{Error, Result};

/// Version string embedded into every output artifact.
pub const TOOL_VERSION: &str = concat!("phitest ", env!("CARGO_PKG_VERSION"));
