//! Two-stage spectral latent subgroup analysis.
//!
//! Stage one estimates latent subgroup memberships from a binary item-response
//! matrix by truncated SVD followed by k-means++ on the projected rows. Stage
//! two estimates and infers subgroup treatment effects by regressing the
//! outcome on estimated memberships, treatment interactions, and (possibly
//! high-dimensional) confounders with OLS, Lasso, or debiased Lasso.
//!
//! Modules:
//! - [`lcm`]: the latent class model, data simulation, separability and
//!   design-condition diagnostics.
//! - [`spectral`]: truncated SVD, k-means++, and subgroup-count selection by
//!   parallel analysis.
//! - [`regress`]: design-matrix assembly, OLS, coordinate-descent Lasso with
//!   cross-validation, nodewise Lasso, and debiased-Lasso inference.
//! - [`metrics`]: misclassification rate with optimal label alignment, RMSE,
//!   and empirical confidence-interval coverage.
//! - [`baselines`]: EM estimation of the latent class model with hard and
//!   soft assignment.
//! - [`harness`]: scenario configuration, Monte Carlo replication, dataset
//!   ingestion, and plot-data export.

pub mod baselines;
pub mod error;
pub mod harness;
pub mod lcm;
pub mod linalg;
pub mod metrics;
pub mod regress;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
