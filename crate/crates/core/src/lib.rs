//! Multiple-model multiple imputation (MMMI) for continuous data when the
//! missing-data mechanism is unknown.
//!
//! Ignorable (MAR) imputations are generated by Bayesian posterior-draw
//! linear regression, then transformed into nonignorable imputations by
//! multipliers drawn from a mechanism distribution. Drawing `M` multipliers
//! and generating `N` imputations under each yields an `M x N` grid of
//! completed data sets whose analyses are combined with nested-imputation
//! pooling rules, so that mechanism uncertainty shows up in the standard
//! errors and in the reported rates of missing information.
//!
//! Module map:
//! - [`stream`] / [`dataset`]: seeded random-stream derivation, the
//!   rectangular dataset type and its validation.
//! - [`simgen`]: longitudinal pattern-mixture trial generator with monotone
//!   dropout, used by the Monte Carlo harness.
//! - [`imputer`]: ignorable imputation (monotone-sequential and
//!   chained-equations drivers).
//! - [`mechanism`]: multiplier draws, the transform of imputed values,
//!   round-to-observed support, and elicitation from expert bounds.
//! - [`engine`]: two-stage nested imputation producing the `M x N` grid.
//! - [`lmm`]: random intercept + slope linear mixed model fit by maximum
//!   likelihood.
//! - [`pooling`]: nested combining rules, rates of missing information, and
//!   flat (single-model) pooling as a baseline.
//! - [`harness`]: full simulation scenarios (generate, mask, impute, fit,
//!   pool, score).

pub mod dataset;
pub mod engine;
pub mod error;
pub mod harness;
pub mod imputer;
pub mod lmm;
pub mod mechanism;
pub mod pooling;
pub mod simgen;
pub mod stream;

pub use dataset::{ColumnRole, ColumnSpec, ColumnType, LongitudinalDataset, ValidationReport};
pub use error::{Error, Result};
pub use stream::StreamPath;
