//! Neural-network hypothesis tests with learned critical values.
//!
//! A first network is trained to separate data simulated under the null from
//! data simulated under the alternative; its logit is used as the test
//! statistic. A second network maps nuisance-parameter estimates to the
//! Monte Carlo upper-α quantile of that statistic under the null, giving a
//! critical value that is fixed before any data are observed.
//!
//! Modules:
//! - [`rng`], [`stats`]: seeded substreams, distributions, estimators.
//! - [`neural`]: dense ReLU networks, training, model documents.
//! - [`scenario`]: training and calibration data builders.
//! - [`pipeline`]: structure selection, statistic/critical networks, decisions.
//! - [`adaptive`]: two-stage binomial design with sample size reassessment.
//! - [`classical`]: z, one-sample t and Welch comparators.
//! - [`harness`]: configuration-driven experiments, tables, caching.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod classical;
mod error;
pub mod harness;
pub mod neural;
pub mod pipeline;
pub mod rng;
pub mod scenario;
pub mod stats;

pub use error::{Error, Result};
pub use rng::RandomStream;

/// Crate version recorded in manifests and cache keys.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
