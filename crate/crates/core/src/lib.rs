//! Multi-factor stock selection research engine.
//!
//! The pipeline runs in this order:
//!
//! 1. [`panel`]: load or synthesize a stock × month × factor panel and apply
//!    the universe filter.
//! 2. [`preprocess`]: impute, winsorize (3×MAD), standardize and neutralize
//!    every factor cross-section.
//! 3. [`screening`]: LASSO screening of second-level factors.
//! 4. [`factors`]: entropy-weight synthesis of second-level factors into
//!    first-level scores with rolling 12-month weights.
//! 5. [`predictors`]: ridge, MLP and random-forest return forecasters.
//! 6. [`ensemble`]: metric-based and IC-based model weighting.
//! 7. [`backtest`]: walk-forward engine, portfolio formation, costs and the
//!    performance report.
//!
//! [`metrics`] holds the evaluation measures shared by the ensemble and the
//! backtest.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod ensemble;
pub mod error;
pub mod factors;
pub mod linalg;
pub mod metrics;
pub mod panel;
pub mod predictors;
pub mod preprocess;
pub mod screening;
pub mod stats;

pub use error::{Error, Result};
