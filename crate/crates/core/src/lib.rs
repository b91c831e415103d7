//! Uncertainty quantification for estimators computed from serially dependent
//! simulation output, using overlapping batches.
//!
//! The crate is organised bottom-up:
//!
//! * [`batch`] plans batch layouts over a [`SampleSeries`].
//! * [`functional`] evaluates point estimators (mean, marginal quantiles, custom).
//! * [`assess`] builds OB-I / OB-II error ensembles and the bias, variance and
//!   error-quantile estimators derived from them.
//! * [`limit`] samples the Brownian-functional weak limits and produces Monte
//!   Carlo critical-value tables (with an on-disk cache in [`table`]).
//! * [`confidence`] Studentizes and builds confidence regions.
//! * [`testbeds`] and [`harness`] reproduce the gamma and (s, S) inventory studies.
//!
//! With the default `parallel` feature, Monte Carlo loops run on rayon. Every
//! parallel work unit draws from its own random stream, so results do not depend
//! on the number of worker threads.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assess;
pub mod batch;
mod error;
pub mod exec;
pub mod functional;
pub mod harness;
pub mod limit;
pub mod linalg;
pub mod confidence;
pub mod ks;
pub mod series;
pub mod stream;
pub mod table;
pub mod testbeds;

pub use assess::{BatchEstimates, ErrorEnsemble, Method};
pub use batch::{BatchLayout, Overlap, SizePolicy};
pub use confidence::ConfidenceRegion;
pub use error::{Error, Result};
pub use functional::Functional;
pub use limit::{BatchCount, LimitSpec, NormOrder};
pub use series::{SampleSeries, SeriesView};
pub use table::{CriticalValue, TableKey, TableSource};
