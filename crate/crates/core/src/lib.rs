//! Decision-quality evaluation for content-moderation agents.
//!
//! The crate keeps immutable, content-addressed golden datasets (GDS) of
//! expert labels, profiles their semantic coverage, grows them with
//! inverse-propensity sampling, scores agents against them, analyses policy
//! updates through dual labeling and monitors agents for drift and
//! instability. [`simlab`] provides synthetic data so every piece can be
//! exercised without production traffic.

pub mod delta;
pub mod metrics;
pub mod model;
pub mod monitor;
pub mod sampler;
pub mod scalar;
pub mod simlab;
pub mod store;

pub use scalar::{Exact, RealScalar, Scalar};

/// Reports evaluated in double precision.
pub type Report = metrics::QualityReport<f64>;
/// Reports evaluated in exact rational arithmetic.
pub type ExactReport = metrics::QualityReport<Exact>;
pub type Kappa = metrics::KappaResult<f64>;
pub type ExactKappa = metrics::KappaResult<Exact>;
pub type Distribution = metrics::CodeDistribution<f64>;
pub type Divergence = metrics::DivergenceResult<f64>;
pub type Relative = metrics::RelativeReport<f64>;
