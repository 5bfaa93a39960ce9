//! Scalar abstraction for the metric engine.
//!
//! Every count-derived metric is a ratio of integers, so the engine is written
//! once over [`Scalar`] and instantiated with `f64` for reporting or with an
//! exact rational for verification.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{Float, Num};

/// Exact rational scalar used to check the floating-point engine.
pub type Exact = Ratio<i128>;

/// A number type that count ratios can be evaluated in.
pub trait Scalar: Num + Clone + PartialOrd + Debug {
    fn from_count(n: u64) -> Self;

    fn as_f64(&self) -> f64;

    fn hundred() -> Self {
        Self::from_count(100)
    }
}

impl Scalar for f64 {
    fn from_count(n: u64) -> Self {
        n as f64
    }

    fn as_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for f32 {
    fn from_count(n: u64) -> Self {
        n as f32
    }

    fn as_f64(&self) -> f64 {
        f64::from(*self)
    }
}

impl Scalar for Exact {
    fn from_count(n: u64) -> Self {
        Ratio::from_integer(i128::from(n))
    }

    fn as_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

/// Scalars with a logarithm, needed for information-theoretic quantities.
pub trait RealScalar: Scalar + Float {}

impl<T: Scalar + Float> RealScalar for T {}

/// `num / den`, or `None` when the denominator is zero.
pub(crate) fn ratio<T: Scalar>(num: u64, den: u64) -> Option<T> {
    (den != 0).then(|| T::from_count(num) / T::from_count(den))
}
