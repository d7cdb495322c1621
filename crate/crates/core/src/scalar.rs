//! Numeric abstraction shared by the model builders.
//!
//! Constraint assembly is written once against [`Scalar`], so the same
//! builder produces `f64` models for the solver and exact rational models
//! for coefficient-level inspection.

use std::fmt::{Debug, Display};

use num_rational::Rational64;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// Ring-like number type usable as a model coefficient.
pub trait Scalar:
    Num + Signed + Clone + PartialOrd + Debug + Display + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Lossy conversion used when handing a model to a floating-point backend.
    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Conversion from a small integer, which every scalar can represent exactly.
    fn from_int(v: i64) -> Self {
        Self::from_i64(v).expect("integer representable")
    }

    fn max_of(a: Self, b: Self) -> Self {
        if a >= b {
            a
        } else {
            b
        }
    }

    fn min_of(a: Self, b: Self) -> Self {
        if a <= b {
            a
        } else {
            b
        }
    }
}

impl<T> Scalar for T where
    T: Num + Signed + Clone + PartialOrd + Debug + Display + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
}

/// Exact rational scalar used by the coefficient fidelity checks.
pub type Exact = Rational64;

/// Builds an exact rational `num / den`.
pub fn ratio(num: i64, den: i64) -> Exact {
    Rational64::new(num, den)
}
