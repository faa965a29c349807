//! Scalar abstraction: everything in this crate is generic over a real
//! floating-point type.
//!
//! The bound is `nalgebra::RealField` (which supplies `abs`, `sqrt`, `ln`,
//! `max`, ... without method-resolution conflicts) plus the `num-traits`
//! conversion traits used to move literal constants and reported values
//! across scalar types. `f32` and `f64` implement it; the shipped tolerances
//! are calibrated for `f64` (see the aliases at the crate root).

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

pub trait Real:
    RealField + FromPrimitive + ToPrimitive + Copy + Default + std::fmt::Display + std::fmt::LowerExp
{
    /// Lift an `f64` constant into this scalar type.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant must be representable")
    }

    /// Lower into `f64` for reports and serialized certificates.
    fn to64(self) -> f64 {
        self.to_f64().expect("scalar must convert to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Euclidean norm of a point given as a slice.
pub fn norm<S: Real>(x: &[S]) -> S {
    x.iter().map(|&v| v * v).fold(S::zero(), |a, b| a + b).sqrt()
}

/// Euclidean distance between two points of equal dimension.
pub fn dist<S: Real>(x: &[S], y: &[S]) -> S {
    debug_assert_eq!(x.len(), y.len());
    x.iter()
        .zip(y)
        .map(|(&a, &b)| (a - b) * (a - b))
        .fold(S::zero(), |a, b| a + b)
        .sqrt()
}

/// Max-norm of a slice.
pub fn max_abs<S: Real>(x: &[S]) -> S {
    x.iter().fold(S::zero(), |a, &b| a.max(b.abs()))
}
