//! Scalar abstraction for the numeric core.
//!
//! Everything downstream is generic over [`Scalar`] so the same code runs at
//! f64 (the default, and the precision all stated tolerances assume) or f32
//! for cheap exploratory sweeps. Tolerances are floored at a small multiple
//! of the type's epsilon so narrower types degrade gracefully instead of
//! spinning iteration loops that can never converge.

use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Shorthand for converting f64 constants; panics only on NaN inputs,
    /// which never occur for the literals used in this crate.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Relative tolerance for adaptive quadrature.
    fn quad_rel_tol() -> Self {
        Self::of(1e-10).max(Self::epsilon() * Self::of(64.0))
    }

    /// Relative tolerance for clock inversion (root finding on F).
    fn invert_tol() -> Self {
        Self::of(1e-8).max(Self::epsilon() * Self::of(256.0))
    }

    /// Relative tolerance for the implicit per-step fixed point.
    fn fixed_point_tol() -> Self {
        Self::of(1e-12).max(Self::epsilon() * Self::of(16.0))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
