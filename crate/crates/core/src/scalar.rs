//! Scalar abstraction shared by the numerical kernels.
//!
//! Measures, rate formulas, quadrature and the deterministic bound machinery
//! are written against [`Real`] so they can be instantiated at `f32` or `f64`.
//! The stochastic layers (simulation, experiments, the CLI) are fixed to `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the numerical core.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Converts an integer count.
    #[inline]
    fn count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in scalar type")
    }

    /// Smallest relative tolerance the quadrature layer should be asked for.
    fn rel_tol_floor() -> Self;

    /// Absolute quadrature floor.
    fn abs_tol_floor() -> Self;
}

impl Real for f64 {
    fn rel_tol_floor() -> Self {
        1e-10
    }
    fn abs_tol_floor() -> Self {
        1e-14
    }
}

impl Real for f32 {
    fn rel_tol_floor() -> Self {
        1e-5
    }
    fn abs_tol_floor() -> Self {
        1e-7
    }
}

/// Relative difference `|a - b| / max(|a|, |b|, tiny)`.
pub fn rel_diff<R: Real>(a: R, b: R) -> R {
    let scale = a.abs().max(b.abs()).max(R::min_positive_value());
    (a - b).abs() / scale
}
