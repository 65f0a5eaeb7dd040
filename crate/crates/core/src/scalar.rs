//! Floating-point scalar abstraction shared by all numeric routines.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used for probabilities and log-likelihoods: `f32` or `f64`.
///
/// Tolerances quoted throughout the crate (1e-10 and tighter) assume `f64`;
/// `f32` works for every routine but with correspondingly looser agreement.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for literals and config values.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `x * ln(x / total)` with the `0 * ln 0 = 0` convention.
pub(crate) fn xlogx_ratio<F: Real>(x: F, total: F) -> F {
    if x > F::zero() {
        x * (x / total).ln()
    } else {
        F::zero()
    }
}

pub(crate) fn is_distribution<F: Real>(v: &[F], tol: f64) -> bool {
    let s: F = v.iter().copied().sum();
    v.iter().all(|x| *x >= F::zero() && x.is_finite()) && (s.as_f64() - 1.0).abs() <= tol
}
