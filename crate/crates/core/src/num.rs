//! Scalar abstraction shared by the estimators.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar the estimators are generic over (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + FromStr + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Lower sample quantile: the order statistic at rank `ceil(tau * n)`.
///
/// This is the smallest minimizer of `sum_i rho_tau(x_i - b)` over `b`.
/// The slice is sorted in place.
pub(crate) fn lower_quantile_in_place<T: Scalar>(xs: &mut [T], tau: T) -> T {
    debug_assert!(!xs.is_empty());
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    xs[order_rank(xs.len(), tau) - 1]
}

/// 1-based rank `ceil(tau * n)` clamped to `[1, n]`.
///
/// A relative guard absorbs representation error in `tau * n`, so that
/// `0.05 * 20` is treated as exactly 1.
pub(crate) fn order_rank<T: Scalar>(n: usize, tau: T) -> usize {
    let prod = tau.as_f64() * n as f64;
    let k = (prod - 1e-9 * prod.max(1.0)).ceil();
    (k.max(1.0) as usize).min(n)
}
