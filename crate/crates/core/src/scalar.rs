//! Scalar abstraction shared by every numeric kernel in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
///
/// Tolerances quoted throughout the crate (1e-10 Bellman residuals, 1e-12
/// stochasticity checks) assume `f64`; the `f32` instantiation works with
/// correspondingly looser tolerances.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Panics only for non-representable input,
    /// which cannot happen for the finite constants used in this crate.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize fits in float")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Tolerance appropriate for "exact" identities at this precision.
    fn tight_eps() -> Self;
}

impl Real for f32 {
    fn tight_eps() -> Self {
        1e-5
    }
}

impl Real for f64 {
    fn tight_eps() -> Self {
        1e-12
    }
}

/// Numerically stable `log Σ_i w_i exp(x_i)` for nonnegative weights.
///
/// Entries with zero weight are skipped; returns `-inf` when every weight is zero.
pub fn log_weighted_sum_exp<T: Real>(weights: &[T], xs: &[T]) -> T {
    debug_assert_eq!(weights.len(), xs.len());
    let mut max = T::neg_infinity();
    for (w, x) in weights.iter().zip(xs) {
        if *w > T::zero() && *x > max {
            max = *x;
        }
    }
    if max == T::neg_infinity() {
        return max;
    }
    let mut acc = T::zero();
    for (w, x) in weights.iter().zip(xs) {
        if *w > T::zero() {
            acc += *w * (*x - max).exp();
        }
    }
    max + acc.ln()
}

/// KL(p ‖ q) for discrete distributions. Terms with `p = 0` contribute zero;
/// returns `+inf` when `p` puts mass where `q` has none.
pub fn kl_divergence<T: Real>(p: &[T], q: &[T]) -> T {
    let mut kl = T::zero();
    for (pi, qi) in p.iter().zip(q) {
        if *pi > T::zero() {
            if *qi <= T::zero() {
                return T::infinity();
            }
            kl += *pi * (*pi / *qi).ln();
        }
    }
    kl.max(T::zero())
}

/// Total variation distance `½ Σ |p − q|`.
pub fn total_variation<T: Real>(p: &[T], q: &[T]) -> T {
    p.iter().zip(q).map(|(a, b)| (*a - *b).abs()).sum::<T>() * T::lit(0.5)
}

/// Checks that `p` is a probability vector within `tol`.
pub fn is_distribution<T: Real>(p: &[T], tol: T) -> bool {
    !p.is_empty()
        && p.iter().all(|x| x.is_finite() && *x >= -tol)
        && (p.iter().copied().sum::<T>() - T::one()).abs() <= tol
}
