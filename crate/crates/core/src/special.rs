//! Scaled complementary error function.

use std::f64::consts::PI;

/// Below this argument `exp(x²)·erfc(x)` is evaluated directly; `erfc` keeps
/// full relative precision there and `exp(x²)` is far from overflow.
const DIRECT_LIMIT: f64 = 25.0;

/// `erfcx(x) = exp(x²)·erfc(x)` for `x ≥ 0`.
///
/// Large arguments use the Laplace continued fraction, which converges in a
/// handful of terms once `x ≥ 25`. Negative arguments are not needed by the
/// plume kernel (it falls back to plain `erfc` there) and return `NaN`.
pub(crate) fn erfcx(x: f64) -> f64 {
    if x.is_nan() || x < 0.0 {
        return f64::NAN;
    }
    if x < DIRECT_LIMIT {
        return (x * x).exp() * libm::erfc(x);
    }
    if x.is_infinite() {
        return 0.0;
    }
    let mut tail = x;
    for n in (1..=40).rev() {
        tail = x + (n as f64 / 2.0) / tail;
    }
    1.0 / (PI.sqrt() * tail)
}

pub(crate) fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}
