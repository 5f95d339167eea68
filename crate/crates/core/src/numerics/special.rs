//! Gamma-family special functions on the positive real axis.
//!
//! All three functions share the same scheme: the upward recurrence
//! `f(x) = f(x + 1) - correction(x)` moves the argument past [`SHIFT`],
//! where the asymptotic (Stirling-type) series is accurate to well below
//! `1e-14`.

use crate::error::{Error, Result};

const SHIFT: f64 = 10.0;

/// `B_{2k} / (2k)` for k = 1..=8, used by the digamma series.
const DIGAMMA_SERIES: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
    -3617.0 / 8160.0,
];

/// `B_{2k}` for k = 1..=8, used by the trigamma series.
const BERNOULLI_EVEN: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

/// `B_{2k} / (2k (2k - 1))` for k = 1..=8, used by the Stirling series.
const STIRLING_SERIES: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
];

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Digamma ψ(x) = d/dx ln Γ(x) for x > 0, without domain checking.
#[inline]
pub fn digamma_unchecked(x: f64) -> f64 {
    let mut acc = 0.0;
    let mut x = x;
    while x < SHIFT {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    let mut term = inv2;
    let mut series = 0.0;
    for c in DIGAMMA_SERIES {
        series += c * term;
        term *= inv2;
    }
    acc + x.ln() - 0.5 / x - series
}

/// Digamma ψ(x) for x > 0.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("digamma requires a finite positive argument, got {x}")));
    }
    Ok(digamma_unchecked(x))
}

/// Trigamma ψ'(x) for x > 0, without domain checking.
#[inline]
pub fn trigamma_unchecked(x: f64) -> f64 {
    let mut acc = 0.0;
    let mut x = x;
    while x < SHIFT {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    // ψ'(x) ~ 1/x + 1/(2x²) + Σ B_{2k} / x^{2k+1}
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut term = inv2 * inv;
    let mut series = 0.0;
    for b in BERNOULLI_EVEN {
        series += b * term;
        term *= inv2;
    }
    acc + inv + 0.5 * inv2 + series
}

/// Trigamma ψ'(x) for x > 0.
pub fn trigamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("trigamma requires a finite positive argument, got {x}")));
    }
    Ok(trigamma_unchecked(x))
}

/// ln Γ(x) for x > 0, without domain checking.
#[inline]
pub fn ln_gamma_unchecked(x: f64) -> f64 {
    let mut shift_log = 0.0;
    let mut x = x;
    if x < SHIFT {
        let mut prod = 1.0;
        while x < SHIFT {
            prod *= x;
            x += 1.0;
        }
        shift_log = prod.ln();
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut term = inv;
    let mut series = 0.0;
    for c in STIRLING_SERIES {
        series += c * term;
        term *= inv2;
    }
    (x - 0.5) * x.ln() - x + HALF_LN_2PI + series - shift_log
}

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("ln_gamma requires a finite positive argument, got {x}")));
    }
    Ok(ln_gamma_unchecked(x))
}

/// Inverse of the digamma function on (0, ∞).
///
/// Initial guess from the asymptotic branches of ψ, then Newton steps on
/// ψ(x) - y (Minka's scheme). Newton on ψ is monotone from these starts.
pub fn inv_digamma(y: f64) -> f64 {
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    let mut x = if y >= -2.22 { y.exp() + 0.5 } else { -1.0 / (y + EULER_GAMMA) };
    for _ in 0..50 {
        let step = (digamma_unchecked(x) - y) / trigamma_unchecked(x);
        let next = x - step;
        let next = if next <= 0.0 { x / 2.0 } else { next };
        if (next - x).abs() <= 1e-15 * x.abs().max(1e-300) {
            return next;
        }
        x = next;
    }
    x
}

/// Numerically stable log Σ exp(v).
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
