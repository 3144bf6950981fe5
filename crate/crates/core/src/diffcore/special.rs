//! Gamma-family special functions.
//!
//! The evidential losses need `ln Γ`, `ψ` (digamma) and `ψ'` (trigamma):
//! the first two appear in the loss values, digamma and trigamma in the
//! backward pass (d/dx ln Γ = ψ, d/dx ψ = ψ'). All three are computed by
//! recurrence-shifting the argument into the asymptotic regime and applying
//! the Stirling-series expansion there, which keeps the error a few ulps
//! over the range that matters here (Dirichlet parameters, so `x >= 1`
//! mostly, but the implementations are accurate for any `x > 0`).
//!
//! Arguments `x <= 0` are outside the supported domain and yield NaN, which
//! the training loop surfaces as a non-finite-loss abort.

use super::scalar::Real;

/// Argument above which the asymptotic series is applied directly.
const SHIFT_THRESHOLD: f64 = 10.0;

/// ln Γ(x) for x > 0 (NaN otherwise).
pub fn ln_gamma<T: Real>(x: T) -> T {
    if !(x > T::zero()) {
        return T::nan();
    }
    let threshold = T::of(SHIFT_THRESHOLD);
    // ln Γ(x) = ln Γ(x + n) - ln(x) - ln(x+1) - ... - ln(x+n-1)
    let mut shift = T::zero();
    let mut z = x;
    while z < threshold {
        shift = shift + z.ln();
        z = z + T::one();
    }
    ln_gamma_asymptotic(z) - shift
}

/// ψ(x) = d/dx ln Γ(x) for x > 0 (NaN otherwise).
pub fn digamma<T: Real>(x: T) -> T {
    if !(x > T::zero()) {
        return T::nan();
    }
    let threshold = T::of(SHIFT_THRESHOLD);
    // ψ(x) = ψ(x + n) - Σ 1/(x+i)
    let mut shift = T::zero();
    let mut z = x;
    while z < threshold {
        shift = shift + z.recip();
        z = z + T::one();
    }
    digamma_asymptotic(z) - shift
}

/// ψ'(x) = d/dx ψ(x) for x > 0 (NaN otherwise).
pub fn trigamma<T: Real>(x: T) -> T {
    if !(x > T::zero()) {
        return T::nan();
    }
    let threshold = T::of(SHIFT_THRESHOLD);
    // ψ'(x) = ψ'(x + n) + Σ 1/(x+i)²
    let mut shift = T::zero();
    let mut z = x;
    while z < threshold {
        shift = shift + (z * z).recip();
        z = z + T::one();
    }
    trigamma_asymptotic(z) + shift
}

/// Stirling series for ln Γ, valid for large x:
/// (x-*½*)ln x - x + ½ln(2π) + Σ B₂ₙ / (2n(2n-1) x^(2n-1)).
fn ln_gamma_asymptotic<T: Real>(x: T) -> T {
    let half_ln_two_pi = T::of(0.918_938_533_204_672_741_8);
    let inv = x.recip();
    let inv2 = inv * inv;
    // Coefficients of x⁻¹, x⁻³, ..., x⁻¹³ (Horner in x⁻²).
    let series = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360_360.0,
        7.0 / 1092.0,
    ];
    let mut tail = T::zero();
    for &c in series.iter().rev() {
        tail = tail * inv2 + T::of(c);
    }
    (x - T::of(0.5)) * x.ln() - x + half_ln_two_pi + tail * inv
}

/// Asymptotic series ψ(x) ≈ ln x - 1/(2x) - Σ B₂ₙ / (2n x^(2n)).
fn digamma_asymptotic<T: Real>(x: T) -> T {
    let inv = x.recip();
    let inv2 = inv * inv;
    // Coefficients of x⁻², x⁻⁴, ..., x⁻¹⁴ (Horner in x⁻²).
    let series = [
        -1.0 / 12.0,
        1.0 / 120.0,
        -1.0 / 252.0,
        1.0 / 240.0,
        -1.0 / 132.0,
        691.0 / 32_760.0,
        -1.0 / 12.0,
    ];
    let mut tail = T::zero();
    for &c in series.iter().rev() {
        tail = tail * inv2 + T::of(c);
    }
    x.ln() - T::of(0.5) * inv + tail * inv2
}

/// Asymptotic series ψ'(x) ≈ 1/x + 1/(2x²) + Σ B₂ₙ / x^(2n+1).
fn trigamma_asymptotic<T: Real>(x: T) -> T {
    let inv = x.recip();
    let inv2 = inv * inv;
    // Coefficients of x⁻³, x⁻⁵, ..., x⁻¹⁵ (Horner in x⁻²).
    let series = [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
        7.0 / 6.0,
    ];
    let mut tail = T::zero();
    for &c in series.iter().rev() {
        tail = tail * inv2 + T::of(c);
    }
    inv + T::of(0.5) * inv2 + tail * inv2 * inv
}
