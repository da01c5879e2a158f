//! Scalar numerics shared across modules.
//!
//! Elementary functions go through the shims below so the crate builds both
//! with `std` (intrinsics) and without (libm). `erf` and `ln_gamma` always
//! come from libm because the standard library does not provide them.

/// ln(2π).
pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[inline(always)]
pub(crate) fn exp(x: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.exp()
    }
    #[cfg(not(feature = "std"))]
    {
        libm::exp(x)
    }
}

#[inline(always)]
pub(crate) fn ln(x: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.ln()
    }
    #[cfg(not(feature = "std"))]
    {
        libm::log(x)
    }
}

#[inline(always)]
pub(crate) fn sqrt(x: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.sqrt()
    }
    #[cfg(not(feature = "std"))]
    {
        libm::sqrt(x)
    }
}

#[inline(always)]
pub(crate) fn powf(x: f64, y: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.powf(y)
    }
    #[cfg(not(feature = "std"))]
    {
        libm::pow(x, y)
    }
}

#[inline(always)]
pub(crate) fn abs(x: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.abs()
    }
    #[cfg(not(feature = "std"))]
    {
        libm::fabs(x)
    }
}

/// Gauss error function.
#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Natural log of the gamma function.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// ln(y!) via the log-gamma function; exact 0 for y = 0 and y = 1.
#[inline]
pub fn ln_factorial(y: u64) -> f64 {
    if y < 2 {
        0.0
    } else {
        ln_gamma(y as f64 + 1.0)
    }
}

/// Trigamma function ψ₁(x) = d²/dx² ln Γ(x), for x > 0.
///
/// Recurrence ψ₁(x) = ψ₁(x+1) + 1/x² lifts the argument to x ≥ 6, then the
/// asymptotic series in Bernoulli numbers applies. Used to size log-space
/// proposal steps: Var(ln X) = ψ₁(η) for X ~ Gamma(η, λ).
pub fn trigamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // 1/x + 1/2x² + Σ B₂ₖ/x^{2k+1}, truncated after B₁₀; the first
    // dropped term is ~2e−14 relative at x = 10
    let series = inv
        + 0.5 * inv2
        + inv
            * inv2
            * (1.0 / 6.0
                + inv2
                    * (-1.0 / 30.0
                        + inv2 * (1.0 / 42.0 + inv2 * (-1.0 / 30.0 + inv2 * (5.0 / 66.0)))));
    acc + series
}

/// log of the mean of exp(xs), computed with max subtraction.
///
/// Entries equal to −∞ contribute exp(−∞) = 0 exactly; an all-(−∞) input
/// returns −∞. The input must be non-empty and free of NaN/+∞.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    debug_assert!(!xs.is_empty());
    let mut m = f64::NEG_INFINITY;
    for &x in xs {
        debug_assert!(!x.is_nan() && x < f64::INFINITY);
        if x > m {
            m = x;
        }
    }
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut s = 0.0;
    for &x in xs {
        s += exp(x - m);
    }
    m + ln(s / xs.len() as f64)
}

/// SplitMix64 finalizer: a bijective 64-bit mix with full avalanche.
#[inline]
pub fn splitmix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and two indices.
///
/// Stable across versions: the derivation is part of the reproducibility
/// contract for experiment manifests.
#[inline]
pub fn derive_seed(master: u64, lane: u64, index: u64) -> u64 {
    splitmix64(
        splitmix64(master ^ splitmix64(lane))
            ^ splitmix64(index.wrapping_add(0xA5A5_A5A5_A5A5_A5A5)),
    )
}
