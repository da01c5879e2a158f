//! Deterministic spectral model f(x; θ, K) = G(x; θ, K) + B(x; θ, K).
//!
//! The signal G = Σₖ aₖ φ(x; μₖ, τₖ) sums K unimodal basis functions. Two
//! bases are supported:
//!
//! - Gaussian: φ = exp(−τ (x−μ)² / 2) with τ = 1/σ².
//! - 70:30 pseudo-Voigt (product form): φ = exp(−0.3 ln2 · τ (x−μ)²) /
//!   (1 + 0.7 · τ (x−μ)²), with τ the inverse peak variance.
//!
//! Both parameterize width as τ = 1/σ² so the Gamma prior on τ applies
//! uniformly. The background is either a constant B or a Shirley term
//! c · ∫₋∞ˣ G(u) du + h_start; the Gaussian cumulative is closed-form via
//! the error function, the pseudo-Voigt cumulative is composite-Simpson
//! quadrature with a width-scaled step.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::math;
use crate::Result;

/// Basis function family for the signal peaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Basis {
    /// φ = exp(−τ (x−μ)² / 2).
    Gaussian,
    /// φ = exp(−0.3 ln2 τ (x−μ)²) / (1 + 0.7 τ (x−μ)²).
    PseudoVoigt7030,
}

/// Background model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BackgroundKind {
    /// B(x) = B, one free level parameter.
    Constant,
    /// B(x) = c · ∫₋∞ˣ G(u) du + h_start.
    Shirley,
}

/// One signal peak: apex amplitude, position (eV), inverse variance (eV⁻²).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Peak {
    /// Amplitude a ≥ 0: expected counts at the apex.
    pub a: f64,
    /// Position μ in eV.
    pub mu: f64,
    /// Shape τ > 0: inverse variance 1/σ² for both bases.
    pub tau: f64,
}

/// Background parameters, matching one [`BackgroundKind`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Background {
    /// Constant level in counts.
    Constant {
        /// The level B.
        b: f64,
    },
    /// Shirley background.
    Shirley {
        /// Coefficient c ≥ 0 multiplying the cumulative signal.
        c: f64,
        /// Start height in counts.
        h_start: f64,
    },
}

impl Background {
    /// The kind tag of this parameter block.
    pub fn kind(&self) -> BackgroundKind {
        match self {
            Background::Constant { .. } => BackgroundKind::Constant,
            Background::Shirley { .. } => BackgroundKind::Shirley,
        }
    }
}

/// Full parameter vector: K peaks plus background parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Theta {
    /// Peak parameters, length K.
    pub peaks: Vec<Peak>,
    /// Background parameters.
    pub background: Background,
}

impl Theta {
    /// Check dimensional and kind consistency against a model spec.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if self.peaks.len() != spec.k {
            return Err(Error::invalid(format!(
                "theta has {} peaks but spec requires K = {}",
                self.peaks.len(),
                spec.k
            )));
        }
        if self.background.kind() != spec.background_kind {
            return Err(Error::invalid(
                "theta background variant does not match spec background kind",
            ));
        }
        Ok(())
    }

    /// Copy with peaks sorted by ascending μ (report-time relabeling).
    pub fn relabeled_by_mu(&self) -> Theta {
        let mut out = self.clone();
        out.peaks.sort_by(|p, q| p.mu.partial_cmp(&q.mu).unwrap_or(core::cmp::Ordering::Equal));
        out
    }
}

/// Model structure: basis family, background family, and peak count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSpec {
    /// Basis function family.
    pub basis: Basis,
    /// Background family.
    pub background_kind: BackgroundKind,
    /// Number of peaks, K ≥ 1.
    pub k: usize,
}

impl ModelSpec {
    /// Number of scalar sampling coordinates: 3K plus background block.
    pub fn coord_count(&self) -> usize {
        3 * self.k
            + match self.background_kind {
                BackgroundKind::Constant => 1,
                BackgroundKind::Shirley => 2,
            }
    }
}

/// Strictly increasing energy grid, at least two points.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "Vec<f64>", into = "Vec<f64>")
)]
pub struct Grid {
    energies: Vec<f64>,
}

impl Grid {
    /// Build from explicit energies; they must be finite, strictly
    /// increasing, and at least two.
    pub fn new(energies: Vec<f64>) -> Result<Self> {
        if energies.len() < 2 {
            return Err(Error::invalid("grid needs at least two points"));
        }
        for (i, w) in energies.windows(2).enumerate() {
            if !w[0].is_finite() || !w[1].is_finite() {
                return Err(Error::invalid("grid energies must be finite"));
            }
            if w[1] <= w[0] {
                return Err(Error::invalid(format!(
                    "grid energies must be strictly increasing (violated at index {})",
                    i + 1
                )));
            }
        }
        Ok(Grid { energies })
    }

    /// Uniform grid from `lo` to `hi` inclusive with the given step.
    pub fn uniform(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && step.is_finite()) || step <= 0.0 || hi <= lo {
            return Err(Error::invalid("uniform grid needs lo < hi and step > 0"));
        }
        let n = ((hi - lo) / step + 0.5) as usize + 1;
        let energies: Vec<f64> = (0..n).map(|i| lo + i as f64 * step).collect();
        Grid::new(energies)
    }

    /// The energy values.
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    /// Always false: a grid holds at least two points.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Smallest spacing between adjacent points.
    pub(crate) fn min_spacing(&self) -> f64 {
        let mut m = f64::INFINITY;
        for w in self.energies.windows(2) {
            let d = w[1] - w[0];
            if d < m {
                m = d;
            }
        }
        m
    }
}

impl TryFrom<Vec<f64>> for Grid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Grid::new(v)
    }
}

impl From<Grid> for Vec<f64> {
    fn from(g: Grid) -> Vec<f64> {
        g.energies
    }
}

/// Value of one unit-amplitude basis function at distance d = x − μ.
#[inline(always)]
pub(crate) fn basis_value(d: f64, tau: f64, basis: Basis) -> f64 {
    match basis {
        Basis::Gaussian => math::exp(-0.5 * tau * d * d),
        Basis::PseudoVoigt7030 => {
            let q = tau * d * d;
            math::exp(-0.3 * core::f64::consts::LN_2 * q) / (1.0 + 0.7 * q)
        }
    }
}

/// Evaluate one basis function φ(x; μ, τ) ∈ (0, 1], apex exactly 1 at x = μ.
pub fn eval_basis(x: f64, peak: &Peak, basis: Basis) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::invalid("basis argument x must be finite"));
    }
    if !(peak.tau > 0.0) || !peak.tau.is_finite() {
        return Err(Error::invalid("basis shape tau must be positive and finite"));
    }
    Ok(basis_value(x - peak.mu, peak.tau, basis))
}

/// Signal G(x; θ) = Σₖ aₖ φ(x; μₖ, τₖ); linear in every amplitude.
pub fn eval_signal(x: f64, theta: &Theta, spec: &ModelSpec) -> Result<f64> {
    theta.validate(spec)?;
    let mut g = 0.0;
    for p in &theta.peaks {
        g += p.a * eval_basis(x, p, spec.basis)?;
    }
    Ok(g)
}

/// Fill `out` with the unit-amplitude basis column φ(xᵢ; μ, τ).
pub(crate) fn basis_column_into(energies: &[f64], peak: &Peak, basis: Basis, out: &mut [f64]) {
    debug_assert_eq!(energies.len(), out.len());
    let mu = peak.mu;
    let tau = peak.tau;
    match basis {
        Basis::Gaussian => {
            for (o, &x) in out.iter_mut().zip(energies) {
                let d = x - mu;
                *o = math::exp(-0.5 * tau * d * d);
            }
        }
        Basis::PseudoVoigt7030 => {
            let c = 0.3 * core::f64::consts::LN_2;
            for (o, &x) in out.iter_mut().zip(energies) {
                let d = x - mu;
                let q = tau * d * d;
                *o = math::exp(-c * q) / (1.0 + 0.7 * q);
            }
        }
    }
}

/// Unit-amplitude basis column over a grid.
pub fn basis_column(grid: &Grid, peak: &Peak, basis: Basis) -> Result<Vec<f64>> {
    if !(peak.tau > 0.0) || !peak.tau.is_finite() || !peak.mu.is_finite() {
        return Err(Error::invalid("peak mu must be finite and tau positive"));
    }
    let mut out = vec![0.0; grid.len()];
    basis_column_into(grid.energies(), peak, basis, &mut out);
    Ok(out)
}

/// Fill `out` with Jᵢ = ∫₋∞^{xᵢ} φ(u; μ, τ) du for a unit-amplitude peak.
///
/// Gaussian: closed form σ√(2π)·Φ((x−μ)/σ). Pseudo-Voigt: composite Simpson
/// from μ − 40/√τ (tail mass below that point is ~1e−145 of the peak area,
/// negligible at f64 precision) with step min(grid spacing, 0.05/√τ).
pub(crate) fn cumulative_column_into(
    grid: &Grid,
    peak: &Peak,
    basis: Basis,
    out: &mut [f64],
) -> Result<()> {
    let energies = grid.energies();
    debug_assert_eq!(energies.len(), out.len());
    let mu = peak.mu;
    let tau = peak.tau;
    match basis {
        Basis::Gaussian => {
            // ∫ exp(−τ(u−μ)²/2) du = √(π/2τ)·(1 + erf(√(τ/2)(x−μ)))
            let amp = math::sqrt(core::f64::consts::PI / (2.0 * tau));
            let scale = math::sqrt(0.5 * tau);
            for (o, &x) in out.iter_mut().zip(energies) {
                *o = amp * (1.0 + math::erf(scale * (x - mu)));
            }
        }
        Basis::PseudoVoigt7030 => {
            // work in the dimensionless offset u = (x−μ)√τ, where the
            // integrand exp(−0.3 ln2 u²)/(1+0.7 u²) is unit-scale and dies
            // below 1e−145 outside |u| ≤ 40; the window clamp bounds the
            // quadrature work for any τ
            let rt = math::sqrt(tau);
            let h_grid = {
                let h = grid.min_spacing() * rt;
                if h < 0.05 {
                    h
                } else {
                    0.05
                }
            };
            let mut cursor = -40.0f64;
            let mut cum = 0.0;
            for (o, &x) in out.iter_mut().zip(energies) {
                let u = (x - mu) * rt;
                let u_hi = if u < 40.0 { u } else { 40.0 };
                if u_hi > cursor {
                    // the head segment from the window edge has no grid
                    // checkpoints inside; the width-scaled step applies
                    let h = if cursor == -40.0 { 0.05 } else { h_grid };
                    cum += simpson_pv_unit(cursor, u_hi, h) / rt;
                    cursor = u_hi;
                }
                *o = cum;
            }
            // sanity: finite and nondecreasing within roundoff
            let mut prev = 0.0;
            for &v in out.iter() {
                if !v.is_finite() || v < prev - 1e-12 * (1.0 + math::abs(prev)) {
                    return Err(Error::numeric(
                        "pseudo-Voigt cumulative quadrature produced a non-monotone or non-finite value",
                    ));
                }
                prev = v;
            }
        }
    }
    Ok(())
}

/// Composite Simpson integral of the unit pseudo-Voigt shape
/// exp(−0.3 ln2 u²)/(1+0.7 u²) over [a, b] in dimensionless units.
fn simpson_pv_unit(a: f64, b: f64, h_max: f64) -> f64 {
    let len = b - a;
    let mut k = (len / h_max) as usize + 1;
    if k % 2 == 1 {
        k += 1;
    }
    let h = len / k as f64;
    let c = 0.3 * core::f64::consts::LN_2;
    let phi = |u: f64| {
        let q = u * u;
        math::exp(-c * q) / (1.0 + 0.7 * q)
    };
    let mut s = phi(a) + phi(b);
    let mut i = 1;
    while i < k {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * phi(a + i as f64 * h);
        i += 1;
    }
    s * h / 3.0
}

/// Unit-amplitude cumulative column Jᵢ = ∫₋∞^{xᵢ} φ du over a grid.
pub fn cumulative_column(grid: &Grid, peak: &Peak, basis: Basis) -> Result<Vec<f64>> {
    if !(peak.tau > 0.0) || !peak.tau.is_finite() || !peak.mu.is_finite() {
        return Err(Error::invalid("peak mu must be finite and tau positive"));
    }
    let mut out = vec![0.0; grid.len()];
    cumulative_column_into(grid, peak, basis, &mut out)?;
    Ok(out)
}

/// Cumulative signal I(xᵢ) = ∫₋∞^{xᵢ} G(u; θ) du at every grid point.
///
/// Nondecreasing along the grid for nonnegative amplitudes.
pub fn cumulative_signal(grid: &Grid, theta: &Theta, spec: &ModelSpec) -> Result<Vec<f64>> {
    theta.validate(spec)?;
    let mut acc = vec![0.0; grid.len()];
    let mut col = vec![0.0; grid.len()];
    for p in &theta.peaks {
        if !(p.tau > 0.0) || !p.tau.is_finite() || !p.mu.is_finite() {
            return Err(Error::invalid("peak mu must be finite and tau positive"));
        }
        cumulative_column_into(grid, p, spec.basis, &mut col)?;
        for (a, &j) in acc.iter_mut().zip(&col) {
            *a += p.a * j;
        }
    }
    Ok(acc)
}

/// Model values f(xᵢ; θ) = G(xᵢ) + B(xᵢ) over the grid.
pub fn eval_model(grid: &Grid, theta: &Theta, spec: &ModelSpec) -> Result<Vec<f64>> {
    theta.validate(spec)?;
    let energies = grid.energies();
    let mut f = vec![0.0; grid.len()];
    let mut col = vec![0.0; grid.len()];
    for p in &theta.peaks {
        if !(p.tau > 0.0) || !p.tau.is_finite() || !p.mu.is_finite() {
            return Err(Error::invalid("peak mu must be finite and tau positive"));
        }
        basis_column_into(energies, p, spec.basis, &mut col);
        for (fi, &phi) in f.iter_mut().zip(&col) {
            *fi += p.a * phi;
        }
    }
    match theta.background {
        Background::Constant { b } => {
            for fi in f.iter_mut() {
                *fi += b;
            }
        }
        Background::Shirley { c, h_start } => {
            let cum = cumulative_signal(grid, theta, spec)?;
            for (fi, &ci) in f.iter_mut().zip(&cum) {
                *fi += c * ci + h_start;
            }
        }
    }
    Ok(f)
}
