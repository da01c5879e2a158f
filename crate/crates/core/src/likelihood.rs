//! Poisson measurement model.
//!
//! Counts are modeled as yᵢ ~ Poisson(f(xᵢ; θ, K)) independently per grid
//! point. The central quantity is the averaged negative log-likelihood
//!
//!   E(θ, K) = (1/n) Σᵢ [ f(xᵢ) − yᵢ ln f(xᵢ) + ln yᵢ! ],
//!
//! so that exp(−n·E) is exactly the likelihood p(D | θ, K). A model value
//! f(xᵢ) ≤ 0 makes the likelihood zero; that is represented as E = +∞
//! rather than an error so Metropolis rejection handles it uniformly.

use alloc::format;
use alloc::vec::Vec;

use crate::error::Error;
use crate::math;
use crate::model::{eval_model, Grid, ModelSpec, Theta};
use crate::priors::{log_prior_density, PriorHyper};
use crate::Result;

/// Mean negative log-likelihood per data point (nats); +∞ marks zero
/// likelihood.
pub type LossValue = f64;

/// Observed data set: an energy grid and one nonnegative count per point.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "SpectrumRaw", into = "SpectrumRaw"))]
pub struct Spectrum {
    grid: Grid,
    counts: Vec<u64>,
    // derived, rebuilt on construction
    y_f64: Vec<f64>,
    lnfact_sum: f64,
}

#[derive(Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[doc(hidden)]
pub struct SpectrumRaw {
    grid: Grid,
    counts: Vec<u64>,
}

impl TryFrom<SpectrumRaw> for Spectrum {
    type Error = Error;
    fn try_from(raw: SpectrumRaw) -> Result<Self> {
        Spectrum::new(raw.grid, raw.counts)
    }
}

impl From<Spectrum> for SpectrumRaw {
    fn from(s: Spectrum) -> SpectrumRaw {
        SpectrumRaw { grid: s.grid, counts: s.counts }
    }
}

impl Spectrum {
    /// Pair a grid with counts of the same length.
    pub fn new(grid: Grid, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != grid.len() {
            return Err(Error::invalid(format!(
                "spectrum has {} counts for {} grid points",
                counts.len(),
                grid.len()
            )));
        }
        let y_f64: Vec<f64> = counts.iter().map(|&y| y as f64).collect();
        let lnfact_sum = counts.iter().map(|&y| math::ln_factorial(y)).sum();
        Ok(Spectrum { grid, counts, y_f64, lnfact_sum })
    }

    /// The energy grid.
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// The counts, aligned with the grid.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Number of data points n.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    /// Always false: the grid holds at least two points.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub(crate) fn y_f64(&self) -> &[f64] {
        &self.y_f64
    }

    pub(crate) fn lnfact_sum(&self) -> f64 {
        self.lnfact_sum
    }
}

/// Poisson log pmf: y ln(rate) − rate − ln y!.
///
/// The rate must be positive; a nonpositive or non-finite rate is a domain
/// error (callers that need rejection semantics use [`loss_e`], which maps
/// the same condition to +∞).
pub fn poisson_log_pmf(y: u64, rate: f64) -> Result<f64> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::domain(format!("Poisson rate must be positive, got {rate}")));
    }
    Ok(y as f64 * math::ln(rate) - rate - math::ln_factorial(y))
}

/// Averaged loss E(θ, K) = −(1/n) Σᵢ log pmf(yᵢ | f(xᵢ)).
///
/// Returns +∞ (zero likelihood) when any f(xᵢ) ≤ 0 or non-finite; returns
/// an error only for structurally invalid θ.
pub fn loss_e(spectrum: &Spectrum, theta: &Theta, spec: &ModelSpec) -> Result<LossValue> {
    let f = eval_model(spectrum.grid(), theta, spec)?;
    let mut s = 0.0;
    for (&fi, &y) in f.iter().zip(spectrum.counts()) {
        if !(fi > 0.0) || !fi.is_finite() {
            return Ok(f64::INFINITY);
        }
        s += fi - y as f64 * math::ln(fi) + math::ln_factorial(y);
    }
    Ok(s / spectrum.len() as f64)
}

/// Mean loss from precomputed model values; the sampler hot path.
///
/// Same quantity as [`loss_e`] with ln yᵢ! folded in once via the spectrum's
/// cached Σ ln yᵢ!; the ln is only taken where yᵢ > 0.
pub(crate) fn energy_from_rates(f: &[f64], spectrum: &Spectrum) -> f64 {
    debug_assert_eq!(f.len(), spectrum.len());
    let y = spectrum.y_f64();
    let mut sum_f = 0.0;
    let mut sum_ylnf = 0.0;
    for (&fi, &yi) in f.iter().zip(y) {
        if !(fi > 0.0) || fi == f64::INFINITY {
            return f64::INFINITY;
        }
        sum_f += fi;
        if yi != 0.0 {
            sum_ylnf += yi * math::ln(fi);
        }
    }
    if !sum_f.is_finite() || !sum_ylnf.is_finite() {
        return f64::INFINITY;
    }
    (sum_f - sum_ylnf + spectrum.lnfact_sum()) / spectrum.len() as f64
}

/// Tempered unnormalized negative log-target: n·β·E(θ) − ln p(θ | K).
///
/// At β = 0 this is exactly −ln p(θ | K); the likelihood term is dropped
/// before multiplication so an infinite E cannot contaminate the prior-only
/// target. Returns +∞ for zero likelihood (β > 0) or θ outside the prior
/// support.
pub fn tempered_neg_log_target(
    spectrum: &Spectrum,
    theta: &Theta,
    spec: &ModelSpec,
    beta: f64,
    hyper: &PriorHyper,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::invalid(format!("beta must lie in [0, 1], got {beta}")));
    }
    let lp = log_prior_density(theta, spec.k, hyper)?;
    let lik = if beta == 0.0 {
        0.0
    } else {
        let e = loss_e(spectrum, theta, spec)?;
        if e == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        spectrum.len() as f64 * beta * e
    };
    if lp == f64::NEG_INFINITY {
        return Ok(f64::INFINITY);
    }
    Ok(lik - lp)
}
