//! Prior density and prior sampling for θ given K.
//!
//! All component priors are Gamma or Gaussian:
//!
//! - amplitudes aₖ ~ Gamma(η_a, λ_a) with λ_a scaling linearly in the
//!   pseudo-measurement time T,
//! - positions μₖ ~ N(ν₀, ξ₀²),
//! - shapes τₖ = 1/σₖ² ~ Gamma(η_σ, λ_σ) — the Gamma is a density in τ
//!   itself, which makes the Gaussian-basis and pseudo-Voigt width priors
//!   identical,
//! - constant background B ~ N(ν_B, ξ_B²), or Shirley c ~ Gamma(η_c, λ_c)
//!   and h_start ~ N(ν_start, ξ_start²).
//!
//! Gamma(x; η, λ) uses the rate convention: density λ^η x^{η−1} e^{−λx}/Γ(η).

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::Error;
use crate::math;
use crate::model::{Background, BackgroundKind, Peak, Theta};
use crate::Result;

/// Background block of the prior, matching one [`BackgroundKind`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BackgroundPrior {
    /// B ~ N(nu_b, xi_b²).
    Constant {
        /// Mean of the constant-background prior.
        nu_b: f64,
        /// Standard deviation of the constant-background prior.
        xi_b: f64,
    },
    /// c ~ Gamma(eta_c, lambda_c), h_start ~ N(nu_start, xi_start²).
    Shirley {
        /// Shape of the Gamma prior on the Shirley coefficient c.
        eta_c: f64,
        /// Rate of the Gamma prior on c.
        lambda_c: f64,
        /// Mean of the start-height prior.
        nu_start: f64,
        /// Standard deviation of the start-height prior.
        xi_start: f64,
    },
}

impl BackgroundPrior {
    /// The background family this block describes.
    pub fn kind(&self) -> BackgroundKind {
        match self {
            BackgroundPrior::Constant { .. } => BackgroundKind::Constant,
            BackgroundPrior::Shirley { .. } => BackgroundKind::Shirley,
        }
    }
}

/// Hyperparameters of the full prior p(θ | K).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PriorHyper {
    /// Amplitude Gamma shape η_a.
    pub eta_a: f64,
    /// Amplitude Gamma rate λ_a (scales as 1/T so the prior mean tracks T).
    pub lambda_a: f64,
    /// Position Gaussian mean ν₀ (eV).
    pub nu_0: f64,
    /// Position Gaussian sd ξ₀ (eV).
    pub xi_0: f64,
    /// Shape Gamma shape η_σ on τ = 1/σ².
    pub eta_sigma: f64,
    /// Shape Gamma rate λ_σ.
    pub lambda_sigma: f64,
    /// Background prior block.
    pub background: BackgroundPrior,
}

/// Named preset hyperparameter families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PresetName {
    /// Gaussian basis with constant background: η_a = 2, λ_a = 2/T,
    /// ν₀ = 160, ξ₀ = 2, η_σ = 10, λ_σ = 1.8, B ~ N(0.1T, (0.01T)²).
    Synthetic4,
    /// Pseudo-Voigt basis with Shirley background: η_a = 2, λ_a = 2/T,
    /// ν₀ = 160, ξ₀ = 5, η_σ = 10, λ_σ = 0.4, c ~ Gamma(0.8, 0.8),
    /// h_start ~ N(0.35T, (0.1T)²).
    MoS2_5,
}

impl PriorHyper {
    /// The exact preset hyperparameter set for pseudo-measurement time T.
    pub fn preset(name: PresetName, t: f64) -> Result<PriorHyper> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::invalid(format!("preset time T must be positive, got {t}")));
        }
        let hyper = match name {
            PresetName::Synthetic4 => PriorHyper {
                eta_a: 2.0,
                // Rate 2/T puts the amplitude prior mean at T, matching how
                // peak areas grow with measurement time.
                lambda_a: 2.0 / t,
                nu_0: 160.0,
                xi_0: 2.0,
                eta_sigma: 10.0,
                // Rate 1.8 keeps the width prior permissive of the narrow
                // peaks this family generates while still pricing spurious
                // extra components; mean 4 is too blunt to separate the
                // triplet at short measurement times.
                lambda_sigma: 1.8,
                background: BackgroundPrior::Constant { nu_b: 0.1 * t, xi_b: 0.01 * t },
            },
            PresetName::MoS2_5 => PriorHyper {
                eta_a: 2.0,
                lambda_a: 2.0 / t,
                nu_0: 160.0,
                xi_0: 5.0,
                eta_sigma: 10.0,
                lambda_sigma: 0.4,
                background: BackgroundPrior::Shirley {
                    eta_c: 0.8,
                    lambda_c: 0.8,
                    nu_start: 0.35 * t,
                    xi_start: 0.1 * t,
                },
            },
        };
        Ok(hyper)
    }

    /// The background family this prior describes.
    pub fn background_kind(&self) -> BackgroundKind {
        self.background.kind()
    }

    /// Check that every shape, rate, and sd parameter is positive and finite.
    pub fn validate(&self) -> Result<()> {
        let mut positives = alloc::vec![
            ("eta_a", self.eta_a),
            ("lambda_a", self.lambda_a),
            ("xi_0", self.xi_0),
            ("eta_sigma", self.eta_sigma),
            ("lambda_sigma", self.lambda_sigma),
        ];
        match self.background {
            BackgroundPrior::Constant { xi_b, .. } => positives.push(("xi_b", xi_b)),
            BackgroundPrior::Shirley { eta_c, lambda_c, xi_start, .. } => {
                positives.push(("eta_c", eta_c));
                positives.push(("lambda_c", lambda_c));
                positives.push(("xi_start", xi_start));
            }
        }
        for (name, v) in positives {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "prior parameter {name} must be positive, got {v}"
                )));
            }
        }
        let means = match self.background {
            BackgroundPrior::Constant { nu_b, .. } => [self.nu_0, nu_b],
            BackgroundPrior::Shirley { nu_start, .. } => [self.nu_0, nu_start],
        };
        for v in means {
            if !v.is_finite() {
                return Err(Error::invalid("prior location parameters must be finite"));
            }
        }
        Ok(())
    }
}

/// Gamma log density with rate convention; −∞ off support (x ≤ 0).
pub(crate) fn log_gamma_pdf(x: f64, eta: f64, lambda: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return f64::NEG_INFINITY;
    }
    eta * math::ln(lambda) + (eta - 1.0) * math::ln(x) - lambda * x - math::ln_gamma(eta)
}

/// Gaussian log density; −∞ for non-finite x.
pub(crate) fn log_normal_pdf(x: f64, nu: f64, xi: f64) -> f64 {
    if !x.is_finite() {
        return f64::NEG_INFINITY;
    }
    let z = (x - nu) / xi;
    -math::ln(xi) - 0.5 * math::LN_2PI - 0.5 * z * z
}

/// Log prior density ln p(θ | K); −∞ outside the support.
///
/// Errors only on structural mismatch (peak count ≠ K, background variant
/// not matching the prior's background block).
pub fn log_prior_density(theta: &Theta, k: usize, hyper: &PriorHyper) -> Result<f64> {
    if theta.peaks.len() != k {
        return Err(Error::invalid(format!("theta has {} peaks but K = {k}", theta.peaks.len())));
    }
    if theta.background.kind() != hyper.background_kind() {
        return Err(Error::invalid(
            "theta background variant does not match prior background block",
        ));
    }
    let mut lp = 0.0;
    for p in &theta.peaks {
        lp += log_gamma_pdf(p.a, hyper.eta_a, hyper.lambda_a);
        lp += log_normal_pdf(p.mu, hyper.nu_0, hyper.xi_0);
        lp += log_gamma_pdf(p.tau, hyper.eta_sigma, hyper.lambda_sigma);
    }
    match (theta.background, hyper.background) {
        (Background::Constant { b }, BackgroundPrior::Constant { nu_b, xi_b }) => {
            lp += log_normal_pdf(b, nu_b, xi_b);
        }
        (
            Background::Shirley { c, h_start },
            BackgroundPrior::Shirley { eta_c, lambda_c, nu_start, xi_start },
        ) => {
            lp += log_gamma_pdf(c, eta_c, lambda_c);
            lp += log_normal_pdf(h_start, nu_start, xi_start);
        }
        _ => unreachable!("kind match checked above"),
    }
    Ok(lp)
}

/// Draw θ ~ p(θ | K).
///
/// Components are drawn independently in a fixed order — per peak
/// (a, μ, τ), then the background block — so a seeded stream reproduces the
/// same θ. The hyperparameters must be valid (see [`PriorHyper::validate`]).
pub fn sample_prior<R: Rng + ?Sized>(k: usize, hyper: &PriorHyper, rng: &mut R) -> Theta {
    let gamma_a = Gamma::new(hyper.eta_a, 1.0 / hyper.lambda_a).expect("validated amplitude prior");
    let normal_mu = Normal::new(hyper.nu_0, hyper.xi_0).expect("validated position prior");
    let gamma_tau =
        Gamma::new(hyper.eta_sigma, 1.0 / hyper.lambda_sigma).expect("validated shape prior");
    let mut peaks = Vec::with_capacity(k);
    for _ in 0..k {
        peaks.push(Peak {
            a: gamma_a.sample(rng),
            mu: normal_mu.sample(rng),
            tau: gamma_tau.sample(rng),
        });
    }
    let background = match hyper.background {
        BackgroundPrior::Constant { nu_b, xi_b } => {
            let normal_b = Normal::new(nu_b, xi_b).expect("validated background prior");
            Background::Constant { b: normal_b.sample(rng) }
        }
        BackgroundPrior::Shirley { eta_c, lambda_c, nu_start, xi_start } => {
            let gamma_c = Gamma::new(eta_c, 1.0 / lambda_c).expect("validated Shirley prior");
            let normal_h = Normal::new(nu_start, xi_start).expect("validated Shirley prior");
            Background::Shirley { c: gamma_c.sample(rng), h_start: normal_h.sample(rng) }
        }
    };
    Theta { peaks, background }
}
