//! Exchange Monte Carlo over a tempered replica ladder.
//!
//! Each replica m holds a parameter state θ_m targeting the tempered
//! density exp(−n β_m E(θ)) p(θ). A sweep updates every coordinate of every
//! replica with a Metropolis step, then attempts exchanges between ladder
//! neighbors with probability min(1, exp(n Δβ ΔE)). Positive coordinates
//! (amplitudes, precisions, Shirley slope) random-walk in log space with the
//! Jacobian correction; location coordinates random-walk linearly.
//!
//! Replica m draws from its own ChaCha8 stream (1 + m) of the master seed
//! and exchange decisions from stream 0, so results are bitwise identical
//! whether replicas are swept serially or in parallel.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Error;
use crate::likelihood::{energy_from_rates, LossValue, Spectrum};
use crate::math;
use crate::model::{
    basis_column_into, cumulative_column_into, Background, BackgroundKind, ModelSpec, Theta,
};
use crate::priors::{
    log_gamma_pdf, log_normal_pdf, log_prior_density, sample_prior, BackgroundPrior, PriorHyper,
};
use crate::Result;

/// Inverse-temperature ladder β₁ = 0 < β₂ < … < β_M = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Ladder {
    betas: Vec<f64>,
    gamma: f64,
}

impl Ladder {
    /// The inverse temperatures in ascending order.
    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// The geometric spacing factor.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Number of replicas M.
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    /// True iff the ladder is empty (never constructed by `build_ladder`).
    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }
}

/// Build the geometric ladder β₁ = 0 and β_m = γ^(m−M) for m ≥ 2.
///
/// The top rung is exactly 1. Requires m ≥ 2 and γ > 1.
pub fn build_ladder(m: usize, gamma: f64) -> Result<Ladder> {
    if m < 2 {
        return Err(Error::invalid("ladder needs at least 2 replicas"));
    }
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(Error::invalid("ladder spacing gamma must be finite and > 1"));
    }
    let mut betas = Vec::with_capacity(m);
    betas.push(0.0);
    for i in 1..m {
        betas.push(math::powf(gamma, (i + 1) as f64 - m as f64));
    }
    Ok(Ladder { betas, gamma })
}

/// Run-length and ladder settings for one EMC run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SamplerConfig {
    /// Number of replicas M.
    pub m: usize,
    /// Geometric ladder spacing γ.
    pub gamma: f64,
    /// Total Metropolis sweeps, burn-in included.
    pub iterations: u64,
    /// Sweeps discarded before recording; adaptation happens only here.
    pub burn_in: u64,
    /// Attempt neighbor exchanges every this many sweeps.
    pub exchange_period: u64,
    /// Master seed for all replica streams.
    pub seed: u64,
    /// Record every thin-th post-burn-in sweep.
    pub thin: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            m: 32,
            gamma: 1.5,
            iterations: 20_000,
            burn_in: 10_000,
            exchange_period: 1,
            seed: 0,
            thin: 10,
        }
    }
}

impl SamplerConfig {
    /// Check run lengths and ladder parameters for consistency.
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::invalid("config needs at least 2 replicas"));
        }
        if !(self.gamma > 1.0) || !self.gamma.is_finite() {
            return Err(Error::invalid("config gamma must be finite and > 1"));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::invalid("burn-in must be shorter than the run"));
        }
        if self.thin == 0 {
            return Err(Error::invalid("thinning interval must be at least 1"));
        }
        if self.exchange_period == 0 {
            return Err(Error::invalid("exchange period must be at least 1"));
        }
        if self.iterations - self.burn_in < self.thin {
            return Err(Error::invalid("run too short to record any sample"));
        }
        Ok(())
    }
}

/// One scalar coordinate of θ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coord {
    /// Amplitude a_k of peak k.
    Amp(usize),
    /// Center μ_k of peak k.
    Mu(usize),
    /// Precision τ_k of peak k.
    Tau(usize),
    /// Constant background level B.
    BgConst,
    /// Shirley slope c.
    BgC,
    /// Shirley left asymptote h_start.
    BgH,
}

#[derive(Debug, Clone, Copy)]
struct CoordMeta {
    coord: Coord,
    log_space: bool,
    /// Prior standard deviation of the sampled coordinate (of ln X for
    /// log-space coordinates); sets the initial step and the clamp range.
    step_base: f64,
}

/// Immutable per-run context shared by every replica sweep.
#[derive(Debug)]
pub struct SweepContext<'a> {
    spectrum: &'a Spectrum,
    spec: &'a ModelSpec,
    hyper: &'a PriorHyper,
    coords: Vec<CoordMeta>,
    frozen: Vec<bool>,
}

impl<'a> SweepContext<'a> {
    /// Build the sweep context, checking model and prior consistency.
    pub fn new(spectrum: &'a Spectrum, spec: &'a ModelSpec, hyper: &'a PriorHyper) -> Result<Self> {
        Self::with_frozen(spectrum, spec, hyper, &[])
    }

    /// Like `new`, with the listed coordinates pinned at their initial values.
    pub fn with_frozen(
        spectrum: &'a Spectrum,
        spec: &'a ModelSpec,
        hyper: &'a PriorHyper,
        frozen: &[Coord],
    ) -> Result<Self> {
        hyper.validate()?;
        if spec.k == 0 {
            return Err(Error::invalid("model needs at least one peak"));
        }
        if hyper.background_kind() != spec.background_kind {
            return Err(Error::invalid("prior and model disagree on the background kind"));
        }
        let mut coords = Vec::with_capacity(spec.coord_count());
        let sd_ln_a = math::sqrt(math::trigamma(hyper.eta_a));
        let sd_ln_tau = math::sqrt(math::trigamma(hyper.eta_sigma));
        for k in 0..spec.k {
            coords.push(CoordMeta { coord: Coord::Amp(k), log_space: true, step_base: sd_ln_a });
            coords.push(CoordMeta { coord: Coord::Mu(k), log_space: false, step_base: hyper.xi_0 });
            coords.push(CoordMeta { coord: Coord::Tau(k), log_space: true, step_base: sd_ln_tau });
        }
        match hyper.background {
            BackgroundPrior::Constant { xi_b, .. } => {
                coords.push(CoordMeta { coord: Coord::BgConst, log_space: false, step_base: xi_b });
            }
            BackgroundPrior::Shirley { eta_c, xi_start, .. } => {
                let sd_ln_c = math::sqrt(math::trigamma(eta_c));
                coords.push(CoordMeta { coord: Coord::BgC, log_space: true, step_base: sd_ln_c });
                coords.push(CoordMeta { coord: Coord::BgH, log_space: false, step_base: xi_start });
            }
        }
        debug_assert_eq!(coords.len(), spec.coord_count());
        let mut frozen_mask = vec![false; coords.len()];
        for &c in frozen {
            let idx = coords
                .iter()
                .position(|meta| meta.coord == c)
                .ok_or_else(|| Error::invalid("frozen coordinate does not exist in this model"))?;
            frozen_mask[idx] = true;
        }
        Ok(SweepContext { spectrum, spec, hyper, coords, frozen: frozen_mask })
    }

    /// Number of scalar coordinates per replica.
    pub fn coord_count(&self) -> usize {
        self.coords.len()
    }

    /// The coordinate identities in sweep order.
    pub fn coord_order(&self) -> Vec<Coord> {
        self.coords.iter().map(|m| m.coord).collect()
    }

    fn n_f64(&self) -> f64 {
        self.spectrum.len() as f64
    }

    /// Log prior density of a single coordinate at value x; −∞ off support.
    fn coord_log_pdf(&self, coord: Coord, x: f64) -> f64 {
        let h = self.hyper;
        match coord {
            Coord::Amp(_) => log_gamma_pdf(x, h.eta_a, h.lambda_a),
            Coord::Mu(_) => log_normal_pdf(x, h.nu_0, h.xi_0),
            Coord::Tau(_) => log_gamma_pdf(x, h.eta_sigma, h.lambda_sigma),
            Coord::BgConst => match h.background {
                BackgroundPrior::Constant { nu_b, xi_b } => log_normal_pdf(x, nu_b, xi_b),
                _ => f64::NEG_INFINITY,
            },
            Coord::BgC => match h.background {
                BackgroundPrior::Shirley { eta_c, lambda_c, .. } => {
                    log_gamma_pdf(x, eta_c, lambda_c)
                }
                _ => f64::NEG_INFINITY,
            },
            Coord::BgH => match h.background {
                BackgroundPrior::Shirley { nu_start, xi_start, .. } => {
                    log_normal_pdf(x, nu_start, xi_start)
                }
                _ => f64::NEG_INFINITY,
            },
        }
    }
}

fn read_coord(theta: &Theta, coord: Coord) -> f64 {
    match coord {
        Coord::Amp(k) => theta.peaks[k].a,
        Coord::Mu(k) => theta.peaks[k].mu,
        Coord::Tau(k) => theta.peaks[k].tau,
        Coord::BgConst => match theta.background {
            Background::Constant { b } => b,
            _ => f64::NAN,
        },
        Coord::BgC => match theta.background {
            Background::Shirley { c, .. } => c,
            _ => f64::NAN,
        },
        Coord::BgH => match theta.background {
            Background::Shirley { h_start, .. } => h_start,
            _ => f64::NAN,
        },
    }
}

fn write_coord(theta: &mut Theta, coord: Coord, value: f64) {
    match coord {
        Coord::Amp(k) => theta.peaks[k].a = value,
        Coord::Mu(k) => theta.peaks[k].mu = value,
        Coord::Tau(k) => theta.peaks[k].tau = value,
        Coord::BgConst => {
            if let Background::Constant { b } = &mut theta.background {
                *b = value;
            }
        }
        Coord::BgC => {
            if let Background::Shirley { c, .. } = &mut theta.background {
                *c = value;
            }
        }
        Coord::BgH => {
            if let Background::Shirley { h_start, .. } = &mut theta.background {
                *h_start = value;
            }
        }
    }
}

/// Model values f over the grid from cached unit columns.
///
/// `replace` substitutes fresh columns for one peak without touching the
/// cache. Accumulation order is fixed (peak 0 upward) for determinism.
fn fill_model(
    f: &mut [f64],
    theta: &Theta,
    phi: &[f64],
    cum: &[f64],
    replace: Option<(usize, &[f64], &[f64])>,
) {
    let n = f.len();
    let (bg_c, base) = match theta.background {
        Background::Constant { b } => (0.0, b),
        Background::Shirley { c, h_start } => (c, h_start),
    };
    for fi in f.iter_mut() {
        *fi = base;
    }
    for (k, p) in theta.peaks.iter().enumerate() {
        let (pcol, ccol): (&[f64], &[f64]) = match replace {
            Some((rk, ph, cu)) if rk == k => (ph, cu),
            _ => {
                let pc = &phi[k * n..(k + 1) * n];
                let cc = if cum.is_empty() { &[][..] } else { &cum[k * n..(k + 1) * n] };
                (pc, cc)
            }
        };
        match theta.background {
            Background::Constant { .. } => {
                for (fi, &v) in f.iter_mut().zip(pcol) {
                    *fi += p.a * v;
                }
            }
            Background::Shirley { .. } => {
                let ac = p.a * bg_c;
                for ((fi, &v), &j) in f.iter_mut().zip(pcol).zip(ccol) {
                    *fi += p.a * v + ac * j;
                }
            }
        }
    }
}

/// One replica's state: parameters, cached model values, and step sizes.
///
/// The cache holds per-peak unit basis columns (and unit cumulative columns
/// under a Shirley background) plus the current model values f, so a
/// coordinate proposal recomputes only the affected column and the f vector.
/// Exchanges swap the parameter state and cache; step sizes and acceptance
/// tallies stay with the ladder slot.
#[derive(Debug, Clone)]
pub struct ReplicaState {
    theta: Theta,
    energy: LossValue,
    log_prior: f64,
    phi: Vec<f64>,
    cum: Vec<f64>,
    f: Vec<f64>,
    steps: Vec<f64>,
    step_base: Vec<f64>,
    accept_window: Vec<u32>,
    propose_window: Vec<u32>,
    accept_total: Vec<u64>,
    propose_total: Vec<u64>,
    scratch_phi: Vec<f64>,
    scratch_cum: Vec<f64>,
    scratch_f: Vec<f64>,
}

impl ReplicaState {
    /// Build a replica at θ with freshly computed caches.
    ///
    /// Errors if θ does not fit the model or a column cannot be computed;
    /// the energy itself may be +∞ (zero likelihood is a valid state for
    /// the β = 0 replica).
    pub fn new(theta: Theta, ctx: &SweepContext<'_>) -> Result<Self> {
        theta.validate(ctx.spec)?;
        for p in &theta.peaks {
            if !(p.tau > 0.0) || !p.tau.is_finite() || !p.mu.is_finite() || !p.a.is_finite() {
                return Err(Error::invalid("replica state needs finite parameters and tau > 0"));
            }
        }
        let n = ctx.spectrum.len();
        let k = ctx.spec.k;
        let shirley = ctx.spec.background_kind == BackgroundKind::Shirley;
        let ncoord = ctx.coords.len();
        let mut state = ReplicaState {
            theta,
            energy: 0.0,
            log_prior: 0.0,
            phi: vec![0.0; k * n],
            cum: if shirley { vec![0.0; k * n] } else { Vec::new() },
            f: vec![0.0; n],
            steps: ctx.coords.iter().map(|m| 0.1 * m.step_base).collect(),
            step_base: ctx.coords.iter().map(|m| m.step_base).collect(),
            accept_window: vec![0; ncoord],
            propose_window: vec![0; ncoord],
            accept_total: vec![0; ncoord],
            propose_total: vec![0; ncoord],
            scratch_phi: vec![0.0; n],
            scratch_cum: if shirley { vec![0.0; n] } else { Vec::new() },
            scratch_f: vec![0.0; n],
        };
        state.rebuild(ctx)?;
        Ok(state)
    }

    /// Current parameters.
    pub fn theta(&self) -> &Theta {
        &self.theta
    }

    /// Cached loss E(θ); +∞ when some model value is nonpositive.
    pub fn energy(&self) -> LossValue {
        self.energy
    }

    /// Cached log prior density.
    pub fn log_prior(&self) -> f64 {
        self.log_prior
    }

    /// Current per-coordinate proposal step sizes.
    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    /// Accepted proposals per coordinate since the last tally reset.
    pub fn accepts(&self) -> &[u64] {
        &self.accept_total
    }

    /// Attempted proposals per coordinate since the last tally reset.
    pub fn proposals(&self) -> &[u64] {
        &self.propose_total
    }

    fn reset_totals(&mut self) {
        for v in self.accept_total.iter_mut() {
            *v = 0;
        }
        for v in self.propose_total.iter_mut() {
            *v = 0;
        }
    }

    /// Recompute all caches from θ; returns the previous (energy, log prior).
    fn rebuild(&mut self, ctx: &SweepContext<'_>) -> Result<(f64, f64)> {
        let n = ctx.spectrum.len();
        let energies = ctx.spectrum.grid().energies();
        for (k, p) in self.theta.peaks.iter().enumerate() {
            basis_column_into(energies, p, ctx.spec.basis, &mut self.phi[k * n..(k + 1) * n]);
            if !self.cum.is_empty() {
                cumulative_column_into(
                    ctx.spectrum.grid(),
                    p,
                    ctx.spec.basis,
                    &mut self.cum[k * n..(k + 1) * n],
                )?;
            }
        }
        fill_model(&mut self.f, &self.theta, &self.phi, &self.cum, None);
        let old = (self.energy, self.log_prior);
        self.energy = energy_from_rates(&self.f, ctx.spectrum);
        self.log_prior = log_prior_density(&self.theta, ctx.spec.k, ctx.hyper)?;
        Ok(old)
    }

    /// Refresh caches from θ, killing accumulated float drift.
    ///
    /// Debug builds assert the cached energy and log prior were within
    /// 1e−10 relative of the recomputed values.
    pub fn refresh(&mut self, ctx: &SweepContext<'_>) -> Result<()> {
        let (old_e, old_lp) = self.rebuild(ctx)?;
        debug_assert!(
            !(old_e.is_finite() && self.energy.is_finite())
                || math::abs(old_e - self.energy) <= 1e-10 * (1.0 + math::abs(self.energy)),
            "cached energy drifted"
        );
        debug_assert!(
            !(old_lp.is_finite() && self.log_prior.is_finite())
                || math::abs(old_lp - self.log_prior) <= 1e-10 * (1.0 + math::abs(self.log_prior)),
            "cached log prior drifted"
        );
        let _ = (old_e, old_lp);
        Ok(())
    }
}

/// Exchange two replicas' parameter states and caches, keeping step sizes
/// and tallies with their ladder slots.
fn swap_param_state(a: &mut ReplicaState, b: &mut ReplicaState) {
    core::mem::swap(&mut a.theta, &mut b.theta);
    core::mem::swap(&mut a.energy, &mut b.energy);
    core::mem::swap(&mut a.log_prior, &mut b.log_prior);
    core::mem::swap(&mut a.phi, &mut b.phi);
    core::mem::swap(&mut a.cum, &mut b.cum);
    core::mem::swap(&mut a.f, &mut b.f);
}

/// The Metropolis decision for −log target increment Δ and uniform draw u.
pub fn metropolis_accept(delta: f64, u: f64) -> bool {
    if delta <= 0.0 {
        true
    } else {
        u < math::exp(-delta)
    }
}

/// One Metropolis sweep over all unfrozen coordinates of a replica.
///
/// Per coordinate: one standard normal and one uniform are always drawn, so
/// rejected and out-of-range proposals leave the stream aligned. Log-space
/// coordinates propose x′ = x·exp(step·z) with the ln-Jacobian correction;
/// candidates outside (2.2e−308, 1e300) are rejected outright. At β = 0 the
/// likelihood term is identically zero and the energy never enters.
pub fn metropolis_update<R: Rng + ?Sized>(
    state: &mut ReplicaState,
    beta: f64,
    ctx: &SweepContext<'_>,
    rng: &mut R,
) {
    let n_beta = ctx.n_f64() * beta;
    debug_assert!(
        beta == 0.0 || state.energy.is_finite(),
        "tempered replica in a zero-likelihood state"
    );
    for idx in 0..ctx.coords.len() {
        if ctx.frozen[idx] {
            continue;
        }
        let meta = ctx.coords[idx];
        let z: f64 = StandardNormal.sample(rng);
        let u: f64 = rng.random();
        state.propose_total[idx] += 1;
        state.propose_window[idx] += 1;
        let step = state.steps[idx];
        let x = read_coord(&state.theta, meta.coord);
        let (x_new, jac) =
            if meta.log_space { (x * math::exp(step * z), step * z) } else { (x + step * z, 0.0) };
        if !x_new.is_finite() || (meta.log_space && !(x_new > f64::MIN_POSITIVE && x_new < 1e300)) {
            continue;
        }
        let lp_old = ctx.coord_log_pdf(meta.coord, x);
        let lp_new = ctx.coord_log_pdf(meta.coord, x_new);
        if lp_new == f64::NEG_INFINITY {
            continue;
        }
        // candidate model: mutate the coordinate, evaluate into scratch,
        // restore on rejection
        write_coord(&mut state.theta, meta.coord, x_new);
        let column_changed = matches!(meta.coord, Coord::Mu(_) | Coord::Tau(_));
        let e_new = match meta.coord {
            Coord::Mu(k) | Coord::Tau(k) => {
                let energies = ctx.spectrum.grid().energies();
                basis_column_into(
                    energies,
                    &state.theta.peaks[k],
                    ctx.spec.basis,
                    &mut state.scratch_phi,
                );
                let cum_ok = if state.cum.is_empty() {
                    true
                } else {
                    cumulative_column_into(
                        ctx.spectrum.grid(),
                        &state.theta.peaks[k],
                        ctx.spec.basis,
                        &mut state.scratch_cum,
                    )
                    .is_ok()
                };
                if cum_ok {
                    fill_model(
                        &mut state.scratch_f,
                        &state.theta,
                        &state.phi,
                        &state.cum,
                        Some((k, &state.scratch_phi, &state.scratch_cum)),
                    );
                    energy_from_rates(&state.scratch_f, ctx.spectrum)
                } else {
                    f64::INFINITY
                }
            }
            _ => {
                fill_model(&mut state.scratch_f, &state.theta, &state.phi, &state.cum, None);
                energy_from_rates(&state.scratch_f, ctx.spectrum)
            }
        };
        let accept = if beta == 0.0 {
            // prior-only target: the likelihood factor is β-independent zero
            metropolis_accept(-(lp_new - lp_old) - jac, u)
        } else if e_new == f64::INFINITY {
            false
        } else {
            let delta = n_beta * (e_new - state.energy) - (lp_new - lp_old) - jac;
            metropolis_accept(delta, u)
        };
        if accept {
            if column_changed {
                if let Coord::Mu(k) | Coord::Tau(k) = meta.coord {
                    let n = ctx.spectrum.len();
                    state.phi[k * n..(k + 1) * n].copy_from_slice(&state.scratch_phi);
                    if !state.cum.is_empty() {
                        state.cum[k * n..(k + 1) * n].copy_from_slice(&state.scratch_cum);
                    }
                }
            }
            core::mem::swap(&mut state.f, &mut state.scratch_f);
            state.energy = e_new;
            state.log_prior += lp_new - lp_old;
            state.accept_total[idx] += 1;
            state.accept_window[idx] += 1;
        } else {
            write_coord(&mut state.theta, meta.coord, x);
        }
    }
}

/// Attempt exchanges between ladder neighbors of one parity.
///
/// Pairs (m, m+1) with m ≡ phase (mod 2) are visited in ascending order;
/// each consumes exactly one uniform and swaps states with probability
/// min(1, exp(n Δβ ΔE)). Two zero-likelihood states swap freely.
pub fn exchange_sweep<R: Rng + ?Sized>(
    states: &mut [ReplicaState],
    ladder: &Ladder,
    n: usize,
    phase: usize,
    rng: &mut R,
    attempts: &mut [u64],
    accepts: &mut [u64],
) -> Result<()> {
    let m = ladder.len();
    if states.len() != m {
        return Err(Error::invalid("replica count does not match the ladder"));
    }
    if attempts.len() != m - 1 || accepts.len() != m - 1 {
        return Err(Error::invalid("exchange tally length must be M - 1"));
    }
    let betas = ladder.betas();
    let mut i = phase % 2;
    while i + 1 < m {
        attempts[i] += 1;
        let u: f64 = rng.random();
        let e_lo = states[i].energy;
        let e_hi = states[i + 1].energy;
        let accept = if e_lo == f64::INFINITY && e_hi == f64::INFINITY {
            true
        } else {
            let arg = n as f64 * (betas[i + 1] - betas[i]) * (e_hi - e_lo);
            arg >= 0.0 || u < math::exp(arg)
        };
        if accept {
            let (left, right) = states.split_at_mut(i + 1);
            swap_param_state(&mut left[i], &mut right[0]);
            accepts[i] += 1;
        }
        i += 2;
    }
    Ok(())
}

/// Step-size adaptation from the windowed acceptance rate.
///
/// Rates above 0.5 widen the step by 1.2, below 0.2 shrink it by 1.2;
/// steps stay within [1e−6, 1e3] times the coordinate's prior scale.
/// The window resets afterwards.
pub fn adapt_steps(state: &mut ReplicaState) {
    for idx in 0..state.steps.len() {
        let proposed = state.propose_window[idx];
        if proposed == 0 {
            continue;
        }
        let rate = state.accept_window[idx] as f64 / proposed as f64;
        let mut s = state.steps[idx];
        if rate > 0.5 {
            s *= 1.2;
        } else if rate < 0.2 {
            s /= 1.2;
        }
        let lo = 1e-6 * state.step_base[idx];
        let hi = 1e3 * state.step_base[idx];
        state.steps[idx] = s.clamp(lo, hi);
        state.accept_window[idx] = 0;
        state.propose_window[idx] = 0;
    }
}

/// One recorded draw: parameters and their loss value.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedSample {
    /// Parameter draw.
    pub theta: Theta,
    /// Loss E(θ) at the draw; +∞ only ever occurs on the β = 0 replica.
    pub energy: LossValue,
}

/// Everything an EMC run produces: per-replica thinned samples plus
/// acceptance diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord {
    /// The ladder the run used.
    pub ladder: Ladder,
    /// Number of spectrum bins n.
    pub n: usize,
    /// Thinned post-burn-in samples, indexed [replica][draw].
    pub samples: Vec<Vec<RecordedSample>>,
    /// Exchange attempts per neighbor pair (m, m+1).
    pub exchange_attempts: Vec<u64>,
    /// Accepted exchanges per neighbor pair.
    pub exchange_accepts: Vec<u64>,
    /// Post-burn-in Metropolis acceptances, indexed [replica][coordinate].
    pub metropolis_accepts: Vec<Vec<u64>>,
    /// Post-burn-in Metropolis proposals, indexed [replica][coordinate].
    pub metropolis_proposals: Vec<Vec<u64>>,
    /// Coordinate identities matching the tally columns.
    pub coord_order: Vec<Coord>,
}

impl ChainRecord {
    /// Samples of the β = 1 replica (the posterior chain).
    pub fn beta_one_samples(&self) -> &[RecordedSample] {
        self.samples.last().expect("a chain record always has replicas")
    }
}

/// Strategy for applying the per-replica sweep; implementations may run
/// slots in any order or in parallel because slots are independent.
pub trait SweepExecutor: Sync {
    /// Apply `op` to every (state, rng, β) slot exactly once.
    fn sweep(
        &self,
        states: &mut [ReplicaState],
        rngs: &mut [ChaCha8Rng],
        betas: &[f64],
        op: &(dyn Fn(&mut ReplicaState, &mut ChaCha8Rng, f64) + Sync),
    );
}

/// Sweeps replicas one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct SerialExecutor;

impl SweepExecutor for SerialExecutor {
    fn sweep(
        &self,
        states: &mut [ReplicaState],
        rngs: &mut [ChaCha8Rng],
        betas: &[f64],
        op: &(dyn Fn(&mut ReplicaState, &mut ChaCha8Rng, f64) + Sync),
    ) {
        for ((s, r), &b) in states.iter_mut().zip(rngs.iter_mut()).zip(betas.iter()) {
            op(s, r, b);
        }
    }
}

/// Optional knobs for `run_emc_with`.
pub struct RunOptions<'a> {
    /// Start every replica here instead of drawing from the prior.
    pub init: Option<&'a Theta>,
    /// Coordinates pinned at their initial values (requires `init`).
    pub frozen: &'a [Coord],
    /// How replica sweeps are scheduled.
    pub executor: &'a dyn SweepExecutor,
}

impl Default for RunOptions<'static> {
    fn default() -> Self {
        RunOptions { init: None, frozen: &[], executor: &SerialExecutor }
    }
}

const INIT_ATTEMPTS: u32 = 1000;

/// Run exchange Monte Carlo with default options (prior init, serial sweeps).
pub fn run_emc(
    spectrum: &Spectrum,
    spec: &ModelSpec,
    hyper: &PriorHyper,
    config: &SamplerConfig,
) -> Result<ChainRecord> {
    run_emc_with(spectrum, spec, hyper, config, &RunOptions::default())
}

/// Run exchange Monte Carlo.
///
/// Replica m sweeps with ChaCha8 stream 1 + m of the master seed; exchange
/// decisions use stream 0. Tempered replicas are initialized by redrawing
/// from the prior until the likelihood is positive. Exchange parity
/// alternates per exchange call, starting with the even pairs. Caches are
/// refreshed from θ every 1000 sweeps. Acceptance tallies reset when
/// burn-in ends, so the record reports post-burn-in rates.
pub fn run_emc_with(
    spectrum: &Spectrum,
    spec: &ModelSpec,
    hyper: &PriorHyper,
    config: &SamplerConfig,
    opts: &RunOptions<'_>,
) -> Result<ChainRecord> {
    config.validate()?;
    let ctx = SweepContext::with_frozen(spectrum, spec, hyper, opts.frozen)?;
    if !opts.frozen.is_empty() && opts.init.is_none() {
        return Err(Error::invalid("frozen coordinates require an explicit initial state"));
    }
    let ladder = build_ladder(config.m, config.gamma)?;
    let betas = ladder.betas().to_vec();
    let n = spectrum.len();

    let mut states: Vec<ReplicaState> = Vec::with_capacity(config.m);
    let mut rngs: Vec<ChaCha8Rng> = Vec::with_capacity(config.m);
    for (m, &beta) in betas.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1 + m as u64);
        let state = match opts.init {
            Some(theta) => {
                let s = ReplicaState::new(theta.clone(), &ctx)?;
                if beta > 0.0 && s.energy == f64::INFINITY {
                    return Err(Error::invalid(
                        "initial state has zero likelihood on a tempered replica",
                    ));
                }
                s
            }
            None => {
                let mut found = None;
                for _ in 0..INIT_ATTEMPTS {
                    let theta = sample_prior(spec.k, hyper, &mut rng);
                    let s = ReplicaState::new(theta, &ctx)?;
                    if beta == 0.0 || s.energy < f64::INFINITY {
                        found = Some(s);
                        break;
                    }
                }
                found.ok_or_else(|| Error::numeric(init_failure_message(m)))?
            }
        };
        states.push(state);
        rngs.push(rng);
    }
    let mut exchange_rng = ChaCha8Rng::seed_from_u64(config.seed);
    exchange_rng.set_stream(0);

    let mut exchange_attempts = vec![0u64; config.m - 1];
    let mut exchange_accepts = vec![0u64; config.m - 1];
    let mut samples: Vec<Vec<RecordedSample>> = vec![Vec::new(); config.m];
    let mut exchange_calls: u64 = 0;

    let op = |state: &mut ReplicaState, rng: &mut ChaCha8Rng, beta: f64| {
        metropolis_update(state, beta, &ctx, rng);
    };

    for s in 1..=config.iterations {
        opts.executor.sweep(&mut states, &mut rngs, &betas, &op);
        if s % config.exchange_period == 0 {
            let phase = (exchange_calls % 2) as usize;
            exchange_calls += 1;
            exchange_sweep(
                &mut states,
                &ladder,
                n,
                phase,
                &mut exchange_rng,
                &mut exchange_attempts,
                &mut exchange_accepts,
            )?;
        }
        if s <= config.burn_in && s % 100 == 0 {
            for st in states.iter_mut() {
                adapt_steps(st);
            }
        }
        if s == config.burn_in {
            for st in states.iter_mut() {
                st.reset_totals();
            }
        }
        if s % 1000 == 0 {
            for st in states.iter_mut() {
                st.refresh(&ctx)?;
            }
        }
        if s > config.burn_in && (s - config.burn_in).is_multiple_of(config.thin) {
            for (m, st) in states.iter().enumerate() {
                samples[m].push(RecordedSample { theta: st.theta.clone(), energy: st.energy });
            }
        }
    }

    let metropolis_accepts = states.iter().map(|s| s.accept_total.clone()).collect();
    let metropolis_proposals = states.iter().map(|s| s.propose_total.clone()).collect();
    Ok(ChainRecord {
        ladder,
        n,
        samples,
        exchange_attempts,
        exchange_accepts,
        metropolis_accepts,
        metropolis_proposals,
        coord_order: ctx.coord_order(),
    })
}

fn init_failure_message(m: usize) -> String {
    alloc::format!(
        "no positive-likelihood prior draw found for replica {} in {} attempts",
        m,
        INIT_ATTEMPTS
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::loss_e;
    use crate::model::{Background, Basis, Grid, Peak};
    use crate::priors::PresetName;
    use approx::assert_relative_eq;

    fn flat_spectrum(counts: &[u64]) -> Spectrum {
        let n = counts.len();
        let grid = Grid::uniform(0.0, (n - 1) as f64, 1.0).unwrap();
        Spectrum::new(grid, counts.to_vec()).unwrap()
    }

    fn tiny_hyper() -> PriorHyper {
        PriorHyper::preset(PresetName::Synthetic4, 1.0).unwrap()
    }

    fn tiny_spec() -> ModelSpec {
        ModelSpec { basis: Basis::Gaussian, background_kind: BackgroundKind::Constant, k: 1 }
    }

    #[test]
    fn ladder_matches_frozen_values() {
        let l = build_ladder(32, 1.5).unwrap();
        assert_eq!(l.len(), 32);
        assert_eq!(l.betas()[0], 0.0);
        assert_eq!(*l.betas().last().unwrap(), 1.0);
        assert_relative_eq!(l.betas()[1], 5.215_095_050_846_563_3e-6, max_relative = 1e-13);
        let l2 = build_ladder(64, 1.25).unwrap();
        assert_relative_eq!(l2.betas()[1], 9.807_971_461_541_69e-7, max_relative = 1e-13);
        let l3 = build_ladder(2, 8.0).unwrap();
        assert_eq!(l3.betas(), &[0.0, 1.0]);
        for w in l.betas().windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(build_ladder(1, 1.5).is_err());
        assert!(build_ladder(4, 1.0).is_err());
    }

    #[test]
    fn metropolis_rule_accepts_at_the_textbook_rate() {
        // delta = ln 2 accepts with probability 1/2
        assert!(metropolis_accept(0.0, 0.999_999));
        assert!(metropolis_accept(-3.0, 0.999_999));
        assert!(!metropolis_accept(f64::INFINITY, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let delta = core::f64::consts::LN_2;
        let trials = 100_000u32;
        let mut hits = 0u32;
        for _ in 0..trials {
            if metropolis_accept(delta, rng.random()) {
                hits += 1;
            }
        }
        let rate = hits as f64 / trials as f64;
        // 3 binomial standard errors around 0.5
        assert!((rate - 0.5).abs() < 3.0 * 0.5 / (trials as f64).sqrt(), "rate {rate}");
    }

    #[test]
    fn exchange_accepts_at_the_boltzmann_rate() {
        // constant-background model on zero counts gives E = b exactly, so
        // n (β₂−β₁)(E₂−E₁) = 10·1·(0.05−0.10) = −0.5 and the swap rate is
        // exp(−0.5) = 0.60653…
        let spectrum = flat_spectrum(&[0; 10]);
        let spec = tiny_spec();
        let hyper = tiny_hyper();
        let ctx = SweepContext::new(&spectrum, &spec, &hyper).unwrap();
        let ladder = build_ladder(2, 2.0).unwrap();
        let mk = |b: f64| {
            ReplicaState::new(
                Theta {
                    peaks: vec![Peak { a: 1e-14, mu: 4.5, tau: 1.0 }],
                    background: Background::Constant { b },
                },
                &ctx,
            )
            .unwrap()
        };
        let template = vec![mk(0.10), mk(0.05)];
        assert_relative_eq!(template[0].energy(), 0.10, max_relative = 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 100_000u32;
        let mut swaps = 0u32;
        let mut attempts = [0u64; 1];
        let mut accepts = [0u64; 1];
        for _ in 0..trials {
            let mut states = template.clone();
            let before = accepts[0];
            exchange_sweep(&mut states, &ladder, 10, 0, &mut rng, &mut attempts, &mut accepts)
                .unwrap();
            if accepts[0] > before {
                swaps += 1;
                assert_relative_eq!(states[0].energy(), 0.05, max_relative = 1e-12);
            }
        }
        let rate = swaps as f64 / trials as f64;
        let p = (-0.5f64).exp();
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((rate - p).abs() < 4.0 * se, "rate {rate} vs {p}");
        assert_eq!(attempts[0] as u32, trials);
    }

    #[test]
    fn exchange_swaps_state_but_not_steps() {
        let spectrum = flat_spectrum(&[0; 10]);
        let spec = tiny_spec();
        let hyper = tiny_hyper();
        let ctx = SweepContext::new(&spectrum, &spec, &hyper).unwrap();
        let ladder = build_ladder(2, 2.0).unwrap();
        let mk = |b: f64| {
            ReplicaState::new(
                Theta {
                    peaks: vec![Peak { a: 1e-14, mu: 4.5, tau: 1.0 }],
                    background: Background::Constant { b },
                },
                &ctx,
            )
            .unwrap()
        };
        // E₂ > E₁ makes the swap certain
        let mut states = vec![mk(0.05), mk(0.10)];
        states[0].steps[0] = 123.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut attempts = [0u64; 1];
        let mut accepts = [0u64; 1];
        exchange_sweep(&mut states, &ladder, 10, 0, &mut rng, &mut attempts, &mut accepts).unwrap();
        assert_eq!(accepts[0], 1);
        assert_relative_eq!(states[0].energy(), 0.10, max_relative = 1e-12);
        assert_relative_eq!(states[1].energy(), 0.05, max_relative = 1e-12);
        // the step stayed with slot 0
        assert_eq!(states[0].steps[0], 123.0);
        // caches still match the swapped thetas
        let e0 = loss_e(&spectrum, states[0].theta(), &spec).unwrap();
        assert_relative_eq!(states[0].energy(), e0, max_relative = 1e-12);
    }

    #[test]
    fn adapt_widens_shrinks_and_clamps() {
        let spectrum = flat_spectrum(&[0; 4]);
        let spec = tiny_spec();
        let hyper = tiny_hyper();
        let ctx = SweepContext::new(&spectrum, &spec, &hyper).unwrap();
        let theta = Theta {
            peaks: vec![Peak { a: 1.0, mu: 2.0, tau: 1.0 }],
            background: Background::Constant { b: 0.1 },
        };
        let mut st = ReplicaState::new(theta, &ctx).unwrap();
        let s0 = st.steps[0];
        st.propose_window[0] = 100;
        st.accept_window[0] = 60;
        adapt_steps(&mut st);
        assert_relative_eq!(st.steps[0], s0 * 1.2, max_relative = 1e-12);
        assert_eq!(st.propose_window[0], 0);
        st.propose_window[0] = 100;
        st.accept_window[0] = 10;
        adapt_steps(&mut st);
        assert_relative_eq!(st.steps[0], s0 * 1.2 / 1.2, max_relative = 1e-12);
        // in-between rates leave the step alone
        st.propose_window[0] = 100;
        st.accept_window[0] = 35;
        adapt_steps(&mut st);
        assert_relative_eq!(st.steps[0], s0, max_relative = 1e-12);
        // clamping at both ends
        st.steps[0] = 1e9 * st.step_base[0];
        st.propose_window[0] = 10;
        st.accept_window[0] = 10;
        adapt_steps(&mut st);
        assert_relative_eq!(st.steps[0], 1e3 * st.step_base[0], max_relative = 1e-12);
        st.steps[0] = 1e-12 * st.step_base[0];
        st.propose_window[0] = 10;
        st.accept_window[0] = 0;
        adapt_steps(&mut st);
        assert_relative_eq!(st.steps[0], 1e-6 * st.step_base[0], max_relative = 1e-12);
    }

    fn small_config() -> SamplerConfig {
        SamplerConfig {
            m: 3,
            gamma: 4.0,
            iterations: 400,
            burn_in: 200,
            exchange_period: 1,
            seed: 42,
            thin: 5,
        }
    }

    #[test]
    fn run_is_deterministic_and_schedule_independent() {
        // reversing the replica sweep order must not change anything because
        // each slot has its own stream
        struct ReverseExecutor;
        impl SweepExecutor for ReverseExecutor {
            fn sweep(
                &self,
                states: &mut [ReplicaState],
                rngs: &mut [ChaCha8Rng],
                betas: &[f64],
                op: &(dyn Fn(&mut ReplicaState, &mut ChaCha8Rng, f64) + Sync),
            ) {
                for ((s, r), &b) in
                    states.iter_mut().rev().zip(rngs.iter_mut().rev()).zip(betas.iter().rev())
                {
                    op(s, r, b);
                }
            }
        }
        let spectrum = flat_spectrum(&[3, 5, 9, 14, 9, 5, 3, 1]);
        let spec = tiny_spec();
        let hyper = tiny_hyper();
        let config = small_config();
        let a = run_emc(&spectrum, &spec, &hyper, &config).unwrap();
        let b = run_emc(&spectrum, &spec, &hyper, &config).unwrap();
        assert_eq!(a, b);
        let c = run_emc_with(
            &spectrum,
            &spec,
            &hyper,
            &config,
            &RunOptions { executor: &ReverseExecutor, ..RunOptions::default() },
        )
        .unwrap();
        assert_eq!(a, c);
        // expected record shape: (400-200)/5 draws per replica
        assert_eq!(a.samples.len(), 3);
        assert!(a.samples.iter().all(|s| s.len() == 40));
        assert_eq!(a.n, 8);
    }

    #[test]
    fn recorded_energies_match_a_fresh_loss_evaluation() {
        let spectrum = flat_spectrum(&[3, 5, 9, 14, 9, 5, 3, 1]);
        let spec = tiny_spec();
        let hyper = tiny_hyper();
        let record = run_emc(&spectrum, &spec, &hyper, &small_config()).unwrap();
        for replica in &record.samples {
            for sample in replica.iter().step_by(7) {
                let e = loss_e(&spectrum, &sample.theta, &spec).unwrap();
                if e.is_finite() {
                    assert_relative_eq!(sample.energy, e, max_relative = 1e-10);
                } else {
                    assert_eq!(sample.energy, f64::INFINITY);
                }
            }
        }
    }

    #[test]
    fn posterior_concentrates_relative_to_prior() {
        // with data present the β = 1 chain should sit at lower loss than
        // the prior chain
        let spectrum = flat_spectrum(&[30, 50, 90, 140, 90, 50, 30, 10]);
        let spec = tiny_spec();
        let hyper = tiny_hyper();
        let config = SamplerConfig {
            m: 4,
            gamma: 4.0,
            iterations: 2000,
            burn_in: 1000,
            exchange_period: 1,
            seed: 3,
            thin: 2,
        };
        let record = run_emc(&spectrum, &spec, &hyper, &config).unwrap();
        let mean = |xs: &[RecordedSample]| {
            let finite: Vec<f64> = xs.iter().map(|s| s.energy).filter(|e| e.is_finite()).collect();
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        let prior_e = mean(&record.samples[0]);
        let post_e = mean(record.beta_one_samples());
        assert!(
            post_e < prior_e,
            "posterior mean loss {post_e} should beat prior mean loss {prior_e}"
        );
        // β = 1 never records a zero-likelihood draw
        assert!(record.beta_one_samples().iter().all(|s| s.energy.is_finite()));
    }

    #[test]
    fn frozen_coordinates_never_move() {
        let spectrum = flat_spectrum(&[3, 5, 9, 14, 9, 5, 3, 1]);
        let spec = tiny_spec();
        let hyper = tiny_hyper();
        let init = Theta {
            peaks: vec![Peak { a: 1.0, mu: 3.0, tau: 2.0 }],
            background: Background::Constant { b: 0.1 },
        };
        let frozen = [Coord::Mu(0), Coord::Tau(0), Coord::BgConst];
        let record = run_emc_with(
            &spectrum,
            &spec,
            &hyper,
            &small_config(),
            &RunOptions { init: Some(&init), frozen: &frozen, ..RunOptions::default() },
        )
        .unwrap();
        let mut amp_moved = false;
        for replica in &record.samples {
            for s in replica {
                assert_eq!(s.theta.peaks[0].mu, 3.0);
                assert_eq!(s.theta.peaks[0].tau, 2.0);
                assert_eq!(s.theta.background, Background::Constant { b: 0.1 });
                if s.theta.peaks[0].a != 1.0 {
                    amp_moved = true;
                }
            }
        }
        assert!(amp_moved, "the free amplitude should have moved");
        // frozen coordinates report zero proposals
        let mu_idx = record.coord_order.iter().position(|&c| c == Coord::Mu(0)).unwrap();
        assert!(record.metropolis_proposals.iter().all(|p| p[mu_idx] == 0));
    }

    #[test]
    fn freezing_without_init_is_rejected() {
        let spectrum = flat_spectrum(&[1, 2, 3]);
        let spec = tiny_spec();
        let hyper = tiny_hyper();
        let err = run_emc_with(
            &spectrum,
            &spec,
            &hyper,
            &small_config(),
            &RunOptions { frozen: &[Coord::Mu(0)], ..RunOptions::default() },
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
        let err2 =
            SweepContext::with_frozen(&spectrum, &spec, &hyper, &[Coord::Amp(5)]).unwrap_err();
        assert!(matches!(err2, Error::InvalidArgument(_)));
    }

    #[test]
    fn config_validation_catches_bad_runs() {
        assert!(SamplerConfig::default().validate().is_ok());
        let d = SamplerConfig::default;
        assert!(SamplerConfig { burn_in: d().iterations, ..d() }.validate().is_err());
        assert!(SamplerConfig { thin: 0, ..d() }.validate().is_err());
        assert!(SamplerConfig { m: 1, ..d() }.validate().is_err());
        assert!(SamplerConfig { gamma: 1.0, ..d() }.validate().is_err());
        assert!(SamplerConfig { exchange_period: 0, ..d() }.validate().is_err());
        // post-burn-in span shorter than one thinning stride
        assert!(SamplerConfig { iterations: d().burn_in + 5, thin: 10, ..d() }.validate().is_err());
    }

    #[test]
    fn log_space_proposals_keep_positive_coordinates_positive() {
        let spectrum = flat_spectrum(&[2, 4, 8, 4, 2]);
        let spec = ModelSpec {
            basis: Basis::PseudoVoigt7030,
            background_kind: BackgroundKind::Shirley,
            k: 1,
        };
        let hyper = PriorHyper::preset(PresetName::MoS2_5, 1.0).unwrap();
        let config = SamplerConfig {
            m: 2,
            gamma: 8.0,
            iterations: 300,
            burn_in: 100,
            thin: 2,
            seed: 5,
            ..SamplerConfig::default()
        };
        let record = run_emc(&spectrum, &spec, &hyper, &config).unwrap();
        for replica in &record.samples {
            for s in replica {
                assert!(s.theta.peaks[0].a > 0.0);
                assert!(s.theta.peaks[0].tau > 0.0);
                match s.theta.background {
                    Background::Shirley { c, .. } => assert!(c > 0.0),
                    _ => unreachable!(),
                }
            }
        }
    }
}
