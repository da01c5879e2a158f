//! Free energy from tempered chains, posterior over model order, MAP and
//! histogram summaries.
//!
//! The normalizing constant telescopes over the ladder,
//! z(1) = Π_m z(β_{m+1})/z(β_m) with z(0) = 1, and each factor is the
//! replica-m average of exp(−n Δβ_m E). The free energy is F = −ln z(1).
//! Models are compared through p(K|D) ∝ p(K) exp(−F(K)).

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::likelihood::Spectrum;
use crate::math;
use crate::model::{ModelSpec, Theta};
use crate::priors::{log_prior_density, PriorHyper};
use crate::sampler::{ChainRecord, Ladder, RecordedSample};
use crate::Result;

/// Free-energy estimate with its telescoping decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceResult {
    /// Free energy F = −ln z(1) in nats; lower favors the model.
    pub f: f64,
    /// Per-bridge log ratios ln z(β_{m+1})/ln z(β_m); F = −Σ of these.
    pub log_z_steps: Vec<f64>,
    /// Block-jackknife standard error of F (20 blocks, aligned across
    /// replicas); +∞ when the chain is too short to estimate one.
    pub mc_se: f64,
}

/// Posterior over candidate peak counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPosterior {
    /// Per-K free energy and posterior probability, ascending in K.
    pub table: Vec<ModelScore>,
    /// The argmax of p(K|D); ties resolve to the smallest K.
    pub selected: usize,
}

/// One row of the model-selection table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelScore {
    /// Peak count.
    pub k: usize,
    /// Free energy F(K).
    pub f: f64,
    /// Posterior probability p(K|D).
    pub posterior: f64,
}

const JACKKNIFE_BLOCKS: usize = 20;

/// Per-sample bridge terms −n Δβ E for replica m.
fn bridge_terms(samples: &[RecordedSample], n_dbeta: f64, out: &mut Vec<f64>) {
    out.clear();
    for s in samples {
        // E = +∞ contributes exp(−∞) = 0 to the bridge average
        out.push(if s.energy == f64::INFINITY && n_dbeta == 0.0 {
            0.0
        } else {
            -n_dbeta * s.energy
        });
    }
}

/// Estimate the free energy F = −ln z(1) from a finished run.
///
/// Bridge m is the log-mean-exp over replica m's samples of −n Δβ_m E.
/// The ladder and n must match the record they came from. The standard
/// error comes from a block jackknife with 20 blocks (fewer when the chain
/// is shorter), leaving out the same block index in every replica at once.
pub fn estimate_log_z(chains: &ChainRecord, ladder: &Ladder, n: usize) -> Result<EvidenceResult> {
    if ladder.betas() != chains.ladder.betas() {
        return Err(Error::invalid("ladder does not match the chain record"));
    }
    if n != chains.n {
        return Err(Error::invalid("bin count does not match the chain record"));
    }
    let m = ladder.len();
    if chains.samples.len() != m {
        return Err(Error::invalid("chain record must hold one sample list per replica"));
    }
    let len = chains.samples[0].len();
    if len == 0 || chains.samples.iter().any(|s| s.len() != len) {
        return Err(Error::invalid(
            "every replica needs the same nonzero number of recorded samples",
        ));
    }
    let betas = ladder.betas();
    let mut terms: Vec<Vec<f64>> = Vec::with_capacity(m - 1);
    for i in 0..m - 1 {
        let n_dbeta = n as f64 * (betas[i + 1] - betas[i]);
        let mut t = Vec::new();
        bridge_terms(&chains.samples[i], n_dbeta, &mut t);
        terms.push(t);
    }
    let log_z_steps: Vec<f64> = terms.iter().map(|t| math::log_mean_exp(t)).collect();
    let f = -log_z_steps.iter().sum::<f64>();

    // aligned block jackknife: drop block j from every bridge simultaneously
    let blocks = if len < JACKKNIFE_BLOCKS { len } else { JACKKNIFE_BLOCKS };
    let mc_se = if blocks < 2 {
        f64::INFINITY
    } else {
        let mut f_loo = Vec::with_capacity(blocks);
        let mut scratch = Vec::with_capacity(len);
        for j in 0..blocks {
            let lo = j * len / blocks;
            let hi = (j + 1) * len / blocks;
            let mut fj = 0.0;
            for t in &terms {
                scratch.clear();
                scratch.extend_from_slice(&t[..lo]);
                scratch.extend_from_slice(&t[hi..]);
                fj -= math::log_mean_exp(&scratch);
            }
            f_loo.push(fj);
        }
        let mean = f_loo.iter().sum::<f64>() / blocks as f64;
        let ss: f64 = f_loo.iter().map(|x| (x - mean) * (x - mean)).sum();
        math::sqrt(ss * (blocks - 1) as f64 / blocks as f64)
    };
    Ok(EvidenceResult { f, log_z_steps, mc_se })
}

/// Posterior over K from free energies and a prior on K.
///
/// p(K|D) ∝ p(K) exp(−F(K)), normalized with max-subtraction so large F
/// never overflow. The prior must cover exactly the same K values and sum
/// to 1 within 1e−9.
pub fn posterior_over_k(
    f_by_k: &BTreeMap<usize, f64>,
    prior_k: &BTreeMap<usize, f64>,
) -> Result<ModelPosterior> {
    if f_by_k.is_empty() {
        return Err(Error::invalid("no free energies to compare"));
    }
    if f_by_k.len() != prior_k.len() || f_by_k.keys().zip(prior_k.keys()).any(|(a, b)| a != b) {
        return Err(Error::invalid("free energies and prior must cover the same K values"));
    }
    let mut prior_sum = 0.0;
    for &p in prior_k.values() {
        if !(p >= 0.0) || p > 1.0 {
            return Err(Error::invalid("prior probabilities must lie in [0, 1]"));
        }
        prior_sum += p;
    }
    if math::abs(prior_sum - 1.0) > 1e-9 {
        return Err(Error::invalid("prior over K must sum to 1"));
    }
    // score = ln p(K) − F(K); −∞ marks zero prior or infinite F
    let mut scores: Vec<(usize, f64, f64)> = Vec::with_capacity(f_by_k.len());
    let mut best = f64::NEG_INFINITY;
    for (&k, &f) in f_by_k {
        if f.is_nan() {
            return Err(Error::invalid("free energy must not be NaN"));
        }
        let p = prior_k[&k];
        let score =
            if p == 0.0 || f == f64::INFINITY { f64::NEG_INFINITY } else { math::ln(p) - f };
        if score > best {
            best = score;
        }
        scores.push((k, f, score));
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::numeric("no model carries posterior mass"));
    }
    let mut z = 0.0;
    for (_, _, s) in scores.iter_mut() {
        *s = math::exp(*s - best);
        z += *s;
    }
    let mut table = Vec::with_capacity(scores.len());
    let mut selected = scores[0].0;
    let mut best_p = -1.0;
    for (k, f, w) in scores {
        let posterior = w / z;
        if posterior > best_p {
            best_p = posterior;
            selected = k;
        }
        table.push(ModelScore { k, f, posterior });
    }
    Ok(ModelPosterior { table, selected })
}

/// MAP estimate from the recorded β = 1 samples.
///
/// Returns the sample maximizing −n E(θ) + ln p(θ|K), relabeled by
/// ascending μ. Ties keep the earliest recorded sample. No post-hoc
/// optimization happens; the statistic comes from the chain alone.
pub fn map_estimate(
    chains: &ChainRecord,
    spectrum: &Spectrum,
    spec: &ModelSpec,
    hyper: &PriorHyper,
) -> Result<Theta> {
    if chains.n != spectrum.len() {
        return Err(Error::invalid("spectrum does not match the chain record"));
    }
    let posterior = chains.beta_one_samples();
    if posterior.is_empty() {
        return Err(Error::invalid("no recorded posterior samples"));
    }
    let n = chains.n as f64;
    let mut best: Option<(&Theta, f64)> = None;
    for s in posterior {
        let lp = log_prior_density(&s.theta, spec.k, hyper)?;
        let score = -n * s.energy + lp;
        match best {
            Some((_, b)) if score <= b => {}
            _ => best = Some((&s.theta, score)),
        }
    }
    let (theta, _) = best.expect("non-empty chain has a best sample");
    Ok(theta.relabeled_by_mu())
}

/// Which per-peak scalar to histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSelector {
    /// Peak amplitude a_k.
    Amp,
    /// Peak center μ_k.
    Mu,
    /// Peak precision τ_k.
    Tau,
    /// Peak width σ_k = 1/√τ_k.
    Sigma,
}

/// Uniform binning over [lo, hi].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinningSpec {
    /// Left edge of the first bin.
    pub lo: f64,
    /// Right edge of the last bin.
    pub hi: f64,
    /// Number of bins.
    pub bins: usize,
}

/// Histogram and credible interval for one (relabeled) peak.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakHistogram {
    /// Sample counts per bin; out-of-range samples land in the edge bins,
    /// so the counts always sum to the sample count.
    pub counts: Vec<u64>,
    /// Lower end of the central 95% credible interval.
    pub ci_lower: f64,
    /// Upper end of the central 95% credible interval.
    pub ci_upper: f64,
}

/// Per-peak posterior histograms of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramTable {
    /// The histogrammed parameter.
    pub param: ParamSelector,
    /// The bins + 1 edges shared by every peak's histogram.
    pub edges: Vec<f64>,
    /// One histogram per peak, in ascending-μ label order.
    pub peaks: Vec<PeakHistogram>,
    /// Number of posterior samples behind each histogram.
    pub sample_count: usize,
}

/// Linear-interpolation empirical quantile of a sorted slice.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Posterior histograms of one peak parameter from the β = 1 chain.
///
/// Samples are relabeled by ascending μ first, so peak k means the k-th
/// peak from the left. Each histogram comes with the central 95% credible
/// interval of the same values.
pub fn posterior_histograms(
    chains: &ChainRecord,
    param: ParamSelector,
    bins: BinningSpec,
) -> Result<HistogramTable> {
    let posterior = chains.beta_one_samples();
    if posterior.is_empty() {
        return Err(Error::invalid("no recorded posterior samples"));
    }
    if !bins.lo.is_finite() || !bins.hi.is_finite() || !(bins.lo < bins.hi) {
        return Err(Error::invalid("histogram range must be finite with lo < hi"));
    }
    if bins.bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let k = posterior[0].theta.peaks.len();
    if k == 0 {
        return Err(Error::invalid("no peaks to histogram"));
    }
    let span = bins.hi - bins.lo;
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(posterior.len()); k];
    for s in posterior {
        let relabeled = s.theta.relabeled_by_mu();
        for (vk, p) in values.iter_mut().zip(&relabeled.peaks) {
            vk.push(match param {
                ParamSelector::Amp => p.a,
                ParamSelector::Mu => p.mu,
                ParamSelector::Tau => p.tau,
                ParamSelector::Sigma => 1.0 / math::sqrt(p.tau),
            });
        }
    }
    let edges: Vec<f64> =
        (0..=bins.bins).map(|i| bins.lo + span * i as f64 / bins.bins as f64).collect();
    let mut peaks = Vec::with_capacity(k);
    for vk in values.iter_mut() {
        let mut counts = vec![0u64; bins.bins];
        for &v in vk.iter() {
            let t = (v - bins.lo) / span * bins.bins as f64;
            let idx = if t < 0.0 {
                0
            } else if t >= bins.bins as f64 {
                bins.bins - 1
            } else {
                t as usize
            };
            counts[idx] += 1;
        }
        vk.sort_by(f64::total_cmp);
        peaks.push(PeakHistogram {
            counts,
            ci_lower: quantile(vk, 0.025),
            ci_upper: quantile(vk, 0.975),
        });
    }
    Ok(HistogramTable { param, edges, peaks, sample_count: posterior.len() })
}
