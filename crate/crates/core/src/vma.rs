//! Virtual measurement analytics: simulate spectra from a ground truth at
//! pseudo-measurement times T, fit every candidate peak count, and tabulate
//! how often each K wins model selection.
//!
//! Per-run seeds derive deterministically from one master seed, so a table
//! is reproducible bit for bit and runs are mutually independent.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::Error;
use crate::evidence::{estimate_log_z, posterior_over_k};
use crate::likelihood::Spectrum;
use crate::math::derive_seed;
use crate::model::{eval_model, Background, BackgroundKind, Basis, Grid, ModelSpec, Peak, Theta};
use crate::priors::{PresetName, PriorHyper};
use crate::sampler::{run_emc_with, RunOptions, SamplerConfig, SweepExecutor};
use crate::Result;

/// Ground truth for spectrum generation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueModel {
    /// True parameters θ*.
    pub theta_star: Theta,
    /// Basis, background kind, and true peak count K*.
    pub spec: ModelSpec,
    /// Pseudo-measurement time T; amplitudes and background scale with it.
    pub t: f64,
    /// Measurement grid.
    pub grid: Grid,
}

/// Default synthetic grid: 158 to 166 eV in 0.04 eV steps (201 points).
pub fn synthetic4_default_grid() -> Grid {
    Grid::uniform(158.0, 166.0, 0.04).expect("static grid parameters are valid")
}

/// Default two-peak demo grid: 157 to 167 eV in 0.05 eV steps (201 points).
pub fn demo_two_peak_default_grid() -> Grid {
    Grid::uniform(157.0, 167.0, 0.05).expect("static grid parameters are valid")
}

impl TrueModel {
    /// The three-Gaussian ground truth with constant background:
    /// a* = T·(0.587, 1.522, 1.183), μ* = (161.032, 161.851, 162.677),
    /// σ* = (0.341, 0.275, 0.260), B* = 0.1 T.
    pub fn synthetic4(t: f64, grid: Grid) -> Result<TrueModel> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::invalid("pseudo-measurement time must be positive and finite"));
        }
        let amps = [0.587, 1.522, 1.183];
        let mus = [161.032, 161.851, 162.677];
        let sigmas = [0.341, 0.275, 0.260];
        let peaks = (0..3)
            .map(|k| Peak { a: t * amps[k], mu: mus[k], tau: 1.0 / (sigmas[k] * sigmas[k]) })
            .collect();
        Ok(TrueModel {
            theta_star: Theta { peaks, background: Background::Constant { b: 0.1 * t } },
            spec: ModelSpec {
                basis: Basis::Gaussian,
                background_kind: BackgroundKind::Constant,
                k: 3,
            },
            t,
            grid,
        })
    }

    /// A clean two-peak pseudo-Voigt truth over a Shirley background, for
    /// exercising the second preset: a* = T·(1.5, 1.0), μ* = (161.2, 163.1),
    /// σ* = (0.35, 0.40), c* = 0.08, h* = 0.35 T.
    pub fn demo_two_peak(t: f64, grid: Grid) -> Result<TrueModel> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::invalid("pseudo-measurement time must be positive and finite"));
        }
        let peaks = vec![
            Peak { a: 1.5 * t, mu: 161.2, tau: 1.0 / (0.35 * 0.35) },
            Peak { a: 1.0 * t, mu: 163.1, tau: 1.0 / (0.40 * 0.40) },
        ];
        Ok(TrueModel {
            theta_star: Theta {
                peaks,
                background: Background::Shirley { c: 0.08, h_start: 0.35 * t },
            },
            spec: ModelSpec {
                basis: Basis::PseudoVoigt7030,
                background_kind: BackgroundKind::Shirley,
                k: 2,
            },
            t,
            grid,
        })
    }
}

/// Draw one spectrum: independent Poisson counts with rates f(x_i; θ*).
///
/// Errors if any model value is nonpositive or non-finite.
pub fn simulate_spectrum<R: Rng + ?Sized>(true_model: &TrueModel, rng: &mut R) -> Result<Spectrum> {
    let rates = eval_model(&true_model.grid, &true_model.theta_star, &true_model.spec)?;
    let mut counts = Vec::with_capacity(rates.len());
    for &rate in &rates {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::invalid("true model must give positive finite rates everywhere"));
        }
        let draw: f64 = Poisson::new(rate)
            .map_err(|_| Error::invalid("true model rate is not a valid Poisson mean"))?
            .sample(rng);
        counts.push(draw as u64);
    }
    Spectrum::new(true_model.grid.clone(), counts)
}

/// One T's worth of experiment inputs: the truth and the matching prior.
#[derive(Debug, Clone, PartialEq)]
pub struct VmaCase {
    /// Ground truth to simulate from.
    pub truth: TrueModel,
    /// Prior used for every candidate-K fit at this T.
    pub hyper: PriorHyper,
}

/// The §4-style experiment family: synthetic4 truth with its preset prior.
pub fn synthetic4_case(t: f64) -> Result<VmaCase> {
    Ok(VmaCase {
        truth: TrueModel::synthetic4(t, synthetic4_default_grid())?,
        hyper: PriorHyper::preset(PresetName::Synthetic4, t)?,
    })
}

/// The two-peak demo family under the pseudo-Voigt/Shirley preset.
pub fn demo_two_peak_case(t: f64) -> Result<VmaCase> {
    Ok(VmaCase {
        truth: TrueModel::demo_two_peak(t, demo_two_peak_default_grid())?,
        hyper: PriorHyper::preset(PresetName::MoS2_5, t)?,
    })
}

/// Settings for a selection-frequency experiment.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VmaConfig {
    /// Pseudo-measurement times, one table row each.
    pub t_values: Vec<f64>,
    /// Simulated data sets per T.
    pub replications: u32,
    /// Smallest candidate peak count.
    pub k_min: usize,
    /// Largest candidate peak count.
    pub k_max: usize,
    /// Sampler settings for every fit; its seed field is ignored because
    /// each run derives its own seed from `master_seed`.
    pub sampler: SamplerConfig,
    /// Root of the deterministic seed tree.
    pub master_seed: u64,
}

impl VmaConfig {
    /// Check table dimensions and sampler settings.
    pub fn validate(&self) -> Result<()> {
        if self.t_values.is_empty() {
            return Err(Error::invalid("experiment needs at least one T value"));
        }
        if self.t_values.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::invalid("T values must be positive and finite"));
        }
        if self.replications == 0 {
            return Err(Error::invalid("experiment needs at least one replication"));
        }
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(Error::invalid("candidate range needs 1 <= k_min <= k_max"));
        }
        self.sampler.validate()
    }
}

/// Selection frequencies: rows are T values, columns candidate K.
///
/// Failed runs count in `failures`, never in a K cell, so every row's
/// cells plus failures sum to the replication count.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SelectionTable {
    /// Row labels.
    pub t_values: Vec<f64>,
    /// Column labels, ascending.
    pub k_values: Vec<usize>,
    /// counts[t_index][k_index] = runs at that T selecting that K.
    pub counts: Vec<Vec<u32>>,
    /// Runs at each T that failed and made no selection.
    pub failures: Vec<u32>,
    /// Replications per row.
    pub replications: u32,
}

impl SelectionTable {
    /// Selections plus failures for one row; always equals `replications`.
    pub fn row_total(&self, t_index: usize) -> u32 {
        self.counts[t_index].iter().sum::<u32>() + self.failures[t_index]
    }
}

/// Everything recorded about one (T, replication) run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VmaRun {
    /// Pseudo-measurement time of the row.
    pub t: f64,
    /// Row index into the table.
    pub t_index: usize,
    /// Replication index within the row.
    pub replication: u32,
    /// Seed that generated this run's data set.
    pub data_seed: u64,
    /// Per-K sampler seeds.
    pub fit_seeds: BTreeMap<usize, u64>,
    /// Free energy per candidate K.
    pub f_by_k: BTreeMap<usize, f64>,
    /// Jackknife standard error per candidate K.
    pub mc_se_by_k: BTreeMap<usize, f64>,
    /// Posterior p(K|D) under a uniform prior over the candidates.
    pub posterior: BTreeMap<usize, f64>,
    /// Winning K, or None when the run failed.
    pub selected: Option<usize>,
    /// First failure message, if any.
    pub error: Option<String>,
}

/// A finished experiment: the frequency table plus per-run detail.
#[derive(Debug, Clone, PartialEq)]
pub struct VmaOutcome {
    /// Selection frequencies by T and K.
    pub table: SelectionTable,
    /// One record per (T, replication), row-major.
    pub runs: Vec<VmaRun>,
}

// seed-tree lane for per-K sampler seeds under a run's data seed
const FIT_SEED_LANE: u64 = 1;

/// Run the full virtual-measurement experiment.
///
/// For each T and replication: simulate a data set from `family(T)`, fit
/// every K in the candidate range by EMC, compare free energies under a
/// uniform prior over K, and tally the winner. A failure in any fit makes
/// the run count as a failure (no silent retry, no partial selection).
/// Data seeds derive as derive_seed(master, t_index, replication) and fit
/// seeds as derive_seed(data_seed, 1, K).
pub fn run_vma_experiment(
    family: &dyn Fn(f64) -> Result<VmaCase>,
    config: &VmaConfig,
    executor: &dyn SweepExecutor,
) -> Result<VmaOutcome> {
    config.validate()?;
    let k_values: Vec<usize> = (config.k_min..=config.k_max).collect();
    let mut counts = vec![vec![0u32; k_values.len()]; config.t_values.len()];
    let mut failures = vec![0u32; config.t_values.len()];
    let mut runs = Vec::with_capacity(config.t_values.len() * config.replications as usize);

    for (t_index, &t) in config.t_values.iter().enumerate() {
        let case = family(t)?;
        for replication in 0..config.replications {
            let data_seed = derive_seed(config.master_seed, t_index as u64, replication as u64);
            let mut data_rng = ChaCha8Rng::seed_from_u64(data_seed);
            let spectrum = simulate_spectrum(&case.truth, &mut data_rng)?;

            let mut run = VmaRun {
                t,
                t_index,
                replication,
                data_seed,
                fit_seeds: BTreeMap::new(),
                f_by_k: BTreeMap::new(),
                mc_se_by_k: BTreeMap::new(),
                posterior: BTreeMap::new(),
                selected: None,
                error: None,
            };
            for &k in &k_values {
                let fit_seed = derive_seed(data_seed, FIT_SEED_LANE, k as u64);
                run.fit_seeds.insert(k, fit_seed);
                let spec = ModelSpec {
                    basis: case.truth.spec.basis,
                    background_kind: case.truth.spec.background_kind,
                    k,
                };
                let sampler = SamplerConfig { seed: fit_seed, ..config.sampler.clone() };
                let fit = run_emc_with(
                    &spectrum,
                    &spec,
                    &case.hyper,
                    &sampler,
                    &RunOptions { executor, ..RunOptions::default() },
                )
                .and_then(|record| estimate_log_z(&record, &record.ladder, record.n));
                match fit {
                    Ok(ev) => {
                        run.f_by_k.insert(k, ev.f);
                        run.mc_se_by_k.insert(k, ev.mc_se);
                    }
                    Err(e) => {
                        run.error = Some(e.to_string());
                        break;
                    }
                }
            }
            if run.error.is_none() {
                let uniform: BTreeMap<usize, f64> =
                    k_values.iter().map(|&k| (k, 1.0 / k_values.len() as f64)).collect();
                match posterior_over_k(&run.f_by_k, &uniform) {
                    Ok(post) => {
                        run.posterior = post.table.iter().map(|s| (s.k, s.posterior)).collect();
                        run.selected = Some(post.selected);
                    }
                    Err(e) => run.error = Some(e.to_string()),
                }
            }
            match run.selected {
                Some(k) => {
                    let k_index = k - config.k_min;
                    counts[t_index][k_index] += 1;
                }
                None => failures[t_index] += 1,
            }
            runs.push(run);
        }
    }
    let table = SelectionTable {
        t_values: config.t_values.clone(),
        k_values,
        counts,
        failures,
        replications: config.replications,
    };
    Ok(VmaOutcome { table, runs })
}
