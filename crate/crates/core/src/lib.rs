//! Bayesian spectral deconvolution of count spectra.
//!
//! This crate fits a multi-peak spectral model to Poisson-distributed count
//! data, samples the posterior by exchange Monte Carlo (parallel tempering),
//! estimates the Bayes free energy F(K) for each candidate peak count K by a
//! telescoping evidence product over the replica ladder, and selects K by the
//! posterior p(K | D).
//!
//! The model is f(x; θ, K) = G(x; θ, K) + B(x; θ, K), where the signal
//! G = Σₖ aₖ φ(x; μₖ, τₖ) is a sum of unimodal basis functions (Gaussian or
//! 70:30 pseudo-Voigt) and B is either a constant or a Shirley background
//! proportional to the cumulative integral of G. Counts yᵢ at energies xᵢ
//! are modeled as independent Poisson draws with rate f(xᵢ).
//!
//! Module map:
//! - [`model`]: deterministic spectral function evaluation.
//! - [`likelihood`]: Poisson log pmf, the averaged loss E(θ, K), and the
//!   tempered target.
//! - [`priors`]: Gamma/Gaussian priors, preset hyperparameter families.
//! - [`sampler`]: exchange Monte Carlo with adaptive random-walk Metropolis.
//! - [`evidence`]: free-energy estimation, posterior over K, MAP extraction.
//! - [`vma`]: virtual-measurement experiments on synthetic ground truth.
//!
//! The crate is `no_std`-compatible (with `alloc`) when built without the
//! default `std` feature; all host I/O lives in the companion CLI crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(missing_docs)]
// !(x > 0.0) is the intended test throughout: it rejects NaN along with
// nonpositive values in one comparison.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod evidence;
pub mod likelihood;
pub mod math;
pub mod model;
pub mod priors;
pub mod sampler;
pub mod vma;

pub use error::Error;
pub use evidence::{
    estimate_log_z, map_estimate, posterior_histograms, posterior_over_k, BinningSpec,
    EvidenceResult, HistogramTable, ModelPosterior, ModelScore, ParamSelector, PeakHistogram,
};
pub use likelihood::{loss_e, LossValue, Spectrum};
pub use math::derive_seed;
pub use model::{
    basis_column, cumulative_signal, eval_basis, eval_model, eval_signal, Background,
    BackgroundKind, Basis, Grid, ModelSpec, Peak, Theta,
};
pub use priors::{log_prior_density, sample_prior, BackgroundPrior, PresetName, PriorHyper};
pub use sampler::{
    build_ladder, run_emc, run_emc_with, ChainRecord, Coord, Ladder, RecordedSample, ReplicaState,
    RunOptions, SamplerConfig, SerialExecutor, SweepContext, SweepExecutor,
};
pub use vma::{
    demo_two_peak_case, run_vma_experiment, simulate_spectrum, synthetic4_case, SelectionTable,
    TrueModel, VmaCase, VmaConfig, VmaOutcome, VmaRun,
};

/// Crate result alias.
pub type Result<T> = core::result::Result<T, Error>;
