//! Command drivers: everything between a parsed command line and the
//! files on disk.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use specdeconv_core::{
    demo_two_peak_case, estimate_log_z, map_estimate, posterior_histograms, posterior_over_k,
    run_emc_with, run_vma_experiment, simulate_spectrum, synthetic4_case, BinningSpec, ChainRecord,
    EvidenceResult, ModelPosterior, ParamSelector, PresetName, RunOptions, SerialExecutor,
    Spectrum, SweepExecutor, Theta, VmaConfig,
};

use crate::config::{EffectiveConfig, EffectiveVmaConfig};
use crate::error::{Classify, CliResult, Phase};
use crate::exec::RayonExecutor;
use crate::outputs;

/// Scheduling choice made from `--serial` / `--threads`.
pub enum Scheduler {
    Serial,
    Pool(RayonExecutor),
}

impl Scheduler {
    /// `--serial` wins over any thread count; `threads = None` or
    /// `Some(0)` means one worker per available CPU.
    pub fn from_flags(serial: bool, threads: Option<usize>) -> CliResult<Scheduler> {
        if serial {
            Ok(Scheduler::Serial)
        } else {
            Ok(Scheduler::Pool(RayonExecutor::new(threads.unwrap_or(0))?))
        }
    }

    pub fn executor(&self) -> &dyn SweepExecutor {
        match self {
            Scheduler::Serial => &SerialExecutor,
            Scheduler::Pool(pool) => pool,
        }
    }

    pub fn is_serial(&self) -> bool {
        matches!(self, Scheduler::Serial)
    }
}

/// One candidate K's fit: the chains and the evidence estimate.
pub struct KFit {
    pub k: usize,
    pub chains: ChainRecord,
    pub evidence: EvidenceResult,
}

/// A full scan over the candidate K range.
pub struct ScanResult {
    pub fits: Vec<KFit>,
    pub posterior: ModelPosterior,
    pub selected: usize,
    pub map: Theta,
}

/// Fit every candidate K, compare free energies under the uniform model
/// prior, and take the MAP sample of the winner.
pub fn run_scan(
    cfg: &EffectiveConfig,
    spectrum: &Spectrum,
    executor: &dyn SweepExecutor,
) -> CliResult<ScanResult> {
    let mut fits = Vec::new();
    let mut f_by_k = BTreeMap::new();
    for k in cfg.k_values() {
        let spec = cfg.model_spec(k);
        let chains = run_emc_with(
            spectrum,
            &spec,
            &cfg.hyper,
            &cfg.sampler,
            &RunOptions { executor, ..RunOptions::default() },
        )
        .phase_ctx(Phase::Run, &format!("sampler failed at K = {k}"))?;
        let evidence = estimate_log_z(&chains, &chains.ladder, spectrum.len())
            .phase_ctx(Phase::Run, &format!("evidence estimation failed at K = {k}"))?;
        eprintln!("K={k} F={:.4} mc_se={:.4}", evidence.f, evidence.mc_se);
        f_by_k.insert(k, evidence.f);
        fits.push(KFit { k, chains, evidence });
    }
    let posterior = posterior_over_k(&f_by_k, &cfg.uniform_k_prior()).phase(Phase::Run)?;
    let selected = posterior.selected;
    let winner = fits.iter().find(|f| f.k == selected).expect("selected K was fitted");
    let map = map_estimate(&winner.chains, spectrum, &cfg.model_spec(selected), &cfg.hyper)
        .phase(Phase::Run)?;
    Ok(ScanResult { fits, posterior, selected, map })
}

fn manifest_from_scan(
    command: &'static str,
    spectrum_path: &Path,
    serial: bool,
    cfg: &EffectiveConfig,
    scan: &ScanResult,
    wall_clock_seconds: f64,
) -> outputs::FitManifest {
    let mut free_energy = BTreeMap::new();
    let mut diagnostics = BTreeMap::new();
    for fit in &scan.fits {
        let posterior =
            scan.posterior.table.iter().find(|s| s.k == fit.k).map(|s| s.posterior).unwrap_or(0.0);
        free_energy.insert(
            fit.k,
            outputs::KSummary { f: fit.evidence.f, mc_se: fit.evidence.mc_se, posterior },
        );
        diagnostics.insert(fit.k, outputs::KDiagnostics::from_chains(&fit.chains));
    }
    outputs::FitManifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        spectrum_path: spectrum_path.display().to_string(),
        serial,
        config: cfg.echo(),
        free_energy,
        selected_k: scan.selected,
        map_theta: scan.map.clone(),
        diagnostics,
        wall_clock_seconds,
    }
}

fn evidence_by_k(scan: &ScanResult) -> BTreeMap<usize, EvidenceResult> {
    scan.fits.iter().map(|f| (f.k, f.evidence.clone())).collect()
}

const HISTOGRAM_BINS: usize = 100;

/// `fit`: full scan plus curve, samples, and histogram files for the
/// selected K.
pub fn fit(
    spectrum_path: &Path,
    spectrum: &Spectrum,
    cfg: &EffectiveConfig,
    scheduler: &Scheduler,
    out_dir: &Path,
) -> CliResult<()> {
    std::fs::create_dir_all(out_dir)
        .phase_ctx(Phase::Data, &format!("cannot create {}", out_dir.display()))?;
    let start = Instant::now();
    let scan = run_scan(cfg, spectrum, scheduler.executor())?;
    let wall = if scheduler.is_serial() { 0.0 } else { start.elapsed().as_secs_f64() };

    let winner = scan.fits.iter().find(|f| f.k == scan.selected).expect("winner present");
    let grid = spectrum.grid();
    let bins = BinningSpec {
        lo: grid.energies()[0],
        hi: *grid.energies().last().expect("grid is nonempty"),
        bins: HISTOGRAM_BINS,
    };
    let histograms =
        posterior_histograms(&winner.chains, ParamSelector::Mu, bins).phase(Phase::Run)?;

    outputs::write_free_energy(
        &out_dir.join("free_energy.csv"),
        &scan.posterior,
        &evidence_by_k(&scan),
    )?;
    outputs::write_fit_curve(
        &out_dir.join("fit_curve.csv"),
        grid,
        &scan.map,
        &cfg.model_spec(scan.selected),
    )?;
    outputs::write_samples(
        &out_dir.join("samples.csv"),
        winner.chains.beta_one_samples(),
        scan.selected,
    )?;
    outputs::write_histograms(&out_dir.join("histograms.csv"), &histograms)?;
    let manifest =
        manifest_from_scan("fit", spectrum_path, scheduler.is_serial(), cfg, &scan, wall);
    outputs::write_json(&out_dir.join("manifest.json"), &manifest)?;
    eprintln!("selected K={} (wrote {})", scan.selected, out_dir.display());
    Ok(())
}

/// `evidence`: the free-energy table and manifest only.
pub fn evidence(
    spectrum_path: &Path,
    spectrum: &Spectrum,
    cfg: &EffectiveConfig,
    scheduler: &Scheduler,
    out_dir: &Path,
) -> CliResult<()> {
    std::fs::create_dir_all(out_dir)
        .phase_ctx(Phase::Data, &format!("cannot create {}", out_dir.display()))?;
    let start = Instant::now();
    let scan = run_scan(cfg, spectrum, scheduler.executor())?;
    let wall = if scheduler.is_serial() { 0.0 } else { start.elapsed().as_secs_f64() };
    outputs::write_free_energy(
        &out_dir.join("free_energy.csv"),
        &scan.posterior,
        &evidence_by_k(&scan),
    )?;
    let manifest =
        manifest_from_scan("evidence", spectrum_path, scheduler.is_serial(), cfg, &scan, wall);
    outputs::write_json(&out_dir.join("manifest.json"), &manifest)?;
    eprintln!("selected K={} (wrote {})", scan.selected, out_dir.display());
    Ok(())
}

/// `simulate`: draw one synthetic spectrum from a preset truth.
pub fn simulate(preset: PresetName, t: f64, seed: u64, out_file: &Path) -> CliResult<()> {
    let case = match preset {
        PresetName::Synthetic4 => synthetic4_case(t),
        PresetName::MoS2_5 => demo_two_peak_case(t),
    }
    .phase(Phase::Config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spectrum = simulate_spectrum(&case.truth, &mut rng).phase(Phase::Run)?;
    let name = match preset {
        PresetName::Synthetic4 => "Synthetic4",
        PresetName::MoS2_5 => "MoS2_5",
    };
    let header = format!("simulated spectrum: preset={name} T={t} seed={seed}");
    crate::spectrum_io::write_spectrum(out_file, &spectrum, &header)?;
    eprintln!("wrote {}", out_file.display());
    Ok(())
}

/// `vma`: the selection-frequency experiment.
pub fn vma(cfg: &EffectiveVmaConfig, scheduler: &Scheduler, out_dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out_dir)
        .phase_ctx(Phase::Data, &format!("cannot create {}", out_dir.display()))?;
    let core_cfg = VmaConfig {
        t_values: cfg.t_values.clone(),
        replications: cfg.replications,
        k_min: cfg.k_min,
        k_max: cfg.k_max,
        sampler: cfg.sampler.clone(),
        master_seed: cfg.master_seed,
    };
    let family = match cfg.preset {
        PresetName::Synthetic4 => synthetic4_case,
        PresetName::MoS2_5 => demo_two_peak_case,
    };
    let start = Instant::now();
    let outcome = run_vma_experiment(&family, &core_cfg, scheduler.executor()).phase(Phase::Run)?;
    let wall = if scheduler.is_serial() { 0.0 } else { start.elapsed().as_secs_f64() };

    outputs::write_selection_table(&out_dir.join("selection_table.csv"), &outcome.table)?;
    outputs::write_vma_runs(&out_dir.join("vma_runs.json"), &outcome.runs)?;
    let manifest = outputs::VmaManifest {
        command: "vma",
        version: env!("CARGO_PKG_VERSION"),
        serial: scheduler.is_serial(),
        config: cfg.echo(),
        wall_clock_seconds: wall,
    };
    outputs::write_json(&out_dir.join("manifest.json"), &manifest)?;
    eprintln!("wrote {}", out_dir.display());
    Ok(())
}
