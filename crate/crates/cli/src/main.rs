//! specdeconv: Bayesian spectral deconvolution from the command line.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure during the run.

mod commands;
mod config;
mod error;
mod exec;
mod outputs;
mod spectrum_io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use specdeconv_core::PresetName;

use commands::Scheduler;
use config::Overrides;
use error::CliResult;

#[derive(Parser)]
#[command(
    name = "specdeconv",
    version,
    about = "Multi-peak spectral deconvolution under a Poisson model: \
             exchange Monte Carlo sampling with Bayes-free-energy model selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    #[value(name = "Synthetic4")]
    Synthetic4,
    #[value(name = "MoS2_5")]
    MoS2_5,
}

impl PresetArg {
    fn to_core(self) -> PresetName {
        match self {
            PresetArg::Synthetic4 => PresetName::Synthetic4,
            PresetArg::MoS2_5 => PresetName::MoS2_5,
        }
    }
}

/// Sampler and K-range overrides; flags win over config-file values.
#[derive(Args)]
struct OverrideArgs {
    /// Master seed for the random streams
    #[arg(long)]
    seed: Option<u64>,
    /// Number of replicas M
    #[arg(long)]
    replicas: Option<usize>,
    /// Geometric ladder spacing γ
    #[arg(long)]
    gamma: Option<f64>,
    /// Total Metropolis sweeps, burn-in included
    #[arg(long)]
    iterations: Option<u64>,
    /// Sweeps discarded before recording
    #[arg(long)]
    burn_in: Option<u64>,
    /// Smallest candidate peak count
    #[arg(long)]
    kmin: Option<usize>,
    /// Largest candidate peak count
    #[arg(long)]
    kmax: Option<usize>,
}

impl OverrideArgs {
    fn to_overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            replicas: self.replicas,
            gamma: self.gamma,
            iterations: self.iterations,
            burn_in: self.burn_in,
            kmin: self.kmin,
            kmax: self.kmax,
        }
    }
}

/// How replica sweeps are scheduled.
#[derive(Args)]
struct SchedulerArgs {
    /// Worker threads for replica sweeps; 0 means one per CPU
    #[arg(long, env = "SPECDECONV_THREADS")]
    threads: Option<usize>,
    /// Single-threaded deterministic schedule (also pins the manifest
    /// wall clock to 0.0 so reruns are byte-identical)
    #[arg(long)]
    serial: bool,
}

impl SchedulerArgs {
    fn scheduler(&self) -> CliResult<Scheduler> {
        Scheduler::from_flags(self.serial, self.threads)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit a spectrum over the candidate K range and write the full
    /// result set for the selected model
    Fit {
        /// Two-column spectrum file (energy, count)
        spectrum: PathBuf,
        /// JSON run configuration; defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
        #[command(flatten)]
        scheduler: SchedulerArgs,
    },
    /// Fit a spectrum over the candidate K range and write only the
    /// free-energy table
    Evidence {
        /// Two-column spectrum file (energy, count)
        spectrum: PathBuf,
        /// JSON run configuration; defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
        #[command(flatten)]
        scheduler: SchedulerArgs,
    },
    /// Draw one synthetic spectrum from a preset truth
    Simulate {
        /// Truth family and prior preset
        #[arg(long)]
        preset: PresetArg,
        /// Pseudo-measurement time scaling the truth
        #[arg(long = "T")]
        t: f64,
        /// Seed for the Poisson draws
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output spectrum file
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the selection-frequency experiment over simulated data
    Vma {
        /// JSON experiment configuration; defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
        #[command(flatten)]
        scheduler: SchedulerArgs,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fit { spectrum, config, out, overrides, scheduler } => {
            let file = config::load_fit_config(config.as_deref())?;
            let cfg = config::resolve_fit_config(&file, &overrides.to_overrides())?;
            let sched = scheduler.scheduler()?;
            let data = spectrum_io::load_spectrum(&spectrum)?;
            commands::fit(&spectrum, &data, &cfg, &sched, &out)
        }
        Command::Evidence { spectrum, config, out, overrides, scheduler } => {
            let file = config::load_fit_config(config.as_deref())?;
            let cfg = config::resolve_fit_config(&file, &overrides.to_overrides())?;
            let sched = scheduler.scheduler()?;
            let data = spectrum_io::load_spectrum(&spectrum)?;
            commands::evidence(&spectrum, &data, &cfg, &sched, &out)
        }
        Command::Simulate { preset, t, seed, out } => {
            commands::simulate(preset.to_core(), t, seed, &out)
        }
        Command::Vma { config, out, overrides, scheduler } => {
            let file = config::load_vma_config(config.as_deref())?;
            let cfg = config::resolve_vma_config(&file, &overrides.to_overrides())?;
            let sched = scheduler.scheduler()?;
            commands::vma(&cfg, &sched, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {:#}", err.error);
            err.phase.exit_code()
        }
    }
}
