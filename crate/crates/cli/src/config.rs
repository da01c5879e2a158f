//! Run configuration: strict JSON schema, preset expansion, flag
//! overrides, and the fully resolved form echoed into manifests.
//!
//! Resolution rules:
//! - `preset` + `T` expand to the printed hyperparameter set, the matching
//!   model family, and the family's ladder defaults (Synthetic4: M = 32,
//!   γ = 1.5; MoS2_5: M = 64, γ = 1.25).
//! - An explicit `prior` block excludes `preset`; giving both is an error.
//! - An empty config means preset Synthetic4 with T = 1.
//! - Command-line flags override file values; the echoed effective config
//!   carries only explicit values, so feeding it back reproduces the run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use specdeconv_core::{
    BackgroundKind, BackgroundPrior, Basis, ModelSpec, PresetName, PriorHyper, SamplerConfig,
};

use crate::error::{Classify, CliError, CliResult, Phase};

/// Peak basis name as written in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisName {
    Gaussian,
    PseudoVoigt,
}

impl BasisName {
    pub fn to_core(self) -> Basis {
        match self {
            BasisName::Gaussian => Basis::Gaussian,
            BasisName::PseudoVoigt => Basis::PseudoVoigt7030,
        }
    }
}

/// Background family name as written in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackgroundName {
    Constant,
    Shirley,
}

impl BackgroundName {
    pub fn to_core(self) -> BackgroundKind {
        match self {
            BackgroundName::Constant => BackgroundKind::Constant,
            BackgroundName::Shirley => BackgroundKind::Shirley,
        }
    }
}

/// Model family block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub basis: BasisName,
    pub background: BackgroundName,
}

/// Background half of an explicit prior block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum PriorBackgroundBlock {
    Constant { nu_b: f64, xi_b: f64 },
    Shirley { eta_c: f64, lambda_c: f64, nu_start: f64, xi_start: f64 },
}

/// Explicit prior hyperparameters, mirroring the engine's set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorBlock {
    pub eta_a: f64,
    pub lambda_a: f64,
    pub nu_0: f64,
    pub xi_0: f64,
    pub eta_sigma: f64,
    pub lambda_sigma: f64,
    pub background: PriorBackgroundBlock,
}

impl PriorBlock {
    pub fn to_core(self) -> PriorHyper {
        PriorHyper {
            eta_a: self.eta_a,
            lambda_a: self.lambda_a,
            nu_0: self.nu_0,
            xi_0: self.xi_0,
            eta_sigma: self.eta_sigma,
            lambda_sigma: self.lambda_sigma,
            background: match self.background {
                PriorBackgroundBlock::Constant { nu_b, xi_b } => {
                    BackgroundPrior::Constant { nu_b, xi_b }
                }
                PriorBackgroundBlock::Shirley { eta_c, lambda_c, nu_start, xi_start } => {
                    BackgroundPrior::Shirley { eta_c, lambda_c, nu_start, xi_start }
                }
            },
        }
    }

    pub fn from_core(hyper: &PriorHyper) -> PriorBlock {
        PriorBlock {
            eta_a: hyper.eta_a,
            lambda_a: hyper.lambda_a,
            nu_0: hyper.nu_0,
            xi_0: hyper.xi_0,
            eta_sigma: hyper.eta_sigma,
            lambda_sigma: hyper.lambda_sigma,
            background: match hyper.background {
                BackgroundPrior::Constant { nu_b, xi_b } => {
                    PriorBackgroundBlock::Constant { nu_b, xi_b }
                }
                BackgroundPrior::Shirley { eta_c, lambda_c, nu_start, xi_start } => {
                    PriorBackgroundBlock::Shirley { eta_c, lambda_c, nu_start, xi_start }
                }
            },
        }
    }

    fn kind(&self) -> BackgroundKind {
        match self.background {
            PriorBackgroundBlock::Constant { .. } => BackgroundKind::Constant,
            PriorBackgroundBlock::Shirley { .. } => BackgroundKind::Shirley,
        }
    }
}

/// Sampler block; absent fields take the family defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exchange_period: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thin: Option<u64>,
}

/// A fit/evidence run configuration as stored on disk.
///
/// The effective (fully resolved) form uses the same schema with `preset`
/// and `T` absent and every other field explicit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorBlock>,
    #[serde(rename = "K_range", default, skip_serializing_if = "Option::is_none")]
    pub k_range: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// A selection-frequency experiment configuration as stored on disk.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VmaConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<u32>,
    #[serde(rename = "K_range", default, skip_serializing_if = "Option::is_none")]
    pub k_range: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
}

/// Command-line overrides shared by fit, evidence, and vma.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub gamma: Option<f64>,
    pub iterations: Option<u64>,
    pub burn_in: Option<u64>,
    pub kmin: Option<usize>,
    pub kmax: Option<usize>,
}

/// A fully resolved fit/evidence configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveConfig {
    pub basis: Basis,
    pub background: BackgroundKind,
    pub hyper: PriorHyper,
    pub k_min: usize,
    pub k_max: usize,
    pub sampler: SamplerConfig,
}

impl EffectiveConfig {
    /// Model spec for one candidate K.
    pub fn model_spec(&self, k: usize) -> ModelSpec {
        ModelSpec { basis: self.basis, background_kind: self.background, k }
    }

    /// Candidate peak counts, ascending.
    pub fn k_values(&self) -> Vec<usize> {
        (self.k_min..=self.k_max).collect()
    }

    /// Uniform prior over the candidates.
    pub fn uniform_k_prior(&self) -> BTreeMap<usize, f64> {
        let ks = self.k_values();
        let p = 1.0 / ks.len() as f64;
        ks.into_iter().map(|k| (k, p)).collect()
    }

    /// The config-file form with every field explicit.
    pub fn echo(&self) -> FitConfigFile {
        FitConfigFile {
            preset: None,
            t: None,
            model: Some(ModelBlock {
                basis: match self.basis {
                    Basis::Gaussian => BasisName::Gaussian,
                    Basis::PseudoVoigt7030 => BasisName::PseudoVoigt,
                },
                background: match self.background {
                    BackgroundKind::Constant => BackgroundName::Constant,
                    BackgroundKind::Shirley => BackgroundName::Shirley,
                },
            }),
            prior: Some(PriorBlock::from_core(&self.hyper)),
            k_range: Some([self.k_min, self.k_max]),
            sampler: Some(SamplerBlock {
                replicas: Some(self.sampler.m),
                gamma: Some(self.sampler.gamma),
                iterations: Some(self.sampler.iterations),
                burn_in: Some(self.sampler.burn_in),
                exchange_period: Some(self.sampler.exchange_period),
                thin: Some(self.sampler.thin),
            }),
            seed: Some(self.sampler.seed),
        }
    }
}

/// A fully resolved experiment configuration plus its truth family.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveVmaConfig {
    pub preset: PresetName,
    pub t_values: Vec<f64>,
    pub replications: u32,
    pub k_min: usize,
    pub k_max: usize,
    pub sampler: SamplerConfig,
    pub master_seed: u64,
}

impl EffectiveVmaConfig {
    /// The config-file form with every field explicit.
    pub fn echo(&self) -> VmaConfigFile {
        VmaConfigFile {
            preset: Some(preset_to_name(self.preset).to_string()),
            t_values: Some(self.t_values.clone()),
            replications: Some(self.replications),
            k_range: Some([self.k_min, self.k_max]),
            sampler: Some(SamplerBlock {
                replicas: Some(self.sampler.m),
                gamma: Some(self.sampler.gamma),
                iterations: Some(self.sampler.iterations),
                burn_in: Some(self.sampler.burn_in),
                exchange_period: Some(self.sampler.exchange_period),
                thin: Some(self.sampler.thin),
            }),
            master_seed: Some(self.master_seed),
        }
    }
}

fn parse_preset(name: &str) -> CliResult<PresetName> {
    match name {
        "Synthetic4" => Ok(PresetName::Synthetic4),
        "MoS2_5" => Ok(PresetName::MoS2_5),
        other => Err(CliError::config(format!(
            "unknown preset {other:?}; expected \"Synthetic4\" or \"MoS2_5\""
        ))),
    }
}

fn preset_to_name(preset: PresetName) -> &'static str {
    match preset {
        PresetName::Synthetic4 => "Synthetic4",
        PresetName::MoS2_5 => "MoS2_5",
    }
}

/// The model family and ladder defaults a preset implies.
fn preset_family(preset: PresetName) -> (Basis, BackgroundKind, usize, f64) {
    match preset {
        PresetName::Synthetic4 => (Basis::Gaussian, BackgroundKind::Constant, 32, 1.5),
        PresetName::MoS2_5 => (Basis::PseudoVoigt7030, BackgroundKind::Shirley, 64, 1.25),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .phase_ctx(Phase::Config, &format!("cannot read config file {}", path.display()))?;
    serde_json::from_str(&text)
        .phase_ctx(Phase::Config, &format!("invalid config file {}", path.display()))
}

/// Load a fit/evidence config file, or take all defaults when absent.
pub fn load_fit_config(path: Option<&Path>) -> CliResult<FitConfigFile> {
    match path {
        Some(p) => read_json(p),
        None => Ok(FitConfigFile::default()),
    }
}

/// Load an experiment config file, or take all defaults when absent.
pub fn load_vma_config(path: Option<&Path>) -> CliResult<VmaConfigFile> {
    match path {
        Some(p) => read_json(p),
        None => Ok(VmaConfigFile::default()),
    }
}

fn resolve_k_range(
    file: Option<[usize; 2]>,
    ov: &Overrides,
    default: [usize; 2],
) -> CliResult<(usize, usize)> {
    let base = file.unwrap_or(default);
    let lo = ov.kmin.unwrap_or(base[0]);
    let hi = ov.kmax.unwrap_or(base[1]);
    if lo == 0 {
        return Err(CliError::config("peak counts start at K = 1"));
    }
    if lo > hi {
        return Err(CliError::config(format!("empty K range [{lo}, {hi}]")));
    }
    Ok((lo, hi))
}

fn resolve_sampler(
    block: Option<SamplerBlock>,
    ov: &Overrides,
    family_m: usize,
    family_gamma: f64,
    seed: u64,
) -> CliResult<SamplerConfig> {
    let b = block.unwrap_or_default();
    let d = SamplerConfig::default();
    let config = SamplerConfig {
        m: ov.replicas.or(b.replicas).unwrap_or(family_m),
        gamma: ov.gamma.or(b.gamma).unwrap_or(family_gamma),
        iterations: ov.iterations.or(b.iterations).unwrap_or(d.iterations),
        burn_in: ov.burn_in.or(b.burn_in).unwrap_or(d.burn_in),
        exchange_period: b.exchange_period.unwrap_or(d.exchange_period),
        thin: b.thin.unwrap_or(d.thin),
        seed,
    };
    config.validate().phase(Phase::Config)?;
    Ok(config)
}

/// Resolve a fit/evidence config file plus flag overrides.
pub fn resolve_fit_config(file: &FitConfigFile, ov: &Overrides) -> CliResult<EffectiveConfig> {
    if file.preset.is_some() && file.prior.is_some() {
        return Err(CliError::config("give either a preset or an explicit prior, not both"));
    }
    if file.preset.is_none() && file.t.is_some() {
        return Err(CliError::config("\"T\" only makes sense together with \"preset\""));
    }

    let (hyper, family) = if let Some(prior) = &file.prior {
        let hyper = prior.to_core();
        hyper.validate().phase(Phase::Config)?;
        // Explicit priors default to the Synthetic4 family's ladder and to
        // the model family their background block implies.
        let basis = if prior.kind() == BackgroundKind::Shirley {
            Basis::PseudoVoigt7030
        } else {
            Basis::Gaussian
        };
        (hyper, (basis, prior.kind(), 32, 1.5))
    } else {
        let preset = match &file.preset {
            Some(name) => parse_preset(name)?,
            None => PresetName::Synthetic4,
        };
        let t = match file.t {
            Some(t) => t,
            None if file.preset.is_none() => 1.0,
            None => return Err(CliError::config("preset requires \"T\"")),
        };
        let hyper = PriorHyper::preset(preset, t).phase(Phase::Config)?;
        (hyper, preset_family(preset))
    };

    let (basis, background) = match file.model {
        Some(m) => (m.basis.to_core(), m.background.to_core()),
        None => (family.0, family.1),
    };
    if hyper.background_kind() != background {
        return Err(CliError::config(format!(
            "prior describes a {:?} background but the model uses {:?}",
            hyper.background_kind(),
            background
        )));
    }

    let (k_min, k_max) = resolve_k_range(file.k_range, ov, [1, 5])?;
    let seed = ov.seed.or(file.seed).unwrap_or(0);
    let sampler = resolve_sampler(file.sampler, ov, family.2, family.3, seed)?;

    Ok(EffectiveConfig { basis, background, hyper, k_min, k_max, sampler })
}

/// Resolve an experiment config file plus flag overrides.
pub fn resolve_vma_config(file: &VmaConfigFile, ov: &Overrides) -> CliResult<EffectiveVmaConfig> {
    let preset = match &file.preset {
        Some(name) => parse_preset(name)?,
        None => PresetName::Synthetic4,
    };
    let family = preset_family(preset);
    let t_values = file.t_values.clone().unwrap_or_else(|| vec![1000.0, 100.0, 10.0, 1.0]);
    if t_values.is_empty() {
        return Err(CliError::config("t_values must not be empty"));
    }
    let replications = file.replications.unwrap_or(10);
    let (k_min, k_max) = resolve_k_range(file.k_range, ov, [1, 5])?;
    let master_seed = ov.seed.or(file.master_seed).unwrap_or(0);
    // Per-run fit seeds derive from the master seed; the sampler seed slot
    // is a placeholder the experiment overwrites.
    let sampler = resolve_sampler(file.sampler, ov, family.2, family.3, 0)?;

    Ok(EffectiveVmaConfig { preset, t_values, replications, k_min, k_max, sampler, master_seed })
}
