//! Result files. All tabular output is CSV with shortest-round-trip
//! float formatting, so identical runs produce identical bytes and a
//! parse-back recovers the exact values.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use specdeconv_core::{
    basis_column, cumulative_signal, Background, ChainRecord, EvidenceResult, Grid, HistogramTable,
    ModelPosterior, ModelSpec, RecordedSample, Theta, VmaRun,
};

use crate::config::{FitConfigFile, VmaConfigFile};
use crate::error::{Classify, CliResult, Phase};

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).phase_ctx(Phase::Data, &format!("cannot write {}", path.display()))
}

/// free_energy.csv: one row per candidate K.
pub fn write_free_energy(
    path: &Path,
    posterior: &ModelPosterior,
    evidence: &BTreeMap<usize, EvidenceResult>,
) -> CliResult<()> {
    let mut out = String::from("K,F,mc_se,posterior\n");
    for score in &posterior.table {
        let mc_se = evidence[&score.k].mc_se;
        out.push_str(&format!("{},{},{},{}\n", score.k, score.f, mc_se, score.posterior));
    }
    write_text(path, &out)
}

/// fit_curve.csv: the MAP model on the data grid, one column per peak
/// plus the background. The f column is the literal sum of the component
/// columns, in peak order then background, matching the model evaluator.
pub fn write_fit_curve(path: &Path, grid: &Grid, map: &Theta, spec: &ModelSpec) -> CliResult<()> {
    let n = grid.len();
    let k = map.peaks.len();
    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
    for peak in &map.peaks {
        let mut col = basis_column(grid, peak, spec.basis).phase(Phase::Run)?;
        for v in col.iter_mut() {
            *v *= peak.a;
        }
        components.push(col);
    }
    let background = match map.background {
        Background::Constant { b } => vec![b; n],
        Background::Shirley { c, h_start } => {
            let cum = cumulative_signal(grid, map, spec).phase(Phase::Run)?;
            cum.into_iter().map(|ci| c * ci + h_start).collect()
        }
    };
    components.push(background);

    let mut out = String::from("x,f");
    for j in 1..=k {
        out.push_str(&format!(",peak_{j}"));
    }
    out.push_str(",background\n");
    for (i, &x) in grid.energies().iter().enumerate() {
        let f: f64 = components.iter().map(|c| c[i]).sum();
        out.push_str(&format!("{x},{f}"));
        for c in &components {
            out.push_str(&format!(",{}", c[i]));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// samples.csv: the thinned posterior chain, each draw relabeled so peak
/// columns are ordered by ascending μ.
pub fn write_samples(path: &Path, samples: &[RecordedSample], k: usize) -> CliResult<()> {
    let mut out = String::from("draw");
    for j in 1..=k {
        out.push_str(&format!(",a_{j},mu_{j},tau_{j}"));
    }
    match samples.first().map(|s| &s.theta.background) {
        Some(Background::Constant { .. }) | None => out.push_str(",B"),
        Some(Background::Shirley { .. }) => out.push_str(",c,h_start"),
    }
    out.push_str(",loss\n");
    for (draw, sample) in samples.iter().enumerate() {
        let theta = sample.theta.relabeled_by_mu();
        out.push_str(&format!("{draw}"));
        for p in &theta.peaks {
            out.push_str(&format!(",{},{},{}", p.a, p.mu, p.tau));
        }
        match theta.background {
            Background::Constant { b } => out.push_str(&format!(",{b}")),
            Background::Shirley { c, h_start } => out.push_str(&format!(",{c},{h_start}")),
        }
        out.push_str(&format!(",{}\n", sample.energy));
    }
    write_text(path, &out)
}

/// histograms.csv: per-peak posterior histogram of one parameter, with
/// the peak's central 95% credible interval repeated on each row.
pub fn write_histograms(path: &Path, table: &HistogramTable) -> CliResult<()> {
    let name = format!("{:?}", table.param).to_lowercase();
    let mut out = String::from("param,peak,bin_lower,bin_upper,count,ci_lower,ci_upper\n");
    for (j, peak) in table.peaks.iter().enumerate() {
        for (b, &count) in peak.counts.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                name,
                j + 1,
                table.edges[b],
                table.edges[b + 1],
                count,
                peak.ci_lower,
                peak.ci_upper
            ));
        }
    }
    write_text(path, &out)
}

/// Per-K evidence summary in the manifest.
#[derive(Debug, Serialize)]
pub struct KSummary {
    pub f: f64,
    pub mc_se: f64,
    pub posterior: f64,
}

/// Per-K mixing diagnostics in the manifest.
#[derive(Debug, Serialize)]
pub struct KDiagnostics {
    /// Worst neighbor-pair exchange acceptance rate.
    pub exchange_rate_min: f64,
    /// Mean neighbor-pair exchange acceptance rate.
    pub exchange_rate_mean: f64,
    /// Post-burn-in Metropolis acceptance rate of the posterior replica.
    pub metropolis_rate_beta1: f64,
}

impl KDiagnostics {
    pub fn from_chains(chains: &ChainRecord) -> KDiagnostics {
        let rate = |a: u64, p: u64| if p == 0 { 0.0 } else { a as f64 / p as f64 };
        let pair_rates: Vec<f64> = chains
            .exchange_accepts
            .iter()
            .zip(&chains.exchange_attempts)
            .map(|(&a, &p)| rate(a, p))
            .collect();
        let min = pair_rates.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = pair_rates.iter().sum::<f64>() / pair_rates.len().max(1) as f64;
        let accepts: u64 = chains.metropolis_accepts.last().map(|v| v.iter().sum()).unwrap_or(0);
        let proposals: u64 =
            chains.metropolis_proposals.last().map(|v| v.iter().sum()).unwrap_or(0);
        KDiagnostics {
            exchange_rate_min: if min.is_finite() { min } else { 0.0 },
            exchange_rate_mean: mean,
            metropolis_rate_beta1: rate(accepts, proposals),
        }
    }
}

/// manifest.json for fit and evidence runs. Contains no output paths and
/// a pinned wall clock under `--serial`, so reruns are byte-identical;
/// the echoed config plus the spectrum path are enough to replay the job.
#[derive(Debug, Serialize)]
pub struct FitManifest {
    pub command: &'static str,
    pub version: &'static str,
    pub spectrum_path: String,
    pub serial: bool,
    pub config: FitConfigFile,
    pub free_energy: BTreeMap<usize, KSummary>,
    pub selected_k: usize,
    pub map_theta: Theta,
    pub diagnostics: BTreeMap<usize, KDiagnostics>,
    pub wall_clock_seconds: f64,
}

/// manifest.json for experiment runs.
#[derive(Debug, Serialize)]
pub struct VmaManifest {
    pub command: &'static str,
    pub version: &'static str,
    pub serial: bool,
    pub config: VmaConfigFile,
    pub wall_clock_seconds: f64,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text =
        serde_json::to_string_pretty(value).phase_ctx(Phase::Data, "cannot serialize manifest")?;
    text.push('\n');
    write_text(path, &text)
}

/// selection_table.csv: selection frequencies by T row and K column.
pub fn write_selection_table(
    path: &Path,
    table: &specdeconv_core::SelectionTable,
) -> CliResult<()> {
    let mut out = String::from("T");
    for k in &table.k_values {
        out.push_str(&format!(",K={k}"));
    }
    out.push_str(",failures\n");
    for (i, &t) in table.t_values.iter().enumerate() {
        out.push_str(&format!("{t}"));
        for count in &table.counts[i] {
            out.push_str(&format!(",{count}"));
        }
        out.push_str(&format!(",{}\n", table.failures[i]));
    }
    write_text(path, &out)
}

/// vma_runs.json: one record per (T, replication) with seeds, per-K free
/// energies, and the selection.
pub fn write_vma_runs(path: &Path, runs: &[VmaRun]) -> CliResult<()> {
    write_json(path, &runs)
}
