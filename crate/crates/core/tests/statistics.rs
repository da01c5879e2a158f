//! Statistical correctness of the sampler and evidence estimator on a
//! one-parameter toy where quadrature gives the exact answer.
//!
//! With μ, τ, and B frozen at truth, only the amplitude moves, so the
//! β = 1 posterior and the free energy reduce to 1-D integrals.

use specdeconv_core::{
    estimate_log_z, loss_e, run_emc_with, Background, BackgroundKind, Basis, Coord, Grid,
    ModelSpec, Peak, PresetName, PriorHyper, RunOptions, SamplerConfig, SerialExecutor, Spectrum,
    Theta,
};

const TRUTH: Peak = Peak { a: 1.2, mu: 161.0, tau: 4.0 };
const B_TRUTH: f64 = 0.1;

fn toy_spec() -> ModelSpec {
    ModelSpec { basis: Basis::Gaussian, background_kind: BackgroundKind::Constant, k: 1 }
}

fn theta_at(a: f64) -> Theta {
    Theta { peaks: vec![Peak { a, ..TRUTH }], background: Background::Constant { b: B_TRUTH } }
}

/// Deterministic counts: the true rates rounded to integers.
fn toy_spectrum() -> Spectrum {
    let grid = Grid::uniform(158.0, 164.0, 0.15).unwrap();
    let spec = toy_spec();
    let theta = theta_at(TRUTH.a);
    let rates = specdeconv_core::eval_model(&grid, &theta, &spec).unwrap();
    let counts = rates.iter().map(|r| r.round() as u64).collect();
    Spectrum::new(grid, counts).unwrap()
}

/// ln p(a) − n·E(a) for the free coordinate; p(a) = Gamma(η_a, λ_a).
fn log_weight(a: f64, spectrum: &Spectrum, hyper: &PriorHyper) -> f64 {
    let spec = toy_spec();
    let n = spectrum.len() as f64;
    let e = loss_e(spectrum, &theta_at(a), &spec).unwrap();
    let log_prior = hyper.eta_a * hyper.lambda_a.ln()
        - specdeconv_core::math::ln_gamma(hyper.eta_a)
        + (hyper.eta_a - 1.0) * a.ln()
        - hyper.lambda_a * a;
    log_prior - n * e
}

/// Composite Simpson over breakpoint segments, 400 intervals each.
fn integrate(f: &dyn Fn(f64) -> f64, breaks: &[f64]) -> f64 {
    let mut total = 0.0;
    for seg in breaks.windows(2) {
        let (lo, hi) = (seg[0], seg[1]);
        let intervals = 400;
        let h = (hi - lo) / intervals as f64;
        let mut acc = f(lo) + f(hi);
        for i in 1..intervals {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + h * i as f64);
        }
        total += acc * h / 3.0;
    }
    total
}

const A_BREAKS: [f64; 7] = [1e-9, 0.4, 0.8, 1.2, 1.6, 2.4, 5.0];

/// Posterior mean of a and −ln Z by quadrature, shift-stabilized.
fn quadrature_reference(spectrum: &Spectrum, hyper: &PriorHyper) -> (f64, f64) {
    let peak_lw = log_weight(TRUTH.a, spectrum, hyper);
    let w = |a: f64| (log_weight(a, spectrum, hyper) - peak_lw).exp();
    let z = integrate(&w, &A_BREAKS);
    let za = integrate(&|a: f64| a * w(a), &A_BREAKS);
    let f = -(peak_lw + z.ln());
    (za / z, f)
}

fn batch_mean_se(xs: &[f64], batches: usize) -> (f64, f64) {
    let per = xs.len() / batches;
    assert!(per >= 2, "need at least 2 draws per batch");
    let used = per * batches;
    let mean = xs[..used].iter().sum::<f64>() / used as f64;
    let mut var_of_means = 0.0;
    for b in 0..batches {
        let bm = xs[b * per..(b + 1) * per].iter().sum::<f64>() / per as f64;
        var_of_means += (bm - mean) * (bm - mean);
    }
    var_of_means /= (batches * (batches - 1)) as f64;
    (mean, var_of_means.sqrt())
}

fn run_toy(m: usize, gamma: f64, iterations: u64, seed: u64) -> specdeconv_core::ChainRecord {
    let spectrum = toy_spectrum();
    let hyper = PriorHyper::preset(PresetName::Synthetic4, 1.0).unwrap();
    let config = SamplerConfig {
        m,
        gamma,
        iterations,
        burn_in: iterations / 6,
        exchange_period: 1,
        seed,
        thin: 10,
    };
    let init = theta_at(TRUTH.a);
    let options = RunOptions {
        init: Some(&init),
        frozen: &[Coord::Mu(0), Coord::Tau(0), Coord::BgConst],
        executor: &SerialExecutor,
    };
    run_emc_with(&spectrum, &toy_spec(), &hyper, &config, &options).unwrap()
}

#[test]
fn beta_one_posterior_mean_matches_quadrature() {
    let spectrum = toy_spectrum();
    let hyper = PriorHyper::preset(PresetName::Synthetic4, 1.0).unwrap();
    let (mean_ref, _) = quadrature_reference(&spectrum, &hyper);

    let chains = run_toy(8, 1.5, 60_000, 7);
    let draws: Vec<f64> =
        chains.samples.last().unwrap().iter().map(|s| s.theta.peaks[0].a).collect();
    let (mean, se) = batch_mean_se(&draws, 50);
    assert!(se > 0.0 && se < 0.05, "degenerate batch se {se}");
    assert!(
        (mean - mean_ref).abs() <= 4.0 * se,
        "posterior mean {mean} vs quadrature {mean_ref}, se {se}"
    );
}

#[test]
fn free_energy_is_stable_under_ladder_refinement() {
    let spectrum = toy_spectrum();
    let hyper = PriorHyper::preset(PresetName::Synthetic4, 1.0).unwrap();
    let (_, f_ref) = quadrature_reference(&spectrum, &hyper);
    let n = spectrum.len();

    let coarse = run_toy(8, 1.5, 60_000, 11);
    let fine = run_toy(12, 1.5, 60_000, 13);
    let ev_coarse = estimate_log_z(&coarse, &coarse.ladder, n).unwrap();
    let ev_fine = estimate_log_z(&fine, &fine.ladder, n).unwrap();

    let combined = (ev_coarse.mc_se * ev_coarse.mc_se + ev_fine.mc_se * ev_fine.mc_se).sqrt();
    assert!(combined > 0.0, "degenerate mc_se");
    assert!(
        (ev_coarse.f - ev_fine.f).abs() <= 3.0 * combined,
        "F(M=8) = {} vs F(M=12) = {}, combined mc_se {combined}",
        ev_coarse.f,
        ev_fine.f
    );
    for ev in [&ev_coarse, &ev_fine] {
        assert!(
            (ev.f - f_ref).abs() <= (4.0 * ev.mc_se).max(0.08),
            "F = {} vs quadrature {f_ref}, mc_se {}",
            ev.f,
            ev.mc_se
        );
    }
}
