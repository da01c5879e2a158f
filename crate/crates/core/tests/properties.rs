//! Randomized invariants of the public API, plus quadrature checks of
//! normalization identities.

use proptest::prelude::*;
use specdeconv_core::{
    build_ladder, cumulative_signal, derive_seed, eval_basis, eval_model, eval_signal,
    log_prior_density, loss_e, posterior_over_k, Background, BackgroundKind, BackgroundPrior,
    Basis, Grid, ModelSpec, Peak, PresetName, PriorHyper, Spectrum, Theta,
};
use std::collections::BTreeMap;

// ---------------------------------------------------------------- helpers

/// Composite Simpson with a fixed even interval count.
fn simpson(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, intervals: usize) -> f64 {
    assert!(intervals >= 2 && intervals.is_multiple_of(2));
    let h = (hi - lo) / intervals as f64;
    let mut acc = f(lo) + f(hi);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + h * i as f64);
    }
    acc * h / 3.0
}

/// Adaptive Simpson to the given absolute tolerance.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    // the usual adaptive-Simpson state travels as plain arguments
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        lo: f64,
        hi: f64,
        whole: f64,
        flo: f64,
        fmid: f64,
        fhi: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let mid = 0.5 * (lo + hi);
        let lmid = 0.5 * (lo + mid);
        let rmid = 0.5 * (mid + hi);
        let flm = f(lmid);
        let frm = f(rmid);
        let h6 = (hi - lo) / 12.0;
        let left = h6 * (flo + 4.0 * flm + fmid);
        let right = h6 * (fmid + 4.0 * frm + fhi);
        let refined = left + right;
        if depth == 0 || (refined - whole).abs() <= 15.0 * tol {
            refined + (refined - whole) / 15.0
        } else {
            recurse(f, lo, mid, left, flo, flm, fmid, 0.5 * tol, depth - 1)
                + recurse(f, mid, hi, right, fmid, frm, fhi, 0.5 * tol, depth - 1)
        }
    }
    let mid = 0.5 * (lo + hi);
    let flo = f(lo);
    let fmid = f(mid);
    let fhi = f(hi);
    let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
    recurse(f, lo, hi, whole, flo, fmid, fhi, tol, 40)
}

fn grid_strategy() -> impl Strategy<Value = Grid> {
    prop::collection::btree_set(-10_000i64..10_000, 2..20)
        .prop_map(|set| Grid::new(set.into_iter().map(|i| i as f64 * 0.01).collect()).unwrap())
}

fn peaks_strategy(max_k: usize) -> impl Strategy<Value = Vec<Peak>> {
    prop::collection::vec(
        (0.0f64..50.0, -50.0f64..50.0, 0.05f64..30.0).prop_map(|(a, mu, tau)| Peak { a, mu, tau }),
        1..=max_k,
    )
}

fn gaussian_spec(k: usize) -> ModelSpec {
    ModelSpec { basis: Basis::Gaussian, background_kind: BackgroundKind::Constant, k }
}

// ------------------------------------------------------------------ model

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// 0 < φ ≤ 1 with the apex exactly 1, and φ symmetric about μ.
    /// Dyadic μ and d make μ±d exact, so symmetry holds bitwise. τd² is
    /// kept below the exp underflow threshold; past it the tail rounds
    /// to zero, which positivity in exact arithmetic cannot survive.
    #[test]
    fn basis_bounded_apex_one_and_symmetric(
        mu_i in -51_200i32..51_200,
        d_i in 0i32..25_600,
        tau in 0.05f64..30.0,
        gaussian in any::<bool>(),
    ) {
        let mu = mu_i as f64 / 1024.0;
        let d = d_i as f64 / 1024.0;
        prop_assume!(tau * d * d < 1400.0);
        let basis = if gaussian { Basis::Gaussian } else { Basis::PseudoVoigt7030 };
        let peak = Peak { a: 1.0, mu, tau };
        let apex = eval_basis(mu, &peak, basis).unwrap();
        prop_assert_eq!(apex, 1.0);
        let up = eval_basis(mu + d, &peak, basis).unwrap();
        let down = eval_basis(mu - d, &peak, basis).unwrap();
        prop_assert!(up > 0.0 && up <= 1.0);
        prop_assert_eq!(up, down);
    }

    /// Doubling every amplitude doubles the signal exactly. Parameter
    /// ranges keep every term a normal float; in the subnormal range the
    /// fixed absolute grid breaks the exact-scaling argument.
    #[test]
    fn signal_is_linear_in_amplitudes(
        peaks in prop::collection::vec(
            (0.01f64..50.0, -10.0f64..10.0, 0.05f64..3.0)
                .prop_map(|(a, mu, tau)| Peak { a, mu, tau }),
            1..=5,
        ),
        x in -10.0f64..10.0,
    ) {
        let spec = gaussian_spec(peaks.len());
        let theta = Theta { peaks: peaks.clone(), background: Background::Constant { b: 1.0 } };
        let doubled = Theta {
            peaks: peaks.iter().map(|p| Peak { a: 2.0 * p.a, ..*p }).collect(),
            background: Background::Constant { b: 1.0 },
        };
        let g1 = eval_signal(x, &theta, &spec).unwrap();
        let g2 = eval_signal(x, &doubled, &spec).unwrap();
        prop_assert_eq!(2.0 * g1, g2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// The cumulative signal never decreases along the grid, either basis.
    #[test]
    fn cumulative_signal_is_nondecreasing(
        grid in grid_strategy(),
        peaks in peaks_strategy(4),
        gaussian in any::<bool>(),
    ) {
        let basis = if gaussian { Basis::Gaussian } else { Basis::PseudoVoigt7030 };
        let spec = ModelSpec { basis, background_kind: BackgroundKind::Constant, k: peaks.len() };
        let theta = Theta { peaks, background: Background::Constant { b: 1.0 } };
        let cum = cumulative_signal(&grid, &theta, &spec).unwrap();
        let scale = cum.last().unwrap().abs().max(1.0);
        for pair in cum.windows(2) {
            prop_assert!(pair[1] >= pair[0] - 1e-12 * scale);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// The Gaussian closed-form cumulative matches brute-force quadrature
    /// of the signal to 1e−8 relative error.
    #[test]
    fn gaussian_cumulative_matches_quadrature(
        grid in grid_strategy(),
        peaks in peaks_strategy(5),
    ) {
        let spec = gaussian_spec(peaks.len());
        let theta =
            Theta { peaks: peaks.clone(), background: Background::Constant { b: 1.0 } };
        let cum = cumulative_signal(&grid, &theta, &spec).unwrap();
        let energies = grid.energies();
        let probes = [0usize, energies.len() / 2, energies.len() - 1];
        for &i in &probes {
            let x = energies[i];
            let mut brute = 0.0;
            for p in &peaks {
                let sigma = 1.0 / p.tau.sqrt();
                let lo = p.mu - 9.0 * sigma;
                let hi = x.min(p.mu + 9.0 * sigma);
                if hi > lo {
                    let phi =
                        |u: f64| (-(p.tau) * (u - p.mu) * (u - p.mu) / 2.0).exp();
                    brute += p.a * simpson(&phi, lo, hi, 4000);
                }
            }
            let scale = peaks
                .iter()
                .map(|p| p.a * (core::f64::consts::TAU / p.tau).sqrt())
                .sum::<f64>()
                .max(1e-300);
            prop_assert!(
                (cum[i] - brute).abs() <= 1e-8 * scale.max(brute.abs()),
                "cumulative {} vs quadrature {} at x = {x}",
                cum[i],
                brute
            );
        }
    }
}

// ------------------------------------------------------------- likelihood

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// exp(−n·E) is the exact Poisson likelihood: compared in log space
    /// against a brute-force pmf oracle built from nothing but ln.
    #[test]
    fn loss_matches_brute_force_poisson_product(
        (grid, counts) in grid_strategy().prop_flat_map(|grid| {
            let n = grid.len();
            (Just(grid), prop::collection::vec(0u64..=50, n))
        }),
        peaks in peaks_strategy(3),
        b in 0.05f64..5.0,
    ) {
        let spec = gaussian_spec(peaks.len());
        let theta = Theta { peaks, background: Background::Constant { b } };
        let spectrum = Spectrum::new(grid.clone(), counts.clone()).unwrap();
        let n = spectrum.len() as f64;
        let loss = loss_e(&spectrum, &theta, &spec).unwrap();
        prop_assert!(loss.is_finite(), "positive background keeps rates positive");
        let rates = eval_model(&grid, &theta, &spec).unwrap();
        let mut oracle = 0.0;
        for (&y, &rate) in counts.iter().zip(&rates) {
            let mut ln_fact = 0.0;
            for j in 1..=y {
                ln_fact += (j as f64).ln();
            }
            oracle += y as f64 * rate.ln() - rate - ln_fact;
        }
        let log_likelihood = -n * loss;
        prop_assert!(
            (log_likelihood - oracle).abs() <= 1e-12 * oracle.abs().max(1.0),
            "-nE = {log_likelihood} vs oracle {oracle}"
        );
    }

    /// With all counts equal, the flat model's loss is minimized exactly
    /// at rate = count, the per-point Poisson optimum.
    #[test]
    fn loss_is_minimized_at_the_observed_count(
        y in 1u64..=50,
        rel in 1e-4f64..0.5,
    ) {
        let grid = Grid::new(vec![0.0, 1.0, 2.0]).unwrap();
        let spectrum = Spectrum::new(grid, vec![y, y, y]).unwrap();
        let spec = gaussian_spec(1);
        let at = |b: f64| {
            let theta = Theta {
                peaks: vec![Peak { a: 0.0, mu: 1.0, tau: 1.0 }],
                background: Background::Constant { b },
            };
            loss_e(&spectrum, &theta, &spec).unwrap()
        };
        let center = y as f64;
        let optimum = at(center);
        prop_assert!(at(center * (1.0 + rel)) > optimum);
        prop_assert!(at(center * (1.0 - rel)) > optimum);
    }
}

// ----------------------------------------------------------------- priors

/// Product-of-masses identity: integrating exp(log_prior_density) over
/// each coordinate in turn (others pinned at θ₀) and multiplying gives
/// exp((C−1)·lp(θ₀)) iff every 1-D component density has unit mass. A
/// single unnormalized component breaks it.
fn assert_prior_components_normalized(hyper: &PriorHyper, theta0: &Theta) {
    let k = theta0.peaks.len();
    let lp0 = log_prior_density(theta0, k, hyper).unwrap();

    // (coordinate setter, integration breakpoints) pairs: segments anchor a
    // probe point near the mass so adaptive refinement cannot miss it
    type Setter = Box<dyn Fn(&Theta, f64) -> Theta>;
    let mut coords: Vec<(Setter, Vec<f64>)> = Vec::new();
    let gamma_breaks = |eta: f64, lambda: f64| {
        let mean = eta / lambda;
        let sd = eta.sqrt() / lambda;
        vec![1e-12, 0.5 * mean, mean, mean + 4.0 * sd, mean + 12.0 * sd, mean + 40.0 * sd]
    };
    let normal_breaks =
        |nu: f64, xi: f64| vec![nu - 12.0 * xi, nu - 4.0 * xi, nu, nu + 4.0 * xi, nu + 12.0 * xi];

    coords.push((
        Box::new(|t: &Theta, x: f64| {
            let mut out = t.clone();
            out.peaks[0].a = x;
            out
        }),
        gamma_breaks(hyper.eta_a, hyper.lambda_a),
    ));
    coords.push((
        Box::new(|t: &Theta, x: f64| {
            let mut out = t.clone();
            out.peaks[0].mu = x;
            out
        }),
        normal_breaks(hyper.nu_0, hyper.xi_0),
    ));
    coords.push((
        Box::new(|t: &Theta, x: f64| {
            let mut out = t.clone();
            out.peaks[0].tau = x;
            out
        }),
        gamma_breaks(hyper.eta_sigma, hyper.lambda_sigma),
    ));
    match hyper.background {
        BackgroundPrior::Constant { nu_b, xi_b } => {
            coords.push((
                Box::new(|t: &Theta, x: f64| Theta {
                    peaks: t.peaks.clone(),
                    background: Background::Constant { b: x },
                }),
                normal_breaks(nu_b, xi_b),
            ));
        }
        BackgroundPrior::Shirley { eta_c, lambda_c, nu_start, xi_start } => {
            coords.push((
                Box::new(|t: &Theta, x: f64| {
                    let h = match t.background {
                        Background::Shirley { h_start, .. } => h_start,
                        _ => unreachable!(),
                    };
                    Theta {
                        peaks: t.peaks.clone(),
                        background: Background::Shirley { c: x, h_start: h },
                    }
                }),
                gamma_breaks(eta_c, lambda_c),
            ));
            coords.push((
                Box::new(|t: &Theta, x: f64| {
                    let c = match t.background {
                        Background::Shirley { c, .. } => c,
                        _ => unreachable!(),
                    };
                    Theta {
                        peaks: t.peaks.clone(),
                        background: Background::Shirley { c, h_start: x },
                    }
                }),
                normal_breaks(nu_start, xi_start),
            ));
        }
    }

    let mut log_product = 0.0;
    for (set, breaks) in &coords {
        let integrand = |x: f64| {
            let theta = set(theta0, x);
            (log_prior_density(&theta, k, hyper).unwrap() - lp0).exp()
        };
        let mut mass = 0.0;
        for seg in breaks.windows(2) {
            mass += adaptive_simpson(&integrand, seg[0], seg[1], 1e-9);
        }
        assert!(mass.is_finite() && mass > 0.0);
        log_product += mass.ln();
    }
    // Π_c ∫ exp(lp(θ[c=x])) dx = exp((C−1)·lp₀) ⇔ Σ_c ln J_c = −lp₀
    assert!(
        (log_product + lp0).abs() <= 1e-6,
        "component masses multiply to exp({log_product}) != exp({})",
        -lp0
    );
}

#[test]
fn prior_components_integrate_to_one() {
    let hyper = PriorHyper::preset(PresetName::Synthetic4, 1.0).unwrap();
    let theta0 = Theta {
        peaks: vec![Peak { a: 1.0, mu: 160.0, tau: 4.0 }],
        background: Background::Constant { b: 0.1 },
    };
    assert_prior_components_normalized(&hyper, &theta0);

    let hyper = PriorHyper::preset(PresetName::Synthetic4, 10.0).unwrap();
    let theta0 = Theta {
        peaks: vec![Peak { a: 10.0, mu: 161.0, tau: 4.0 }],
        background: Background::Constant { b: 1.0 },
    };
    assert_prior_components_normalized(&hyper, &theta0);

    let hyper = PriorHyper::preset(PresetName::MoS2_5, 4.0).unwrap();
    let theta0 = Theta {
        peaks: vec![Peak { a: 4.0, mu: 160.0, tau: 20.0 }],
        background: Background::Shirley { c: 0.5, h_start: 1.4 },
    };
    assert_prior_components_normalized(&hyper, &theta0);
}

// ----------------------------------------------------------------- ladder

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Ladders are strictly increasing with exact endpoints and geometric
    /// interior spacing.
    #[test]
    fn ladder_endpoints_and_geometric_spacing(
        m in 2usize..=64,
        gamma in 1.01f64..3.0,
    ) {
        let ladder = build_ladder(m, gamma).unwrap();
        let betas = ladder.betas();
        prop_assert_eq!(betas.len(), m);
        prop_assert_eq!(betas[0], 0.0);
        prop_assert_eq!(betas[m - 1], 1.0);
        for pair in betas.windows(2) {
            prop_assert!(pair[0] < pair[1]);
        }
        for pair in betas[1..].windows(2) {
            let ratio = pair[1] / pair[0];
            prop_assert!((ratio - gamma).abs() <= 1e-12 * gamma);
        }
    }

    /// Seed derivation is deterministic and separates lanes and indices.
    #[test]
    fn derived_seeds_are_deterministic_and_distinct(master in any::<u64>()) {
        let mut seen = std::collections::BTreeSet::new();
        for lane in 0..3u64 {
            for index in 0..3u64 {
                let seed = derive_seed(master, lane, index);
                prop_assert_eq!(seed, derive_seed(master, lane, index));
                seen.insert(seed);
            }
        }
        prop_assert_eq!(seen.len(), 9);
    }
}

// --------------------------------------------------------------- evidence

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// p(K|D) sums to 1 within 1e−12 and is invariant under a uniform
    /// shift of every F(K).
    #[test]
    fn posterior_over_k_normalizes_and_shift_invariant(
        fs in prop::collection::vec(-1e3f64..1e3, 1..=6),
        shift in -1e3f64..1e3,
    ) {
        let f_by_k: BTreeMap<usize, f64> =
            fs.iter().copied().enumerate().map(|(i, f)| (i + 1, f)).collect();
        let p = 1.0 / fs.len() as f64;
        let prior: BTreeMap<usize, f64> = f_by_k.keys().map(|&k| (k, p)).collect();
        let posterior = posterior_over_k(&f_by_k, &prior).unwrap();
        let total: f64 = posterior.table.iter().map(|s| s.posterior).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);

        let shifted: BTreeMap<usize, f64> =
            f_by_k.iter().map(|(&k, &f)| (k, f + shift)).collect();
        let shifted_posterior = posterior_over_k(&shifted, &prior).unwrap();
        prop_assert_eq!(posterior.selected, shifted_posterior.selected);
        for (a, b) in posterior.table.iter().zip(&shifted_posterior.table) {
            prop_assert!((a.posterior - b.posterior).abs() <= 1e-12);
        }
    }
}
