//! Timing pilot: one default-scale fit per candidate K on synthetic data.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use specdeconv_core::evidence::estimate_log_z;
use specdeconv_core::sampler::{run_emc, SamplerConfig};
use specdeconv_core::vma::{simulate_spectrum, synthetic4_case};
use specdeconv_core::ModelSpec;

fn main() {
    for &t in &[1000.0, 1.0] {
        let case = synthetic4_case(t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spectrum = simulate_spectrum(&case.truth, &mut rng).unwrap();
        for k in [1usize, 3, 5] {
            let spec = ModelSpec { k, ..case.truth.spec };
            let config = SamplerConfig { seed: 11, ..SamplerConfig::default() };
            let start = Instant::now();
            let record = run_emc(&spectrum, &spec, &case.hyper, &config).unwrap();
            let ev = estimate_log_z(&record, &record.ladder, record.n).unwrap();
            println!(
                "T={t:7} K={k} F={:10.3} mc_se={:.4} elapsed={:?}",
                ev.f,
                ev.mc_se,
                start.elapsed()
            );
        }
    }
}
