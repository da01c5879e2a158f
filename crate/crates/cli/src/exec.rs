//! Replica-sweep scheduling. Replica slots are independent within a
//! sweep, so parallel and serial schedules produce bit-identical chains;
//! `--serial` exists to pin the deterministic wall-clock contract, not
//! the results.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use specdeconv_core::{ReplicaState, SweepExecutor};

use crate::error::{Classify, CliResult, Phase};

/// Runs each replica slot on a rayon pool.
pub struct RayonExecutor {
    pool: rayon::ThreadPool,
}

impl RayonExecutor {
    /// Build a pool with the given thread count; 0 means one thread per
    /// available CPU.
    pub fn new(threads: usize) -> CliResult<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .phase_ctx(Phase::Config, "cannot build the worker thread pool")?;
        Ok(RayonExecutor { pool })
    }
}

impl SweepExecutor for RayonExecutor {
    fn sweep(
        &self,
        states: &mut [ReplicaState],
        rngs: &mut [ChaCha8Rng],
        betas: &[f64],
        op: &(dyn Fn(&mut ReplicaState, &mut ChaCha8Rng, f64) + Sync),
    ) {
        self.pool.install(|| {
            states
                .par_iter_mut()
                .zip_eq(rngs.par_iter_mut())
                .zip_eq(betas.par_iter())
                .for_each(|((state, rng), &beta)| op(state, rng, beta));
        });
    }
}
