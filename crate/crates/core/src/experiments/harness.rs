//! Deterministic seeding and parallel trial execution.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Stream tag for draws from limit samplers, kept apart from finite-n trials.
pub const LIMIT_STREAM: u64 = 0x4c49_4d49_545f_5050;
/// Stream tag for auxiliary checks run inside experiments.
pub const AUX_STREAM: u64 = 0x4155_5849_4c49_4152;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based seed for trial `index` under `master`.
pub fn split_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

pub fn trial_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Runs `f(index, seed, rng)` for `index in 0..trials` in parallel; results
/// come back in index order and do not depend on scheduling.
pub fn run_trials<T, F>(master: u64, trials: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, u64, &mut ChaCha8Rng) -> Result<T> + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let seed = split_seed(master, i as u64);
            let mut rng = trial_rng(seed);
            f(i, seed, &mut rng)
        })
        .collect()
}

/// Runs `op` on a pool with `workers` threads (0 = rayon default).
pub fn with_workers<T: Send, F: FnOnce() -> T + Send>(workers: usize, op: F) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(op))
}
