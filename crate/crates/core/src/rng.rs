//! Counter-based random streams and the worker pool.
//!
//! Every independent unit of work (a path, an alpha bin, a batch of samples)
//! draws from its own ChaCha stream keyed by `(master_seed, purpose)` and
//! selected by the unit's index, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags separating the stream families of one master seed.
pub mod purpose {
    pub const CHAIN: u64 = 0x6368_6169_6e00_0001;
    pub const TRAJECTORY: u64 = 0x7472_616a_0000_0002;
    pub const SDE: u64 = 0x7364_6500_0000_0003;
    pub const LEMMA: u64 = 0x6c65_6d6d_6100_0004;
    pub const INVARIANCE: u64 = 0x696e_7661_7200_0005;
}

/// Name of the environment variable capping the worker count.
pub const THREADS_ENV: &str = "KNUDSEN_THREADS";

/// Stream `index` of the family `(master_seed, purpose)`.
pub fn stream(master_seed: u64, purpose: u64, index: u64) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&purpose.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Sub-purpose for a numbered component (a lemma, a bin ladder rung, ...).
pub fn tagged(purpose: u64, tag: u64) -> u64 {
    purpose ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Worker count from `KNUDSEN_THREADS`, or the machine's parallelism.
pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `f` on a pool of `threads` workers (`None`: [`worker_count`]).
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    let n = threads.unwrap_or_else(worker_count);
    match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
