//! Replicate-loop execution and counter-based RNG streams.
//!
//! All Monte Carlo loops in this crate are expressed as index-addressed maps:
//! replicate `i` derives its own RNG stream from `(seed, i)` and writes slot
//! `i` of the output. That makes results independent of scheduling, so the
//! parallel and sequential paths produce identical bytes.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// RNG stream for one replicate. Same `(seed, stream)` always yields the
/// same draw sequence regardless of what other replicates do.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Map `f` over `0..n`, collecting results in index order. Runs on the rayon
/// pool when the `parallel` feature is enabled, sequentially otherwise.
#[cfg(feature = "parallel")]
pub fn indexed_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n`, collecting results in index order. Runs on the rayon
/// pool when the `parallel` feature is enabled, sequentially otherwise.
#[cfg(not(feature = "parallel"))]
pub fn indexed_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    indexed_map_serial(n, f)
}

/// Always-sequential variant of [`indexed_map`]; the benchmark suite uses it
/// to compare both execution modes in a single build.
pub fn indexed_map_serial<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    (0..n).map(f).collect()
}
