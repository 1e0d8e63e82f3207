//! Counter-based seeding for reproducible parallel Monte Carlo.
//!
//! A trial never shares a generator with another trial: its stream is seeded
//! from `(master_seed, trial_index)` alone, so the multiset of draws is fixed
//! regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// The SplitMix64 finalizer. A bijection on `u64`.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial_index` under `master_seed`.
///
/// For a fixed master the map is injective over all `2^64` indices: the index
/// is multiplied by an odd constant, offset, and passed through a bijective
/// mixer. Pure integer arithmetic, so identical on every platform.
pub fn rng_substream(master_seed: u64, trial_index: u64) -> u64 {
    mix64(mix64(master_seed).wrapping_add(trial_index.wrapping_mul(GOLDEN_GAMMA)))
}

/// Derive an independent master seed for a named sub-experiment (one curve of
/// a sweep, one phase of a run).
pub fn derive_seed(master_seed: u64, stream: u64) -> u64 {
    mix64(master_seed ^ mix64(stream ^ 0x6a09_e667_f3bc_c909))
}

/// Generator for one trial.
pub fn trial_rng(master_seed: u64, trial_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(rng_substream(master_seed, trial_index))
}

/// Sum `f(i)` over `0..count`. Integer accumulation, so the result does not
/// depend on how the range is split across threads.
pub(crate) fn count_trials<F>(range: std::ops::Range<u64>, f: F) -> u64
where
    F: Fn(u64) -> u64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        range.into_par_iter().map(f).sum()
    }
    #[cfg(not(feature = "parallel"))]
    {
        range.map(f).sum()
    }
}

/// `(0..count).map(f)` collected in index order.
pub(crate) fn map_trials<T, F>(range: std::ops::Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        range.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        range.map(f).collect()
    }
}

/// Map every trial and combine the results with an associative, commutative
/// `combine` (integer tallies). Fails with the lowest-index error, if any.
pub(crate) fn reduce_trials<T, E, F, C>(range: std::ops::Range<u64>, identity: T, f: F, combine: C) -> Result<T, E>
where
    T: Send + Sync + Clone,
    E: Send,
    F: Fn(u64) -> Result<T, E> + Sync + Send,
    C: Fn(T, T) -> T + Sync + Send,
{
    let join = |a: Result<T, (u64, E)>, b: Result<T, (u64, E)>| match (a, b) {
        (Ok(x), Ok(y)) => Ok(combine(x, y)),
        (Err(e), Ok(_)) | (Ok(_), Err(e)) => Err(e),
        (Err(e1), Err(e2)) => Err(if e1.0 <= e2.0 { e1 } else { e2 }),
    };
    let keyed = |t: u64| f(t).map_err(|e| (t, e));
    #[cfg(feature = "parallel")]
    let out = {
        use rayon::prelude::*;
        range.into_par_iter().map(keyed).reduce(|| Ok(identity.clone()), join)
    };
    #[cfg(not(feature = "parallel"))]
    let out = range.map(keyed).fold(Ok(identity.clone()), join);
    out.map_err(|(_, e)| e)
}
