//! Deterministic random streams.
//!
//! Every replicate draws from its own ChaCha stream keyed by `(seed, replicate)`.
//! Coupled runs additionally need per-particle coins that do not depend on how
//! many other draws were made; [`CoinStream`] provides those, keyed by
//! `(event id, label)`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;

pub type SimRng = ChaCha8Rng;

/// Main generator for one replicate.
pub fn replicate_rng(seed: u64, replicate: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

// splitmix64 finalizer; decorrelates the coin key from the main seed
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Counter-based coins: the key for `label` at event `id` is the `label`-th
/// word of ChaCha stream `id` under a per-replicate key.
#[derive(Debug, Clone)]
pub struct CoinStream {
    key: u64,
}

impl CoinStream {
    pub fn new(seed: u64, replicate: u64) -> Self {
        Self {
            key: mix(mix(seed ^ 0x636f_696e_7374_726d) ^ replicate),
        }
    }

    /// Keys for labels `0..count` at event `id`.
    pub fn keys(&self, id: u64, count: usize) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.key);
        rng.set_stream(id);
        (0..count).map(|_| rng.next_u64()).collect()
    }
}

/// Runs `f(replicate, rng)` for every replicate in parallel and returns the
/// results in replicate order.
pub fn run_replicates<T, F>(seed: u64, reps: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &mut SimRng) -> Result<T> + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(seed, rep);
            f(rep, &mut rng)
        })
        .collect()
}
