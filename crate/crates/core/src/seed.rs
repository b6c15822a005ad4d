//! Deterministic randomness. A run owns one root seed; each stochastic
//! operation draws a fresh generator keyed by `(root, tag, counter)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

pub const SEED_ENV: &str = "POINTLOC_SEED";
pub const DEFAULT_SEED: u64 = 0x5eed_2024;

#[derive(Debug, Clone)]
pub struct Streams {
    root: u64,
    counters: BTreeMap<&'static str, u64>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

impl Streams {
    pub fn new(root: u64) -> Self {
        Self { root, counters: BTreeMap::new() }
    }

    /// Root seed from `POINTLOC_SEED` when set and parseable.
    pub fn from_env() -> Self {
        let root = std::env::var(SEED_ENV).ok().and_then(|s| s.trim().parse().ok()).unwrap_or(DEFAULT_SEED);
        Self::new(root)
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn rng(&mut self, tag: &'static str) -> ChaCha8Rng {
        let counter = self.counters.entry(tag).or_insert(0);
        let c = *counter;
        *counter += 1;
        ChaCha8Rng::from_seed(derive(self.root, fnv1a(tag), c))
    }

    /// Independent child stream set, e.g. one per trial.
    pub fn child(&self, index: u64) -> Streams {
        Streams::new(splitmix(self.root ^ splitmix(index.wrapping_add(0x51))))
    }
}

fn derive(root: u64, tag: u64, counter: u64) -> [u8; 32] {
    let mut out = [0u8; 32];
    let mut s = splitmix(root) ^ splitmix(tag.rotate_left(17)) ^ counter.wrapping_mul(0xa076_1d64_78bd_642f);
    for chunk in out.chunks_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    out
}
