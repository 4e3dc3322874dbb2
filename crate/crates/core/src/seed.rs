//! Named sub-seed derivation.
//!
//! Every random decision in the pipeline draws from a generator seeded by
//! `derive(master, labels)`, so varying one stage (or one sweep axis) never
//! perturbs the random streams of the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Deterministic RNG used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Label component for [`derive`].
#[derive(Debug, Clone, Copy)]
pub enum Part<'a> {
    Str(&'a str),
    Num(u64),
}

impl<'a> From<&'a str> for Part<'a> {
    fn from(s: &'a str) -> Self {
        Part::Str(s)
    }
}

impl From<u64> for Part<'_> {
    fn from(n: u64) -> Self {
        Part::Num(n)
    }
}

impl From<usize> for Part<'_> {
    fn from(n: usize) -> Self {
        Part::Num(n as u64)
    }
}

impl From<u32> for Part<'_> {
    fn from(n: u32) -> Self {
        Part::Num(u64::from(n))
    }
}

/// Derives a sub-seed from a master seed and a label path.
pub fn derive(master: u64, parts: &[Part<'_>]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    for part in parts {
        match part {
            Part::Str(s) => {
                hasher.update([0u8]);
                hasher.update((s.len() as u64).to_le_bytes());
                hasher.update(s.as_bytes());
            }
            Part::Num(n) => {
                hasher.update([1u8]);
                hasher.update(n.to_le_bytes());
            }
        }
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest is 32 bytes"))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shorthand for `rng(derive(master, parts))`.
pub fn rng_for(master: u64, parts: &[Part<'_>]) -> Rng {
    rng(derive(master, parts))
}

/// Hex SHA-256 of arbitrary bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
