//! Splittable, counter-based random streams.
//!
//! A stream is a ChaCha20 keystream (itself counter based) plus a split
//! counter. `split(tag)` derives a child key by hashing the parent key, the
//! split counter and the tag, then bumps the split counter. Composite maps
//! split their stream once per constituent, in argument order, so the layout
//! of every sample path is fixed by the structure of the map.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug)]
pub struct RandomStream {
    key: [u8; 32],
    splits: u64,
    rng: ChaCha20Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"equisym/root");
        h.update(seed.to_le_bytes());
        Self::from_key(h.finalize().into())
    }

    fn from_key(key: [u8; 32]) -> Self {
        Self {
            key,
            splits: 0,
            rng: ChaCha20Rng::from_seed(key),
        }
    }

    /// Derive an independent child stream. Distinct `(splits, tag)` pairs give
    /// distinct SHA-256 preimages, so children never share a key in practice.
    pub fn split(&mut self, tag: u64) -> RandomStream {
        let mut h = Sha256::new();
        h.update(b"equisym/split");
        h.update(self.key);
        h.update(self.splits.to_le_bytes());
        h.update(tag.to_le_bytes());
        self.splits += 1;
        Self::from_key(h.finalize().into())
    }

    pub fn key(&self) -> &[u8; 32] {
        &self.key
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        use rand_distr::{Distribution, StandardNormal};
        StandardNormal.sample(self)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
