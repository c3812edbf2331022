//! Keyed pseudorandom functions and seed derivation.
//!
//! Every random decision in the crate (subsampling, carving centers, sketch
//! seeds) is a deterministic function of a 64-bit seed and the inputs below.

use std::hash::Hasher;

use siphasher::sip::SipHasher24;
use siphasher::sip128::{Hasher128, SipHasher24 as SipHasher128};

use crate::core::GridPoint;

/// SipHash-2-4 keyed by a 64-bit seed and a domain tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Prf {
    k0: u64,
    k1: u64,
}

impl Prf {
    pub fn new(seed: u64, domain: u64) -> Self {
        let k0 = mix64(seed ^ mix64(domain.wrapping_add(0x243f_6a88_85a3_08d3)));
        let k1 = mix64(k0 ^ 0x1319_8a2e_0370_7344 ^ domain.rotate_left(17));
        Self { k0, k1 }
    }

    pub fn eval(&self, words: &[u64]) -> u64 {
        let mut h = SipHasher24::new_with_keys(self.k0, self.k1);
        for w in words {
            h.write(&w.to_le_bytes());
        }
        h.finish()
    }

    /// Uniform value in `[0, 1)` with 53 bits of precision.
    pub fn unit(&self, words: &[u64]) -> f64 {
        (self.eval(words) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Domain tags keep derived seeds of different components apart.
pub mod domain {
    pub const SUBSAMPLE: u64 = 1;
    pub const CARVE: u64 = 2;
    pub const SKETCH: u64 = 3;
    pub const SAMPLER: u64 = 4;
    pub const LEVEL: u64 = 5;
    pub const GENERATOR: u64 = 6;
    pub const ESTIMATOR: u64 = 7;
    pub const DISTINCT: u64 = 8;
    pub const FALLBACK: u64 = 9;
}

/// Derives an independent-looking child seed.
pub fn derive(seed: u64, domain: u64, path: &[u64]) -> u64 {
    Prf::new(seed, domain).eval(path)
}

/// 128-bit digest of a grid point under a fixed public key.
///
/// Keyed functions of points take this digest as input, so a point is hashed
/// once per update no matter how many samplers look at it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PointKey(pub u64, pub u64);

impl PointKey {
    pub fn of(p: &GridPoint) -> Self {
        Self::of_words(p.coords())
    }

    pub fn of_words(words: &[i64]) -> Self {
        let mut h = SipHasher128::new_with_keys(0x7566_6c73_7472_6561, 0x6d70_6f69_6e74_6b65);
        h.write(&(words.len() as u64).to_le_bytes());
        for w in words {
            h.write(&w.to_le_bytes());
        }
        let v = h.finish128();
        Self(v.h1, v.h2)
    }
}

/// SplitMix64 finalizer; a fast bijective mixer for sketch-internal hashing.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seeded mix of one word; used for per-sketch bucket and level choices.
#[inline]
pub fn keyed_mix(key: u64, x: u64) -> u64 {
    mix64(mix64(key ^ x) ^ key.rotate_left(23))
}
