//! Pairwise-independent hashing over the Mersenne prime `2^61 - 1`, seed derivation,
//! and the nested subsampling hierarchy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const MERSENNE_61: u64 = (1 << 61) - 1;

#[inline]
fn reduce(x: u128) -> u64 {
    let lo = (x as u64) & MERSENNE_61;
    let hi = (x >> 61) as u64;
    let mut r = lo + (hi & MERSENNE_61) + (hi >> 61);
    while r >= MERSENNE_61 {
        r -= MERSENNE_61;
    }
    r
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent-looking seed for component `(tag, index)` of a master seed.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut h = mix64(master);
    for b in tag.bytes() {
        h = mix64(h ^ b as u64);
    }
    mix64(h ^ mix64(index))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `x -> (a x + b) mod P` with `P = 2^61 - 1`, scaled down to `[0, range)` by a
/// multiply-shift of the affine value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseHash {
    a: u64,
    b: u64,
    range: u64,
}

impl PairwiseHash {
    pub fn new(a: u64, b: u64, range: u64) -> Self {
        assert!(range > 0, "hash range must be positive");
        Self { a: a % MERSENNE_61, b: b % MERSENNE_61, range }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, range: u64) -> Self {
        let a = rng.gen_range(1..MERSENNE_61);
        let b = rng.gen_range(0..MERSENNE_61);
        Self::new(a, b, range)
    }

    pub fn range(&self) -> u64 {
        self.range
    }

    /// The affine value in `[0, P)`. For `a != 0` this is injective on `[0, P)`.
    #[inline]
    pub fn raw(&self, x: u64) -> u64 {
        reduce(self.a as u128 * (x % MERSENNE_61) as u128 + self.b as u128)
    }

    #[inline]
    pub fn eval(&self, x: u64) -> u64 {
        ((self.raw(x) as u128 * self.range as u128) >> 61) as u64
    }

    /// A fixed function of the affine value, so the family stays pairwise independent.
    /// The mixer breaks the low-discrepancy pattern that any single bit of an affine
    /// map shows on consecutive inputs.
    #[inline]
    pub fn sign(&self, x: u64) -> i64 {
        if mix64(self.raw(x)) >> 63 == 0 {
            1
        } else {
            -1
        }
    }

    /// Value in `[0, 1)`.
    #[inline]
    pub fn unit(&self, x: u64) -> f64 {
        self.raw(x) as f64 / MERSENNE_61 as f64
    }
}

/// `p_i = min(1, gamma / 2^i)`.
pub fn sample_rate(level: u32, gamma: f64) -> f64 {
    (gamma * (-(level as f64)).exp2()).min(1.0)
}

/// Nested substreams `I_0 ⊇ I_1 ⊇ ...` for one repetition: item `k` is in `I_i`
/// iff its unit hash value is below `p_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleHierarchy {
    hash: PairwiseHash,
    gamma: f64,
}

impl SubsampleHierarchy {
    pub fn new(seed: u64, gamma: f64) -> Self {
        let mut rng = rng_from_seed(seed);
        Self { hash: PairwiseHash::random(&mut rng, MERSENNE_61), gamma }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    pub fn unit_value(&self, item: u64) -> f64 {
        self.hash.unit(item)
    }

    #[inline]
    pub fn is_sampled(&self, item: u64, level: u32) -> bool {
        self.unit_value(item) < sample_rate(level, self.gamma)
    }
}
