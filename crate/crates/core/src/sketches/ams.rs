use crate::error::{Error, Result};
use crate::hashing::{rng_from_seed, PairwiseHash, MERSENNE_61};
use crate::stats::median;

use super::BlobReader;

pub const AMS_MAGIC: &[u8; 4] = b"AMS1";

/// Tug-of-war sketch: `rows x cols` counters, each with its own sign hash.
/// The estimate is the median over rows of the mean squared counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AmsF2Sketch {
    seed: u64,
    rows: usize,
    cols: usize,
    signs: Vec<PairwiseHash>,
    counters: Vec<i64>,
}

impl AmsF2Sketch {
    pub fn new(rows: usize, cols: usize, seed: u64) -> Self {
        assert!(rows > 0 && cols > 0);
        let mut rng = rng_from_seed(seed);
        let signs = (0..rows * cols).map(|_| PairwiseHash::random(&mut rng, MERSENNE_61)).collect();
        Self { seed, rows, cols, signs, counters: vec![0; rows * cols] }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn counters(&self) -> &[i64] {
        &self.counters
    }

    pub fn update(&mut self, item: u64, delta: i64) {
        for (c, h) in self.counters.iter_mut().zip(&self.signs) {
            *c += h.sign(item) * delta;
        }
    }

    pub fn estimate(&self) -> f64 {
        let per_row: Vec<f64> = self
            .counters
            .chunks(self.cols)
            .map(|row| row.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>() / self.cols as f64)
            .collect();
        median(&per_row)
    }

    pub fn merge(&mut self, other: &AmsF2Sketch) -> Result<()> {
        if self.seed != other.seed || self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Merge("AMS sketches differ in seed or dimensions".into()));
        }
        for (a, b) in self.counters.iter_mut().zip(&other.counters) {
            *a += b;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 8 * self.counters.len());
        out.extend_from_slice(AMS_MAGIC);
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        for c in &self.counters {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let (sk, rest) = Self::read_prefix(buf)?;
        if !rest.is_empty() {
            return Err(Error::Format("trailing bytes after AMS blob".into()));
        }
        Ok(sk)
    }

    /// Parses one blob from the front of `buf` and returns the unread tail.
    pub(crate) fn read_prefix(buf: &[u8]) -> Result<(Self, &[u8])> {
        let mut r = BlobReader::new(buf, AMS_MAGIC)?;
        let seed = r.u64()?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        if rows == 0 || cols == 0 {
            return Err(Error::Format("AMS blob has zero dimension".into()));
        }
        let mut sk = Self::new(rows, cols, seed);
        for c in sk.counters.iter_mut() {
            *c = r.i64()?;
        }
        Ok((sk, r.remaining()))
    }
}
