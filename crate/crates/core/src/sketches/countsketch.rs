use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::{rng_from_seed, PairwiseHash, MERSENNE_61};
use crate::stats::median;

use super::BlobReader;

pub const CS_MAGIC: &[u8; 4] = b"CSK1";

/// Fraction of `threshold * L2` an estimate must reach to be reported.
pub const REPORT_FRACTION: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeavyHitter {
    pub item: u64,
    pub estimate: f64,
}

/// `depth x width` CountSketch with one bucket hash and one sign hash per row.
///
/// Heavy hitters come either from a sweep over caller-supplied items or, when
/// tracking is enabled, from a bounded map of the items with the largest estimates
/// seen so far.
#[derive(Debug, Clone, PartialEq)]
pub struct CountSketchTable {
    seed: u64,
    depth: usize,
    width: usize,
    buckets: Vec<PairwiseHash>,
    signs: Vec<PairwiseHash>,
    counters: Vec<i64>,
    tracked: Option<Tracker>,
}

#[derive(Debug, Clone, PartialEq)]
struct Tracker {
    capacity: usize,
    items: HashMap<u64, f64>,
}

impl CountSketchTable {
    pub fn new(depth: usize, width: usize, seed: u64) -> Self {
        assert!(depth > 0 && width > 0);
        let mut rng = rng_from_seed(seed);
        let mut buckets = Vec::with_capacity(depth);
        let mut signs = Vec::with_capacity(depth);
        for _ in 0..depth {
            buckets.push(PairwiseHash::random(&mut rng, width as u64));
            signs.push(PairwiseHash::random(&mut rng, MERSENNE_61));
        }
        Self { seed, depth, width, buckets, signs, counters: vec![0; depth * width], tracked: None }
    }

    /// `w = ceil(6 / threshold^2)` and `d = ceil(32 ln n)`.
    pub fn for_threshold(threshold: f64, n: u64, seed: u64) -> Self {
        Self::new(default_depth(n), width_for(threshold), seed)
    }

    pub fn with_tracking(mut self, capacity: usize) -> Self {
        self.tracked = Some(Tracker { capacity: capacity.max(1), items: HashMap::new() });
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.depth, self.width)
    }

    pub fn counters(&self) -> &[i64] {
        &self.counters
    }

    pub fn update(&mut self, item: u64, delta: i64) {
        for r in 0..self.depth {
            let b = self.buckets[r].eval(item) as usize;
            self.counters[r * self.width + b] += self.signs[r].sign(item) * delta;
        }
        if self.tracked.is_some() {
            let est = self.query(item);
            let t = self.tracked.as_mut().unwrap();
            t.items.insert(item, est);
            if t.items.len() > t.capacity {
                let (&weakest, _) = t
                    .items
                    .iter()
                    .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(a.0)))
                    .unwrap();
                t.items.remove(&weakest);
            }
        }
    }

    /// Median over rows of the signed bucket value.
    pub fn query(&self, item: u64) -> f64 {
        let vals: Vec<f64> = (0..self.depth)
            .map(|r| {
                let b = self.buckets[r].eval(item) as usize;
                (self.signs[r].sign(item) * self.counters[r * self.width + b]) as f64
            })
            .collect();
        median(&vals)
    }

    /// Median over rows of the row's sum of squared counters.
    pub fn f2_estimate(&self) -> f64 {
        let rows: Vec<f64> = self
            .counters
            .chunks(self.width)
            .map(|row| row.iter().map(|&c| (c as f64) * (c as f64)).sum())
            .collect();
        median(&rows)
    }

    /// Items among `candidates` whose estimate reaches `0.75 * threshold * l2`.
    pub fn heavy_hitters_among<I: IntoIterator<Item = u64>>(
        &self,
        threshold: f64,
        l2: f64,
        candidates: I,
    ) -> Vec<HeavyHitter> {
        let cut = REPORT_FRACTION * threshold * l2;
        candidates
            .into_iter()
            .filter_map(|item| {
                let estimate = self.query(item);
                (estimate >= cut && estimate > 0.0).then_some(HeavyHitter { item, estimate })
            })
            .collect()
    }

    /// Sweep over `[1, n]` unless tracking is enabled, in which case only the tracked
    /// items are examined.
    pub fn heavy_hitters(&self, threshold: f64, l2: f64, n: u64) -> Vec<HeavyHitter> {
        match &self.tracked {
            Some(t) => {
                let mut items: Vec<u64> = t.items.keys().copied().collect();
                items.sort_unstable();
                self.heavy_hitters_among(threshold, l2, items)
            }
            None => self.heavy_hitters_among(threshold, l2, 1..=n),
        }
    }

    pub fn merge(&mut self, other: &CountSketchTable) -> Result<()> {
        if self.seed != other.seed || self.depth != other.depth || self.width != other.width {
            return Err(Error::Merge("CountSketch tables differ in seed or dimensions".into()));
        }
        for (a, b) in self.counters.iter_mut().zip(&other.counters) {
            *a += b;
        }
        let merged_items: Option<Vec<u64>> = match (&self.tracked, &other.tracked) {
            (Some(a), Some(b)) => Some(a.items.keys().chain(b.items.keys()).copied().collect()),
            _ => None,
        };
        if let Some(items) = merged_items {
            let ests: Vec<(u64, f64)> = items.iter().map(|&i| (i, self.query(i))).collect();
            let t = self.tracked.as_mut().unwrap();
            t.items = ests.into_iter().collect();
            let mut all: Vec<(u64, f64)> = t.items.drain().collect();
            all.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
            all.truncate(t.capacity);
            t.items = all.into_iter().collect();
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 8 * self.counters.len());
        out.extend_from_slice(CS_MAGIC);
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.depth as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        for c in &self.counters {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    /// Restores counters and hashes. Tracking state is not part of the blob.
    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let (t, rest) = Self::read_prefix(buf)?;
        if !rest.is_empty() {
            return Err(Error::Format("trailing bytes after CountSketch blob".into()));
        }
        Ok(t)
    }

    pub(crate) fn read_prefix(buf: &[u8]) -> Result<(Self, &[u8])> {
        let mut r = BlobReader::new(buf, CS_MAGIC)?;
        let seed = r.u64()?;
        let depth = r.u32()? as usize;
        let width = r.u32()? as usize;
        if depth == 0 || width == 0 {
            return Err(Error::Format("CountSketch blob has zero dimension".into()));
        }
        let mut t = Self::new(depth, width, seed);
        for c in t.counters.iter_mut() {
            *c = r.i64()?;
        }
        Ok((t, r.remaining()))
    }
}

pub fn default_depth(n: u64) -> usize {
    ((32.0 * (n.max(2) as f64).ln()).ceil() as usize).max(1)
}

pub fn width_for(threshold: f64) -> usize {
    (6.0 / (threshold * threshold)).ceil().max(1.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_from_threshold() {
        let t = CountSketchTable::for_threshold(0.5, 1000, 1);
        assert_eq!(t.dims(), ((32.0 * 1000f64.ln()).ceil() as usize, 24));
    }

    #[test]
    fn lone_item_is_exact() {
        let mut t = CountSketchTable::new(5, 8, 3);
        t.update(7, 10);
        t.update(7, -3);
        assert_eq!(t.query(7), 7.0);
        assert_eq!(t.f2_estimate(), 49.0);
    }

    #[test]
    fn blob_roundtrip() {
        let mut t = CountSketchTable::new(3, 7, 2);
        for i in 1..50 {
            t.update(i, i as i64);
        }
        let b = t.to_bytes();
        assert_eq!(&b[..4], b"CSK1");
        assert_eq!(CountSketchTable::from_bytes(&b).unwrap(), t);
    }

    #[test]
    fn tracking_keeps_heavy_item() {
        let mut t = CountSketchTable::new(7, 64, 4).with_tracking(4);
        for round in 0..50u64 {
            t.update(1, 1);
            for j in 0..20u64 {
                t.update(2 + (round * 20 + j) % 500, 1);
            }
        }
        let l2 = t.f2_estimate().sqrt();
        let hh = t.heavy_hitters(0.5, l2, 10_000);
        assert_eq!(hh.len(), 1);
        assert_eq!(hh[0].item, 1);
    }
}
