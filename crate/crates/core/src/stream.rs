use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::CompensatedSum;

/// One stream update. Items are 1-based, as in the file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Update {
    pub item: u64,
    pub delta: i64,
}

impl Update {
    pub fn new(item: u64, delta: i64) -> Self {
        Self { item, delta }
    }

    pub fn insert(item: u64) -> Self {
        Self { item, delta: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StreamMode {
    InsertionOnly,
    Turnstile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StreamOrder {
    /// The producer promises a uniformly random permutation.
    Random,
    Arbitrary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamMeta {
    pub n: u64,
    pub m: u64,
    pub mode: StreamMode,
    pub order: StreamOrder,
}

impl StreamMeta {
    /// Meta for an in-memory update list: mode is inferred from the deltas.
    pub fn describe(n: u64, updates: &[Update], order: StreamOrder) -> Self {
        let mode = if updates.iter().all(|u| u.delta == 1) {
            StreamMode::InsertionOnly
        } else {
            StreamMode::Turnstile
        };
        Self { n, m: updates.len() as u64, mode, order }
    }
}

#[inline]
pub(crate) fn check_item(item: u64, n: u64) -> Result<()> {
    if item == 0 || item > n {
        Err(Error::ItemOutOfRange { item, n })
    } else {
        Ok(())
    }
}

/// Dense frequency vector over `[1, n]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyVector {
    counts: Vec<i64>,
}

impl FrequencyVector {
    pub fn zeros(n: u64) -> Self {
        Self { counts: vec![0; n as usize] }
    }

    pub fn from_counts(counts: Vec<i64>) -> Self {
        Self { counts }
    }

    pub fn n(&self) -> u64 {
        self.counts.len() as u64
    }

    pub fn get(&self, item: u64) -> i64 {
        self.counts[(item - 1) as usize]
    }

    pub fn counts(&self) -> &[i64] {
        &self.counts
    }

    pub fn apply(&mut self, u: &Update) -> Result<()> {
        check_item(u.item, self.n())?;
        self.counts[(u.item - 1) as usize] += u.delta;
        Ok(())
    }

    /// `(item, f_item)` for every nonzero coordinate.
    pub fn nonzero(&self) -> impl Iterator<Item = (u64, i64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .map(|(i, &c)| (i as u64 + 1, c))
    }

    pub fn l1(&self) -> u64 {
        self.counts.iter().map(|c| c.unsigned_abs()).sum()
    }
}

pub fn apply_stream(updates: &[Update], n: u64) -> Result<FrequencyVector> {
    let mut f = FrequencyVector::zeros(n);
    for u in updates {
        f.apply(u)?;
    }
    Ok(f)
}

/// `sum_k |f_k|^p`, accumulated with compensated summation.
pub fn exact_fp(f: &FrequencyVector, p: f64) -> f64 {
    f.counts
        .iter()
        .filter(|&&c| c != 0)
        .map(|&c| (c.unsigned_abs() as f64).powf(p))
        .collect::<CompensatedSum>()
        .value()
}

/// `(F_2, L_2)`.
pub fn exact_f2_l2(f: &FrequencyVector) -> (f64, f64) {
    let f2 = f
        .counts
        .iter()
        .map(|&c| {
            let c = c as f64;
            c * c
        })
        .collect::<CompensatedSum>()
        .value();
    (f2, f2.sqrt())
}
