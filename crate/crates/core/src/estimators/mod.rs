//! The one-pass random-order estimator and the two-pass estimator, plus space
//! accounting shared by both.
//!
//! Both estimators keep one nested subsampling hierarchy per repetition and one
//! heavy-hitter structure per `(repetition, sampling level)`. Only sampling levels
//! that some level set can map to are used; structures are allocated the first time
//! an item is routed to them.

mod random_order;
mod two_pass;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use random_order::RandomOrderFpEstimator;
pub use two_pass::{Phase, TwoPassFpEstimator};

use crate::config::{EstimatorConfig, UpperBound};
use crate::error::Result;
use crate::hashing::{derive_seed, SubsampleHierarchy};
use crate::levelsets::{LevelConfig, LevelEstimate, LevelParams};

/// Bits per counter in `bits_estimate`.
pub const WORD_BITS: u64 = 64;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceReport {
    pub counters_allocated: u64,
    pub bits_estimate: u64,
    /// Counters per component, e.g. `"countsketch"` or `"counthh"`.
    pub breakdown: BTreeMap<String, u64>,
    /// Counters per sampling level, summed over repetitions.
    pub per_level: BTreeMap<u32, u64>,
}

impl SpaceReport {
    pub(crate) fn add(&mut self, component: &str, level: Option<u32>, counters: u64) {
        self.counters_allocated += counters;
        self.bits_estimate = self.counters_allocated * WORD_BITS;
        *self.breakdown.entry(component.to_string()).or_default() += counters;
        if let Some(k) = level {
            *self.per_level.entry(k).or_default() += counters;
        }
    }
}

/// Result of finalizing either estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub levels: LevelEstimate,
    pub grid: LevelConfig,
    pub space: SpaceReport,
}

/// Sampling levels in use and the per-repetition hierarchies.
#[derive(Debug, Clone)]
pub(crate) struct Router {
    pub levels: Vec<u32>,
    pub rates: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub hierarchies: Vec<SubsampleHierarchy>,
}

impl Router {
    pub fn new(cfg: &EstimatorConfig, params: &LevelParams) -> Result<Self> {
        let x_max = (cfg.m_bound(params.n) as f64).powf(params.p);
        let levels = params.sampling_levels(params.max_levels(x_max))?;
        let rates = levels.iter().map(|&k| params.rate(k)).collect();
        let thresholds = levels.iter().map(|&k| params.threshold(k)).collect();
        let hierarchies = (0..params.reps)
            .map(|r| SubsampleHierarchy::new(derive_seed(cfg.seed, "hierarchy", r as u64), params.gamma))
            .collect();
        Ok(Self { levels, rates, thresholds, hierarchies })
    }

    /// Number of leading entries of `levels` whose substream contains `item` in
    /// repetition `r`. Rates are nonincreasing, so membership is a prefix.
    #[inline]
    pub fn depth(&self, r: usize, item: u64) -> usize {
        let u = self.hierarchies[r].unit_value(item);
        self.rates.partition_point(|&rate| u < rate)
    }

    pub fn index_of(&self, k: u32) -> Option<usize> {
        self.levels.binary_search(&k).ok()
    }
}

/// `X` for the level grid.
pub(crate) fn upper_bound(bound: UpperBound, p: f64, f1: f64, f2_hat: f64) -> f64 {
    match bound {
        UpperBound::F1Power => f1.powf(p),
        UpperBound::SketchedF2 => (1.01 * f2_hat.max(0.0)).powf(p / 2.0),
        UpperBound::Given(x) => x,
    }
}

pub(crate) fn draw_grid(seed: u64, x: f64) -> LevelConfig {
    let mut rng = crate::hashing::rng_from_seed(derive_seed(seed, "zeta", 0));
    LevelConfig::new(x, LevelConfig::draw_zeta(&mut rng))
}

pub(crate) fn cell_seed(master: u64, tag: &str, r: usize, k: u32) -> u64 {
    derive_seed(master, tag, ((r as u64) << 32) | k as u64)
}
