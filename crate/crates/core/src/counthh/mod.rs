//! L2 heavy hitters for insertion-only streams in random order.
//!
//! [`CountHhShort`] needs the stream length and an `F_2` estimate up front. It cuts the
//! stream into about `eps sqrt(F_2)` blocks, hashes items to blocks, and watches for a
//! block whose tested items collapse to a single fingerprint that reappears in the
//! next block. The owner of that fingerprint is identified and its occurrences are
//! counted over a window of blocks. [`CountHh`] removes the up-front knowledge by
//! doubling: instance `j + 1` covers updates `2^j .. 2^j + 2^{j+1} - 1`.

mod short;

pub use short::{
    BlockState, CountHhShort, IdentifyInstance, IdentifyOutcome, Report, ShortParams,
};

use crate::config::CountHhConstants;
use crate::error::{Error, Result};
use crate::hashing::derive_seed;
use crate::sketches::AmsF2Sketch;

pub const DEFAULT_AMS_ROWS: usize = 5;
pub const DEFAULT_AMS_COLS: usize = 64;

#[derive(Debug, Clone)]
struct Live {
    j: u32,
    /// 1-based position of the first update in this instance's window.
    start: u64,
    short: CountHhShort,
}

impl Live {
    fn covers(&self, t: u64) -> bool {
        t >= self.start && t < self.start + self.short.params().len
    }
}

/// Doubling wrapper around [`CountHhShort`].
#[derive(Debug, Clone)]
pub struct CountHh {
    theta: f64,
    inner_theta: f64,
    consts: CountHhConstants,
    seed: u64,
    t: u64,
    sketch: Option<AmsF2Sketch>,
    live: Vec<Live>,
    finalized: bool,
    rounding: Option<f64>,
    peak_counters: u64,
}

impl CountHh {
    /// An instance with its own AMS sketch.
    pub fn new(theta: f64, consts: CountHhConstants, seed: u64) -> Self {
        let sketch = AmsF2Sketch::new(DEFAULT_AMS_ROWS, DEFAULT_AMS_COLS, derive_seed(seed, "chh-ams", 0));
        Self::build(theta, consts, seed, Some(sketch))
    }

    /// An instance that reads `F_2` from a sketch the caller maintains over the same
    /// substream (see [`CountHh::process_shared`]).
    pub fn with_external_f2(theta: f64, consts: CountHhConstants, seed: u64) -> Self {
        Self::build(theta, consts, seed, None)
    }

    fn build(theta: f64, consts: CountHhConstants, seed: u64, sketch: Option<AmsF2Sketch>) -> Self {
        assert!(theta > 0.0 && theta < 1.0, "threshold must lie in (0, 1)");
        let mut chh = Self {
            theta,
            inner_theta: theta / consts.inner_divisor,
            consts,
            seed,
            t: 0,
            sketch,
            live: Vec::new(),
            finalized: false,
            rounding: None,
            peak_counters: 0,
        };
        chh.spawn(0, 0.0);
        chh.note_space();
        chh
    }

    /// Round reported frequencies to the nearest power of `base`.
    pub fn with_rounding(mut self, base: f64) -> Self {
        assert!(base > 1.0);
        self.rounding = Some(base);
        self
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn inner_theta(&self) -> f64 {
        self.inner_theta
    }

    pub fn len(&self) -> u64 {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }

    /// `(j, instance)` for each live fixed-length instance.
    pub fn instances(&self) -> impl Iterator<Item = (u32, &CountHhShort)> {
        self.live.iter().map(|l| (l.j, &l.short))
    }

    pub fn live_instances(&self) -> usize {
        self.live.len()
    }

    /// Largest reported-set size over live instances.
    pub fn max_reported(&self) -> usize {
        self.live.iter().map(|l| l.short.reports().len()).max().unwrap_or(0)
    }

    pub fn report_cap(&self) -> usize {
        (2.0 / (self.inner_theta * self.inner_theta)).floor() as usize
    }

    pub fn process(&mut self, item: u64) {
        let mut sketch = self.sketch.take().expect("CountHh::process needs an owned F2 sketch");
        sketch.update(item, 1);
        self.step(item, || sketch.estimate());
        self.sketch = Some(sketch);
    }

    /// `sketch` must already include `item`.
    pub fn process_shared(&mut self, item: u64, sketch: &AmsF2Sketch) {
        self.step(item, || sketch.estimate());
    }

    fn step(&mut self, item: u64, f2_now: impl FnOnce() -> f64) {
        assert!(!self.finalized, "update after finalize");
        self.t += 1;
        let t = self.t;
        for l in self.live.iter_mut() {
            if l.covers(t) {
                l.short.process(item);
            }
        }
        if (t + 1).is_power_of_two() {
            let j = (t + 1).trailing_zeros();
            self.spawn(j, 1.01 * f2_now());
            self.live.retain(|l| j == 0 || l.j + 1 != j);
            self.note_space();
        }
        debug_assert!(self.live.len() <= 2);
    }

    fn spawn(&mut self, j: u32, f2_tilde: f64) {
        let len = 1u64 << (j + 1);
        let seed = derive_seed(self.seed, "chh-short", j as u64 + 1);
        let short = CountHhShort::new(self.inner_theta, len, f2_tilde, &self.consts, seed);
        self.live.push(Live { j: j + 1, start: self.t + 1, short });
    }

    fn note_space(&mut self) {
        let c = self.capacity_counters();
        self.peak_counters = self.peak_counters.max(c);
    }

    /// Counters provisioned right now: the sketch (if owned) plus live instances.
    pub fn capacity_counters(&self) -> u64 {
        let sk = self.sketch.as_ref().map_or(0, |s| {
            let (r, c) = s.dims();
            (r * c) as u64
        });
        sk + self.live.iter().map(|l| l.short.params().capacity_counters()).sum::<u64>()
    }

    pub fn peak_counters(&self) -> u64 {
        self.peak_counters
    }

    pub fn finalize(&mut self) {
        self.finalized = true;
    }

    pub fn f2_estimate(&self) -> Option<f64> {
        self.sketch.as_ref().map(|s| s.estimate())
    }

    /// Final report using the owned sketch and the construction threshold.
    pub fn report(&self) -> Result<Vec<(u64, f64)>> {
        let f2 = self
            .f2_estimate()
            .ok_or_else(|| Error::Config("no owned F2 sketch; use report_with".into()))?;
        self.report_with(f2, self.theta)
    }

    /// Items from the second-newest instance whose rescaled estimate clears
    /// `(1 - eps/5) eps sqrt(F2_hat) / 1.01`.
    pub fn report_with(&self, f2_hat: f64, threshold: f64) -> Result<Vec<(u64, f64)>> {
        if !self.finalized {
            return Err(Error::NotFinalized);
        }
        let Some(newest) = self.live.iter().map(|l| l.j).max() else {
            return Ok(Vec::new());
        };
        let Some(src) = self.live.iter().find(|l| l.j + 1 == newest) else {
            return Ok(Vec::new());
        };
        let scale = self.t as f64 / src.short.params().len as f64;
        let cut = (1.0 - threshold / 5.0) * threshold * f2_hat.max(0.0).sqrt() / 1.01;
        let mut out: Vec<(u64, f64)> = src
            .short
            .reports()
            .iter()
            .map(|r| (r.item, scale * r.estimate))
            .filter(|&(_, f)| f >= cut)
            .map(|(i, f)| (i, self.rounding.map_or(f, |b| round_to_power(f, b))))
            .collect();
        out.sort_by_key(|&(i, _)| i);
        Ok(out)
    }
}

/// Nearest power of `base` on a log scale.
pub fn round_to_power(value: f64, base: f64) -> f64 {
    if value <= 0.0 {
        return value;
    }
    base.powf((value.ln() / base.ln()).round())
}
