use std::collections::{HashMap, HashSet};
use std::hash::{BuildHasherDefault, Hasher};

use serde::{Deserialize, Serialize};

use crate::config::CountHhConstants;
use crate::hashing::{rng_from_seed, PairwiseHash, MERSENNE_61};

/// Fingerprints are already uniform, so the map hashes them by identity.
#[derive(Default)]
pub(crate) struct IdentityHasher(u64);

impl Hasher for IdentityHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0 << 8) | b as u64;
        }
    }

    fn write_u64(&mut self, x: u64) {
        self.0 = x.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    }
}

type FpMap = HashMap<u64, u32, BuildHasherDefault<IdentityHasher>>;

/// Derived sizes of one fixed-length instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShortParams {
    pub theta: f64,
    /// Declared stream length of this instance.
    pub len: u64,
    pub f2_tilde: f64,
    pub block_len: u64,
    pub blocks: u64,
    pub hashes: usize,
    pub overflow_cap: usize,
    pub horizon: u32,
    pub p_track: u32,
    pub report_cap: usize,
    pub launch_min_count: u32,
    pub extended_tracking: bool,
}

impl ShortParams {
    pub fn new(theta: f64, len: u64, f2_tilde: f64, c: &CountHhConstants) -> Self {
        let ln_inv = (1.0 / theta).ln();
        let target_blocks = (theta * f2_tilde.max(0.0).sqrt()).max(1.0);
        let block_len = ((len as f64 / target_blocks).ceil() as u64).max(1);
        let blocks = len.div_ceil(block_len).max(1);
        let ln_len = (len.max(3) as f64).ln();
        Self {
            theta,
            len,
            f2_tilde,
            block_len,
            blocks,
            hashes: ((c.hash_coeff * ln_inv).ceil() as usize).max(1),
            overflow_cap: ((c.overflow_coeff * ln_inv / (theta * theta)).ceil() as usize).max(1),
            horizon: ((c.horizon_coeff * ln_inv).ceil() as u32).max(1),
            p_track: ((c.window_coeff * ln_len / (theta * theta)).ceil() as u32).max(1),
            report_cap: (2.0 / (theta * theta)).floor() as usize,
            launch_min_count: c.launch_min_count.max(1),
            extended_tracking: c.extended_tracking,
        }
    }

    /// Words of state provisioned for this instance.
    pub fn capacity_counters(&self) -> u64 {
        let block_sets = (self.overflow_cap as u64).saturating_add(1).saturating_mul(4);
        let per_report = if self.extended_tracking { 4 } else { 2 };
        let reports = (self.report_cap as u64).saturating_mul(per_report);
        let hashes = 2 * (self.hashes as u64 + 1);
        block_sets.saturating_add(reports).saturating_add(hashes + 8)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockState {
    pub index: u64,
    /// Tested fingerprint -> occurrences counted during the following block.
    counts: FpMap,
    pub overflow: bool,
}

impl BlockState {
    fn new(index: u64) -> Self {
        Self { index, counts: FpMap::default(), overflow: false }
    }

    pub fn tested(&self) -> usize {
        self.counts.len()
    }

    /// The single fingerprint whose count reached `min_count`, if there is exactly one.
    pub fn unique_hit(&self, min_count: u32) -> Option<u64> {
        let mut hits = self.counts.iter().filter(|(_, &c)| c >= min_count);
        let first = hits.next().map(|(&k, _)| k);
        if hits.next().is_some() {
            None
        } else {
            first
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentifyOutcome {
    Pending,
    /// The fingerprint was matched to an item in this block.
    Resolved(u64),
    Abandoned,
    /// Tracking ended; `Some((id, xi))` when the occurrence count cleared the bar.
    Completed(Option<(u64, u64)>),
}

/// Search for the item behind a fingerprint, then count its occurrences.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifyInstance {
    pub origin: u64,
    pub fingerprint: u64,
    /// Block whose hash test produced the fingerprint.
    pub tested_block: u64,
    pub resolved: Option<u64>,
    /// Blocks scanned while searching.
    pub scanned: u32,
    pub xi: u64,
    /// Stream position where occurrence counting began.
    pub track_start: u64,
    tracked_blocks: u32,
    matches: Vec<u64>,
    horizon: u32,
    p_track: u32,
}

impl IdentifyInstance {
    pub fn new(origin: u64, fingerprint: u64, horizon: u32, p_track: u32) -> Self {
        Self {
            origin,
            fingerprint,
            tested_block: origin.saturating_sub(1),
            resolved: None,
            scanned: 0,
            xi: 0,
            track_start: 0,
            tracked_blocks: 0,
            matches: Vec::new(),
            horizon,
            p_track,
        }
    }

    pub fn p_track(&self) -> u32 {
        self.p_track
    }

    /// `tested` reports whether the item hashes to the tested block under some `h^q`.
    #[inline]
    pub fn observe(&mut self, item: u64, fp: u64, tested: impl FnOnce() -> bool) {
        match self.resolved {
            None => {
                if fp == self.fingerprint && self.matches.len() < 2 && !self.matches.contains(&item) && tested() {
                    self.matches.push(item);
                }
            }
            Some(id) => {
                if item == id {
                    self.xi += 1;
                }
            }
        }
    }

    pub fn end_block(&mut self) -> IdentifyOutcome {
        match self.resolved {
            None => {
                self.scanned += 1;
                if self.matches.len() == 1 {
                    let id = self.matches[0];
                    self.resolved = Some(id);
                    self.xi = 0;
                    IdentifyOutcome::Resolved(id)
                } else if self.scanned >= self.horizon {
                    IdentifyOutcome::Abandoned
                } else {
                    self.matches.clear();
                    IdentifyOutcome::Pending
                }
            }
            Some(id) => {
                self.tracked_blocks += 1;
                if self.tracked_blocks < self.p_track {
                    return IdentifyOutcome::Pending;
                }
                let bar = 1.01 / std::f64::consts::SQRT_2 * self.p_track as f64;
                if self.xi as f64 >= bar {
                    IdentifyOutcome::Completed(Some((id, self.xi)))
                } else {
                    IdentifyOutcome::Completed(None)
                }
            }
        }
    }

    /// Processes one completed block at once.
    pub fn step_block(
        &mut self,
        block: &[u64],
        fingerprint: impl Fn(u64) -> u64,
        tested: impl Fn(u64) -> bool,
    ) -> IdentifyOutcome {
        for &item in block {
            self.observe(item, fingerprint(item), || tested(item));
        }
        self.end_block()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub item: u64,
    pub xi: u64,
    /// Estimated frequency within this instance's window.
    pub estimate: f64,
    /// With extended tracking: where counting began and occurrences since then.
    pub start: u64,
    pub count: u64,
}

/// Heavy hitters over a stream of known length with a known `F_2` estimate.
#[derive(Debug, Clone)]
pub struct CountHhShort {
    params: ShortParams,
    hashes: Vec<PairwiseHash>,
    fingerprint: PairwiseHash,
    pos: u64,
    cur: BlockState,
    prev: Option<BlockState>,
    identify: Option<IdentifyInstance>,
    reported: Vec<Report>,
    reported_fps: HashSet<u64>,
    reported_items: HashMap<u64, usize>,
    launches: u64,
}

impl CountHhShort {
    pub fn new(theta: f64, len: u64, f2_tilde: f64, consts: &CountHhConstants, seed: u64) -> Self {
        let params = ShortParams::new(theta, len, f2_tilde, consts);
        let mut rng = rng_from_seed(seed);
        let hashes = (0..params.hashes).map(|_| PairwiseHash::random(&mut rng, params.blocks)).collect();
        let fingerprint = PairwiseHash::random(&mut rng, MERSENNE_61);
        Self {
            params,
            hashes,
            fingerprint,
            pos: 0,
            cur: BlockState::new(0),
            prev: None,
            identify: None,
            reported: Vec::new(),
            reported_fps: HashSet::new(),
            reported_items: HashMap::new(),
            launches: 0,
        }
    }

    pub fn params(&self) -> &ShortParams {
        &self.params
    }

    pub fn reports(&self) -> &[Report] {
        &self.reported
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn launches(&self) -> u64 {
        self.launches
    }

    pub fn identify(&self) -> Option<&IdentifyInstance> {
        self.identify.as_ref()
    }

    pub fn fingerprint_of(&self, item: u64) -> u64 {
        self.fingerprint.raw(item)
    }

    pub fn hashes_to(&self, item: u64, block: u64) -> bool {
        self.hashes.iter().any(|h| h.eval(item) == block)
    }

    /// Items past the declared length are ignored.
    pub fn process(&mut self, item: u64) {
        if self.pos >= self.params.len {
            return;
        }
        let block = self.cur.index;
        let fp = self.fingerprint.raw(item);

        let want_cur = !self.cur.overflow;
        let want_prev = match &self.prev {
            Some(prev) => !prev.overflow && prev.counts.contains_key(&fp),
            None => false,
        };
        let want_ident = matches!(&self.identify, Some(id) if id.resolved.is_none() && id.fingerprint == fp);

        let (mut in_cur, mut in_prev, mut in_tested) = (false, false, false);
        if want_cur || want_prev || want_ident {
            let tested_block = self.identify.as_ref().map(|i| i.tested_block);
            for h in &self.hashes {
                let v = h.eval(item);
                in_cur |= v == block;
                in_prev |= block > 0 && v == block - 1;
                in_tested |= Some(v) == tested_block;
            }
        }

        if want_cur && in_cur {
            self.cur.counts.entry(fp).or_insert(0);
            if self.cur.counts.len() > self.params.overflow_cap {
                self.cur.overflow = true;
                self.cur.counts.clear();
            }
        }
        if want_prev && in_prev {
            if let Some(c) = self.prev.as_mut().and_then(|p| p.counts.get_mut(&fp)) {
                *c += 1;
            }
        }
        if let Some(inst) = self.identify.as_mut() {
            inst.observe(item, fp, || in_tested);
        }
        if self.params.extended_tracking {
            if let Some(&idx) = self.reported_items.get(&item) {
                self.reported[idx].count += 1;
            }
        }

        self.pos += 1;
        if self.pos % self.params.block_len == 0 || self.pos == self.params.len {
            let full = self.pos % self.params.block_len == 0;
            self.close_block(full);
        }
        assert!(self.reported.len() <= self.params.report_cap.max(1));
        assert!(self.cur.counts.len() <= self.params.overflow_cap);
    }

    fn close_block(&mut self, full: bool) {
        let block = self.cur.index;
        if full {
            if let Some(inst) = self.identify.as_mut() {
                match inst.end_block() {
                    IdentifyOutcome::Pending => {}
                    IdentifyOutcome::Resolved(id) => {
                        if self.reported_items.contains_key(&id) {
                            self.identify = None;
                        } else {
                            inst.track_start = self.pos;
                        }
                    }
                    IdentifyOutcome::Abandoned | IdentifyOutcome::Completed(None) => self.identify = None,
                    IdentifyOutcome::Completed(Some((id, xi))) => {
                        let start = inst.track_start;
                        self.identify = None;
                        self.push_report(id, xi, start);
                    }
                }
            }
            if let Some(prev) = &self.prev {
                if !prev.overflow && self.identify.is_none() && self.reported.len() < self.params.report_cap {
                    if let Some(k) = prev.unique_hit(self.params.launch_min_count) {
                        if !self.reported_fps.contains(&k) {
                            self.identify = Some(IdentifyInstance::new(
                                block,
                                k,
                                self.params.horizon,
                                self.params.p_track,
                            ));
                            self.launches += 1;
                        }
                    }
                }
            }
        }
        if self.params.extended_tracking {
            let pos = self.pos;
            let len = self.params.len as f64;
            for r in self.reported.iter_mut() {
                r.estimate = len * r.count as f64 / (pos - r.start) as f64;
            }
        }
        let next = BlockState::new(block + 1);
        self.prev = Some(std::mem::replace(&mut self.cur, next));
    }

    fn push_report(&mut self, id: u64, xi: u64, start: u64) {
        if self.reported_items.contains_key(&id) || self.reported.len() >= self.params.report_cap {
            return;
        }
        let realized_blocks = self.params.len as f64 / self.params.block_len as f64;
        let mut estimate = realized_blocks * xi as f64 / self.params.p_track as f64;
        if self.params.extended_tracking && self.pos > start {
            estimate = self.params.len as f64 * xi as f64 / (self.pos - start) as f64;
        }
        self.reported_items.insert(id, self.reported.len());
        self.reported.push(Report { item: id, xi, estimate, start, count: xi });
        self.reported_fps.insert(self.fingerprint.raw(id));
    }
}
