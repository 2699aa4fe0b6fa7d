use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::{ConstantsMode, EstimatorConfig};
use crate::error::{Error, Result};
use crate::levelsets::{contribution_estimate, LevelParams, RepReports};
use crate::sketches::{default_depth, width_for, AmsF2Sketch, BlobReader, CountSketchTable, REPORT_FRACTION};
use crate::stream::{check_item, StreamMeta, StreamMode, Update};

use super::{cell_seed, draw_grid, upper_bound, Estimate, Router, SpaceReport};

pub const STATE_MAGIC: &[u8; 4] = b"FPT1";
pub const STATE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Pass1,
    /// Candidates frozen, no second-pass update seen yet.
    Between,
    Pass2,
    Done,
}

impl Phase {
    fn name(self) -> &'static str {
        match self {
            Phase::Pass1 => "pass1",
            Phase::Between => "between",
            Phase::Pass2 => "pass2",
            Phase::Done => "done",
        }
    }
}

/// Two-pass estimator for arbitrary-order streams.
///
/// Pass one feeds a CountSketch per `(repetition, sampling level)`. Freezing sweeps
/// the universe and keeps every item some table reports as heavy in a substream that
/// contains it. Pass two counts the candidates exactly, and the level sums use those
/// exact counts.
#[derive(Debug, Clone)]
pub struct TwoPassFpEstimator {
    cfg: EstimatorConfig,
    params: LevelParams,
    router: Router,
    mode: StreamMode,
    depth: usize,
    f2: AmsF2Sketch,
    tables: Vec<Vec<Option<CountSketchTable>>>,
    reported: Vec<Vec<Vec<u64>>>,
    phase: Phase,
    m1: u64,
    m2: u64,
    candidates: BTreeMap<u64, i64>,
    capacity: usize,
    all_candidates: bool,
}

impl TwoPassFpEstimator {
    pub fn new(cfg: EstimatorConfig, n: u64, mode: StreamMode) -> Result<Self> {
        let params = LevelParams::resolve(&cfg, n)?;
        let router = Router::new(&cfg, &params)?;
        let depth = match cfg.constants_mode {
            ConstantsMode::Paper => default_depth(n),
            ConstantsMode::Practical => cfg
                .practical
                .countsketch_rows
                .unwrap_or_else(|| (2.0 * (n.max(2) as f64).ln()).ceil() as usize + 1),
        };
        let planned: u64 = router
            .thresholds
            .iter()
            .map(|&t| (depth as u64).saturating_mul(width_for(t) as u64))
            .fold(0u64, u64::saturating_add)
            .saturating_mul(params.reps as u64);
        if planned > cfg.space_budget {
            return Err(Error::Infeasible(format!(
                "two-pass estimator would provision {planned} counters, budget is {}",
                cfg.space_budget
            )));
        }
        let capacity = candidate_capacity(&params);
        let pc = &cfg.practical;
        let f2 = AmsF2Sketch::new(pc.ams_rows, pc.ams_cols, cell_seed(cfg.seed, "ams", 0, 0));
        let slots = router.levels.len();
        let reps = params.reps;
        Ok(Self {
            cfg,
            params,
            router,
            mode,
            depth,
            f2,
            tables: vec![vec![None; slots]; reps],
            reported: vec![vec![Vec::new(); slots]; reps],
            phase: Phase::Pass1,
            m1: 0,
            m2: 0,
            candidates: BTreeMap::new(),
            capacity,
            all_candidates: false,
        })
    }

    /// Treat every item in the universe as a candidate. With full sampling this
    /// makes the estimate exact.
    pub fn with_all_candidates(mut self) -> Self {
        self.all_candidates = true;
        self
    }

    pub fn check_meta(&self, meta: &StreamMeta) -> Result<()> {
        if self.mode == StreamMode::InsertionOnly && meta.mode != StreamMode::InsertionOnly {
            return Err(Error::Mode("insertion-only estimator given a turnstile stream".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> &LevelParams {
        &self.params
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn sampling_levels(&self) -> &[u32] {
        &self.router.levels
    }

    pub fn candidate_capacity(&self) -> usize {
        self.capacity
    }

    /// Candidate items and their second-pass counts.
    pub fn candidates(&self) -> &BTreeMap<u64, i64> {
        &self.candidates
    }

    pub fn table(&self, r: usize, k: u32) -> Option<&CountSketchTable> {
        let idx = self.router.index_of(k)?;
        self.tables.get(r)?[idx].as_ref()
    }

    /// Items reported by table `(r, k)` at freeze time.
    pub fn reported(&self, r: usize, k: u32) -> Option<&[u64]> {
        let idx = self.router.index_of(k)?;
        Some(&self.reported.get(r)?[idx])
    }

    /// Whether `item` belongs to the substream of `(r, k)`.
    pub fn is_sampled(&self, r: usize, item: u64, k: u32) -> bool {
        self.router.hierarchies[r].is_sampled(item, k)
    }

    fn check_update(&self, u: &Update) -> Result<()> {
        check_item(u.item, self.params.n)?;
        if self.mode == StreamMode::InsertionOnly && u.delta != 1 {
            return Err(Error::Mode(format!(
                "insertion-only estimator got delta {} for item {}",
                u.delta, u.item
            )));
        }
        Ok(())
    }

    pub fn pass1(&mut self, u: Update) -> Result<()> {
        if self.phase != Phase::Pass1 {
            return Err(Error::Phase { op: "pass1", phase: self.phase.name() });
        }
        self.check_update(&u)?;
        self.m1 += 1;
        if u.delta == 0 {
            return Ok(());
        }
        self.f2.update(u.item, u.delta);
        let Self { cfg, router, depth, tables, .. } = self;
        for (r, row) in tables.iter_mut().enumerate() {
            let d = router.depth(r, u.item);
            for (idx, slot) in row.iter_mut().enumerate().take(d) {
                let t = slot.get_or_insert_with(|| {
                    let k = router.levels[idx];
                    CountSketchTable::new(*depth, width_for(router.thresholds[idx]), cell_seed(cfg.seed, "countsketch", r, k))
                });
                t.update(u.item, u.delta);
            }
        }
        Ok(())
    }

    /// Ends the first pass and fixes the candidate set.
    pub fn freeze(&mut self) -> Result<()> {
        if self.phase != Phase::Pass1 {
            return Err(Error::Phase { op: "freeze", phase: self.phase.name() });
        }
        let n = self.params.n;
        let mut found: BTreeMap<u64, i64> = BTreeMap::new();
        for r in 0..self.tables.len() {
            let cuts: Vec<f64> = self.tables[r]
                .iter()
                .zip(&self.router.thresholds)
                .map(|(t, &theta)| t.as_ref().map_or(f64::INFINITY, |t| REPORT_FRACTION * theta * t.f2_estimate().sqrt()))
                .collect();
            for item in 1..=n {
                let d = self.router.depth(r, item);
                for idx in 0..d {
                    let Some(t) = &self.tables[r][idx] else { continue };
                    let est = t.query(item).abs();
                    if est > 0.0 && est >= cuts[idx] {
                        self.reported[r][idx].push(item);
                        found.insert(item, 0);
                    }
                }
            }
        }
        if self.all_candidates {
            found = (1..=n).map(|i| (i, 0)).collect();
        } else if found.len() > self.capacity {
            return Err(Error::CandidateOverflow { found: found.len(), capacity: self.capacity });
        }
        self.candidates = found;
        self.phase = Phase::Between;
        Ok(())
    }

    pub fn pass2(&mut self, u: Update) -> Result<()> {
        match self.phase {
            Phase::Between => self.phase = Phase::Pass2,
            Phase::Pass2 => {}
            p => return Err(Error::Phase { op: "pass2", phase: p.name() }),
        }
        self.check_update(&u)?;
        self.m2 += 1;
        if let Some(c) = self.candidates.get_mut(&u.item) {
            *c += u.delta;
        }
        Ok(())
    }

    /// Routes to the pass the estimator is in.
    pub fn process(&mut self, u: Update) -> Result<()> {
        match self.phase {
            Phase::Pass1 => self.pass1(u),
            _ => self.pass2(u),
        }
    }

    /// Runs both passes over an in-memory stream, replaying `second` in pass two.
    pub fn run(&mut self, first: &[Update], second: &[Update]) -> Result<Estimate> {
        for u in first {
            self.pass1(*u)?;
        }
        self.freeze()?;
        for u in second {
            self.pass2(*u)?;
        }
        self.finalize()
    }

    pub fn space_report(&self) -> SpaceReport {
        let mut s = SpaceReport::default();
        let (r, c) = self.f2.dims();
        s.add("ams", None, (r * c) as u64);
        s.add("hashing", None, 2 * self.tables.len() as u64);
        for row in &self.tables {
            for (idx, t) in row.iter().enumerate() {
                if let Some(t) = t {
                    let (d, w) = t.dims();
                    s.add("countsketch", Some(self.router.levels[idx]), (d * w) as u64);
                }
            }
        }
        if !self.candidates.is_empty() {
            s.add("candidates", None, 2 * self.candidates.len() as u64);
        }
        s
    }

    pub fn finalize(&mut self) -> Result<Estimate> {
        match self.phase {
            Phase::Between | Phase::Pass2 => {}
            p => return Err(Error::Phase { op: "finalize", phase: p.name() }),
        }
        if self.m1 != self.m2 {
            return Err(Error::Consistency(format!(
                "first pass saw {} updates, second pass {}",
                self.m1, self.m2
            )));
        }
        self.phase = Phase::Done;
        let x = upper_bound(self.cfg.upper_bound, self.params.p, self.m1 as f64, self.f2.estimate());
        let grid = draw_grid(self.cfg.seed, x);
        let mut reports: Vec<RepReports> = Vec::with_capacity(self.tables.len());
        for r in 0..self.tables.len() {
            let mut rr = RepReports::new();
            for (&item, &f) in &self.candidates {
                if f == 0 {
                    continue;
                }
                for idx in 0..self.router.depth(r, item) {
                    rr.entry(self.router.levels[idx]).or_default().push((item, f.unsigned_abs() as f64));
                }
            }
            reports.push(rr);
        }
        let levels = contribution_estimate(&reports, &self.params, &grid)?;
        Ok(Estimate { value: levels.total.max(0.0), levels, grid, space: self.space_report() })
    }

    /// Versioned pass-one state: sketch counters and the update count. Valid in
    /// phases `Pass1` and `Between`.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if !matches!(self.phase, Phase::Pass1 | Phase::Between) {
            return Err(Error::Phase { op: "to_bytes", phase: self.phase.name() });
        }
        let mut out = Vec::new();
        out.extend_from_slice(STATE_MAGIC);
        out.extend_from_slice(&STATE_VERSION.to_le_bytes());
        out.extend_from_slice(&self.cfg.seed.to_le_bytes());
        out.extend_from_slice(&self.params.n.to_le_bytes());
        out.extend_from_slice(&(self.tables.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.router.levels.len() as u32).to_le_bytes());
        out.extend_from_slice(&(mode_code(self.mode)).to_le_bytes());
        out.extend_from_slice(&self.m1.to_le_bytes());
        out.extend_from_slice(&self.f2.to_bytes());
        let present: Vec<(usize, usize, &CountSketchTable)> = self
            .tables
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().enumerate().filter_map(move |(i, t)| t.as_ref().map(|t| (r, i, t))))
            .collect();
        out.extend_from_slice(&(present.len() as u32).to_le_bytes());
        for (r, idx, t) in present {
            out.extend_from_slice(&(r as u32).to_le_bytes());
            out.extend_from_slice(&(idx as u32).to_le_bytes());
            out.extend_from_slice(&t.to_bytes());
        }
        Ok(out)
    }

    /// Restores pass-one state into a fresh estimator built from the same
    /// configuration. The result is in phase `Pass1`; call `freeze` next.
    pub fn from_bytes(cfg: EstimatorConfig, n: u64, mode: StreamMode, buf: &[u8]) -> Result<Self> {
        let mut est = Self::new(cfg, n, mode)?;
        let mut rd = BlobReader::new(buf, STATE_MAGIC)?;
        let version = rd.u32()?;
        if version != STATE_VERSION {
            return Err(Error::Format(format!("unsupported state version {version}")));
        }
        let header = (rd.u64()?, rd.u64()?, rd.u32()? as usize, rd.u32()? as usize, rd.u32()?);
        let expect = (est.cfg.seed, n, est.tables.len(), est.router.levels.len(), mode_code(mode));
        if header != expect {
            return Err(Error::Format("state was written by a differently configured estimator".into()));
        }
        est.m1 = rd.u64()?;
        let (f2, rest) = AmsF2Sketch::read_prefix(rd.remaining())?;
        if f2.dims() != est.f2.dims() || f2.seed() != est.f2.seed() {
            return Err(Error::Format("AMS sketch does not match configuration".into()));
        }
        est.f2 = f2;
        let mut rd = BlobReader::resume(rest);
        let count = rd.u32()?;
        for _ in 0..count {
            let r = rd.u32()? as usize;
            let idx = rd.u32()? as usize;
            let (t, rest) = CountSketchTable::read_prefix(rd.remaining())?;
            let slot = est
                .tables
                .get_mut(r)
                .and_then(|row| row.get_mut(idx))
                .ok_or_else(|| Error::Format(format!("table index ({r}, {idx}) out of range")))?;
            let k = est.router.levels[idx];
            if t.seed() != cell_seed(est.cfg.seed, "countsketch", r, k) || t.dims().0 != est.depth {
                return Err(Error::Format(format!("table ({r}, {idx}) does not match configuration")));
            }
            *slot = Some(t);
            rd = BlobReader::resume(rest);
        }
        rd.finish()?;
        Ok(est)
    }
}

fn mode_code(mode: StreamMode) -> u32 {
    match mode {
        StreamMode::InsertionOnly => 0,
        StreamMode::Turnstile => 1,
    }
}

/// `min(n, 8 eps^{-4/p} n^{1-2/p} r)`.
pub fn candidate_capacity(params: &LevelParams) -> usize {
    let n = params.n as f64;
    let p = params.p;
    let c = 8.0 * params.eps.powf(-4.0 / p) * n.powf(1.0 - 2.0 / p) * params.reps as f64;
    c.ceil().min(n) as usize
}
