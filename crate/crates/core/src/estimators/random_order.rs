use crate::config::{CountHhConstants, EstimatorConfig};
use crate::counthh::{CountHh, ShortParams};
use crate::error::{Error, Result};
use crate::levelsets::{contribution_estimate, LevelParams, RepReports};
use crate::sketches::AmsF2Sketch;
use crate::stream::{check_item, StreamMeta, StreamMode, StreamOrder, Update};

use super::{cell_seed, draw_grid, upper_bound, Estimate, Router, SpaceReport};

#[derive(Debug, Clone)]
struct Cell {
    chh: CountHh,
    /// `F_2` sketch of the substream; `None` when the level samples every item and
    /// the shared full-stream sketch is used instead.
    f2: Option<AmsF2Sketch>,
}

impl Cell {
    fn counters(&self) -> u64 {
        let sub = self.f2.as_ref().map_or(0, |s| {
            let (r, c) = s.dims();
            (r * c) as u64
        });
        self.chh.peak_counters() + sub
    }
}

#[derive(Debug, Clone)]
struct Rep {
    cells: Vec<Option<Cell>>,
}

/// One-pass estimator for insertion-only streams in random order.
///
/// Repetition `r` runs a [`CountHh`] on every substream `I^r_k` for the sampling
/// levels `k` in use. At the end, each level set `i` is estimated from the pairs
/// reported at level `ell(i)` whose `f^p` lands in that level, scaled by the inverse
/// sampling rate, and the median over repetitions is taken.
#[derive(Debug, Clone)]
pub struct RandomOrderFpEstimator {
    cfg: EstimatorConfig,
    params: LevelParams,
    consts: CountHhConstants,
    router: Router,
    full_f2: AmsF2Sketch,
    reps: Vec<Option<Rep>>,
    rounding: Option<f64>,
    m: u64,
    finalized: bool,
}

impl RandomOrderFpEstimator {
    pub fn new(cfg: EstimatorConfig, n: u64) -> Result<Self> {
        let params = LevelParams::resolve(&cfg, n)?;
        let router = Router::new(&cfg, &params)?;
        let consts = params.counthh;
        let m_bound = cfg.m_bound(n);
        let planned: u64 = router
            .thresholds
            .iter()
            .map(|&t| ShortParams::new(t, m_bound, (m_bound as f64).powi(2), &consts).capacity_counters())
            .fold(0u64, |a, c| a.saturating_add(c.saturating_mul(2)))
            .saturating_mul(params.reps as u64);
        if planned > cfg.space_budget {
            return Err(Error::Infeasible(format!(
                "one-pass estimator would provision {planned} counters, budget is {}",
                cfg.space_budget
            )));
        }
        let pc = &cfg.practical;
        let full_f2 = AmsF2Sketch::new(pc.ams_rows, pc.ams_cols, cell_seed(cfg.seed, "ams", 0, 0));
        let reps = (0..params.reps)
            .map(|_| Some(Rep { cells: vec![None; router.levels.len()] }))
            .collect();
        Ok(Self { cfg, params, consts, router, full_f2, reps, rounding: None, m: 0, finalized: false })
    }

    /// Round reported frequencies to powers of `base` before bucketing.
    pub fn with_rounding(mut self, base: f64) -> Self {
        self.rounding = Some(base);
        self
    }

    /// Refuses streams that are not insertion-only or not declared random-order.
    pub fn check_meta(meta: &StreamMeta) -> Result<()> {
        if meta.mode != StreamMode::InsertionOnly {
            return Err(Error::Mode("the one-pass estimator needs an insertion-only stream".into()));
        }
        if meta.order != StreamOrder::Random {
            return Err(Error::Order(
                "the one-pass estimator is only correct on random-order streams".into(),
            ));
        }
        Ok(())
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    pub fn params(&self) -> &LevelParams {
        &self.params
    }

    /// Sampling levels that may receive instances.
    pub fn sampling_levels(&self) -> &[u32] {
        &self.router.levels
    }

    pub fn len(&self) -> u64 {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    /// Whether `item` belongs to the substream of `(r, k)`.
    pub fn is_sampled(&self, r: usize, item: u64, k: u32) -> bool {
        self.router.hierarchies[r].is_sampled(item, k)
    }

    /// Updates consumed by the instance at `(r, k)`, or `None` if it was never created.
    pub fn consumed(&self, r: usize, k: u32) -> Option<u64> {
        let idx = self.router.index_of(k)?;
        let rep = self.reps.get(r)?.as_ref()?;
        rep.cells[idx].as_ref().map(|c| c.chh.len())
    }

    pub fn process(&mut self, u: Update) -> Result<()> {
        if self.finalized {
            return Err(Error::Phase { op: "process", phase: "finalized" });
        }
        check_item(u.item, self.params.n)?;
        if u.delta != 1 {
            return Err(Error::Mode(format!(
                "one-pass estimator accepts only +1 updates, got {} for item {}",
                u.delta, u.item
            )));
        }
        self.m += 1;
        let item = u.item;
        self.full_f2.update(item, 1);
        let Self { cfg, consts, router, full_f2, reps, .. } = self;
        for (r, rep) in reps.iter_mut().enumerate() {
            let Some(rep) = rep else { continue };
            let depth = router.depth(r, item);
            for idx in 0..depth {
                let cell = rep.cells[idx].get_or_insert_with(|| {
                    let k = router.levels[idx];
                    let f2 = (router.rates[idx] < 1.0).then(|| {
                        let pc = &cfg.practical;
                        AmsF2Sketch::new(pc.sub_ams_rows, pc.sub_ams_cols, cell_seed(cfg.seed, "sub-ams", r, k))
                    });
                    let chh = CountHh::with_external_f2(
                        router.thresholds[idx],
                        *consts,
                        cell_seed(cfg.seed, "counthh", r, k),
                    );
                    Cell { chh, f2 }
                });
                match &mut cell.f2 {
                    Some(sub) => {
                        sub.update(item, 1);
                        cell.chh.process_shared(item, sub);
                    }
                    None => cell.chh.process_shared(item, full_f2),
                }
            }
        }
        Ok(())
    }

    pub fn process_all<'a>(&mut self, updates: impl IntoIterator<Item = &'a Update>) -> Result<()> {
        for u in updates {
            self.process(*u)?;
        }
        Ok(())
    }

    pub fn space_report(&self) -> SpaceReport {
        let mut s = SpaceReport::default();
        let (r, c) = self.full_f2.dims();
        s.add("ams", None, (r * c) as u64);
        s.add("hashing", None, 2 * self.reps.len() as u64);
        for rep in self.reps.iter().flatten() {
            for (idx, cell) in rep.cells.iter().enumerate() {
                if let Some(cell) = cell {
                    let k = Some(self.router.levels[idx]);
                    s.add("counthh", k, cell.chh.peak_counters());
                    s.add("sub-ams", k, cell.counters() - cell.chh.peak_counters());
                }
            }
        }
        s
    }

    /// Splits the repetitions round-robin into `shards` estimators. Every shard must
    /// receive every update; [`RandomOrderFpEstimator::join`] reassembles them.
    pub fn split(self, shards: usize) -> Vec<Self> {
        let shards = shards.max(1);
        let mut out: Vec<Self> = (0..shards)
            .map(|_| Self { reps: vec![None; self.reps.len()], ..self.clone() })
            .collect();
        for (r, rep) in self.reps.into_iter().enumerate() {
            out[r % shards].reps[r] = rep;
        }
        out
    }

    pub fn join(parts: Vec<Self>) -> Result<Self> {
        let mut it = parts.into_iter();
        let mut acc = it.next().ok_or_else(|| Error::Merge("no shards to join".into()))?;
        for part in it {
            if part.cfg != acc.cfg || part.params != acc.params || part.m != acc.m {
                return Err(Error::Merge("shards differ in configuration or stream length".into()));
            }
            for (r, rep) in part.reps.into_iter().enumerate() {
                if let Some(rep) = rep {
                    if acc.reps[r].is_some() {
                        return Err(Error::Merge(format!("repetition {r} owned by two shards")));
                    }
                    acc.reps[r] = Some(rep);
                }
            }
        }
        Ok(acc)
    }

    pub fn finalize(&mut self) -> Result<Estimate> {
        if self.finalized {
            return Err(Error::Phase { op: "finalize", phase: "finalized" });
        }
        if let Some(r) = self.reps.iter().position(Option::is_none) {
            return Err(Error::MissingRepetition(r));
        }
        self.finalized = true;
        let f2_full = self.full_f2.estimate();
        let x = upper_bound(self.cfg.upper_bound, self.params.p, self.m as f64, f2_full);
        let grid = draw_grid(self.cfg.seed, x);
        let mut reports = Vec::with_capacity(self.reps.len());
        for rep in self.reps.iter_mut().flatten() {
            let mut rr = RepReports::new();
            for (idx, cell) in rep.cells.iter_mut().enumerate() {
                let Some(cell) = cell else { continue };
                cell.chh.finalize();
                let f2_hat = cell.f2.as_ref().map_or(f2_full, |s| s.estimate());
                let mut pairs = cell.chh.report_with(f2_hat, cell.chh.theta())?;
                if let Some(base) = self.rounding {
                    for pair in pairs.iter_mut() {
                        pair.1 = crate::counthh::round_to_power(pair.1, base);
                    }
                }
                if !pairs.is_empty() {
                    rr.insert(self.router.levels[idx], pairs);
                }
            }
            reports.push(rr);
        }
        let levels = contribution_estimate(&reports, &self.params, &grid)?;
        Ok(Estimate { value: levels.total.max(0.0), levels, grid, space: self.space_report() })
    }
}
