//! Trial runner behind the `fpest` command: runs an estimator against the exact
//! oracle over seeded workloads, aggregates success rates, and fits space-scaling
//! exponents.

use std::io::Write;
use std::time::Instant;

use anyhow::{bail, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use fpest::hashing::derive_seed;
use fpest::stats::{linear_fit, median, quantile, LinearFit};
use fpest::format::StreamFile;
use fpest::stream::StreamMode;
use fpest::streamgen::{generate, Distribution, GeneratorSpec, GeneratedStream, Order};
use fpest::{
    apply_stream, exact_fp, ConstantsMode, EstimatorConfig, RandomOrderFpEstimator, SpaceReport, StreamMeta,
    TwoPassFpEstimator, Update,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// One-pass estimator; random-order insertion-only streams.
    Ro1pass,
    /// Two-pass estimator, insertion-only.
    TpInsert,
    /// Two-pass estimator, turnstile.
    TpTurnstile,
    /// Exact computation.
    Oracle,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ro1pass => "ro1pass",
            Algorithm::TpInsert => "tp-insert",
            Algorithm::TpTurnstile => "tp-turnstile",
            Algorithm::Oracle => "oracle",
        }
    }
}

/// What an estimator reports about one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutput {
    pub estimate: f64,
    pub space: SpaceReport,
}

/// Runs `algorithm` over `updates`. Two-pass algorithms replay the same slice.
pub fn run_algorithm(
    algorithm: Algorithm,
    cfg: &EstimatorConfig,
    meta: &StreamMeta,
    updates: &[Update],
) -> fpest::Result<RunOutput> {
    let mut cfg = cfg.clone();
    if cfg.m_hint.is_none() {
        cfg.m_hint = Some(meta.m.max(2));
    }
    match algorithm {
        Algorithm::Oracle => {
            let f = apply_stream(updates, meta.n)?;
            Ok(RunOutput { estimate: exact_fp(&f, cfg.p), space: SpaceReport::default() })
        }
        Algorithm::Ro1pass => {
            RandomOrderFpEstimator::check_meta(meta)?;
            let mut est = RandomOrderFpEstimator::new(cfg, meta.n)?;
            est.process_all(updates)?;
            let out = est.finalize()?;
            Ok(RunOutput { estimate: out.value, space: out.space })
        }
        Algorithm::TpInsert | Algorithm::TpTurnstile => {
            let mode = if algorithm == Algorithm::TpInsert {
                StreamMode::InsertionOnly
            } else {
                StreamMode::Turnstile
            };
            let mut est = TwoPassFpEstimator::new(cfg, meta.n, mode)?;
            est.check_meta(meta)?;
            let out = est.run(updates, updates)?;
            Ok(RunOutput { estimate: out.value, space: out.space })
        }
    }
}

/// A workload plus the estimator settings to bench on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub algorithm: Algorithm,
    pub workload: GeneratorSpec,
    pub p: f64,
    pub eps: f64,
    pub constants_mode: ConstantsMode,
    /// Master seed; trial seeds are derived from it.
    pub seed: u64,
}

impl BenchSpec {
    pub fn config(&self, seed: u64) -> fpest::Result<EstimatorConfig> {
        Ok(EstimatorConfig::new(self.p, self.eps, seed)?.with_mode(self.constants_mode))
    }

    fn trial_stream(&self, trial: u64) -> fpest::Result<GeneratedStream> {
        let spec = GeneratorSpec { seed: derive_seed(self.seed, "stream", trial), ..self.workload };
        generate(&spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial: u64,
    pub seed: u64,
    pub estimate: f64,
    pub oracle: f64,
    pub rel_err: f64,
    pub success: bool,
    pub counters: u64,
    pub bits: u64,
    /// Not written to CSV, so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_secs: f64,
}

pub fn run_trial(spec: &BenchSpec, trial: u64) -> fpest::Result<TrialResult> {
    let g = spec.trial_stream(trial)?;
    let oracle = exact_fp(&g.frequencies(), spec.p);
    let seed = derive_seed(spec.seed, "estimator", trial);
    let cfg = spec.config(seed)?;
    let start = Instant::now();
    let out = run_algorithm(spec.algorithm, &cfg, &g.meta, &g.updates)?;
    let wall_secs = start.elapsed().as_secs_f64();
    let rel_err = if oracle > 0.0 {
        (out.estimate - oracle) / oracle
    } else if out.estimate == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(TrialResult {
        trial,
        seed,
        estimate: out.estimate,
        oracle,
        rel_err,
        success: rel_err.abs() <= spec.eps,
        counters: out.space.counters_allocated,
        bits: out.space.bits_estimate,
        wall_secs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub algorithm: Algorithm,
    pub n: u64,
    pub m: u64,
    pub p: f64,
    pub eps: f64,
    pub trials: u64,
    pub success_rate: f64,
    pub median_rel_err: f64,
    pub p95_rel_err: f64,
    /// Median over trials.
    pub bits_estimate: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchOutcome {
    pub rows: Vec<TrialResult>,
    pub summary: Summary,
}

/// Runs trials in parallel; rows come back in trial order.
pub fn bench(spec: &BenchSpec, trials: u64) -> Result<BenchOutcome> {
    if trials == 0 {
        return Err(fpest::Error::Config("trials must be at least 1".into()).into());
    }
    let rows: Vec<TrialResult> =
        (0..trials).into_par_iter().map(|t| run_trial(spec, t)).collect::<fpest::Result<_>>()?;
    let summary = summarize(spec, &rows);
    Ok(BenchOutcome { rows, summary })
}

pub fn summarize(spec: &BenchSpec, rows: &[TrialResult]) -> Summary {
    let abs: Vec<f64> = rows.iter().map(|r| r.rel_err.abs()).collect();
    let bits: Vec<f64> = rows.iter().map(|r| r.bits as f64).collect();
    let ok = rows.iter().filter(|r| r.success).count();
    Summary {
        algorithm: spec.algorithm,
        n: spec.workload.n,
        m: spec.workload.m,
        p: spec.p,
        eps: spec.eps,
        trials: rows.len() as u64,
        success_rate: ok as f64 / rows.len().max(1) as f64,
        median_rel_err: median(&abs),
        p95_rel_err: quantile(&abs, 0.95),
        bits_estimate: median(&bits) as u64,
    }
}

pub fn write_csv<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: u64,
    pub m: u64,
    pub trial: u64,
    pub counters: u64,
    pub bits: u64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// Least-squares fit of `ln counters` against `ln n` over all rows.
    pub fit: LinearFit,
    pub target_slope: f64,
    /// 95% normal band on the slope.
    pub slope_band: (f64, f64),
    /// Median counters per sampling level at the largest `n`.
    pub per_level: Vec<(u32, u64)>,
}

/// Benches `base` at every `n` in `ns` with `m = m_per_n * n` and fits the
/// space exponent.
pub fn sweep(base: &BenchSpec, ns: &[u64], m_per_n: u64, trials: u64) -> Result<SweepOutcome> {
    let mut distinct = ns.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(fpest::Error::Config("a sweep needs at least 4 distinct n values".into()).into());
    }
    if trials == 0 {
        return Err(fpest::Error::Config("trials must be at least 1".into()).into());
    }
    let jobs: Vec<(u64, u64)> = distinct.iter().flat_map(|&n| (0..trials).map(move |t| (n, t))).collect();
    let results: Vec<(SweepRow, SpaceReport)> = jobs
        .par_iter()
        .map(|&(n, t)| {
            let spec = BenchSpec {
                workload: GeneratorSpec { n, m: m_per_n * n, ..base.workload },
                seed: derive_seed(base.seed, "sweep", n),
                ..base.clone()
            };
            let g = spec.trial_stream(t)?;
            let oracle = exact_fp(&g.frequencies(), spec.p);
            let cfg = spec.config(derive_seed(spec.seed, "estimator", t))?;
            let out = run_algorithm(spec.algorithm, &cfg, &g.meta, &g.updates)?;
            let row = SweepRow {
                n,
                m: g.meta.m,
                trial: t,
                counters: out.space.counters_allocated,
                bits: out.space.bits_estimate,
                rel_err: if oracle > 0.0 { (out.estimate - oracle) / oracle } else { 0.0 },
            };
            Ok((row, out.space))
        })
        .collect::<fpest::Result<_>>()?;
    let xs: Vec<f64> = results.iter().map(|(r, _)| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = results.iter().map(|(r, _)| (r.counters.max(1) as f64).ln()).collect();
    let Some(fit) = linear_fit(&xs, &ys) else { bail!("degenerate sweep, cannot fit a slope") };
    let n_max = *distinct.last().unwrap();
    let mut levels: std::collections::BTreeMap<u32, Vec<f64>> = Default::default();
    for (row, space) in &results {
        if row.n == n_max {
            for (&k, &c) in &space.per_level {
                levels.entry(k).or_default().push(c as f64);
            }
        }
    }
    let per_level = levels.into_iter().map(|(k, v)| (k, median(&v) as u64)).collect();
    let half = 1.96 * fit.slope_stderr;
    Ok(SweepOutcome {
        rows: results.into_iter().map(|(r, _)| r).collect(),
        target_slope: 1.0 - 2.0 / base.p,
        slope_band: (fit.slope - half, fit.slope + half),
        fit,
        per_level,
    })
}

/// Default workload for benches: Zipf(1.4) in random order.
pub fn default_workload(n: u64, m: u64) -> GeneratorSpec {
    GeneratorSpec::new(Distribution::Zipf { s: 1.4 }, n, m, 0).with_order(Order::RandomShuffle)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub trial: u64,
    pub seed: u64,
    pub estimate: f64,
    /// Present with `--with-oracle`.
    pub rel_err: Option<f64>,
    pub counters: u64,
    pub bits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub algorithm: Algorithm,
    pub n: u64,
    pub m: u64,
    pub p: f64,
    pub eps: f64,
    pub trials: u64,
    /// Median over trials.
    pub estimate: f64,
    pub oracle: Option<f64>,
    pub success_rate: Option<f64>,
    pub median_rel_err: Option<f64>,
    pub bits_estimate: u64,
    #[serde(skip)]
    pub rows: Vec<EstimateRow>,
}

/// Runs `algorithm` on a stream file `trials` times with independent estimator seeds.
pub fn estimate_stream(
    file: &StreamFile,
    algorithm: Algorithm,
    base: &EstimatorConfig,
    trials: u64,
    with_oracle: bool,
) -> fpest::Result<EstimateReport> {
    if trials == 0 {
        return Err(fpest::Error::Config("trials must be at least 1".into()));
    }
    let oracle = with_oracle.then(|| apply_stream(&file.updates, file.meta.n).map(|f| exact_fp(&f, base.p))).transpose()?;
    let rows: Vec<EstimateRow> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = if trials == 1 { base.seed } else { derive_seed(base.seed, "estimator", t) };
            let cfg = EstimatorConfig { seed, ..base.clone() };
            let out = run_algorithm(algorithm, &cfg, &file.meta, &file.updates)?;
            let rel_err = oracle.map(|o| if o > 0.0 { (out.estimate - o) / o } else { 0.0 });
            Ok(EstimateRow {
                trial: t,
                seed,
                estimate: out.estimate,
                rel_err,
                counters: out.space.counters_allocated,
                bits: out.space.bits_estimate,
            })
        })
        .collect::<fpest::Result<_>>()?;
    let errs: Vec<f64> = rows.iter().filter_map(|r| r.rel_err.map(f64::abs)).collect();
    let ests: Vec<f64> = rows.iter().map(|r| r.estimate).collect();
    let bits: Vec<f64> = rows.iter().map(|r| r.bits as f64).collect();
    Ok(EstimateReport {
        algorithm,
        n: file.meta.n,
        m: file.meta.m,
        p: base.p,
        eps: base.eps,
        trials,
        estimate: median(&ests),
        oracle,
        success_rate: oracle
            .map(|_| errs.iter().filter(|&&e| e <= base.eps).count() as f64 / trials as f64),
        median_rel_err: oracle.map(|_| median(&errs)),
        bits_estimate: median(&bits) as u64,
        rows,
    })
}
