//! Geometric level sets and the per-level parameters derived from the configuration.
//!
//! Level `i` holds the items with `|f_k|^p` in `[zeta X / 2^i, 2 zeta X / 2^i)`, where
//! `X >= F_p` and `zeta` is drawn uniformly from `[1, 2]`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ConstantsMode, CountHhConstants, EstimatorConfig};
use crate::error::{Error, Result};
use crate::hashing::sample_rate;
use crate::stats::{median, CompensatedSum};
use crate::stream::FrequencyVector;

/// Thresholds above this are clamped: the heavy-hitter routines need `eps < 1`.
pub const MAX_THRESHOLD: f64 = 0.9;

/// Per-level accuracy, support bound, sampling level and heavy-hitter threshold,
/// resolved for a universe size `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelParams {
    pub p: f64,
    pub eps: f64,
    pub n: u64,
    pub gamma: f64,
    pub alpha: u32,
    pub reps: usize,
    pub eps_denominator: f64,
    pub threshold_scale: f64,
    pub counthh: CountHhConstants,
}

impl LevelParams {
    pub fn resolve(cfg: &EstimatorConfig, n: u64) -> Result<Self> {
        cfg.validate()?;
        if n == 0 {
            return Err(Error::Config("universe size must be positive".into()));
        }
        let (gamma, eps_denominator, threshold_scale, counthh) = match cfg.constants_mode {
            ConstantsMode::Paper => (
                cfg.gamma,
                16.0 * cfg.eta_value() * (1.0 / (cfg.eps * cfg.eps)).log2(),
                1.0 / (80.0 * cfg.gamma),
                CountHhConstants::PAPER,
            ),
            ConstantsMode::Practical => {
                let pc = &cfg.practical;
                (pc.gamma, pc.eps_denominator, pc.threshold_scale, pc.counthh)
            }
        };
        Ok(Self {
            p: cfg.p,
            eps: cfg.eps,
            n,
            gamma,
            alpha: cfg.alpha_for(n),
            reps: cfg.reps_for(n),
            eps_denominator,
            threshold_scale,
            counthh,
        })
    }

    /// `eps_i`.
    pub fn epsilon(&self, i: u32) -> f64 {
        let decay = (i as f64 * (self.p / 16.0 - 0.125)).exp2();
        self.eps / (self.eps_denominator * decay)
    }

    /// `n_i`, the bound on the support size of level `i`, clamped to `[1, n]`.
    pub fn support(&self, i: u32) -> f64 {
        let log_n = (self.n as f64).log2();
        let base = 16.0 * self.alpha as f64 * self.p * log_n / self.eps.powf(1.0 - 2.0 / self.p);
        let first = base.powf(2.0 * self.p / (self.p - 2.0));
        let second = 10.0 * self.gamma * self.n as f64 * (-(i as f64)).exp2();
        first.min(second).min(self.n as f64).max(1.0)
    }

    /// `l_i = min { k : 2^k > 2^i eps_k^2 }`.
    pub fn ell(&self, i: u32) -> Result<u32> {
        let limit = i.max(64);
        (0..=limit)
            .find(|&k| (k as f64) > i as f64 + 2.0 * self.epsilon(k).log2())
            .ok_or(Error::LevelScan(i))
    }

    pub fn rate(&self, k: u32) -> f64 {
        sample_rate(k, self.gamma)
    }

    /// Heavy-hitter threshold for the instance on substream `I_k`.
    pub fn threshold(&self, k: u32) -> f64 {
        let ek = self.epsilon(k);
        let nk = self.support(k);
        let t = self.threshold_scale * ek.powf(2.0 / self.p) * nk.powf(-(0.5 - 1.0 / self.p));
        t.min(MAX_THRESHOLD)
    }

    /// Number of levels for bounds up to `x_max`, i.e. all levels whose upper end exceeds 1.
    pub fn max_levels(&self, x_max: f64) -> u32 {
        LevelConfig { x: x_max, zeta: 2.0 }.num_levels()
    }

    /// Distinct sampling levels `l_i` for `i < levels`, ascending.
    pub fn sampling_levels(&self, levels: u32) -> Result<Vec<u32>> {
        let mut out: Vec<u32> = Vec::new();
        for i in 0..levels {
            let k = self.ell(i)?;
            if out.last() != Some(&k) {
                out.push(k);
            }
        }
        Ok(out)
    }
}

/// The realized level grid: upper bound `X` and offset `zeta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelConfig {
    pub x: f64,
    pub zeta: f64,
}

impl LevelConfig {
    pub fn new(x: f64, zeta: f64) -> Self {
        Self { x, zeta }
    }

    pub fn draw_zeta<R: Rng + ?Sized>(rng: &mut R) -> f64 {
        rng.gen_range(1.0..=2.0)
    }

    /// `[zeta X / 2^i, 2 zeta X / 2^i)`.
    pub fn bounds(&self, i: u32) -> (f64, f64) {
        let lo = self.zeta * self.x * (-(i as f64)).exp2();
        (lo, 2.0 * lo)
    }

    /// Levels whose upper end exceeds 1; no nonzero integer frequency lies below.
    pub fn num_levels(&self) -> u32 {
        let mut l = 0;
        while self.bounds(l).1 > 1.0 && l < 4096 {
            l += 1;
        }
        l
    }

    /// The level containing `v`, or `None` when `v` is not positive or `v >= 2 zeta X`.
    pub fn level_index(&self, v: f64) -> Option<u32> {
        if !(v > 0.0) || v >= self.bounds(0).1 {
            return None;
        }
        let guess = (self.zeta * self.x / v).log2().ceil().max(0.0);
        let mut i = guess.min(4095.0) as u32;
        while v < self.bounds(i).0 {
            i += 1;
        }
        while i > 0 && v >= self.bounds(i).1 {
            i -= 1;
        }
        Some(i)
    }
}

/// Exact level contributions `C_i = sum_{k in level i} |f_k|^p`. Items above the top
/// level (possible only when `X < F_p`) are dropped.
pub fn exact_level_contributions(f: &FrequencyVector, p: f64, grid: &LevelConfig) -> Vec<f64> {
    let mut sums: Vec<CompensatedSum> = vec![CompensatedSum::new(); grid.num_levels() as usize];
    for (_, c) in f.nonzero() {
        let v = (c.unsigned_abs() as f64).powf(p);
        if let Some(i) = grid.level_index(v) {
            if let Some(s) = sums.get_mut(i as usize) {
                s.add(v);
            }
        }
    }
    sums.iter().map(|s| s.value()).collect()
}

/// Per-repetition heavy-hitter reports keyed by sampling level.
pub type RepReports = BTreeMap<u32, Vec<(u64, f64)>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimate {
    /// `C_hat_i` for each level.
    pub per_level: Vec<f64>,
    pub total: f64,
}

impl LevelEstimate {
    /// Median across repetitions of per-level sums `d[i][r]`.
    pub fn from_rep_sums(d: &[Vec<f64>]) -> Self {
        let per_level: Vec<f64> = d.iter().map(|row| median(row)).collect();
        let total = per_level.iter().copied().collect::<CompensatedSum>().value();
        Self { per_level, total }
    }
}

/// `C_hat_i = median_r (1/p_{l_i}) sum { f_hat^p : (k, f_hat) reported at level l_i, f_hat^p in level i }`.
pub fn contribution_estimate(
    reports: &[RepReports],
    params: &LevelParams,
    grid: &LevelConfig,
) -> Result<LevelEstimate> {
    if reports.len() < params.reps {
        return Err(Error::MissingRepetition(reports.len()));
    }
    let levels = grid.num_levels();
    let ells: Vec<u32> = (0..levels).map(|i| params.ell(i)).collect::<Result<_>>()?;
    let mut d = vec![vec![0.0; params.reps]; levels as usize];
    for (r, rep) in reports.iter().take(params.reps).enumerate() {
        for (&k, pairs) in rep {
            let scale = 1.0 / params.rate(k);
            for &(_, fhat) in pairs {
                let v = fhat.abs().powf(params.p);
                if let Some(i) = grid.level_index(v) {
                    if (i as usize) < ells.len() && ells[i as usize] == k {
                        d[i as usize][r] += v * scale;
                    }
                }
            }
        }
    }
    Ok(LevelEstimate::from_rep_sums(&d))
}
