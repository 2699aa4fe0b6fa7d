use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstantsMode {
    /// The constants of the analysis. Far too large to allocate below astronomically
    /// long streams; the estimators refuse to allocate beyond `space_budget`.
    Paper,
    /// Every constant replaced by the value in [`PracticalConstants`].
    Practical,
}

/// The bound `X >= F_p` that anchors the level sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum UpperBound {
    /// `F_1^p` (for turnstile streams, the total absolute update mass to the `p`).
    F1Power,
    /// `min(F_1^p, (2 F2_hat)^{p/2})` from an AMS sketch kept by the estimator.
    SketchedF2,
    /// A caller-provided value, e.g. a constant-factor approximation of `F_p`.
    Given(f64),
}

/// Constants inside the heavy-hitter subroutine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountHhConstants {
    /// Number of block hashes `Q = hash_coeff * ln(1/eps)`.
    pub hash_coeff: f64,
    /// A block's tested set overflows past `overflow_coeff * eps^-2 * ln(1/eps)`.
    pub overflow_coeff: f64,
    /// Identify gives up after `horizon_coeff * ln(1/eps)` blocks without a match.
    pub horizon_coeff: f64,
    /// Occurrences are tracked over `window_coeff * eps^-2 * ln(m)` blocks.
    pub window_coeff: f64,
    /// Inner instances run at `eps / inner_divisor`.
    pub inner_divisor: f64,
    /// Occurrences in the following block needed before a lone fingerprint launches
    /// Identify.
    pub launch_min_count: u32,
    /// Keep counting a reported item until the instance ends and estimate its
    /// frequency from that longer span.
    pub extended_tracking: bool,
}

impl CountHhConstants {
    pub const PAPER: CountHhConstants = CountHhConstants {
        hash_coeff: 10.0,
        overflow_coeff: 100.0,
        horizon_coeff: 100.0,
        window_coeff: 4000.0,
        inner_divisor: 10.0,
        launch_min_count: 1,
        extended_tracking: false,
    };

    pub const PRACTICAL: CountHhConstants = CountHhConstants {
        hash_coeff: 10.0,
        overflow_coeff: 100.0,
        horizon_coeff: 1.0,
        window_coeff: 0.06,
        inner_divisor: 1.0,
        launch_min_count: 2,
        extended_tracking: true,
    };
}

impl Default for CountHhConstants {
    fn default() -> Self {
        Self::PRACTICAL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PracticalConstants {
    pub gamma: f64,
    /// Replaces `16 eta log2(1/eps^2)` in the per-level accuracy.
    pub eps_denominator: f64,
    /// Replaces `1/(80 gamma)` in the heavy-hitter threshold.
    pub threshold_scale: f64,
    pub counthh: CountHhConstants,
    /// CountSketch rows; `None` means `ceil(2 ln n) + 1`.
    pub countsketch_rows: Option<usize>,
    /// Dimensions of the AMS sketch over the whole stream.
    pub ams_rows: usize,
    pub ams_cols: usize,
    /// Dimensions of the AMS sketches over subsampled substreams.
    pub sub_ams_rows: usize,
    pub sub_ams_cols: usize,
}

impl Default for PracticalConstants {
    fn default() -> Self {
        Self {
            gamma: 16.0,
            eps_denominator: 1.0,
            threshold_scale: 3.0,
            counthh: CountHhConstants::PRACTICAL,
            countsketch_rows: None,
            ams_rows: 5,
            ams_cols: 64,
            sub_ams_rows: 3,
            sub_ams_cols: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub p: f64,
    pub eps: f64,
    pub seed: u64,
    /// Sampling base of the analysis, `2^11`. Practical mode uses `practical.gamma`.
    pub gamma: f64,
    /// Must exceed `sum_j 2^{-j(p/16 - 1/8)}`; `None` picks that sum plus one.
    pub eta: Option<f64>,
    /// `2^alpha > m^p`; `None` uses `ceil(p log2 m) + 1` with `m` from `m_hint`.
    pub alpha: Option<u32>,
    /// Upper bound on the stream length; `None` means `n^3`.
    pub m_hint: Option<u64>,
    /// Odd number of repetitions; `None` means `2 ceil(log2 log2 n) + 1`.
    pub reps: Option<usize>,
    pub constants_mode: ConstantsMode,
    pub practical: PracticalConstants,
    pub upper_bound: UpperBound,
    /// Refuse to allocate more than this many counters (paper constants).
    pub space_budget: u64,
}

impl EstimatorConfig {
    pub fn new(p: f64, eps: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            p,
            eps,
            seed,
            gamma: 2048.0,
            eta: None,
            alpha: None,
            m_hint: None,
            reps: None,
            constants_mode: ConstantsMode::Practical,
            practical: PracticalConstants::default(),
            upper_bound: UpperBound::SketchedF2,
            space_budget: 1 << 28,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_mode(mut self, mode: ConstantsMode) -> Self {
        self.constants_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 2.0) || !self.p.is_finite() {
            return Err(Error::Config(format!("p must be a finite value above 2, got {}", self.p)));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::Config(format!("eps must lie in (0, 1), got {}", self.eps)));
        }
        if !(self.gamma >= 1.0) {
            return Err(Error::Config("gamma must be at least 1".into()));
        }
        if let Some(eta) = self.eta {
            if eta <= eta_floor(self.p) {
                return Err(Error::Config(format!(
                    "eta={eta} does not exceed the level-sum bound {}",
                    eta_floor(self.p)
                )));
            }
        }
        if let Some(r) = self.reps {
            if r == 0 || r % 2 == 0 {
                return Err(Error::Config(format!("reps must be odd and positive, got {r}")));
            }
        }
        if let UpperBound::Given(x) = self.upper_bound {
            if !(x > 0.0) {
                return Err(Error::Config("given upper bound must be positive".into()));
            }
        }
        let pc = &self.practical;
        if !(pc.gamma >= 1.0 && pc.eps_denominator > 0.0 && pc.threshold_scale > 0.0) {
            return Err(Error::Config("practical constants must be positive".into()));
        }
        if pc.ams_rows == 0 || pc.ams_cols == 0 || pc.sub_ams_rows == 0 || pc.sub_ams_cols == 0 {
            return Err(Error::Config("sketch dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn eta_value(&self) -> f64 {
        self.eta.unwrap_or_else(|| eta_floor(self.p) + 1.0)
    }

    pub fn reps_for(&self, n: u64) -> usize {
        self.reps.unwrap_or_else(|| default_reps(n))
    }

    pub fn m_bound(&self, n: u64) -> u64 {
        self.m_hint.unwrap_or_else(|| n.saturating_pow(3)).max(2)
    }

    pub fn alpha_for(&self, n: u64) -> u32 {
        self.alpha
            .unwrap_or_else(|| (self.p * (self.m_bound(n) as f64).log2()).ceil() as u32 + 1)
    }
}

/// `sum_{j >= 0} 2^{-j(p/16 - 1/8)}`.
pub fn eta_floor(p: f64) -> f64 {
    1.0 / (1.0 - (-(p / 16.0 - 0.125)).exp2())
}

pub fn default_reps(n: u64) -> usize {
    let l = (n.max(4) as f64).log2().log2().ceil() as usize;
    2 * l + 1
}
