//! Browser bindings. Every entry point takes plain numbers and strings and returns
//! a JSON string; the native functions behind them are usable and testable without
//! a browser.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use fpest::levelsets::exact_level_contributions;
use fpest::sketches::CountSketchTable;
use fpest::stream::{exact_f2_l2, StreamMode};
use fpest::streamgen::{generate, Distribution, GeneratedStream, GeneratorSpec, Order};
use fpest::{exact_fp, EstimatorConfig, Estimate, RandomOrderFpEstimator, TwoPassFpEstimator};

/// Largest universe and stream the page will generate.
pub const MAX_N: u32 = 1 << 16;
pub const MAX_M: u32 = 1 << 20;

#[derive(Debug, Clone, Serialize)]
pub struct EstimateView {
    pub algorithm: String,
    pub estimate: f64,
    pub oracle: f64,
    pub rel_err: f64,
    pub counters: u64,
    pub bits: u64,
    /// Counters the oracle needs: one per universe element.
    pub oracle_counters: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelRow {
    pub level: u32,
    pub lower: f64,
    pub upper: f64,
    pub exact: f64,
    pub estimated: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HeavyRow {
    pub item: u64,
    pub frequency: i64,
    pub estimate: f64,
    pub reported: bool,
}

fn workload(kind: &str, n: u32, m: u32, deletions: f64, seed: u32) -> Result<GeneratedStream, String> {
    if n == 0 || n > MAX_N || m > MAX_M {
        return Err(format!("need 1 <= n <= {MAX_N} and m <= {MAX_M}"));
    }
    let dist = match kind {
        "uniform" => Distribution::Uniform,
        "zipf" => Distribution::Zipf { s: 1.4 },
        "zipf-flat" => Distribution::Zipf { s: 1.1 },
        "planted" => Distribution::PlantedHeavy { k: 4, strength: 2.0 },
        other => return Err(format!("unknown workload {other:?}")),
    };
    let spec = GeneratorSpec::new(dist, n as u64, m as u64, seed as u64)
        .with_order(Order::RandomShuffle)
        .with_deletions(deletions);
    generate(&spec).map_err(|e| e.to_string())
}

fn run(algorithm: &str, g: &GeneratedStream, p: f64, eps: f64, seed: u32) -> Result<Estimate, String> {
    let mut cfg = EstimatorConfig::new(p, eps, seed as u64).map_err(|e| e.to_string())?;
    cfg.m_hint = Some(g.meta.m.max(2));
    let n = g.meta.n;
    let out = match algorithm {
        "ro1pass" => {
            RandomOrderFpEstimator::check_meta(&g.meta).map_err(|e| e.to_string())?;
            let mut est = RandomOrderFpEstimator::new(cfg, n).map_err(|e| e.to_string())?;
            est.process_all(&g.updates).and_then(|_| est.finalize())
        }
        "tp-insert" | "tp-turnstile" => {
            let mode = if algorithm == "tp-insert" { StreamMode::InsertionOnly } else { StreamMode::Turnstile };
            let mut est = TwoPassFpEstimator::new(cfg, n, mode).map_err(|e| e.to_string())?;
            est.check_meta(&g.meta).and_then(|_| est.run(&g.updates, &g.updates))
        }
        other => return Err(format!("unknown algorithm {other:?}")),
    };
    out.map_err(|e| e.to_string())
}

/// Runs one estimator on a generated stream and compares it with the exact value.
#[allow(clippy::too_many_arguments)]
pub fn estimate_view(
    algorithm: &str,
    kind: &str,
    n: u32,
    m: u32,
    deletions: f64,
    p: f64,
    eps: f64,
    seed: u32,
) -> Result<EstimateView, String> {
    let g = workload(kind, n, m, deletions, seed)?;
    let oracle = exact_fp(&g.frequencies(), p);
    let est = run(algorithm, &g, p, eps, seed)?;
    Ok(EstimateView {
        algorithm: algorithm.to_string(),
        estimate: est.value,
        oracle,
        rel_err: if oracle > 0.0 { (est.value - oracle) / oracle } else { 0.0 },
        counters: est.space.counters_allocated,
        bits: est.space.bits_estimate,
        oracle_counters: n as u64,
    })
}

/// Exact and estimated contribution of every level set, on the estimator's own grid.
pub fn level_profile(kind: &str, n: u32, m: u32, p: f64, eps: f64, seed: u32) -> Result<Vec<LevelRow>, String> {
    let g = workload(kind, n, m, 0.0, seed)?;
    let est = run("tp-insert", &g, p, eps, seed)?;
    let exact = exact_level_contributions(&g.frequencies(), p, &est.grid);
    Ok(exact
        .iter()
        .enumerate()
        .filter(|&(i, &c)| c > 0.0 || est.levels.per_level.get(i).is_some_and(|&v| v > 0.0))
        .map(|(i, &c)| {
            let (lower, upper) = est.grid.bounds(i as u32);
            LevelRow {
                level: i as u32,
                lower,
                upper,
                exact: c,
                estimated: est.levels.per_level.get(i).copied().unwrap_or(0.0),
            }
        })
        .collect())
}

/// CountSketch heavy hitters at threshold `eps * L2` next to the true top items.
pub fn heavy_hitters(kind: &str, n: u32, m: u32, deletions: f64, eps: f64, seed: u32) -> Result<Vec<HeavyRow>, String> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err("eps must lie in (0, 1)".into());
    }
    let g = workload(kind, n, m, deletions, seed)?;
    let f = g.frequencies();
    let mut cs = CountSketchTable::for_threshold(eps, n as u64, seed as u64);
    for u in &g.updates {
        cs.update(u.item, u.delta);
    }
    let found = cs.heavy_hitters(eps, cs.f2_estimate().sqrt(), n as u64);
    let (_, l2) = exact_f2_l2(&f);
    let mut rows: Vec<HeavyRow> = f
        .nonzero()
        .filter(|&(i, c)| c.unsigned_abs() as f64 >= 0.5 * eps * l2 || found.iter().any(|h| h.item == i))
        .map(|(item, frequency)| HeavyRow {
            item,
            frequency,
            estimate: cs.query(item),
            reported: found.iter().any(|h| h.item == item),
        })
        .collect();
    rows.sort_by(|a, b| b.frequency.abs().cmp(&a.frequency.abs()).then(a.item.cmp(&b.item)));
    Ok(rows)
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = estimate)]
#[allow(clippy::too_many_arguments)]
pub fn estimate_js(
    algorithm: &str,
    kind: &str,
    n: u32,
    m: u32,
    deletions: f64,
    p: f64,
    eps: f64,
    seed: u32,
) -> Result<String, JsValue> {
    to_js(estimate_view(algorithm, kind, n, m, deletions, p, eps, seed))
}

#[wasm_bindgen(js_name = levelProfile)]
pub fn level_profile_js(kind: &str, n: u32, m: u32, p: f64, eps: f64, seed: u32) -> Result<String, JsValue> {
    to_js(level_profile(kind, n, m, p, eps, seed))
}

#[wasm_bindgen(js_name = heavyHitters)]
pub fn heavy_hitters_js(kind: &str, n: u32, m: u32, deletions: f64, eps: f64, seed: u32) -> Result<String, JsValue> {
    to_js(heavy_hitters(kind, n, m, deletions, eps, seed))
}
