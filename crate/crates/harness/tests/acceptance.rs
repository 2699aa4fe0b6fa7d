//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line.
//! Tests are serialized so that each one's wall time is measured on its own.

use std::process::Command;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use rand::Rng;

use fpest::config::CountHhConstants;
use fpest::counthh::CountHh;
use fpest::hashing::{derive_seed, rng_from_seed, SubsampleHierarchy};
use fpest::levelsets::{exact_level_contributions, LevelConfig};
use fpest::sketches::{AmsF2Sketch, CountSketchTable};
use fpest::stream::{exact_f2_l2, StreamMode};
use fpest::streamgen::{generate, Distribution, GeneratorSpec, Order, SpikeCase, SpikeParams};
use fpest::{ConstantsMode, EstimatorConfig, FrequencyVector, TwoPassFpEstimator, Update};
use fpest_harness::{bench, sweep, write_csv, Algorithm, BenchSpec};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(id: u32, name: &str, pass: bool, detail: &str, took: Duration, limit: Duration) {
    let ok = pass && took <= limit;
    println!(
        "criterion {id}: {} {name}: {detail} ({:.1}s, limit {}s)",
        if ok { "PASS" } else { "FAIL" },
        took.as_secs_f64(),
        limit.as_secs()
    );
    assert!(pass, "criterion {id} failed: {detail}");
    assert!(took <= limit, "criterion {id} over time: {took:?}");
}

const MASTER: u64 = 0x5EED_2024;

fn zipf14(n: u64, m: u64) -> GeneratorSpec {
    GeneratorSpec::new(Distribution::Zipf { s: 1.4 }, n, m, 0).with_order(Order::RandomShuffle)
}

fn planted(n: u64, m: u64) -> GeneratorSpec {
    GeneratorSpec::new(Distribution::PlantedHeavy { k: 4, strength: 2.0 }, n, m, 0).with_order(Order::RandomShuffle)
}

#[test]
fn criterion_1_level_partition_identity() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = rng_from_seed(MASTER);
    let mut worst = 0.0f64;
    let mut vectors = 0;
    for p in [2.5, 3.0, 4.0] {
        for v in 0..100 {
            let n = rng.gen_range(1..=10_000usize);
            let max = [2i64, 50, 5000][v % 3];
            let counts: Vec<i64> = (0..n).map(|_| rng.gen_range(-max..=max)).collect();
            // Independent oracle: direct sum, no level bucketing.
            let fp: f64 = counts.iter().map(|&c| (c.unsigned_abs() as f64).powf(p)).sum();
            let f = FrequencyVector::from_counts(counts);
            let x = fp * rng.gen_range(1.0..4.0);
            let grid = LevelConfig::new(x.max(1.0), rng.gen_range(1.0..=2.0));
            let parts: f64 = exact_level_contributions(&f, p, &grid).iter().sum();
            let rel = if fp > 0.0 { (parts - fp).abs() / fp } else { parts.abs() };
            worst = worst.max(rel);
            vectors += 1;
        }
    }
    let detail = format!("{vectors} vectors, worst relative error {worst:.2e}");
    verdict(1, "level partition sums to F_p", worst <= 1e-9, &detail, start.elapsed(), Duration::from_secs(10));
}

fn spec(algorithm: Algorithm, workload: GeneratorSpec, seed: u64) -> BenchSpec {
    BenchSpec { algorithm, workload, p: 3.0, eps: 0.25, constants_mode: ConstantsMode::Practical, seed }
}

#[test]
fn criterion_2_one_pass_success_rate() {
    let _g = serial();
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, w) in [("zipf", zipf14(4096, 200_000)), ("planted", planted(4096, 200_000))] {
        let out = bench(&spec(Algorithm::Ro1pass, w, derive_seed(MASTER, name, 2)), 60).unwrap();
        let s = &out.summary;
        pass &= s.success_rate >= 2.0 / 3.0;
        parts.push(format!("{name} {:.3} (median err {:.3})", s.success_rate, s.median_rel_err));
    }
    verdict(2, "one-pass success rate >= 2/3", pass, &parts.join(", "), start.elapsed(), Duration::from_secs(600));
}

#[test]
fn criterion_3_two_pass_success_and_exact_candidates() {
    let _g = serial();
    let start = Instant::now();
    let runs = [
        ("zipf", StreamMode::InsertionOnly, zipf14(4096, 200_000)),
        ("planted", StreamMode::InsertionOnly, planted(4096, 200_000)),
        ("zipf-turnstile", StreamMode::Turnstile, zipf14(4096, 200_000).with_deletions(0.1)),
    ];
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, mode, w) in runs {
        let master = derive_seed(MASTER, name, 3);
        let (mut ok, mut exact) = (0, 0);
        for t in 0..60 {
            let g = generate(&GeneratorSpec { seed: derive_seed(master, "stream", t), ..w }).unwrap();
            let f = g.frequencies();
            let truth = fpest::exact_fp(&f, 3.0);
            let mut cfg = EstimatorConfig::new(3.0, 0.25, derive_seed(master, "estimator", t)).unwrap();
            cfg.m_hint = Some(g.meta.m);
            let mut tp = TwoPassFpEstimator::new(cfg, 4096, mode).unwrap();
            let est = tp.run(&g.updates, &g.updates).unwrap().value;
            if (est - truth).abs() <= 0.25 * truth {
                ok += 1;
            }
            if !tp.candidates().is_empty() && tp.candidates().iter().all(|(&i, &c)| c == f.get(i)) {
                exact += 1;
            }
        }
        pass &= ok * 3 >= 2 * 60 && exact == 60;
        parts.push(format!("{name} success {ok}/60, exact candidates {exact}/60"));
    }
    verdict(3, "two-pass success rate >= 2/3", pass, &parts.join(", "), start.elapsed(), Duration::from_secs(600));
}

#[test]
fn criterion_4_counthh_contract() {
    let _g = serial();
    let start = Instant::now();
    let eps: f64 = 0.2;
    let cap = (2.0 / (eps * eps)).round() as usize;
    let (mut recall, mut sound, mut bounded) = (0, 0, 0);
    let mut max_h = 0;
    for t in 0..50u64 {
        let k = if t % 2 == 0 { 3 } else { 10 };
        let w = GeneratorSpec::new(Distribution::PlantedHeavy { k, strength: 1.0 }, 1000, 1_000_000, derive_seed(MASTER, "chh", t));
        let g = generate(&w).unwrap();
        let f = g.frequencies();
        let (f2, l2) = exact_f2_l2(&f);
        let mut chh = CountHh::new(eps, CountHhConstants::PRACTICAL, derive_seed(MASTER, "chh-seed", t));
        let mut peak = 0;
        for u in &g.updates {
            chh.process(u.item);
            peak = peak.max(chh.max_reported());
        }
        chh.finalize();
        let rep = chh.report().unwrap();
        let heavy: Vec<(u64, i64)> = f.nonzero().filter(|&(_, c)| c as f64 >= eps * l2).collect();
        assert_eq!(heavy.len(), k, "workload must plant {k} heavy items");
        if heavy.iter().all(|&(i, fi)| rep.iter().any(|&(j, e)| j == i && (e / fi as f64 - 1.0).abs() <= 2.0 * eps)) {
            recall += 1;
        }
        if rep.iter().all(|&(j, _)| (f.get(j) as f64).powi(2) > eps * eps * f2 / 2.0) {
            sound += 1;
        }
        if peak <= cap {
            bounded += 1;
        }
        max_h = max_h.max(peak);
    }
    let pass = recall >= 45 && sound >= 48 && bounded == 50;
    let detail = format!("recall {recall}/50, no light reports {sound}/50, |H| <= {cap} in {bounded}/50 (max {max_h})");
    verdict(4, "CountHH reports heavy items only", pass, &detail, start.elapsed(), Duration::from_secs(300));
}

#[test]
fn criterion_5_space_scaling() {
    let _g = serial();
    let start = Instant::now();
    let ns = [1 << 10, 1 << 12, 1 << 14, 1 << 16];
    let w = GeneratorSpec::new(Distribution::Zipf { s: 1.1 }, 0, 0, 0);
    let mut parts = Vec::new();
    let mut pass = true;
    for algorithm in [Algorithm::TpInsert, Algorithm::Ro1pass] {
        for p in [3.0, 4.0] {
            let base = BenchSpec { p, eps: 0.25, ..spec(algorithm, w, derive_seed(MASTER, "sweep", p as u64)) };
            let out = sweep(&base, &ns, 8, 2).unwrap();
            let slope_ok = (out.fit.slope - out.target_slope).abs() <= 0.15;
            // Support bound n_k = min(n, 10 gamma n / 2^k), at least one item.
            let gamma = EstimatorConfig::new(p, 0.25, 0).unwrap().practical.gamma;
            let lo = (10.0 * gamma).log2();
            let hi = (10.0 * gamma * *ns.last().unwrap() as f64).log2();
            let tail: Vec<u64> =
                out.per_level.iter().filter(|&&(k, _)| k as f64 > lo && k as f64 <= hi).map(|&(_, c)| c).collect();
            let decays = tail.len() >= 3 && tail.windows(2).all(|w| w[1] < w[0]);
            let ratio = (*tail.last().unwrap() as f64 / tail[0] as f64).powf(1.0 / (tail.len() - 1) as f64);
            pass &= slope_ok && decays;
            parts.push(format!(
                "{} p={p}: slope {:.3} vs {:.3}, per-level ratio {ratio:.2}{}",
                algorithm.name(),
                out.fit.slope,
                out.target_slope,
                if decays { "" } else { " NOT decreasing" }
            ));
        }
    }
    verdict(5, "counters scale as n^(1-2/p)", pass, &parts.join("; "), start.elapsed(), Duration::from_secs(900));
}

#[test]
fn criterion_6_countsketch_contract() {
    let _g = serial();
    let start = Instant::now();
    let (eps, n) = (0.2, 4096);
    let (mut recall, mut sound) = (0, 0);
    for t in 0..100u64 {
        let w = GeneratorSpec::new(Distribution::PlantedHeavy { k: 4, strength: 0.25 }, n, 100_000, derive_seed(MASTER, "cs", t));
        let g = generate(&w).unwrap();
        let f = g.frequencies();
        let (_, l2) = exact_f2_l2(&f);
        let mut cs = CountSketchTable::for_threshold(eps, n, derive_seed(MASTER, "cs-seed", t));
        for u in &g.updates {
            cs.update(u.item, u.delta);
        }
        let found = cs.heavy_hitters(eps, cs.f2_estimate().sqrt(), n);
        let heavy: Vec<u64> = f.nonzero().filter(|&(_, c)| c as f64 >= eps * l2).map(|(i, _)| i).collect();
        assert!(!heavy.is_empty());
        if heavy.iter().all(|i| found.iter().any(|h| h.item == *i)) {
            recall += 1;
        }
        if found.iter().all(|h| f.get(h.item) as f64 > eps / 2.0 * l2) {
            sound += 1;
        }
    }
    let detail = format!("full recall {recall}/100, no light reports {sound}/100");
    verdict(6, "CountSketch heavy hitters", recall >= 99 && sound >= 99, &detail, start.elapsed(), Duration::from_secs(120));
}

#[test]
fn criterion_7_spike_instances() {
    let _g = serial();
    let start = Instant::now();
    let (p, eps, n) = (3.0, 0.25, 4096);
    let (mut separated, mut classified, mut total) = (0, 0, 0);
    for case in SpikeCase::ALL {
        for t in 0..20u64 {
            let seed = derive_seed(MASTER, "spike", 100 * case.index() as u64 + t);
            let w = GeneratorSpec::new(Distribution::Spike(SpikeParams::new(case, p, eps)), n, 0, seed);
            let g = generate(&w).unwrap();
            let inst = g.spike.clone().unwrap();
            let truth = fpest::exact_fp(&g.frequencies(), p);
            assert!((truth - inst.case_values[case.index()]).abs() <= 1e-9 * truth);
            let v = inst.case_values;
            if v[1] >= (1.0 + eps) * v[0] && v[2] >= (1.0 + eps) * v[1] {
                separated += 1;
            }
            let mut cfg = EstimatorConfig::new(p, eps / 3.0, derive_seed(seed, "estimator", 0)).unwrap();
            cfg.m_hint = Some(g.meta.m);
            let mut tp = TwoPassFpEstimator::new(cfg, n, StreamMode::InsertionOnly).unwrap();
            let est = tp.run(&g.updates, &g.updates).unwrap().value;
            if inst.classify(est) == case {
                classified += 1;
            }
            total += 1;
        }
    }
    let pass = separated == total && classified * 10 >= total * 9;
    let detail = format!("separated {separated}/{total}, classified {classified}/{total}");
    verdict(7, "spike cases separated and told apart", pass, &detail, start.elapsed(), Duration::from_secs(300));
}

fn random_turnstile(rng: &mut impl Rng, n: u64, len: usize) -> Vec<Update> {
    (0..len).map(|_| Update::new(rng.gen_range(1..=n), rng.gen_range(-3..=5))).collect()
}

fn fpest_cmd(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_fpest")).args(args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

#[test]
fn criterion_8_property_suites() {
    let _g = serial();
    let start = Instant::now();

    let n = 1u64 << 14;
    let mut nest_violations = 0u64;
    let mut checks = 0u64;
    for r in 0..9 {
        let h = SubsampleHierarchy::new(derive_seed(MASTER, "hierarchy", r), 16.0);
        for item in 1..=n {
            for k in 0..40 {
                checks += 1;
                if h.is_sampled(item, k + 1) && !h.is_sampled(item, k) {
                    nest_violations += 1;
                }
            }
        }
    }

    let mut rng = rng_from_seed(MASTER);
    let mut sketch_violations = 0u64;
    for t in 0..200u64 {
        let ups = random_turnstile(&mut rng, 500, 400);
        let cut = rng.gen_range(0..=ups.len());
        let seed = derive_seed(MASTER, "sketch", t);
        let (mut a, mut b, mut whole) = (AmsF2Sketch::new(3, 16, seed), AmsF2Sketch::new(3, 16, seed), AmsF2Sketch::new(3, 16, seed));
        let (mut ca, mut cb, mut cw) =
            (CountSketchTable::new(5, 32, seed), CountSketchTable::new(5, 32, seed), CountSketchTable::new(5, 32, seed));
        for (i, u) in ups.iter().enumerate() {
            if i < cut {
                a.update(u.item, u.delta);
                ca.update(u.item, u.delta);
            } else {
                b.update(u.item, u.delta);
                cb.update(u.item, u.delta);
            }
            whole.update(u.item, u.delta);
            cw.update(u.item, u.delta);
        }
        a.merge(&b).unwrap();
        ca.merge(&cb).unwrap();
        sketch_violations += u64::from(a != whole) + u64::from(ca != cw);
        sketch_violations += u64::from(AmsF2Sketch::from_bytes(&whole.to_bytes()).unwrap() != whole);
        sketch_violations += u64::from(CountSketchTable::from_bytes(&cw.to_bytes()).unwrap() != cw);
    }

    let dir = tempfile::tempdir().unwrap();
    let mut runs: Vec<Vec<u8>> = Vec::new();
    for r in 0..3 {
        let file = dir.path().join(format!("s{r}.txt"));
        let csv = dir.path().join(format!("b{r}.csv"));
        let f = file.to_str().unwrap();
        let mut bytes = fpest_cmd(&["generate", "--kind", "zipf", "--n", "2048", "--m", "30000", "--seed", "7", "--out", f]);
        bytes.extend(std::fs::read(&file).unwrap());
        bytes.extend(fpest_cmd(&["estimate", f, "--algorithm", "ro1pass", "--trials", "3", "--with-oracle"]));
        bytes.extend(fpest_cmd(&[
            "bench", "--kind", "planted", "--n", "1024", "--m", "20000", "--deletions", "0.1", "--algorithm",
            "tp-turnstile", "--trials", "4", "--seed", "11", "--out", csv.to_str().unwrap(),
        ]));
        bytes.extend(std::fs::read(&csv).unwrap());
        let lib = bench(&spec(Algorithm::TpInsert, zipf14(1024, 20_000), 5), 3).unwrap();
        write_csv(&mut bytes, &lib.rows).unwrap();
        runs.push(bytes);
    }
    let deterministic = runs.windows(2).all(|w| w[0] == w[1]);

    let pass = nest_violations == 0 && sketch_violations == 0 && deterministic;
    let detail = format!(
        "nestedness {nest_violations} violations in {checks} checks, sketch merge/round-trip {sketch_violations} violations, reruns identical: {deterministic}"
    );
    verdict(8, "property suites", pass, &detail, start.elapsed(), Duration::from_secs(300));
}
