use proptest::prelude::*;

use fpest::format::{read_stream, write_binary, write_text, StreamFile};
use fpest::hashing::{sample_rate, PairwiseHash, SubsampleHierarchy, MERSENNE_61};
use fpest::levelsets::{exact_level_contributions, LevelConfig, LevelParams};
use fpest::sketches::{AmsF2Sketch, CountSketchTable};
use fpest::stream::{StreamMode, StreamOrder};
use fpest::streamgen::{generate, Distribution, GeneratorSpec, Order};
use fpest::*;

fn updates(n: u64, max_len: usize, signed: bool) -> impl Strategy<Value = Vec<Update>> {
    let delta = if signed { (-5i64..=5).boxed() } else { Just(1i64).boxed() };
    prop::collection::vec((1..=n, delta), 0..max_len)
        .prop_map(|v| v.into_iter().map(|(i, d)| Update::new(i, d)).collect())
}

fn shuffled(mut v: Vec<Update>, seed: u64) -> Vec<Update> {
    use rand::seq::SliceRandom;
    v.shuffle(&mut fpest::hashing::rng_from_seed(seed));
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn subsampling_is_nested(seed in any::<u64>(), gamma in 1.0f64..64.0, item in 1u64..1 << 40, level in 0u32..80) {
        let h = SubsampleHierarchy::new(seed, gamma);
        if h.is_sampled(item, level + 1) {
            prop_assert!(h.is_sampled(item, level));
        }
        if sample_rate(level, gamma) >= 1.0 {
            prop_assert!(h.is_sampled(item, level));
        }
    }

    #[test]
    fn pairwise_hash_stays_in_range(a in 1u64..MERSENNE_61, b in 0u64..MERSENNE_61, range in 1u64..1 << 40, x in any::<u64>()) {
        let h = PairwiseHash::new(a, b, range);
        prop_assert!(h.eval(x) < range);
        prop_assert!(h.raw(x) < MERSENNE_61);
        let u = h.unit(x);
        prop_assert!((0.0..1.0).contains(&u));
    }

    #[test]
    fn fp_ignores_update_order(ups in updates(50, 200, true), seed in any::<u64>(), p in 2.1f64..5.0) {
        let a = exact_fp(&apply_stream(&ups, 50).unwrap(), p);
        let b = exact_fp(&apply_stream(&shuffled(ups, seed), 50).unwrap(), p);
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn fp_is_homogeneous(counts in prop::collection::vec(-40i64..40, 1..60), c in 1i64..=3, p in prop::sample::select(vec![2.5, 3.0, 4.0])) {
        let f = FrequencyVector::from_counts(counts.clone());
        let g = FrequencyVector::from_counts(counts.iter().map(|x| x * c).collect());
        let lhs = exact_fp(&g, p);
        let rhs = (c as f64).powf(p) * exact_fp(&f, p);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
    }

    #[test]
    fn fp_grows_with_insertions(ups in updates(30, 100, false), extra in 1u64..=30) {
        let before = exact_fp(&apply_stream(&ups, 30).unwrap(), 3.0);
        let mut more = ups.clone();
        more.push(Update::insert(extra));
        let after = exact_fp(&apply_stream(&more, 30).unwrap(), 3.0);
        prop_assert!(after >= before);
    }

    #[test]
    fn level_contributions_partition_fp(counts in prop::collection::vec(0i64..10_000, 1..300), zeta in 1.0f64..=2.0, p in prop::sample::select(vec![2.5, 3.0, 4.0])) {
        let f = FrequencyVector::from_counts(counts);
        let fp = exact_fp(&f, p);
        let grid = LevelConfig::new(fp, zeta);
        let parts: f64 = exact_level_contributions(&f, p, &grid).iter().sum();
        prop_assert!((parts - fp).abs() <= 1e-9 * fp.max(1.0));
    }

    #[test]
    fn level_index_respects_bounds(x in 1.0f64..1e30, zeta in 1.0f64..=2.0, v in 1.0f64..1e30) {
        let grid = LevelConfig::new(x, zeta);
        match grid.level_index(v) {
            Some(i) => {
                let (lo, hi) = grid.bounds(i);
                prop_assert!(lo <= v && v < hi);
            }
            None => prop_assert!(v >= grid.bounds(0).1),
        }
    }

    #[test]
    fn ell_is_smallest_valid_level(i in 0u32..120, p in 2.2f64..6.0, eps in 0.05f64..0.9) {
        let mut cfg = EstimatorConfig::new(p, eps, 0).unwrap();
        cfg.m_hint = Some(1 << 20);
        let lp = LevelParams::resolve(&cfg, 1 << 14).unwrap();
        let k = lp.ell(i).unwrap();
        let ok = |k: u32| (k as f64).exp2() > (i as f64).exp2() * lp.epsilon(k).powi(2);
        prop_assert!(ok(k));
        prop_assert!(k == 0 || !ok(k - 1));
    }

    #[test]
    fn ams_is_linear(a in updates(100, 150, true), b in updates(100, 150, true), seed in any::<u64>()) {
        let mut sa = AmsF2Sketch::new(3, 8, seed);
        let mut sb = AmsF2Sketch::new(3, 8, seed);
        let mut sab = AmsF2Sketch::new(3, 8, seed);
        for u in &a { sa.update(u.item, u.delta); sab.update(u.item, u.delta); }
        for u in &b { sb.update(u.item, u.delta); sab.update(u.item, u.delta); }
        sa.merge(&sb).unwrap();
        prop_assert_eq!(sa.counters(), sab.counters());
        let back = AmsF2Sketch::from_bytes(&sab.to_bytes()).unwrap();
        prop_assert_eq!(back, sab);
    }

    #[test]
    fn countsketch_is_linear(a in updates(100, 150, true), b in updates(100, 150, true), seed in any::<u64>()) {
        let mut sa = CountSketchTable::new(5, 16, seed);
        let mut sb = CountSketchTable::new(5, 16, seed);
        let mut sab = CountSketchTable::new(5, 16, seed);
        for u in &a { sa.update(u.item, u.delta); sab.update(u.item, u.delta); }
        for u in &b { sb.update(u.item, u.delta); sab.update(u.item, u.delta); }
        sa.merge(&sb).unwrap();
        prop_assert_eq!(sa.counters(), sab.counters());
        let back = CountSketchTable::from_bytes(&sab.to_bytes()).unwrap();
        prop_assert_eq!(back, sab);
    }

    #[test]
    fn countsketch_order_invariant(ups in updates(100, 200, true), seed in any::<u64>(), perm in any::<u64>()) {
        let mut x = CountSketchTable::new(4, 8, seed);
        let mut y = CountSketchTable::new(4, 8, seed);
        for u in &ups { x.update(u.item, u.delta); }
        for u in &shuffled(ups, perm) { y.update(u.item, u.delta); }
        prop_assert_eq!(x.counters(), y.counters());
    }

    #[test]
    fn stream_files_round_trip(ups in updates(40, 100, true)) {
        let meta = StreamMeta::describe(40, &ups, StreamOrder::Arbitrary);
        let mut text = Vec::new();
        write_text(&mut text, &StreamFile { meta, updates: ups.clone() }).unwrap();
        let back = read_stream(&text[..]).unwrap();
        prop_assert_eq!(&back.updates, &ups);
        prop_assert_eq!(back.meta, meta);
        let mut bin = Vec::new();
        write_binary(&mut bin, 40, &ups).unwrap();
        let back = read_stream(&bin[..]).unwrap();
        prop_assert_eq!(&back.updates, &ups);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn two_pass_estimate_ignores_order(seed in any::<u64>(), perm in any::<u64>()) {
        let g = generate(&GeneratorSpec::new(Distribution::Zipf { s: 1.3 }, 256, 3000, seed).with_deletions(0.1)).unwrap();
        let other = shuffled(g.updates.clone(), perm);
        let mut cfg = EstimatorConfig::new(3.0, 0.3, seed).unwrap();
        cfg.m_hint = Some(3000);
        let mut a = TwoPassFpEstimator::new(cfg.clone(), 256, StreamMode::Turnstile).unwrap();
        let mut b = TwoPassFpEstimator::new(cfg, 256, StreamMode::Turnstile).unwrap();
        let ea = a.run(&g.updates, &other).unwrap();
        let eb = b.run(&other, &g.updates).unwrap();
        prop_assert_eq!(a.candidates(), b.candidates());
        prop_assert_eq!(ea.value, eb.value);
        let f = g.frequencies();
        for (&item, &c) in a.candidates() {
            prop_assert_eq!(c, f.get(item));
        }
    }

    #[test]
    fn estimators_are_deterministic(seed in any::<u64>()) {
        let spec = GeneratorSpec::new(Distribution::PlantedHeavy { k: 2, strength: 1.0 }, 512, 4000, seed);
        let g1 = generate(&spec).unwrap();
        let g2 = generate(&spec).unwrap();
        prop_assert_eq!(&g1, &g2);
        let mut cfg = EstimatorConfig::new(3.0, 0.25, seed).unwrap();
        cfg.m_hint = Some(4000);
        let run_ro = || {
            let mut e = RandomOrderFpEstimator::new(cfg.clone(), 512).unwrap();
            e.process_all(&g1.updates).unwrap();
            e.finalize().unwrap()
        };
        prop_assert_eq!(run_ro(), run_ro());
        let run_tp = || {
            let mut e = TwoPassFpEstimator::new(cfg.clone(), 512, StreamMode::InsertionOnly).unwrap();
            e.run(&g1.updates, &g1.updates).unwrap()
        };
        prop_assert_eq!(run_tp(), run_tp());
    }

    #[test]
    fn shuffling_keeps_the_multiset(seed in any::<u64>()) {
        let base = GeneratorSpec::new(Distribution::Zipf { s: 1.1 }, 300, 5000, seed);
        let a = generate(&base).unwrap();
        let b = generate(&base.with_order(Order::Sorted)).unwrap();
        prop_assert_eq!(a.frequencies(), b.frequencies());
    }
}
