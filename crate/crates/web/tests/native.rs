use fpest_web::{estimate_js, estimate_view, heavy_hitters, level_profile};

#[test]
fn estimate_matches_oracle_roughly() {
    let v = estimate_view("tp-insert", "zipf", 2048, 40_000, 0.0, 3.0, 0.25, 3).unwrap();
    assert!(v.rel_err.abs() <= 0.25, "{v:?}");
    assert!(v.counters > 0 && v.bits == 64 * v.counters);
    let t = estimate_view("tp-turnstile", "planted", 1024, 20_000, 0.1, 3.0, 0.25, 4).unwrap();
    assert!(t.rel_err.abs() <= 0.25, "{t:?}");
}

#[test]
fn bad_inputs_are_errors() {
    assert!(estimate_view("ro1pass", "zipf", 512, 5000, 0.1, 3.0, 0.25, 1).is_err());
    assert!(estimate_view("nope", "zipf", 512, 5000, 0.0, 3.0, 0.25, 1).is_err());
    assert!(estimate_view("tp-insert", "zipf", 0, 5000, 0.0, 3.0, 0.25, 1).is_err());
    assert!(estimate_view("tp-insert", "zipf", 512, 5000, 0.0, 1.5, 0.25, 1).is_err());
    assert!(heavy_hitters("zipf", 512, 5000, 0.0, 1.5, 1).is_err());
}

#[test]
fn json_entry_point_serializes() {
    let s = estimate_js("tp-insert", "uniform", 64, 500, 0.0, 3.0, 0.25, 1).unwrap();
    let v: serde_json::Value = serde_json::from_str(&s).unwrap();
    assert_eq!(v["algorithm"], "tp-insert");
    assert!(v["oracle"].as_f64().unwrap() > 0.0);
}

#[test]
fn level_profile_partitions_exact_value() {
    let rows = level_profile("zipf", 1024, 20_000, 3.0, 0.25, 7).unwrap();
    assert!(!rows.is_empty());
    let g = fpest::streamgen::generate(&fpest::streamgen::GeneratorSpec::new(
        fpest::streamgen::Distribution::Zipf { s: 1.4 },
        1024,
        20_000,
        7,
    ))
    .unwrap();
    let f = g.frequencies();
    let truth = fpest::exact_fp(&f, 3.0);
    let exact: f64 = rows.iter().map(|r| r.exact).sum();
    assert!((exact - truth).abs() <= 1e-9 * truth);
    for r in &rows {
        assert!(r.lower < r.upper);
    }
}

#[test]
fn heavy_hitters_include_planted_items() {
    let rows = heavy_hitters("planted", 2048, 50_000, 0.0, 0.2, 5).unwrap();
    let reported: Vec<_> = rows.iter().filter(|r| r.reported).collect();
    assert!(reported.len() >= 4);
    let top: Vec<_> = rows.iter().take(4).collect();
    assert!(top.iter().all(|r| r.reported));
}
