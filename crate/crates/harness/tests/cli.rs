use std::path::Path;
use std::process::{Command, Output};

use fpest::format::read_stream_path;
use fpest::{apply_stream, exact_fp, ConstantsMode};
use fpest_harness::{bench, default_workload, summarize, Algorithm, BenchSpec};
use serde_json::Value;

fn fpest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpest")).args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn generate(dir: &Path, name: &str, extra: &[&str]) -> String {
    let path = dir.join(name).to_str().unwrap().to_owned();
    let mut args = vec!["generate", "--out", &path];
    args.extend_from_slice(extra);
    json(&fpest(&args));
    path
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--kind", "zipf", "--s", "1.4", "--n", "4096", "--m", "200000", "--order", "rand", "--seed", "7"];
    let a = generate(dir.path(), "a.txt", &args);
    let b = generate(dir.path(), "b.txt", &args);
    let (fa, fb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(fa, fb);
    let s = read_stream_path(&a).unwrap();
    assert_eq!((s.meta.n, s.meta.m), (4096, 200_000));
    assert!(s.updates.iter().all(|u| u.delta == 1));
}

#[test]
fn binary_and_text_files_agree() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--kind", "planted", "--n", "500", "--m", "5000", "--deletions", "0.2", "--seed", "3"];
    let t = generate(dir.path(), "t.txt", &args);
    let mut bin_args = args.to_vec();
    bin_args.extend(["--format", "binary"]);
    let b = generate(dir.path(), "b.bin", &bin_args);
    assert_eq!(read_stream_path(&t).unwrap().updates, read_stream_path(&b).unwrap().updates);
}

#[test]
fn spike_instance_passes_promise_check() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.txt");
    let out = fpest(&["generate", "--kind", "spike", "--case", "2", "--n", "4096", "--seed", "5", "--out", path.to_str().unwrap()]);
    let v = json(&out);
    let spike = &v["spike"];
    assert_eq!(spike["case"], "Two");
    let vals: Vec<f64> = spike["case_values"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!(vals[1] >= 1.25 * vals[0] && vals[2] >= 1.25 * vals[1]);
    let s = read_stream_path(&path).unwrap();
    let fp = exact_fp(&apply_stream(&s.updates, s.meta.n).unwrap(), 3.0);
    assert!((fp - vals[1]).abs() <= 1e-9 * fp);
}

#[test]
fn zero_universe_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = fpest(&["generate", "--n", "0", "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(fpest(&["bench", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(fpest(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(fpest(&["sweep", "--ns", "64,128,256"]).status.code(), Some(2));
}

#[test]
fn oracle_estimate_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let f = generate(dir.path(), "z.txt", &["--n", "300", "--m", "4000", "--deletions", "0.1"]);
    let s = read_stream_path(&f).unwrap();
    let truth = exact_fp(&apply_stream(&s.updates, 300).unwrap(), 4.0);
    let v = json(&fpest(&["estimate", &f, "--algorithm", "oracle", "--p", "4"]));
    assert_eq!(v["estimate"].as_f64().unwrap(), truth);
}

#[test]
fn contract_refusals_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let arb = generate(dir.path(), "arb.txt", &["--n", "100", "--m", "1000", "--order", "sorted"]);
    let out = fpest(&["estimate", &arb, "--algorithm", "ro1pass"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("random-order"));

    let turn = generate(dir.path(), "turn.txt", &["--n", "100", "--m", "1000", "--deletions", "0.1"]);
    assert_eq!(fpest(&["estimate", &turn, "--algorithm", "ro1pass"]).status.code(), Some(3));
    assert_eq!(fpest(&["estimate", &turn, "--algorithm", "tp-insert"]).status.code(), Some(3));
    assert_eq!(fpest(&["estimate", &turn, "--constants-mode", "paper"]).status.code(), Some(3));
    let v = json(&fpest(&["estimate", &turn, "--algorithm", "tp-turnstile", "--with-oracle"]));
    assert!(v["median_rel_err"].as_f64().unwrap() >= 0.0);
}

#[test]
fn turnstile_estimate_over_trials() {
    let dir = tempfile::tempdir().unwrap();
    let f = generate(dir.path(), "t.txt", &["--n", "2048", "--m", "60000", "--deletions", "0.1", "--seed", "9"]);
    let csv = dir.path().join("rows.csv");
    let v = json(&fpest(&[
        "estimate", &f, "--algorithm", "tp-turnstile", "--trials", "12", "--with-oracle", "--out", csv.to_str().unwrap(),
    ]));
    assert!(v["success_rate"].as_f64().unwrap() >= 2.0 / 3.0, "{v}");
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().count(), 13);
    assert!(rows.starts_with("trial,seed,estimate,rel_err,counters,bits"));
}

#[test]
fn bench_csv_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let out = fpest(&[
            "bench", "--algorithm", "ro1pass", "--n", "1024", "--m", "20000", "--trials", "3", "--seed", "42", "--out",
            path.to_str().unwrap(),
        ]);
        (json(&out), std::fs::read(path).unwrap())
    };
    let (s1, c1) = run("a.csv");
    let (s2, c2) = run("b.csv");
    assert_eq!(c1, c2);
    assert_eq!(s1, s2);
    for key in ["algorithm", "n", "m", "p", "eps", "trials", "success_rate", "median_rel_err", "bits_estimate"] {
        assert!(s1.get(key).is_some(), "summary lacks {key}");
    }
    assert_eq!(s1["algorithm"], "ro1pass");
    let header = String::from_utf8(c1).unwrap();
    assert!(header.starts_with("trial,seed,estimate,oracle,rel_err,success,counters,bits\n"));
}

#[test]
fn single_trial_summary_equals_row() {
    let spec = BenchSpec {
        algorithm: Algorithm::TpInsert,
        workload: default_workload(512, 8000),
        p: 3.0,
        eps: 0.25,
        constants_mode: ConstantsMode::Practical,
        seed: 1,
    };
    let out = bench(&spec, 1).unwrap();
    assert_eq!(out.rows.len(), 1);
    let row = &out.rows[0];
    let s = &out.summary;
    assert_eq!(s.median_rel_err, row.rel_err.abs());
    assert_eq!(s.p95_rel_err, row.rel_err.abs());
    assert_eq!(s.success_rate, if row.success { 1.0 } else { 0.0 });
    assert_eq!(s.bits_estimate, row.bits);
    assert_eq!(summarize(&spec, &out.rows), *s);
}

#[test]
fn sweep_reports_slope_and_levels() {
    let out = fpest(&["sweep", "--ns", "256,512,1024,2048", "--m-per-n", "4", "--trials", "1", "--algorithm", "tp-insert"]);
    let v = json(&out);
    assert_eq!(v["target_slope"].as_f64().unwrap(), 1.0 - 2.0 / 3.0);
    let band = v["slope_band"].as_array().unwrap();
    let slope = v["slope"].as_f64().unwrap();
    assert!(band[0].as_f64().unwrap() <= slope && slope <= band[1].as_f64().unwrap());
    assert!(!v["per_level_counters"].as_array().unwrap().is_empty());
}
