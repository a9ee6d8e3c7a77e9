use std::fs;
use std::path::Path;

use liberation::cli::run;

fn go(args: &[&str]) -> i32 {
    run(std::iter::once("liberation").chain(args.iter().copied()))
}

fn out(dir: &Path, sub: &str) -> String {
    dir.join(sub).display().to_string()
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(go(&["--help"]), 0);
    assert_eq!(go(&["density", "--no-such-flag"]), 1);
    assert_eq!(go(&["frobnicate"]), 1);
    assert_eq!(go(&["verify", "bogus", "--out", &out(d.path(), "v")]), 1);
    assert_eq!(go(&["density", "--eps", "0.5", "--out", &out(d.path(), "e")]), 1);
    assert_eq!(go(&["density", "--preset", "equal", "--alpha", "2", "--out", &out(d.path(), "a")]), 1);
    assert_eq!(go(&["flow", "--workers", "0", "--out", &out(d.path(), "w")]), 1);
    assert_eq!(go(&["boundary", "--t", "0", "--out", &out(d.path(), "z")]), 1);
    assert_eq!(go(&["atoms", "--grid", "64", "--eps", "1e-2", "--out", &out(d.path(), "ok")]), 0);
}

#[test]
fn no_partial_output_on_failure() {
    let d = tempfile::tempdir().unwrap();
    for args in [
        vec!["density", "--t", "0.5,0.2"],
        vec!["boundary", "--t", "0.2,nan"],
        vec!["density", "--t", "0.2,0.5", "--eps", "1e-9"],
        vec!["compare", "--samples", "/nonexistent.csv"],
    ] {
        let dir = d.path().join("x");
        let mut a = args.clone();
        let o = dir.display().to_string();
        a.extend(["--out", &o]);
        assert_ne!(go(&a), 0, "{args:?}");
        assert!(!dir.exists() || !dir.join("report.json").exists(), "{args:?}");
        let _ = fs::remove_dir_all(&dir);
    }
}

#[test]
fn outputs_are_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let run_once = |sub: &str, workers: &str| {
        let o = out(d.path(), sub);
        let code = go(&["density", "--preset", "free", "--alpha", "0.2", "--beta", "0.6", "--t", "0.3,0.6", "--grid", "96",
            "--eps", "1e-2", "--workers", workers, "--out", &o]);
        assert_eq!(code, 0);
        fs::read(d.path().join(sub).join("nu_t0.6.csv")).unwrap()
    };
    assert_eq!(run_once("a", "1"), run_once("b", "2"));
}

#[test]
fn seed_at_origin_stays_put() {
    let d = tempfile::tempdir().unwrap();
    let o = out(d.path(), "f");
    assert_eq!(go(&["flow", "--preset", "equal", "--alpha", "0.3", "--t", "1", "--out", &o]), 0);
    let mut r = csv::Reader::from_path(d.path().join("f/flow_0.csv")).unwrap();
    let h = r.headers().unwrap().clone();
    let col = |n: &str| h.iter().position(|x| x == n).unwrap();
    let (re, im, t) = (col("phi_re"), col("phi_im"), col("t"));
    let mut last_t = 0.0f64;
    for rec in r.records() {
        let rec = rec.unwrap();
        assert_eq!(rec[re].parse::<f64>().unwrap(), 0.0);
        assert_eq!(rec[im].parse::<f64>().unwrap(), 0.0);
        last_t = rec[t].parse().unwrap();
    }
    assert!((last_t - 1.0).abs() < 1e-12);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(d.path().join("f/report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["preset"]["name"], "equal");
    assert_eq!(report["trajectories"].as_array().unwrap().len(), 9);
}

#[test]
fn csv_format() {
    let d = tempfile::tempdir().unwrap();
    let o = out(d.path(), "m");
    assert_eq!(go(&["mu-density", "--grid", "32", "--eps", "1e-2", "--out", &o]), 0);
    let text = fs::read_to_string(d.path().join("m/mu_t0.5.csv")).unwrap();
    assert!(text.starts_with("x,density\n"));
    assert!(!text.contains('\r') && !text.contains(';'));
    assert_eq!(text.lines().count(), 33);
}

#[test]
fn mc_and_compare_agree() {
    let d = tempfile::tempdir().unwrap();
    let o = out(d.path(), "mc");
    assert_eq!(go(&["mc", "--n", "64", "--trials", "3", "--grid", "128", "--seed", "7", "--out", &o]), 0);
    let samples = d.path().join("mc/mc_phases_t0.5.csv").display().to_string();
    let o2 = out(d.path(), "cmp");
    assert_eq!(go(&["compare", "--samples", &samples, "--grid", "128", "--out", &o2]), 0);
    let read = |p: &str| -> serde_json::Value { serde_json::from_slice(&fs::read(d.path().join(p)).unwrap()).unwrap() };
    let a = read("mc/mc_report_t0.5.json");
    let b = read("cmp/compare.json");
    assert_eq!(a["ks"], b["ks"]);
    assert!(a["ks"].as_f64().unwrap() < 0.1);
}

#[test]
fn verify_suite_passes() {
    let d = tempfile::tempdir().unwrap();
    let o = out(d.path(), "v");
    assert_eq!(go(&["verify", "closedform", "--out", &o]), 0);
    assert!(d.path().join("v/verify_closedform.json").exists());
}
