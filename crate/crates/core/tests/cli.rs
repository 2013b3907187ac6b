use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fou(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fou")).args(args).arg("--out").arg(out).output().unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Column `k` of a CSV body as numbers.
fn column(text: &str, k: usize) -> Vec<f64> {
    text.lines().skip(1).map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

#[test]
fn simulate_is_reproducible_and_writes_meta() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--process", "fou", "--theta", "1", "--sigma", "1", "--hurst", "0.7", "--T", "1", "--n", "256", "--paths", "100", "--seed", "42"];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(fou(&args, &a).status.success());
    assert!(fou(&args, &b).status.success());
    assert_eq!(fs::read(a.join("paths.csv")).unwrap(), fs::read(b.join("paths.csv")).unwrap());
    let paths = read(&a, "paths.csv");
    assert!(paths.starts_with("path_id,t,value\n0,0,0e0\n"));
    assert_eq!(paths.lines().count(), 1 + 100 * 257);
    let meta = read(&a, "meta.txt");
    for key in ["command = simulate", "process = fou", "hurst = 0.7", "n = 256", "paths = 100", "seed = 42", "c_H = ", "version = "] {
        assert!(meta.contains(key), "{key} missing from\n{meta}");
    }
}

#[test]
fn invalid_hurst_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fou(&["simulate", "--process", "fou", "--hurst", "1.2"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("hurst must lie in (0,1)"), "{}", stderr(&o));
    assert!(stderr(&o).contains("--hurst"));
}

#[test]
fn fbm_at_half_is_brownian_motion() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("fbm"), dir.path().join("bm"));
    assert!(fou(&["simulate", "--process", "fbm", "--hurst", "0.5", "--n", "64", "--paths", "3", "--seed", "7"], &a).status.success());
    assert!(fou(&["simulate", "--process", "bm", "--n", "64", "--paths", "3", "--seed", "7"], &b).status.success());
    assert_eq!(read(&a, "paths.csv"), read(&b, "paths.csv"));
}

#[test]
fn transfer_round_trip_at_half() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(fou(&["simulate", "--process", "fou", "--hurst", "0.5", "--n", "1024", "--paths", "5"], &sim).status.success());
    let input = sim.join("paths.csv");
    let out = dir.path().join("rt");
    let o = fou(&["transfer", "--input", input.to_str().unwrap(), "--direction", "fou-bm", "--hurst", "0.5", "--round-trip"], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let rt = read(&out, "roundtrip.csv");
    assert!(rt.starts_with("path_id,sup_error,sup_norm,relative_error\n"));
    let rel = column(&rt, 3);
    assert_eq!(rel.len(), 5);
    assert!(rel.iter().all(|&e| e <= 0.05), "{rel:?}");
    assert!(read(&out, "meta.txt").contains("direction = fou-bm"));
}

#[test]
fn transfer_bm_to_fbm_at_half_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(fou(&["simulate", "--process", "bm", "--n", "32", "--paths", "2"], &sim).status.success());
    let out = dir.path().join("t");
    let input = sim.join("paths.csv");
    assert!(fou(&["transfer", "--input", input.to_str().unwrap(), "--direction", "bm-fbm", "--hurst", "0.5"], &out).status.success());
    assert_eq!(read(&out, "paths.csv"), read(&sim, "paths.csv"));
}

#[test]
fn transfer_usage_and_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = fou(&["transfer", "--input", "x.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--direction"));
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "path_id,t,value\n0,0,0\n0,0.5,1\n0,1,nope\n").unwrap();
    let o = fou(&["transfer", "--input", bad.to_str().unwrap(), "--direction", "bm-fou"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn predict_markov_case_with_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(fou(&["simulate", "--process", "fou", "--theta", "1.5", "--hurst", "0.5", "--n", "64", "--paths", "2", "--seed", "3"], &sim).status.success());
    let input = sim.join("paths.csv");
    let out = dir.path().join("pred");
    let o = fou(
        &["predict", "--input", input.to_str().unwrap(), "--path-id", "1", "--theta", "1.5", "--hurst", "0.5", "--u", "0.5", "--targets", "0.5,0.75,1", "--oracle"],
        &out,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let pred = read(&out, "prediction.csv");
    assert!(pred.starts_with("t,mean,var,oracle_mean,oracle_var\n"));
    let (mean, var, oracle) = (column(&pred, 1), column(&pred, 2), column(&pred, 3));
    let sims = read(&sim, "paths.csv");
    let last: f64 = sims.lines().find(|l| l.starts_with("1,0.5,")).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    // observed point: last observation, no variance
    assert_eq!(mean[0], last);
    assert_eq!(var[0], 0.0);
    for (k, t) in [0.5f64, 0.75, 1.0].iter().enumerate() {
        let sd = var[k].sqrt().max(1e-12);
        assert!((mean[k] - oracle[k]).abs() <= 0.02 * sd.max(mean[k].abs()));
        assert!((mean[k] - (-1.5 * (t - 0.5)).exp() * last).abs() < 1e-10);
    }
    assert_eq!(read(&out, "prediction_cov.csv").lines().count(), 1 + 9);
}

#[test]
fn predict_rejects_bad_base_times() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(fou(&["simulate", "--process", "fou", "--hurst", "0.7", "--n", "16"], &sim).status.success());
    let input = sim.join("paths.csv");
    let input = input.to_str().unwrap();
    let o = fou(&["predict", "--input", input, "--hurst", "0.7", "--u", "0", "--targets", "0.5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty history"));
    let o = fou(&["predict", "--input", input, "--hurst", "0.7", "--u", "2", "--targets", "3"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("beyond the observed range"));
    let o = fou(&["predict", "--input", input, "--hurst", "0.7", "--u", "0.5", "--targets", "0.25"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_exit_codes_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = fou(&["verify", "--suite", "gram", "--hurst", "0.75", "--n", "512"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = read(dir.path(), "verify_report.csv");
    assert!(report.starts_with("check_name,value,tolerance,pass\n"));
    assert!(column(&report, 1)[0] <= 0.01);

    let all = dir.path().join("all");
    let o = fou(&["verify", "--suite", "all", "--hurst", "0.5", "--n", "64", "--paths", "50"], &all);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report = read(&all, "verify_report.csv");
    assert!(report.lines().skip(1).all(|l| l.ends_with(",true")));
    for name in ["reduction_L_exponential", "reduction_L_inverse_linear", "reduction_fbm_equals_bm"] {
        let line = report.lines().find(|l| l.starts_with(name)).unwrap();
        assert!(line.contains(",1e-10,true"), "{line}");
    }

    let o = fou(&["verify", "--suite", "gram", "--hurst", "0.25", "--n", "32", "--tol-gram", "1e-9"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = fou(&["verify", "--suite", "bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fou"))
        .args(["simulate", "--process", "bm", "--n", "8"])
        .env("FOU_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("paths.csv").exists() && dir.path().join("meta.txt").exists());
}
