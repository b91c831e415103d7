use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn batchuq(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_batchuq"))
        .args(args)
        .current_dir(dir)
        .env_remove("BATCHUQ_TABLE_DIR")
        .output()
        .expect("run batchuq")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const SMALL: &[&str] = &["--paths", "2000", "--grid", "256"];

fn with(base: &[&str], extra: &[&str]) -> Vec<String> {
    base.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn run(args: Vec<String>, dir: &Path) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    batchuq(&refs, dir)
}

fn exp_trace(path: &Path, n: usize, header: bool) {
    let mut s = String::new();
    if header {
        s.push_str("day cost\n");
    }
    let mut state = 12345u64;
    for day in 0..n {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let u = ((state >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
        s.push_str(&format!("{day} {:.4}\n", -100.0 * u.ln()));
    }
    fs::write(path, s).unwrap();
}

#[test]
fn table_cache_hit_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = with(&["table", "--method", "ob2", "--beta", "0.2", "--b", "5", "--seed", "7"], SMALL);
    let first = run(args.clone(), dir.path());
    assert!(first.status.success(), "{}", stderr(&first));
    assert!(stderr(&first).contains("generated"));
    assert!(dir.path().join("tables/ob2_0.2_5_1_2.json").exists());
    let second = run(args, dir.path());
    assert_eq!(first.stdout, second.stdout);
    assert!(stderr(&second).contains("cache hit"));
}

#[test]
fn table_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("elsewhere");
    let out = Command::new(env!("CARGO_BIN_EXE_batchuq"))
        .args(with(&["table", "--method", "ob1", "--beta", "0.5", "--b", "2"], SMALL))
        .current_dir(dir.path())
        .env("BATCHUQ_TABLE_DIR", &cache)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(cache.join("ob1_0.5_2_1_2.json").exists());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad_alpha = run(with(&["table", "--method", "ob2", "--beta", "0.2", "--alpha", "1.5"], SMALL), dir.path());
    assert_eq!(bad_alpha.status.code(), Some(2));
    assert_eq!(batchuq(&["table", "--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(batchuq(&["experiment", "gamma", "--macroreps", "0"], dir.path()).status.code(), Some(2));
    assert_eq!(batchuq(&["analyze", "x.csv", "--ci-size", "half"], dir.path()).status.code(), Some(2));
}

#[test]
fn help_lists_flags() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, flag) in [("table", "--paths"), ("analyze", "--psi-size"), ("experiment", "--macroreps"), ("hist", "--bins")] {
        let out = batchuq(&[cmd, "--help"], dir.path());
        assert!(out.status.success());
        assert!(stdout(&out).contains(flag), "{cmd} help lacks {flag}");
    }
}

#[test]
fn analyze_report_shape() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("trace.txt");
    exp_trace(&data, 500, true);
    let out = run(with(&["analyze", "trace.txt", "--columns", "cost", "--no-cache"], SMALL), dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().filter(|l| l.contains("OB-")).collect();
    assert_eq!(rows.len(), 4, "{text}");
    assert!(rows[2].starts_with("FOB-II") && rows[2].contains(" - "));
    assert!(rows[0].contains('['));

    let json = run(with(&["analyze", "trace.txt", "--columns", "2", "--no-cache", "--format", "json"], SMALL), dir.path());
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["n"], 500);
    assert!(v["rows"][2]["bias"].is_null());
}

#[test]
fn analyze_request_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = batchuq(&["analyze", "in.csv", "--variants", "nob2,FOB-I", "--ci-size", "0.2n", "--print-request"], dir.path());
    assert!(out.status.success());
    let canon = stdout(&out);
    let req = batchuq_cli::analysis::AnalysisRequest::from_canonical(canon.trim()).unwrap();
    assert_eq!(format!("{}\n", req.canonical().unwrap()), canon);
    assert_eq!(req.variants, vec!["FOB-I", "NOB-II"]);
}

#[test]
fn analyze_data_and_degeneracy_errors() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("one.csv"), "5\n").unwrap();
    let one = run(with(&["analyze", "one.csv", "--no-cache"], SMALL), dir.path());
    assert_eq!(one.status.code(), Some(3), "{}", stderr(&one));
    fs::write(dir.path().join("flat.csv"), "7\n".repeat(200)).unwrap();
    let flat = run(with(&["analyze", "flat.csv", "--no-cache"], SMALL), dir.path());
    assert_eq!(flat.status.code(), Some(4), "{}", stderr(&flat));
    assert!(stderr(&flat).contains("degenerate"));
    fs::write(dir.path().join("ragged.csv"), "1,2\n3\n").unwrap();
    assert_eq!(run(with(&["analyze", "ragged.csv", "--no-cache"], SMALL), dir.path()).status.code(), Some(3));
    assert_eq!(run(with(&["analyze", "missing.csv", "--no-cache"], SMALL), dir.path()).status.code(), Some(3));
}

#[test]
fn experiment_smoke_and_histograms() {
    let dir = tempfile::tempdir().unwrap();
    let args = with(
        &[
            "experiment", "gamma", "--n", "200", "--macroreps", "10", "--side-reps", "50", "--truth-n", "10000",
            "--no-cache", "--format", "json", "--hist-dir", "h", "--figure-seeds", "1",
        ],
        SMALL,
    );
    let out = run(args, dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["macro_reps"], 10);
    assert_eq!(v["rows"][0]["cells"].as_array().unwrap().len(), 4);
    let h = fs::read_to_string(dir.path().join("h/gamma_n200_seed1_ob1.csv")).unwrap();
    assert!(h.starts_with("bin_lo,bin_hi,count\n"));

    let inv = run(
        with(&["experiment", "inventory", "--n", "500", "--macroreps", "5", "--side-reps", "5", "--truth-n", "5000", "--no-cache"], SMALL),
        dir.path(),
    );
    assert!(inv.status.success(), "{}", stderr(&inv));
    assert_eq!(stdout(&inv).lines().filter(|l| l.trim_start().starts_with("500")).count(), 5);
}

#[test]
fn hist_command() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("v.csv"), "x\n0\n0\n1\n1\n").unwrap();
    let out = batchuq(&["hist", "v.csv", "--column", "x", "--bins", "2", "--range", "0,1"], dir.path());
    assert!(out.status.success());
    assert_eq!(stdout(&out), "bin_lo,bin_hi,count\n0,0.5,2\n0.5,1,2\n");
    fs::write(dir.path().join("e.csv"), "x\n").unwrap();
    assert_eq!(batchuq(&["hist", "e.csv"], dir.path()).status.code(), Some(3));
}
