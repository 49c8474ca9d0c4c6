use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn depthscale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depthscale")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = depthscale(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, seed: u64, extra: &[&str]) {
    let seed = seed.to_string();
    let dir = dir.to_str().unwrap();
    let mut args = vec!["synth", "--seed", &seed, "--height", "120", "--width", "160", "--regions", "4,8", "--out-dir", dir];
    args.extend_from_slice(extra);
    ok(&args);
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_writes_scene_files() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 1, &[]);
    for name in ["gt.dpg", "rel.dpg", "mask.pgm", "scene.json"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
}

#[test]
fn rescale_then_evaluate_recovers_exact_scene() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s");
    synth(&s, 5, &[]);
    let pred = dir.path().join("pred.dpg");
    ok(&[
        "rescale", "--relative", p(&s.join("rel.dpg")), "--mask", p(&s.join("mask.pgm")), "--gt", p(&s.join("gt.dpg")),
        "--n-samples", "500", "--seed", "2", "--method", "slf", "--already-depth", "--output", p(&pred),
    ]);
    let metrics = dir.path().join("metrics.json");
    ok(&["evaluate", "--pred", p(&pred), "--gt", p(&s.join("gt.dpg")), "--output", p(&metrics)]);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
    let abs_rel = m["abs_rel"].as_f64().unwrap();
    assert!(abs_rel < 1e-9, "abs_rel {abs_rel}");
    assert_eq!(m["valid_pixel_count"].as_u64(), Some(120 * 160));
}

#[test]
fn sample_and_rescale_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s");
    synth(&s, 6, &["--family", "planar"]);
    let csv = dir.path().join("samples.csv");
    let stdout = ok(&["sample", "--gt", p(&s.join("gt.dpg")), "--beams", "8", "--output", p(&csv)]);
    assert!(stdout.contains("wrote 1280 samples"), "{stdout}");
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("row,col,depth_m\n"));
    // a rejected row is skipped with a warning
    fs::write(&csv, format!("{text}0,0,-1.0\n")).unwrap();
    let out = depthscale(&[
        "rescale", "--relative", p(&s.join("rel.dpg")), "--mask", p(&s.join("mask.pgm")), "--samples", p(&csv),
        "--method", "ssf", "--already-depth", "--output", p(&dir.path().join("pred.pfm")),
        "--report", p(&dir.path().join("report.json")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipping sample"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let regions = report["regions"].as_array().unwrap();
    assert!(!regions.is_empty());
    assert!(regions[0]["slope_per_col"].is_f64());
}

#[test]
fn bench_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    for i in 0..10 {
        synth(&scenes.join(format!("scene{i:02}")), 100 + i, &["--noise-sigma", "0.02"]);
    }
    let csv = dir.path().join("bench.csv");
    let stdout = ok(&[
        "bench", "--scenes", p(&scenes), "--method", "slf,ssf", "--n-samples", "250,500,1000,2000",
        "--seed", "0,1,2,3,4", "--already-depth", "--output", p(&csv),
    ]);
    assert!(stdout.contains("wrote 400 rows"));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 401);
    assert!(text.starts_with("image_id,method,region_aware,n_samples,seed,abs_rel,"));
}

#[test]
fn manifest_replay_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    synth(&scenes.join("a"), 11, &["--family", "planar", "--noise-sigma", "0.01"]);
    synth(&scenes.join("b"), 12, &["--layout", "voronoi"]);
    let a = scenes.join("a");
    let pred = dir.path().join("pred.pfm");
    let csv = dir.path().join("bench.csv");
    let rescale_manifest = dir.path().join("rescale.json");
    let bench_manifest = dir.path().join("bench.json");
    ok(&[
        "rescale", "--relative", p(&a.join("rel.dpg")), "--mask", p(&a.join("mask.pgm")), "--gt", p(&a.join("gt.dpg")),
        "--n-samples", "300", "--noise-sigma", "0.02", "--seed", "7", "--already-depth", "--output", p(&pred),
        "--save-manifest", p(&rescale_manifest),
    ]);
    ok(&[
        "bench", "--scenes", p(&scenes), "--n-samples", "100,200", "--seed", "1,2", "--already-depth",
        "--output", p(&csv), "--save-manifest", p(&bench_manifest),
    ]);
    let first = (fs::read(&pred).unwrap(), fs::read(&csv).unwrap());
    fs::remove_file(&pred).unwrap();
    fs::remove_file(&csv).unwrap();
    ok(&["--manifest", p(&rescale_manifest)]);
    ok(&["--manifest", p(&bench_manifest)]);
    assert_eq!(fs::read(&pred).unwrap(), first.0);
    assert_eq!(fs::read(&csv).unwrap(), first.1);
}

#[test]
fn input_errors_exit_2() {
    let out = depthscale(&["evaluate", "--pred", "/nonexistent/p.pfm", "--gt", "/nonexistent/g.pfm"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/p.pfm"));
    let out = depthscale(&["rescale", "--relative", "r.pfm", "--samples", "s.csv", "--method", "bogus", "-o", "x.pfm"]);
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.pfm");
    fs::write(&bad, b"not a depth map").unwrap();
    let out = depthscale(&["evaluate", "--pred", p(&bad), "--gt", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exhausted_fallback_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s");
    synth(&s, 2, &[]);
    let csv = dir.path().join("one.csv");
    fs::write(&csv, "row,col,depth_m\n3,4,2.5\n").unwrap();
    // a single sample cannot support the global affine fit, which has no fallback
    let out = depthscale(&[
        "rescale", "--relative", p(&s.join("rel.dpg")), "--samples", p(&csv), "--method", "global-linear",
        "--already-depth", "--output", p(&dir.path().join("o.pfm")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn manifest_and_subcommand_conflict() {
    let out = depthscale(&["--manifest", "m.json", "sample", "--gt", "g.dpg", "--n-samples", "3", "-o", "s.csv"]);
    assert_eq!(out.status.code(), Some(2));
}
