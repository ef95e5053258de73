use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_heavytail"))
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().expect("spawn");
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        run_ok(&[
            "simulate",
            "--family",
            "gpd",
            "--xi",
            "0.5",
            "--n",
            "500",
            "--seed",
            "7",
            "--output",
            path.to_str().unwrap(),
        ]);
    }
    let ca = std::fs::read(&a).unwrap();
    let cb = std::fs::read(&b).unwrap();
    assert_eq!(ca, cb, "same seed must give byte-identical output");
    let text = String::from_utf8(ca).unwrap();
    assert_eq!(text.lines().next(), Some("value"));
    assert_eq!(text.lines().count(), 501);
}

#[test]
fn fit_then_summarize_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    let outdir = dir.path().join("out");
    run_ok(&[
        "simulate",
        "--family",
        "gpd",
        "--xi",
        "0.5",
        "--n",
        "400",
        "--seed",
        "11",
        "--output",
        input.to_str().unwrap(),
    ]);
    let stdout = run_ok(&[
        "fit",
        "--input",
        input.to_str().unwrap(),
        "--output-dir",
        outdir.to_str().unwrap(),
        "--cache-dir",
        dir.path().join("cache").to_str().unwrap(),
        "--iters",
        "3000",
        "--seed",
        "3",
    ]);
    assert!(stdout.contains("xi mean"), "fit output: {stdout}");
    assert!(outdir.join("draws.csv").exists());
    assert!(outdir.join("manifest.json").exists());

    let summary = run_ok(&[
        "summarize",
        "--draws",
        outdir.join("draws.csv").to_str().unwrap(),
        "--manifest",
        outdir.join("manifest.json").to_str().unwrap(),
        "--levels",
        "5.0",
        "--cache-dir",
        dir.path().join("cache").to_str().unwrap(),
    ]);
    let report: serde_json::Value = serde_json::from_str(&summary).unwrap();
    let xi = report["xi_mean"].as_f64().unwrap();
    assert!(xi > 0.0 && xi < 2.0, "xi mean {xi}");
    assert_eq!(report["quantiles"].as_array().unwrap().len(), 4);
    assert_eq!(report["return_periods"].as_array().unwrap().len(), 1);
}

#[test]
fn config_file_applies_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    run_ok(&[
        "simulate",
        "--family",
        "gpd",
        "--xi",
        "0.5",
        "--n",
        "300",
        "--seed",
        "2",
        "--output",
        input.to_str().unwrap(),
    ]);
    let config = dir.path().join("run.conf");
    std::fs::write(&config, "n_iter = 2000\nseed = 9\n# comment\nknots = 11\n").unwrap();
    let outdir = dir.path().join("out");
    // flag overrides the config-file seed; run twice to check determinism
    for sub in ["o1", "o2"] {
        run_ok(&[
            "fit",
            "--input",
            input.to_str().unwrap(),
            "--output-dir",
            outdir.join(sub).to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "4",
        ]);
    }
    let d1 = std::fs::read(outdir.join("o1/draws.csv")).unwrap();
    let d2 = std::fs::read(outdir.join("o2/draws.csv")).unwrap();
    assert_eq!(d1, d2);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(outdir.join("o1/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["sampler"]["n_iter"], 2000);
    assert_eq!(manifest["config"]["sampler"]["seed"], 4);
}

#[test]
fn preprocessing_truncates_and_errors_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    // date column plus values, with a header
    let mut rows = String::from("date,precip\n");
    for i in 0..200 {
        rows.push_str(&format!("2001-01-{:02},{}\n", (i % 28) + 1, 0.03 + 0.01 * (i as f64 + 1.0)));
    }
    rows.push_str("2001-12-31,0.01\n");
    std::fs::write(&input, rows).unwrap();
    let outdir = dir.path().join("out");
    let stdout = run_ok(&[
        "fit",
        "--input",
        input.to_str().unwrap(),
        "--output-dir",
        outdir.to_str().unwrap(),
        "--iters",
        "1000",
        "--truncate-below",
        "0.03",
    ]);
    // the 0.01 record is dropped
    assert!(stdout.contains("n = 200 (of 201 raw)"), "got: {stdout}");

    // malformed input exits 2
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "value\n1.0\nnot-a-number\n").unwrap();
    let out = bin()
        .args(["fit", "--input", bad.to_str().unwrap(), "--output-dir", outdir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // missing file exits 2
    let out = bin()
        .args([
            "fit",
            "--input",
            dir.path().join("nope.csv").to_str().unwrap(),
            "--output-dir",
            outdir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_pot_reports_and_floors() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    run_ok(&[
        "simulate",
        "--family",
        "gpd",
        "--xi",
        "0.5",
        "--n",
        "800",
        "--seed",
        "5",
        "--output",
        input.to_str().unwrap(),
    ]);
    let report = run_ok(&[
        "fit-pot",
        "--input",
        input.to_str().unwrap(),
        "--threshold",
        "1.0",
        "--p-list",
        "0.01,0.001",
        "--iters",
        "3000",
    ]);
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert!(v["exceedances"].as_u64().unwrap() >= 30);
    assert_eq!(v["quantiles"].as_array().unwrap().len(), 2);

    // a threshold above the sample maximum exits 3 (numerical failure class)
    let out = bin()
        .args([
            "fit-pot",
            "--input",
            input.to_str().unwrap(),
            "--threshold",
            "1e9",
            "--iters",
            "1000",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn study_writes_row_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("row");
    run_ok(&[
        "study",
        "--family",
        "gpd",
        "--xi",
        "0.5",
        "--method",
        "thresh",
        "--replicates",
        "2",
        "--n",
        "400",
        "--iters",
        "1500",
        "--seed",
        "1",
        "--output",
        prefix.to_str().unwrap(),
    ]);
    let csv = std::fs::read_to_string(prefix.with_extension("csv")).unwrap();
    assert!(csv.starts_with("xi_true,method,bias,rmse,coverage"));
    assert_eq!(csv.lines().count(), 2);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(prefix.with_extension("json")).unwrap())
            .unwrap();
    assert_eq!(manifest["row"]["replicates"], 2);
}

#[test]
fn xi_curve_emits_csv() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    run_ok(&[
        "simulate",
        "--family",
        "gpd",
        "--xi",
        "0.5",
        "--n",
        "600",
        "--seed",
        "8",
        "--output",
        input.to_str().unwrap(),
    ]);
    let out = dir.path().join("curve.csv");
    run_ok(&[
        "xi-curve",
        "--input",
        input.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--thresholds",
        "0.1,0.4,1.3",
        "--iters",
        "1500",
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("threshold,exceedances,xi_mean"));
    assert!(text.lines().count() >= 3);
}

#[test]
fn lambda_grid_cache_reused() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    run_ok(&[
        "simulate",
        "--family",
        "gpd",
        "--xi",
        "0.5",
        "--n",
        "300",
        "--seed",
        "6",
        "--output",
        input.to_str().unwrap(),
    ]);
    let cache = dir.path().join("cache");
    for sub in ["a", "b"] {
        run_ok(&[
            "fit",
            "--input",
            input.to_str().unwrap(),
            "--output-dir",
            dir.path().join(sub).to_str().unwrap(),
            "--cache-dir",
            cache.to_str().unwrap(),
            "--iters",
            "1000",
        ]);
    }
    let entries: Vec<_> = std::fs::read_dir(&cache).unwrap().collect();
    assert_eq!(entries.len(), 1, "one cache entry for one configuration");
    // identical runs through the cache are byte-identical
    let d1 = std::fs::read(dir.path().join("a/draws.csv")).unwrap();
    let d2 = std::fs::read(dir.path().join("b/draws.csv")).unwrap();
    assert_eq!(d1, d2);
    assert!(Path::new(&cache).exists());
}
