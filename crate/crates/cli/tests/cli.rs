use std::path::Path;
use std::process::{Command, Output};

use portanet::Tensor;

fn portanet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_portanet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = portanet(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap_or_else(|e| panic!("{e}: {text}"))
}

fn small_unet(dir: &Path, upsample: &str) -> String {
    let g = p(dir, &format!("unet-{upsample}.json"));
    ok(&[
        "build", "--family", "unet", "--upsample", upsample, "--height", "32", "--width", "32", "--channels", "8",
        "--depth", "3", "--seed", "5", "-o", &g,
    ]);
    g
}

#[test]
fn build_analyze_partition_latency() {
    let dir = tempfile::tempdir().unwrap();
    let g = small_unet(dir.path(), "tc");
    let table = ok(&["analyze", &g]);
    assert!(table.contains("TRANSPOSE_CONV_2D"));
    let report = json(&ok(&["analyze", &g, "--json"]));
    assert!(report["total_macs"].as_u64().unwrap() > 0);

    let plan = json(&ok(&["partition", &g, "--profile", "mate30-like", "--dtype", "f16"]));
    let reasons = plan["fallback_reasons"].as_object().unwrap();
    assert!(!reasons.is_empty());
    assert!(reasons.keys().all(|k| k.contains("tconv")));

    let est = json(&ok(&["latency", &g, "--profile", "reno3-like"]));
    assert!(est["total_ms"].as_f64().unwrap() > 0.0);

    let csv = p(dir.path(), "sweep.csv");
    let rows = json(&ok(&["latency", &g, "--profile", "mate30-like", "--sweep", "64x64,128x128", "--csv", &csv]));
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0]["estimate"]["total_ms"].as_f64() < rows[1]["estimate"]["total_ms"].as_f64());
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 3);

    let bad = portanet(&["latency", &g, "--profile", "mate30-like", "--sweep", "30x30"]);
    assert!(!bad.status.success());
}

#[test]
fn rewrite_prune_quantize_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let g = small_unet(dir.path(), "tc");
    let d2s = p(dir.path(), "d2s.json");
    let msg = ok(&["rewrite", &g, "--pass", "tc2d2s", "-o", &d2s]);
    assert!(msg.starts_with("tc2d2s"));
    let plan = json(&ok(&["partition", &d2s, "--profile", "mate30-like"]));
    assert!(plan["fallback_reasons"].as_object().unwrap().is_empty());

    let bad = portanet(&["rewrite", &g, "--pass", "nope", "-o", &d2s]);
    assert!(!bad.status.success());

    let pruned = p(dir.path(), "pruned.json");
    let rep = json(&ok(&["prune", &d2s, "--target", "0.3", "-o", &pruned]));
    assert!(rep["achieved_reduction"].as_f64().unwrap() > 0.0);
    assert!(!portanet(&["prune", &d2s, "--target", "0.99", "-o", &pruned]).status.success());

    let calib = dir.path().join("calib");
    std::fs::create_dir(&calib).unwrap();
    for i in 0..3 {
        Tensor::random([1, 32, 32, 3], i, 0.0, 1.0)
            .save(calib.join(format!("{i}.bin")))
            .unwrap();
    }
    let q8 = p(dir.path(), "q8.json");
    let q16 = p(dir.path(), "q16.json");
    ok(&["quantize", &pruned, "--bits", "8", "--calib", &calib.display().to_string(), "-o", &q8]);
    ok(&["quantize", &pruned, "--bits", "16", "-o", &q16]);
    let e8 = json(&ok(&["qerror", &pruned, &q8, "--random", "2", "--json"]));
    let e16 = json(&ok(&["qerror", &pruned, &q16, "--random", "2", "--json"]));
    assert!(e16["psnr_db"].as_f64().unwrap() > e8["psnr_db"].as_f64().unwrap());
    let text = ok(&["qerror", &pruned, &q8, "--random", "2"]);
    assert!(text.contains("8-bit"));
}

#[test]
fn run_and_metric() {
    let dir = tempfile::tempdir().unwrap();
    let g = small_unet(dir.path(), "bilinear");
    let x = p(dir.path(), "x.bin");
    Tensor::random([1, 32, 32, 3], 9, 0.0, 1.0).save(&x).unwrap();
    let a = p(dir.path(), "a.bin");
    let b = p(dir.path(), "b.bin");
    ok(&["run", &g, "--input", &x, "--precision", "f32", "-o", &a]);
    ok(&["run", &g, "--input", &x, "--precision", "f16", "-o", &b]);
    let same = json(&ok(&["metric", &a, &a, "--psnr", "--ssim"]));
    assert_eq!(same["psnr_db"], "inf");
    assert_eq!(same["ssim"].as_f64(), Some(1.0));
    let diff = json(&ok(&["metric", &a, &b]));
    let l2 = diff["l2_per_pixel"].as_f64().unwrap();
    assert!(l2 > 0.0 && l2 < 1e-4, "{l2}");
    assert!(!portanet(&["run", &g, "--input", &x, "--precision", "int4"]).status.success());
}

#[test]
fn frontier_report_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let r1 = p(dir.path(), "r1.json");
    let r2 = p(dir.path(), "r2.json");
    let args = |out: &str| {
        vec![
            "frontier".to_string(),
            "--height".into(),
            "64".into(),
            "--width".into(),
            "64".into(),
            "--eval-size".into(),
            "16".into(),
            "--prune".into(),
            "0,0.2".into(),
            "--quant".into(),
            "float,8".into(),
            "-o".into(),
            out.to_string(),
        ]
    };
    let a1: Vec<String> = args(&r1);
    let table = ok(&a1.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(table.contains("Optimization Type"));
    assert!(table.contains("Pruning + Quantization"));
    let a2: Vec<String> = args(&r2);
    ok(&a2.iter().map(String::as_str).collect::<Vec<_>>());
    let (t1, t2) = (std::fs::read(&r1).unwrap(), std::fs::read(&r2).unwrap());
    assert_eq!(t1, t2);
    let report = json(std::str::from_utf8(&t1).unwrap());
    assert_eq!(report["variants"].as_array().unwrap().len(), 3 * 2 * 2 * 2);

    let capped = portanet(&["frontier", "--cap", "4", "--height", "64", "--width", "64"]);
    assert!(!capped.status.success());
    assert!(String::from_utf8_lossy(&capped.stderr).contains("cap"));
}
