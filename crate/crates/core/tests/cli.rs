mod common;

use std::fs;
use std::path::Path;

use common::bin;
use instedge::cli::{EvalReport, RunManifest, TargetManifest};
use instedge::pgm;

fn fixture(root: &Path, images: usize, seed: u64) -> (std::path::PathBuf, std::path::PathBuf) {
    let mut rng = common::rng(seed);
    let ds = common::random_dataset(&mut rng, images);
    let preds = common::noisy_predictions(&mut rng, &ds);
    common::write_eval_inputs(root, &ds, &preds)
}

fn run_eval(ann: &Path, preds: &Path, out: &Path, workers: usize) -> std::process::Output {
    bin()
        .args(["eval", "--annotations"])
        .arg(ann)
        .arg("--predictions")
        .arg(preds)
        .arg("--out")
        .arg(out)
        .args(["--workers", &workers.to_string()])
        .output()
        .unwrap()
}

#[test]
fn eval_is_deterministic_across_runs_and_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let (ann, preds) = fixture(tmp.path(), 6, 5);
    let outs: Vec<_> = [(1, "a"), (1, "b"), (4, "c")]
        .iter()
        .map(|&(workers, name)| {
            let out = tmp.path().join(name);
            let o = run_eval(&ann, &preds, &out, workers);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            (
                fs::read(out.join("report.json")).unwrap(),
                fs::read(out.join("pr_curve.csv")).unwrap(),
                o.stdout,
            )
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
    assert_eq!(outs[0], outs[2]);

    let report: EvalReport = serde_json::from_slice(&outs[0].0).unwrap();
    assert!(report.ois >= report.ods);
    assert_eq!(report.thresholds.len(), 20);
    let stdout = String::from_utf8(outs[0].2.clone()).unwrap();
    assert_eq!(stdout, format!("ODS: {:.4}\nOIS: {:.4}\n", report.ods, report.ois));
    let csv = String::from_utf8(outs[0].1.clone()).unwrap();
    assert!(csv.starts_with("threshold,precision,recall,fscore\n"));
    assert_eq!(csv.lines().count(), 21);

    let manifest: RunManifest =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("a/run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.command, "eval");
    assert_eq!(manifest.eval_config.unwrap().lambda, 0.0075);
    assert_eq!(manifest.version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn eval_with_empty_prediction_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let (ann, _) = fixture(tmp.path(), 2, 1);
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = tmp.path().join("out");
    let o = run_eval(&ann, &empty, &out, 1);
    assert!(o.status.success());
    let report: EvalReport = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.ods, 0.0);
    assert_eq!(report.images_without_predictions, vec![1, 2]);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let (ann, preds) = fixture(tmp.path(), 1, 2);

    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
    assert_eq!(bin().arg("--version").output().unwrap().status.code(), Some(0));
    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(1));
    assert_eq!(bin().args(["eval", "--lambda", "x"]).output().unwrap().status.code(), Some(1));

    let out = tmp.path().join("o");
    let missing = run_eval(&tmp.path().join("nope.json"), &preds, &out, 1);
    assert_eq!(missing.status.code(), Some(2));

    let bad_json = tmp.path().join("bad.json");
    fs::write(&bad_json, r#"{"categories": [], "annotations": [], "images": 3}"#).unwrap();
    let o = run_eval(&bad_json, &preds, &out, 1);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("images"));

    let first = fs::read_dir(&preds)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "pgm"))
        .unwrap();
    fs::write(&first, b"P5\n3 3\n255\n\x01").unwrap();
    assert_eq!(run_eval(&ann, &preds, &out, 1).status.code(), Some(2));

    let bad_lambda = bin()
        .args(["eval", "--lambda", "2"])
        .arg("--annotations")
        .arg(&ann)
        .arg("--predictions")
        .arg(&preds)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(bad_lambda.status.code(), Some(1));
}

#[test]
fn make_targets_writes_quantized_maps() {
    let tmp = tempfile::tempdir().unwrap();
    let (ann, _) = fixture(tmp.path(), 3, 9);
    let run = |name: &str, ratio: &str| {
        let out = tmp.path().join(name);
        let o = bin()
            .arg("make-targets")
            .arg("--annotations")
            .arg(&ann)
            .arg("--out")
            .arg(&out)
            .args(["--ratio", ratio, "--seed", "4"])
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let full = run("full", "1");
    let half = run("half", "0.5");
    let again = run("again", "0.5");

    let manifest: TargetManifest =
        serde_json::from_str(&fs::read_to_string(full.join("manifest.json")).unwrap()).unwrap();
    assert!(!manifest.targets.is_empty());
    for t in &manifest.targets {
        let map = pgm::read_graymap(&full.join(&t.file)).unwrap();
        let mut ones = 0;
        for &v in map.values() {
            let q = (v * 65535.0).round() as u32;
            assert!(q == 0 || q == 45875 || q == 65535, "value {v}");
            ones += usize::from(q == 65535);
        }
        assert_eq!(ones, t.keypoint_count);
        assert_eq!(fs::read(full.join(&t.file)).unwrap(), pgm::encode_graymap(&map));
    }
    let half_manifest: TargetManifest =
        serde_json::from_str(&fs::read_to_string(half.join("manifest.json")).unwrap()).unwrap();
    let total = |m: &TargetManifest| m.targets.iter().map(|t| t.keypoint_count).sum::<usize>();
    assert!(total(&half_manifest) <= total(&manifest));
    for t in &half_manifest.targets {
        assert_eq!(fs::read(half.join(&t.file)).unwrap(), fs::read(again.join(&t.file)).unwrap());
    }

    let bad = bin()
        .arg("make-targets")
        .arg("--annotations")
        .arg(&ann)
        .arg("--out")
        .arg(tmp.path().join("bad"))
        .args(["--ratio", "0"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn loss_check_passes_and_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["loss-check", "--trials", "20", "--seed", "3", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("dice max relative error: "));
    assert!(stdout.contains("focal max relative error: "));
    assert!(tmp.path().join("run_manifest.json").exists());
}

#[test]
fn demo_forward_is_deterministic() {
    let run = || {
        bin()
            .args(["demo-forward", "--n", "3", "--d", "8", "--f", "4", "--h", "48", "--w", "40", "--seed", "7"])
            .output()
            .unwrap()
    };
    let (a, b) = (run(), run());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.matches("layer ").count(), 6);
    assert_eq!(text.matches("query ").count(), 3);
    assert!(text.contains("layer 5 1/8: 6x5"));
    assert_eq!(bin().args(["demo-forward", "--n", "0"]).output().unwrap().status.code(), Some(1));
}
