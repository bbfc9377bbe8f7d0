use std::path::Path;
use std::process::{Command, Output};

use rivetkey::dataio::read_manifest;
use rivetkey::train::Predictions;

fn rivetkey(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rivetkey"))
        .args(args)
        .current_dir(cwd)
        .env("RIVETKEY_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = rivetkey(args, cwd);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1, "one summary line: {stdout:?}");
    stdout
}

#[test]
fn gen_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen", "--domain", "clean", "--count", "5", "--seed", "1", "--out", "d/"], dir.path());
    let m = read_manifest(&dir.path().join("d/manifest.json")).unwrap();
    assert_eq!(m.len(), 5);
    assert!(m.samples.iter().all(|s| m.image_path(s).exists()));
}

#[test]
fn gen_and_split_are_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    for out in ["a", "b"] {
        ok(&["gen", "--domain", "noisy", "--count", "6", "--seed", "3", "--out", out], p);
        ok(&["split", "--manifest", &format!("{out}/manifest.json"), "--seed", "2", "--out", &format!("{out}/s")], p);
    }
    for f in ["manifest.json", "images/noisy-000004.png", "s/train.json", "s/test.json"] {
        assert_eq!(std::fs::read(p.join("a").join(f)).unwrap(), std::fs::read(p.join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn split_is_disjoint_by_config() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["gen", "--count", "10", "--seed", "4", "--out", "d"], p);
    ok(&["split", "--manifest", "d/manifest.json", "--ratio", "0.8", "--seed", "7", "--out", "s/"], p);
    let train = read_manifest(&p.join("s/train.json")).unwrap();
    let test = read_manifest(&p.join("s/test.json")).unwrap();
    assert_eq!((train.len(), test.len()), (8, 2));
    assert!(train.samples.iter().all(|a| test.samples.iter().all(|b| a.config_id != b.config_id)));
    assert!(train.samples.iter().chain(&test.samples).all(|s| train.image_path(s).exists()));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(rivetkey(&["gen", "--count", "2", "--out", "d", "--frobnicate"], p).status.code(), Some(1));
    assert_eq!(rivetkey(&["explode"], p).status.code(), Some(1));
    assert_eq!(rivetkey(&["split", "--manifest", "m.json", "--ratio", "1.5", "--out", "s"], p).status.code(), Some(1));

    ok(&["gen", "--count", "3", "--seed", "1", "--out", "d"], p);
    let preds = r#"{"version":1,"checkpoint":"x","predictions":[{"id":"ghost","keypoints":[[1,1],[2,2],[3,3],[4,4],[5,5],[6,6]],"confidence":[1,1,1,1,1,1]}]}"#;
    std::fs::write(p.join("p.json"), preds).unwrap();
    assert_eq!(rivetkey(&["eval", "--preds", "p.json", "--manifest", "d/manifest.json"], p).status.code(), Some(2));
    std::fs::write(p.join("bad.json"), "{\"version\":1,\"samples\":[{}]}").unwrap();
    assert_eq!(rivetkey(&["measure", "--manifest", "bad.json", "--out", "m.json"], p).status.code(), Some(2));
    assert!(!p.join("m.json").exists());
}

#[test]
fn help_lists_flags_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cases: &[(&str, &[&str])] = &[
        ("gen", &["--domain", "--count", "--seed", "--out", "--size", "[default: clean]", "[default: 256]"]),
        ("split", &["--manifest", "--ratio", "--seed", "--out", "[default: 0.8]"]),
        ("train", &["--train-manifest", "--config", "--seed", "--out"]),
        ("finetune", &["--init", "--train-manifest", "--config", "--seed", "--out"]),
        ("predict", &["--ckpt", "--manifest", "--out", "--subpixel", "[default: true]"]),
        ("eval", &["--preds", "--manifest", "--pck-thresholds", "--oks-k", "[default: 10,50]", "[default: 0.1]"]),
        ("measure", &["--manifest", "--preds", "--out"]),
        ("render", &["--manifest", "--preds", "--ckpt", "--out"]),
    ];
    for (cmd, flags) in cases {
        let out = rivetkey(&[cmd, "--help"], dir.path());
        assert_eq!(out.status.code(), Some(0));
        let text = String::from_utf8(out.stdout).unwrap();
        for f in *flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}:\n{text}");
        }
    }
}

#[test]
fn train_predict_eval_measure_render() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["gen", "--domain", "clean", "--count", "6", "--seed", "9", "--out", "clean"], p);
    ok(&["gen", "--domain", "noisy", "--count", "4", "--seed", "10", "--out", "noisy"], p);
    let config = r#"{"epochs":2,"batch_size":2,"holdout_fraction":0.0,
        "sigma_schedule":[{"until_epoch":1,"sigma_px":3.0},{"until_epoch":2,"sigma_px":1.5}],
        "model":{"input_size":64,"stages":3,"base_channels":8}}"#;
    std::fs::write(p.join("cfg.json"), config).unwrap();

    let line = ok(&["train", "--train-manifest", "clean/manifest.json", "--config", "cfg.json", "--out", "pre.rkw"], p);
    assert!(line.contains("phase=pretrain"), "{line}");
    let sidecar: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("pre.rkw.json")).unwrap()).unwrap();
    assert_eq!(sidecar["phase"], "pretrain");
    assert_eq!(sidecar["epoch"], 2);
    assert_eq!(std::fs::read_to_string(p.join("pre.rkw.log.jsonl")).unwrap().lines().count(), 2);

    let line = ok(&["finetune", "--init", "pre.rkw", "--train-manifest", "noisy/manifest.json", "--config", "cfg.json", "--out", "ft.rkw"], p);
    assert!(line.contains("phase=finetune"), "{line}");
    let line = ok(&["train", "--train-manifest", "noisy/manifest.json", "--config", "cfg.json", "--seed", "5", "--out", "sc.rkw"], p);
    assert!(line.contains("phase=scratch"), "{line}");

    ok(&["predict", "--ckpt", "ft.rkw", "--manifest", "noisy/manifest.json", "--out", "preds.json"], p);
    let preds = Predictions::read(&p.join("preds.json")).unwrap();
    assert_eq!(preds.predictions.len(), 4);
    assert!(preds.predictions.iter().all(|q| q.confidence.len() == 6));

    let a = ok(&["eval", "--preds", "preds.json", "--manifest", "noisy/manifest.json", "--pck-thresholds", "5,10,50", "--out", "r.json"], p);
    let b = ok(&["eval", "--preds", "preds.json", "--manifest", "noisy/manifest.json", "--pck-thresholds", "5,10,50"], p);
    assert_eq!(a, b);
    let report: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert!(report["pck"]["5"].is_number() && report["pck"]["50"].is_number() && report["oks"].is_number());
    assert_eq!(report["samples"], 4);

    let line = ok(&["measure", "--manifest", "noisy/manifest.json", "--preds", "preds.json", "--out", "meas.json"], p);
    let rows: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("meas.json")).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert!(line.contains(&format!("{} samples", rows.len())) && line.contains(&format!("{} skipped", 4 - rows.len())), "{line}");
    assert!(rows.iter().all(|r| r["d_h_mm"].is_number() && r["d_i_mm"].is_number() && r["d_b_mm"].as_f64().unwrap() >= 0.0));

    ok(&["measure", "--manifest", "noisy/manifest.json", "--out", "gt.json"], p);
    let gt: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("gt.json")).unwrap()).unwrap();
    assert_eq!(gt.as_array().unwrap().len(), 4);

    let line = ok(&["render", "--manifest", "noisy/manifest.json", "--ckpt", "ft.rkw", "--out", "fig", "--count", "2"], p);
    assert!(line.contains("2 heatmap panels"), "{line}");
    let overlay = image::open(p.join("fig/noisy-000000_overlay.png")).unwrap().to_rgb8();
    assert!(overlay.pixels().any(|px| px.0 == [230, 30, 30]), "red ground-truth mark present");
    let panel = image::open(p.join("fig/noisy-000001_heatmaps.png")).unwrap();
    assert!(panel.width() > 3 * 64 && panel.height() > 2 * 64);
}
