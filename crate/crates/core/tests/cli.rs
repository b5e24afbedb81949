use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use mtof::checkpoint::Checkpoint;
use mtof::cli::{load_data, settings, train_displays};
use mtof::config::RunConfig;
use mtof::data_model::{read_rgb_png, read_tof_png, Manifest};
use mtof::detector::{Detector, ModelKind};
use mtof::evaluation::run_protocol;
use mtof::spoof_classifier::predict_pair;

const TINY: &str = r#"{
  "synth": {
    "n_objects": 2,
    "samples_per_object": 4,
    "n_profiles": 3,
    "image_size": [16, 16],
    "seed": 5,
    "split": {"train": 0.5, "val": 0.0, "test": 0.5}
  },
  "preprocess": {"resize": null, "crop": null},
  "model": {"widths": [2, 3, 4]},
  "training": {"epochs": 3, "batch_size": 4, "seed": 5},
  "protocol": {"n_train_displays": 2}
}"#;

fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.json");
    fs::write(&path, TINY).unwrap();
    path
}

fn mtof(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtof"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .unwrap()
}

fn ok_dir(out: &Output) -> PathBuf {
    assert!(
        out.status.success(),
        "exit {:?}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    PathBuf::from(String::from_utf8(out.stdout.clone()).unwrap().trim())
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            for (k, v) in files(&path) {
                out.insert(format!("{}/{k}", path.file_name().unwrap().to_string_lossy()), v);
            }
        } else {
            out.insert(path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap());
        }
    }
    out
}

#[test]
fn gen_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let a = ok_dir(&mtof(&["gen", "--config", cfg, "--out", tmp.path().join("a").to_str().unwrap()]));
    let b = ok_dir(&mtof(&["gen", "--config", cfg, "--out", tmp.path().join("b").to_str().unwrap()]));
    assert_eq!(a.file_name(), b.file_name());
    let (fa, fb) = (files(&a), files(&b));
    assert!(fa.contains_key("manifest.jsonl"));
    assert!(fa.contains_key("config.json"));
    assert_eq!(fa, fb);
    let manifest = Manifest::read(&a).unwrap();
    // 2 objects x 4 captures x (1 real + 3 displays)
    assert_eq!(manifest.records.len(), 32);

    let other = ok_dir(&mtof(&["gen", "--config", cfg, "--seed", "6", "--out", tmp.path().join("a").to_str().unwrap()]));
    assert_ne!(other, a);
}

#[test]
fn train_writes_one_loss_row_per_epoch() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out = mtof(&["train", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    let dir = ok_dir(&out);
    assert!(stderr.contains("leakage check passed"), "{stderr}");
    let loss = fs::read_to_string(dir.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 1 + 3, "{loss}");
    assert!(dir.join("classifier_loss.csv").exists());
    let ck = Checkpoint::load(&dir.join("checkpoint.json")).unwrap();
    assert_eq!(ck.model, ModelKind::Mtofnet);
    assert_eq!(ck.epoch, 3);
}

#[test]
fn unknown_model_prints_usage() {
    let out = mtof(&["train", "--model", "resnet"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown model"), "{stderr}");
    assert!(stderr.contains("Usage"), "{stderr}");
}

#[test]
fn eval_matches_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tiny_config(tmp.path());
    let out = mtof(&[
        "eval",
        "--config",
        cfg_path.to_str().unwrap(),
        "--model",
        "freq_svm",
        "--mode",
        "unseen",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    let dir = ok_dir(&out);
    assert!(stderr.contains("leakage check passed"), "{stderr}");
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();

    let cfg = RunConfig::load(Some(&cfg_path), &[]).unwrap();
    let samples = load_data(&cfg).unwrap();
    let train = train_displays(&cfg, &samples).unwrap();
    let direct = run_protocol(ModelKind::FreqSvm, &samples, &train, cfg.protocol.mode, None, &settings(&cfg))
        .unwrap()
        .report;
    assert_eq!(report["metrics"], serde_json::to_value(direct.metrics).unwrap());
    assert_eq!(report["test_display_ids"], serde_json::to_value(&direct.test_display_ids).unwrap());
    let scores = fs::read_to_string(dir.join("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 1 + direct.scores.len());
}

#[test]
fn eval_of_a_checkpoint_scores_its_detector() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tiny_config(tmp.path());
    let cfg = cfg_path.to_str().unwrap();
    let out_root = tmp.path().to_str().unwrap();
    let train_dir = ok_dir(&mtof(&["train", "--config", cfg, "--model", "pca_svm", "--out", out_root]));
    let ck_path = train_dir.join("checkpoint.json");
    let dir = ok_dir(&mtof(&["eval", "--config", cfg, "--checkpoint", ck_path.to_str().unwrap(), "--out", out_root]));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["model"], "pca_svm");

    let ck = Checkpoint::load(&ck_path).unwrap();
    let samples = load_data(&RunConfig::load(Some(&cfg_path), &[]).unwrap()).unwrap();
    for row in report["scores"].as_array().unwrap() {
        let s = samples.iter().find(|s| s.meta.id == row["sample_id"]).unwrap();
        assert_eq!(row["score"].as_f64().unwrap(), ck.predict(s).unwrap().p_display);
    }
}

#[test]
fn predict_matches_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let out_root = tmp.path().to_str().unwrap();
    let data = ok_dir(&mtof(&["gen", "--config", cfg, "--out", out_root]));
    let train_dir = ok_dir(&mtof(&["train", "--config", cfg, "--out", out_root]));
    let ck_path = train_dir.join("checkpoint.json");
    let ck = Checkpoint::load(&ck_path).unwrap();
    let net = match &ck.detector {
        Detector::Mtofnet(net) => net,
        other => panic!("unexpected detector {other:?}"),
    };
    let manifest = Manifest::read(&data).unwrap();
    for rec in manifest.records.iter().take(4) {
        let (rgb, tof) = (data.join(&rec.rgb_path), data.join(&rec.tof_path));
        let out = mtof(&[
            "predict",
            "--checkpoint",
            ck_path.to_str().unwrap(),
            "--rgb",
            rgb.to_str().unwrap(),
            "--tof",
            tof.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let got: Value = serde_json::from_slice(&out.stdout).unwrap();
        let expect = predict_pair(
            &read_rgb_png(&rgb).unwrap(),
            &read_tof_png(&tof, ck.preprocess.conf_threshold).unwrap(),
            net,
        )
        .unwrap();
        assert_eq!(got["p_display"].as_f64().unwrap(), expect.p_display);
        assert_eq!(got["label"], serde_json::to_value(expect.label).unwrap());
    }

    let missing = mtof(&[
        "predict",
        "--checkpoint",
        ck_path.to_str().unwrap(),
        "--rgb",
        tmp.path().join("absent.png").to_str().unwrap(),
        "--tof",
        tmp.path().join("absent_tof.png").to_str().unwrap(),
    ]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("absent.png"));
}

#[test]
fn spectrum_writes_class_means() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let dir = ok_dir(&mtof(&["spectrum", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]));
    let means = fs::read_to_string(dir.join("spectrum.csv")).unwrap();
    // 16x16 maps keep radii 0..8
    assert_eq!(means.lines().count(), 1 + 8);
    assert_eq!(means.lines().next().unwrap(), "radius,mean_real,mean_display");
    let profiles = fs::read_to_string(dir.join("profiles.csv")).unwrap();
    assert_eq!(profiles.lines().count(), 1 + 32 * 8);
}

#[test]
fn overrides_and_bad_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out = mtof(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "training.epochs=2",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    let dir = ok_dir(&out);
    assert_eq!(fs::read_to_string(dir.join("loss.csv")).unwrap().lines().count(), 1 + 2);

    let bad = mtof(&["gen", "--set", "synth.n_objectz=3", "--out", tmp.path().to_str().unwrap()]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("n_objectz"));
}
