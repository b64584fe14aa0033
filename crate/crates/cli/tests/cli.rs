use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

use sensorclf::models::{ArchConfig, Ensemble, FcnConfig};
use sensorclf::pipeline::{prepare_labeled, PrepareConfig};
use sensorclf::synth::{generate_frame, ScenarioConfig};
use sensorclf::train::report::normalized_json;
use sensorclf::train::{evaluate, train_ensemble, TrainConfig, DEFAULT_THRESHOLD};

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(dir: &Path, args: &[&str], config: Option<&Value>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sensorclf"));
    cmd.args(args)
        .env_remove("SENSORCLF_OUT_DIR")
        .env_remove("SENSORCLF_THREADS");
    if let Some(c) = config {
        let path = dir.join(format!("config_{}.json", args[0]));
        std::fs::write(&path, serde_json::to_vec_pretty(c).unwrap()).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: Output) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {stdout}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    stdout
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

fn f1(metrics: &Value, class: &str) -> f64 {
    metrics["classes"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["class"] == class)
        .unwrap()["f1"]
        .as_f64()
        .unwrap()
}

#[test]
fn dry_run_with_unknown_key_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = json!({ "out_dir": out_dir, "train": { "epochs": 3, "learning_rate": 0.1 } });
    let out = run(tmp.path(), &["train", "--dry-run"], Some(&cfg));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
    assert!(!out_dir.exists());

    let cfg = json!({ "out_dir": out_dir, "seed": 3 });
    let stdout = ok(run(tmp.path(), &["synth", "--dry-run", "--seed", "11"], Some(&cfg)));
    let printed: Value = serde_json::from_str(stdout.split("\nconfig is valid").next().unwrap()).unwrap();
    assert_eq!(printed["seed"], 11);
    assert_eq!(printed["scenario"]["seed"], 11);
    assert!(!out_dir.exists());
}

#[test]
fn invalid_values_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({ "out_dir": tmp.path().join("o"), "smoothing_width": 0 });
    let out = run(tmp.path(), &["smooth", "--dry-run"], Some(&cfg));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("smoothing_width"));
    let out = run(tmp.path(), &["train", "--out-dir", s(&tmp.path().join("o"))], None);
    assert_eq!(out.status.code(), Some(1), "missing `data` is a config error");
}

#[test]
fn bundled_config_files_parse() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["bundled.json", "fleet.json"] {
        let path = workspace_root().join("configs").join(name);
        let out = Command::new(env!("CARGO_BIN_EXE_sensorclf"))
            .args(["synth", "--dry-run", "--config", s(&path), "--out-dir", s(tmp.path())])
            .output()
            .unwrap();
        ok(out);
    }
}

/// A small labeled corpus split in time, for the quick tests.
fn small_split(dir: &Path) -> PathBuf {
    let base = json!({ "seed": 3, "scenario": { "samples": 3000 }, "split": { "mode": "time_separated_before_segmentation" } });
    let synth = dir.join("synth");
    ok(run(dir, &["synth", "--out-dir", s(&synth)], Some(&base)));
    let data = dir.join("split");
    let frame = synth.join("frame.csv");
    ok(run(
        dir,
        &["split", "--input", s(&frame), "--out-dir", s(&data)],
        Some(&base),
    ));
    data
}

#[test]
fn exit_codes_for_fingerprint_mismatch_and_divergence() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let data = small_split(dir);
    let trained = dir.join("trained");
    let small = json!({ "arch": "fcn", "input_channels": 1, "filters": [4, 4], "kernels": [3, 3] });
    let cfg = json!({ "model": small, "train": { "epochs": 2 } });
    ok(run(
        dir,
        &["train", "--data", s(&data), "--out-dir", s(&trained)],
        Some(&cfg),
    ));
    let model = trained.join("model");

    let same = json!({ "model": small });
    let eval_dir = dir.join("eval");
    let stdout = ok(run(
        dir,
        &[
            "eval",
            "--data",
            s(&data),
            "--checkpoint",
            s(&model),
            "--out-dir",
            s(&eval_dir),
        ],
        Some(&same),
    ));
    assert!(stdout.contains("person F1"));
    assert_eq!(
        read_json(&eval_dir.join("metrics.json")),
        read_json(&trained.join("metrics.json"))
    );

    let other = json!({ "model": { "arch": "fcn", "input_channels": 1, "filters": [8, 4], "kernels": [3, 3] } });
    let out = run(
        dir,
        &[
            "eval",
            "--data",
            s(&data),
            "--checkpoint",
            s(&model),
            "--out-dir",
            s(&eval_dir),
        ],
        Some(&other),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fingerprint"));

    let wild =
        json!({ "model": small, "train": { "epochs": 2, "lr_max": 1e300, "lr_min": 1e300, "schedule": "constant" } });
    let out = run(
        dir,
        &["train", "--data", s(&data), "--out-dir", s(&dir.join("wild"))],
        Some(&wild),
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn data_stages_and_tracks() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = json!({
        "seed": 5,
        "scenario": { "samples": 2500, "corruption": { "missing_runs": 6, "missing_max_len": 4 } },
        "model": { "arch": "fcn", "input_channels": 1, "filters": [4, 4], "kernels": [3, 3] },
        "train": { "epochs": 2 },
        "trials": 2,
        "search": { "params": [{ "name": "filters0", "values": [2, 4] }] }
    });
    let stage = |args: &[&str], out: &str| -> (PathBuf, String) {
        let o = dir.join(out);
        let mut a = args.to_vec();
        a.extend(["--out-dir", s(&o)]);
        let stdout = ok(run(dir, &a, Some(&cfg)));
        assert!(o.join("config.json").exists(), "{out} keeps its resolved config");
        (o, stdout)
    };
    let (synth, _) = stage(&["synth"], "synth");
    let raw = synth.join("frame.csv");
    let (_, text) = stage(&["report-missing", "--input", s(&raw)], "missing");
    assert!(!text.contains(" 0 missing values"), "{text}");
    let (clean, _) = stage(&["clean", "--input", s(&raw)], "clean");
    let cleaned = clean.join("clean.csv");
    let (corr, _) = stage(&["correlate", "--input", s(&cleaned)], "corr");
    let m = read_json(&corr.join("correlation.json"));
    assert_eq!(m["names"].as_array().unwrap().len(), 19);
    let (feat, _) = stage(&["select-features", "--input", s(&cleaned)], "features");
    let kept = read_json(&feat.join("features.json"))["features"]
        .as_array()
        .unwrap()
        .len();
    assert!(kept < 17);
    let (sample, _) = stage(&["sample", "--input", s(&cleaned)], "sample");
    let windows = sample.join("windows.json");
    assert!(read_json(&windows)["shape"][0].as_u64().unwrap() > 0);
    let (split, _) = stage(&["split", "--input", s(&raw)], "split");
    let (trained, _) = stage(&["train", "--data", s(&split)], "train");
    let model = trained.join("model");
    let (tuned, _) = stage(&["tune", "--data", s(&split)], "tune");
    assert_eq!(
        read_json(&tuned.join("trials.json"))["trials"]
            .as_array()
            .unwrap()
            .len(),
        2
    );
    let (pred, _) = stage(&["predict", "--input", s(&raw), "--checkpoint", s(&model)], "predict");
    let track = pred.join("track.json");
    assert!(read_json(&track)["decisions"][0].as_array().unwrap().len() > 2000);
    let (sm, text) = stage(&["smooth", "--input", s(&track)], "smooth");
    assert!(text.contains("flipped"));
    assert!(sm.join("smoothed.csv").exists());
    let (pca, _) = stage(&["pca", "--input", s(&split.join("test.json"))], "pca");
    let p = read_json(&pca.join("pca.json"));
    assert!(p["explained"][0].as_f64().unwrap() >= p["explained"][1].as_f64().unwrap());
    let mut feat_cfg = cfg.clone();
    feat_cfg["pca_source"] = json!("features");
    let o = dir.join("pca_features");
    ok(run(
        dir,
        &[
            "pca",
            "--input",
            s(&split.join("test.json")),
            "--checkpoint",
            s(&model),
            "--out-dir",
            s(&o),
        ],
        Some(&feat_cfg),
    ));
    assert!(o.join("projection.csv").exists());
}

#[test]
fn semi_supervised_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let fleet_cfg = json!({ "seed": 2, "scenario": { "samples": 300, "devices": 3 } });
    let fleet = dir.join("fleet");
    ok(run(dir, &["synth", "--out-dir", s(&fleet)], Some(&fleet_cfg)));
    let labeled_cfg = json!({ "seed": 2, "scenario": { "samples": 2500 } });
    let labeled = dir.join("labeled");
    ok(run(dir, &["synth", "--out-dir", s(&labeled)], Some(&labeled_cfg)));

    let cfg = json!({
        "seed": 2,
        "autoencoder": { "hidden": [4], "latent": 3 },
        "head": { "hidden": 4 },
        "train": { "epochs": 1 },
        "labeled_fraction": 0.5
    });
    let ae = dir.join("ae");
    let text = ok(run(
        dir,
        &["pretrain-ae", "--input", s(&fleet), "--out-dir", s(&ae)],
        Some(&cfg),
    ));
    assert!(text.contains("from 3 frames"), "{text}");
    let head = dir.join("head");
    ok(run(
        dir,
        &[
            "train-head",
            "--input",
            s(&labeled.join("frame.csv")),
            "--checkpoint",
            s(&ae.join("autoencoder.json")),
            "--out-dir",
            s(&head),
        ],
        Some(&cfg),
    ));
    let metrics = read_json(&head.join("metrics.json"));
    assert_eq!(metrics["classes"].as_array().unwrap().len(), 2);
    let eval = dir.join("eval");
    ok(run(
        dir,
        &[
            "eval",
            "--input",
            s(&head.join("test.json")),
            "--checkpoint",
            s(&head.join("model")),
            "--out-dir",
            s(&eval),
        ],
        None,
    ));
    assert_eq!(read_json(&eval.join("metrics.json")), metrics);
}

fn json_reports(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .filter(|p| !matches!(p.file_name().unwrap().to_str().unwrap(), "config.json" | "timing.json"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().to_string(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

/// synth, clean, split, train and eval on the bundled scenario reproduce the
/// library run, and a repeated train is byte-identical.
#[test]
fn bundled_pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let config = workspace_root().join("configs/bundled.json");
    let stage = |args: &[&str], out: &str| -> PathBuf {
        let o = dir.join(out);
        let mut a = args.to_vec();
        a.extend(["--config", s(&config), "--out-dir", s(&o)]);
        ok(Command::new(env!("CARGO_BIN_EXE_sensorclf")).args(&a).output().unwrap());
        o
    };
    let synth = stage(&["synth"], "synth");
    let clean = stage(&["clean", "--input", s(&synth.join("frame.csv"))], "clean");
    let split = stage(&["split", "--input", s(&clean.join("clean.csv"))], "split");
    let trained = stage(&["train", "--data", s(&split)], "train");
    let eval = stage(
        &["eval", "--data", s(&split), "--checkpoint", s(&trained.join("model"))],
        "eval",
    );
    let metrics = read_json(&eval.join("metrics.json"));
    assert!(
        f1(&metrics, "person") >= 0.90 && f1(&metrics, "window_open") >= 0.90,
        "{metrics}"
    );

    let frame = generate_frame(&ScenarioConfig::bundled()).unwrap();
    let p = prepare_labeled(
        &frame,
        &PrepareConfig {
            seed: 7,
            ..PrepareConfig::default()
        },
    )
    .unwrap();
    let arch = ArchConfig::Fcn(FcnConfig::new(p.train.channels(), &[32, 8], &[5, 3], 2));
    let mut model = Ensemble::build(&arch, 7).unwrap();
    train_ensemble(
        &mut model,
        &p.train,
        &p.valid,
        &TrainConfig {
            seed: 7,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let lib = evaluate(&mut model, &p.test, DEFAULT_THRESHOLD).unwrap();
    let cli_text = std::fs::read_to_string(eval.join("metrics.json")).unwrap();
    assert_eq!(cli_text.trim_end(), normalized_json(&lib).unwrap());

    let again = stage(&["train", "--data", s(&split)], "train_again");
    assert_eq!(json_reports(&trained), json_reports(&again));
    assert_eq!(json_reports(&trained.join("model")), json_reports(&again.join("model")));
    let bin = |d: &Path| std::fs::read(d.join("model/member_0.bin")).unwrap();
    assert_eq!(bin(&trained), bin(&again));
}
