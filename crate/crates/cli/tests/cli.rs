use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use neaw::encoder::{EncoderModel, WeightInit};
use neaw::persist::{encoder_bytes, ModelFile};
use neaw::SeededRng;
use serde_json::Value;

fn neaw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neaw"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let o = neaw(args);
    assert!(
        o.status.success(),
        "{args:?} failed ({:?}): {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data")
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// Tiny synthetic dataset: 4 train / 2 test clouds per class, 64 points.
fn small_dataset(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    ok(&[
        "gen",
        "--out",
        p(&data),
        "--train-per-class",
        "4",
        "--test-per-class",
        "2",
        "--points",
        "64",
        "--seed",
        "3",
    ]);
    data
}

const SMALL: [&str; 4] = ["--dims", "8,16", "--epochs", "2"];

#[test]
fn gen_synthetic_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("syn");
    let stdout = ok(&["gen", "--out", p(&out), "--points", "16", "--seed", "7"]);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!((v["train"].as_u64(), v["test"].as_u64()), (Some(1000), Some(250)));
    let n = |s: &str| std::fs::read_dir(out.join("clouds").join(s)).unwrap().count();
    assert_eq!(n("train") + n("test"), 1250);
    let manifest = std::fs::read_to_string(out.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 1250);
    let run = json(&out.join("run_manifest.json"));
    assert_eq!(run["outputs"].as_array().unwrap().len(), 1251);
    assert_eq!(run["command"], "gen");
    assert!(run["outputs"][0]["sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn gen_point_mnist_is_stratified() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mnist");
    let fixture = fixture_dir();
    ok(&[
        "gen",
        "--dataset",
        "point-mnist",
        "--data",
        p(&fixture),
        "--out",
        p(&out),
        "--n-train",
        "1003",
        "--n-test",
        "250",
    ]);
    let run = json(&out.join("run_manifest.json"));
    let train: Vec<u64> = serde_json::from_value(run["resolved"]["train_counts"].clone()).unwrap();
    let test: Vec<u64> = serde_json::from_value(run["resolved"]["test_counts"].clone()).unwrap();
    assert_eq!(train.iter().sum::<u64>(), 1003);
    assert_eq!(test.iter().sum::<u64>(), 250);
    // The fixture is balanced, so each digit's share is n/10.
    assert!(train.iter().all(|&c| (c as f64 - 100.3).abs() < 1.0), "{train:?}");
    assert!(test.iter().all(|&c| c == 25));
    let first = std::fs::read_to_string(out.join("clouds/train/000000.csv")).unwrap();
    assert!(first.starts_with("x,y\n"));
    assert!(first.lines().count() - 1 <= 256);
}

#[test]
fn gen_modelnet_empty_dir_lists_layout() {
    let dir = tempfile::tempdir().unwrap();
    let o = neaw(&["gen", "--dataset", "modelnet", "--data", p(dir.path()), "--out", p(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("<root>/<class>/train/*.off"), "{err}");
}

#[test]
fn zero_epochs_keep_initial_weights() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let out = dir.path().join("run");
    ok(&["train-encoder", "--data", p(&data), "--out", p(&out), "--dims", "8,16", "--epochs", "0", "--seed", "5"]);
    let file = ModelFile::<f64>::load(out.join("model.neaw")).unwrap();
    assert!(file.classifier.is_none());
    let clouds = neaw::data::read_dataset(&data).unwrap().remove("train").unwrap().clouds;
    let mut rng = SeededRng::new(5).derive("encoder-init");
    let expect = EncoderModel::<f64>::init(&[3, 8, 16], WeightInit::Gaussian { std: 0.5 }, &clouds, &mut rng).unwrap();
    assert_eq!(file.encoder, expect);
    let telemetry = std::fs::read_to_string(out.join("telemetry.csv")).unwrap();
    assert_eq!(telemetry.lines().count(), 1);
}

#[test]
fn encoder_training_is_deterministic_and_logged() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let mut bytes = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let mut args = vec!["train-encoder", "--data", p(&data), "--out", p(&out), "--seed", "9"];
        args.extend(SMALL);
        ok(&args);
        bytes.push(std::fs::read(out.join("model.neaw")).unwrap());
        let telemetry = std::fs::read_to_string(out.join("telemetry.csv")).unwrap();
        assert_eq!(telemetry.lines().count(), 3);
        assert!(telemetry.starts_with("epoch,variance_l1,variance_l2,"));
        let meta = json(&out.join("model.neaw.json"));
        assert_eq!(meta["rule"], "neaw");
        assert_eq!(meta["dims"], serde_json::json!([3, 8, 16]));
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn limited_data_scales_eta() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let out = dir.path().join("run");
    ok(&["train-encoder", "--data", p(&data), "--out", p(&out), "--dims", "8,16", "--epochs", "1", "--fraction", "0.1"]);
    let run = json(&out.join("run_manifest.json"));
    assert!((run["resolved"]["eta"].as_f64().unwrap() - 0.1).abs() < 1e-15);
    // ⌈0.1 · 4⌉ = 1 cloud per class.
    assert_eq!(run["resolved"]["train_clouds"], 5);
    let out2 = dir.path().join("run2");
    ok(&["train-encoder", "--data", p(&data), "--out", p(&out2), "--dims", "8,16", "--epochs", "1", "--fraction", "0.1", "--eta", "0.03"]);
    assert_eq!(json(&out2.join("run_manifest.json"))["resolved"]["eta"], 0.03);
}

#[test]
fn classifier_training_guards_encoder_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let enc_out = dir.path().join("enc");
    let mut args = vec!["train-encoder", "--data", p(&data), "--out", p(&enc_out), "--seed", "2"];
    args.extend(SMALL);
    ok(&args);
    let model = enc_out.join("model.neaw");
    let before = ModelFile::<f64>::load(&model).unwrap().encoder;

    let mut reports = Vec::new();
    for run in ["c1", "c2"] {
        let out = dir.path().join(run);
        let m = out.join("model.neaw");
        std::fs::create_dir_all(&out).unwrap();
        std::fs::copy(&model, &m).unwrap();
        ok(&["train-classifier", "--data", p(&data), "--out", p(&out), "--clf-epochs", "3", "--seed", "2"]);
        let file = ModelFile::<f64>::load(&m).unwrap();
        assert!(file.classifier.is_some());
        assert_eq!(encoder_bytes(&file.encoder), encoder_bytes(&before));
        let bytes = std::fs::read(out.join("classifier_report.json")).unwrap();
        let r: Value = serde_json::from_slice(&bytes).unwrap();
        for split in ["train", "test"] {
            let acc = r[split]["accuracy"].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&acc));
            assert_eq!(r[split]["per_class_accuracy"].as_array().unwrap().len(), 5);
        }
        assert_eq!(r["losses"].as_array().unwrap().len(), 3);
        reports.push(bytes);
    }
    assert_eq!(reports[0], reports[1]);

    let out = dir.path().join("c1");
    let e = ok(&["eval", "--data", p(&data), "--model", p(&out.join("model.neaw"))]);
    let v: Value = serde_json::from_str(&e).unwrap();
    assert_eq!(v["dataset"], "test");
    assert_eq!(v["n"], 10);

    let bad = dir.path().join("bad");
    std::fs::create_dir_all(&bad).unwrap();
    std::fs::copy(&model, bad.join("model.neaw")).unwrap();
    let o = neaw(&["train-classifier", "--data", p(&data), "--out", p(&bad), "--clf-epochs", "1", "--fault-mutate-encoder"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("encoder bytes changed"));
    assert_eq!(std::fs::read(bad.join("model.neaw")).unwrap(), std::fs::read(&model).unwrap());
}

#[test]
fn eval_without_classifier_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let out = dir.path().join("enc");
    ok(&["train-encoder", "--data", p(&data), "--out", p(&out), "--dims", "8,16", "--epochs", "0"]);
    let o = neaw(&["eval", "--data", p(&data), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn analyze_and_export_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let out = dir.path().join("run");
    let mut args = vec!["train-encoder", "--data", p(&data), "--out", p(&out)];
    args.extend(SMALL);
    ok(&args);
    ok(&["analyze", "--data", p(&data), "--out", p(&out)]);
    let a = json(&out.join("analysis.json"));
    assert_eq!(a["clouds"], 20);
    let d = a["dissimilarity"].as_array().unwrap();
    assert_eq!(d.len(), 5);
    assert_eq!(d[2][2], 0.0);
    assert_eq!(std::fs::read_to_string(out.join("ablation.csv")).unwrap().lines().count(), 17);
    let ex = dir.path().join("export");
    ok(&["export", "--data", p(&data), "--model", p(&out.join("model.neaw")), "--out", p(&ex)]);
    for f in ["last_layer_weights.csv", "features.csv", "activity_histogram.csv", "run_manifest.json"] {
        assert!(ex.join(f).is_file(), "{f}");
    }
}

#[test]
fn verify_theorem1_full_suite_passes() {
    let o = ok(&["verify", "--suite", "theorem1", "--n", "100000", "--seed", "1"]);
    let v: Value = serde_json::from_str(&o).unwrap();
    assert_eq!(v["violations"], 0);
    assert_eq!(v["instances"], 100000);
}

#[test]
fn verify_eq5_and_corollaries() {
    let v: Value = serde_json::from_str(&ok(&["verify", "--suite", "eq5", "--n", "1000"])).unwrap();
    assert!(v["max_abs_error"].as_f64().unwrap() < 1e-12);
    let v: Value = serde_json::from_str(&ok(&["verify", "--suite", "corollaries", "--n", "2000"])).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert!(v.as_array().unwrap().iter().all(|s| s["violations"] == 0));
}

#[test]
fn sign_flip_fixture_fails_theorem1() {
    let dir = tempfile::tempdir().unwrap();
    let o = neaw(&["verify", "--suite", "theorem1", "--n", "1000", "--fault-sign-flip", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["violations"].as_u64().unwrap() > 0);
    assert!(v["counterexample"]["instance"]["w_j"].is_array());
    assert!(dir.path().join("verify_theorem1.json").is_file());
}

#[test]
fn sweep_grid_rows_and_flat_zero_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let out = dir.path().join("sweep");
    let csv = ok(&[
        "sweep-ab", "--data", p(&data), "--out", p(&out), "--a-values", "0,1", "--b-values", "0,1", "--dims", "8,16",
        "--epochs", "3", "--clf-epochs", "2",
    ]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("a,b,repeats,final_variance,accuracy,variance_e0"));
    let zero: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&zero[..2], ["0", "0"]);
    assert!(zero[5..].iter().all(|v| v == &zero[5]), "{zero:?}");
    assert_eq!(std::fs::read_to_string(out.join("sweep_ab.csv")).unwrap(), csv);
}

#[test]
fn config_file_and_override() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let out = dir.path().join("run");
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        format!("# small run\ndata = {}\nout = {}\ndims = 8,16\nepochs = 4\nrule = oja\n", p(&data), p(&out)),
    )
    .unwrap();
    ok(&["train-encoder", "--config", p(&cfg), "--epochs", "1"]);
    let run = json(&out.join("run_manifest.json"));
    assert_eq!(run["config"]["epochs"], 1);
    assert_eq!(run["config"]["rule"], "oja");
    assert_eq!(std::fs::read_to_string(out.join("telemetry.csv")).unwrap().lines().count(), 2);

    std::fs::write(&cfg, "epochs = 2\nunknown_key = 1\n").unwrap();
    assert_eq!(neaw(&["verify", "--config", p(&cfg), "--suite", "eq5"]).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(neaw(&["verify"]).status.code(), Some(2));
    assert_eq!(neaw(&["verify", "--suite", "eq5", "--n", "0"]).status.code(), Some(2));
    assert_eq!(neaw(&["train-encoder", "--rule", "sgd", "--out", "x"]).status.code(), Some(2));
    assert_eq!(neaw(&["nonsense"]).status.code(), Some(2));
    let missing = dir.path().join("nope.neaw");
    assert_eq!(neaw(&["eval", "--model", p(&missing), "--data", p(dir.path())]).status.code(), Some(3));
    let garbage = dir.path().join("garbage.neaw");
    std::fs::write(&garbage, b"NOPE").unwrap();
    assert_eq!(neaw(&["eval", "--model", p(&garbage), "--data", p(dir.path())]).status.code(), Some(3));
    assert_eq!(
        neaw(&["train-encoder", "--data", p(&dir.path().join("missing")), "--out", p(dir.path())]).status.code(),
        Some(3)
    );
}

#[test]
fn diverging_hebb_keeps_last_finite_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let out = dir.path().join("hebb");
    let o = neaw(&[
        "train-encoder", "--data", p(&data), "--out", p(&out), "--rule", "hebb", "--eta", "1e6", "--dims", "8,16",
        "--epochs", "40",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("diverged"));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let e = v["diverged_epoch"].as_u64().unwrap();
    assert_eq!(v["epochs_run"].as_u64().unwrap(), e);
    assert!(ModelFile::<f64>::load(out.join("model.neaw")).unwrap().encoder.is_finite());
    assert_eq!(json(&out.join("model.neaw.json"))["diverged_epoch"], e);
}
