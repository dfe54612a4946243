use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gfcn::io::{read_checkpoint, read_features, read_history};
use serde_json::Value;

fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/toy")
}

fn gfcn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gfcn"))
        .args(args)
        .env_remove("GFCN_DATA_ROOT")
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn info_reports_counts() {
    let v = json(&gfcn(&["info", p(&toy_dir())]));
    assert_eq!(v["nodes"], 300);
    assert_eq!(v["features"], 60);
    assert_eq!(v["classes"], 5);
    assert_eq!(v["smallest_class"], 4);
    assert_eq!(v["edges"], fs::read_to_string(toy_dir().join("edges.txt")).unwrap().lines().count());
}

#[test]
fn dataset_root_resolves_names() {
    let out = Command::new(env!("CARGO_BIN_EXE_gfcn"))
        .args(["info", "toy"])
        .env("GFCN_DATA_ROOT", toy_dir().parent().unwrap())
        .output()
        .unwrap();
    assert_eq!(json(&out)["name"], "toy");
}

#[test]
fn exit_codes_partition_failures() {
    let out = gfcn(&["info", "/definitely/not/here"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(!out.stderr.is_empty());

    assert_eq!(gfcn(&["train", p(&toy_dir()), "--label-rate", "1.5"]).status.code(), Some(2));
    assert_eq!(gfcn(&["train", p(&toy_dir()), "--lr", "-1"]).status.code(), Some(2));
    assert_eq!(gfcn(&["train", p(&toy_dir()), "--model", "mlp"]).status.code(), Some(2));
    assert_eq!(gfcn(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(gfcn(&["fair", p(&toy_dir()), "--s", "-1", "--out", "/tmp/x"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    for name in ["meta.json", "edges.txt", "features.bin", "labels.txt"] {
        fs::copy(toy_dir().join(name), dir.path().join(name)).unwrap();
    }
    let bytes = fs::read(dir.path().join("features.bin")).unwrap();
    fs::write(dir.path().join("features.bin"), &bytes[..1000]).unwrap();
    let out = gfcn(&["info", p(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains(&format!("expected {} bytes", bytes.len())) && msg.contains("found 1000"), "{msg}");

    let out = gfcn(&[
        "fair", p(&toy_dir()), "--s", "50", "--method", "jacobi", "--max-iters", "2", "--out",
        p(&dir.path().join("h.bin")),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn zero_scale_fairing_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.bin");
    for method in ["direct", "jacobi"] {
        json(&gfcn(&["fair", p(&toy_dir()), "--s", "0", "--method", method, "--out", p(&out)]));
        assert_eq!(fs::read(&out).unwrap(), fs::read(toy_dir().join("features.bin")).unwrap());
    }
}

#[test]
fn fairing_methods_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
    let ra = json(&gfcn(&["fair", p(&toy_dir()), "--s", "3", "--method", "direct", "--out", p(&a)]));
    let rb = json(&gfcn(&["fair", p(&toy_dir()), "--s", "3", "--method", "jacobi", "--out", p(&b)]));
    assert!(ra["final_residual"].as_f64().unwrap() <= 1e-10);
    assert!(rb["max_contraction"].as_f64().unwrap() <= 0.75 + 1e-6);
    let (ha, hb) = (read_features(&a).unwrap(), read_features(&b).unwrap());
    let rel = ha.sub(&hb).unwrap().frobenius_norm() / ha.frobenius_norm();
    assert!(rel <= 1e-8, "{rel}");
}

#[test]
fn train_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (ckpt, hist, task) = (dir.path().join("c"), dir.path().join("h"), dir.path().join("t"));
    let v = json(&gfcn(&[
        "train", p(&toy_dir()), "--label-rate", "0.1", "--label-mode", "both", "--epochs", "12",
        "--hidden", "8,4", "--checkpoint-out", p(&ckpt), "--history-out", p(&hist), "--task-out", p(&task),
    ]));
    assert!(v["auc"].as_f64().unwrap() > 0.5);
    assert_eq!(v["num_train"].as_u64().unwrap() + v["num_val"].as_u64().unwrap(), 30);
    let (header, mats) = read_checkpoint(&ckpt).unwrap();
    assert_eq!(header.dims, vec![60, 8, 4, 2]);
    assert_eq!(mats.len(), 6);
    assert_eq!(mats[1].shape(), (60, 8));
    assert_eq!(read_history(&hist).unwrap().len(), v["epochs_trained"].as_u64().unwrap() as usize);
    let t: Value = serde_json::from_slice(&fs::read(&task).unwrap()).unwrap();
    assert_eq!(t["label_mode"], "both");
}

#[test]
fn zero_epochs_reports_untrained_auc() {
    let v = json(&gfcn(&["train", p(&toy_dir()), "--epochs", "0"]));
    assert_eq!(v["epochs_trained"], 0);
    assert_eq!(v["best_epoch"], 0);
    assert!(v["auc"].is_number());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# quick run\nalpha = 2.5\nbeta = 0.1\nepochs = 3\nlabel-rate = 0.1\n").unwrap();
    let v = json(&gfcn(&["train", p(&toy_dir()), "--config", p(&cfg), "--beta", "0.2"]));
    assert_eq!(v["alpha"], 2.5);
    assert_eq!(v["beta"], 0.2);
    assert_eq!(v["label_rate"], 0.1);
    assert!(v["epochs_trained"].as_u64().unwrap() <= 3);

    fs::write(&cfg, "alpha = lots\n").unwrap();
    assert_eq!(gfcn(&["train", p(&toy_dir()), "--config", p(&cfg)]).status.code(), Some(2));
}

#[test]
fn experiment_and_sweep_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("e.csv");
    let v = json(&gfcn(&[
        "experiment", p(&toy_dir()), "--n-seeds", "1", "--epochs", "5", "--csv-out", p(&csv),
    ]));
    assert_eq!(v["runs"].as_array().unwrap().len(), 1);
    assert_eq!(v["std_auc"], 0.0);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 2);

    let out = gfcn(&[
        "sweep", p(&toy_dir()), "--param", "alpha", "--grid", "2,6", "--label-rates", "0.05,0.1",
        "--n-seeds", "2", "--epochs", "5", "--label-mode", "both",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2);
    assert!(text.starts_with("dataset,label_rate,param,value,seed,auc,epochs\n"));
    assert_eq!(gfcn(&["sweep", p(&toy_dir()), "--param", "gamma", "--grid", "1"]).status.code(), Some(2));
}

#[test]
fn commands_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| -> Vec<Vec<u8>> {
        let f = |name: &str| dir.path().join(format!("{tag}-{name}"));
        let mut outputs = Vec::new();
        let train = gfcn(&[
            "train", p(&toy_dir()), "--epochs", "10", "--seed", "3", "--checkpoint-out", p(&f("c")),
            "--history-out", p(&f("h")), "--task-out", p(&f("t")),
        ]);
        outputs.push(train.stdout);
        let exp = gfcn(&[
            "experiment", p(&toy_dir()), "--n-seeds", "3", "--epochs", "5", "--csv-out", p(&f("e.csv")),
        ]);
        outputs.push(exp.stdout);
        let fair = gfcn(&["fair", p(&toy_dir()), "--s", "1.5", "--method", "jacobi", "--out", p(&f("x"))]);
        outputs.push(fair.stdout);
        for name in ["c", "h", "t", "e.csv", "x"] {
            outputs.push(fs::read(f(name)).unwrap());
        }
        outputs
    };
    assert_eq!(run("a"), run("b"));
}
