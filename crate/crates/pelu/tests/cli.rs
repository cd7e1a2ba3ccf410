use std::path::Path;
use std::process::{Command, Output};

use pelu::idx::{write_idx, IdxArray};
use serde_json::{json, Value};

fn pelu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pelu"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn records(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader
        .headers()
        .unwrap()
        .iter()
        .map(str::to_string)
        .collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}

fn small_config(epochs: usize) -> Value {
    json!({
        "architecture": {"mlp": {"widths": [2, 16, 3]}},
        "optimizer": {"learning_rate": 0.05},
        "epochs": epochs,
        "batch_size": 32,
        "seed": 3,
        "dataset": {"blobs": {"n_per_class": 60, "num_classes": 3, "dim": 2, "spread": 0.5}},
        "log_every": 5
    })
}

fn write(dir: &Path, name: &str, value: &Value) -> String {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string(value).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn train(config: &Value, dir: &Path, out: &str) -> Output {
    let path = write(dir, &format!("{out}.json"), config);
    pelu(&["train", &path, "--out", dir.join(out).to_str().unwrap()])
}

#[test]
fn help_and_bad_flags() {
    assert_eq!(pelu(&["--help"]).status.code(), Some(0));
    assert_eq!(pelu(&["train", "--help"]).status.code(), Some(0));
    assert_eq!(pelu(&["--no-such-flag"]).status.code(), Some(1));
    assert_eq!(pelu(&[]).status.code(), Some(1));
}

#[test]
fn analyze_reports_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let out = pelu(&[
        "analyze",
        "--a",
        "2",
        "--b",
        "0.5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let (header, rows) = records(&dir.path().join("analysis_summary.csv"));
    assert_eq!(
        header,
        ["w_star", "l_star", "w_star_bruteforce", "l_star_bruteforce"]
    );
    let w: f64 = rows[0][0].parse().unwrap();
    let l: f64 = rows[0][1].parse().unwrap();
    // e * b / a and a / e.
    assert!((w - std::f64::consts::E * 0.25).abs() < 1e-12, "{w}");
    assert!((l - 2.0 / std::f64::consts::E).abs() < 1e-12, "{l}");
    let (header, rows) = records(&dir.path().join("analysis.csv"));
    assert_eq!(header, ["a", "b", "w", "interval_length"]);
    assert_eq!(rows.len(), 100_000);
}

#[test]
fn analyze_rejects_non_positive_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let out = pelu(&[
        "analyze",
        "--a",
        "-1",
        "--b",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("analysis.csv").exists());
}

#[test]
fn training_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(4);
    assert!(train(&config, dir.path(), "a").status.success());
    assert!(train(&config, dir.path(), "b").status.success());
    for file in ["metrics.csv", "progression.csv", "model.json"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }
    let (header, rows) = records(&dir.path().join("a/metrics.csv"));
    assert_eq!(
        header,
        [
            "epoch",
            "train_loss",
            "train_err_pct",
            "test_err_pct",
            "lr",
            "wd"
        ]
    );
    assert_eq!(rows.len(), 4);
    let model: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a/model.json")).unwrap()).unwrap();
    assert_eq!(model["pelu"].as_array().unwrap().len(), 1);
}

#[test]
fn zero_epochs_writes_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(&small_config(0), dir.path(), "run");
    assert!(out.status.success(), "{}", stderr(&out));
    for file in ["metrics.csv", "progression.csv"] {
        let (header, rows) = records(&dir.path().join("run").join(file));
        assert!(!header.is_empty());
        assert!(rows.is_empty(), "{file}");
    }
}

#[test]
fn baseline_activations_share_the_output_schema() {
    let dir = tempfile::tempdir().unwrap();
    let mut elu = small_config(2);
    elu["activation"] = json!("elu");
    assert!(train(&small_config(2), dir.path(), "pelu").status.success());
    assert!(train(&elu, dir.path(), "elu").status.success());
    for file in ["metrics.csv", "progression.csv"] {
        let (h1, _) = records(&dir.path().join("pelu").join(file));
        let (h2, rows) = records(&dir.path().join("elu").join(file));
        assert_eq!(h1, h2);
        if file == "progression.csv" {
            assert!(rows.is_empty());
        }
    }
}

#[test]
fn corrupted_gradient_fails_gradcheck() {
    let out = pelu(&[
        "gradcheck",
        "--arch",
        "mlp:2,8,3",
        "--act",
        "pelu",
        "--corrupt",
        "pelu.q",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("pelu.q"), "{}", stderr(&out));
    let ok = pelu(&["gradcheck", "--arch", "mlp:2,8,3", "--act", "pelu"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
}

#[test]
fn unknown_config_key_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config(1);
    config["optimizer"]["nesterov"] = json!(true);
    let out = train(&config, dir.path(), "run");
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("optimizer.nesterov"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn divergence_exits_with_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config(3);
    config["optimizer"] = json!({"learning_rate": 1e12, "momentum": 0.0});
    assert_eq!(train(&config, dir.path(), "run").status.code(), Some(2));
}

#[test]
fn sweep_tabulates_every_variant() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = small_config(2);
    base["dataset"]["blobs"]["test_n_per_class"] = json!(10);
    let sweep = json!({
        "base": base,
        "variants": [{"activation": "pelu"}, {"activation": "elu"}, {"activation": "relu"}],
        "n_seeds": 2
    });
    let path = write(dir.path(), "sweep.json", &sweep);
    let out = pelu(&["sweep", &path, "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let (_, rows) = records(&dir.path().join("sweep.csv"));
    let labels: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(labels, ["pelu/a_invb", "elu", "relu"]);
    let (_, runs) = records(&dir.path().join("sweep_runs.csv"));
    assert_eq!(runs.len(), 6);
}

#[test]
fn single_seed_sweep_matches_train() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(3);
    assert!(train(&config, dir.path(), "run").status.success());
    let sweep = json!({"base": config, "variants": [{}], "n_seeds": 1});
    let path = write(dir.path(), "sweep.json", &sweep);
    let sweep_out = dir.path().join("sweep");
    assert!(
        pelu(&["sweep", &path, "--out", sweep_out.to_str().unwrap()])
            .status
            .success()
    );

    let (header, rows) = records(&dir.path().join("run/metrics.csv"));
    let last = rows.last().unwrap();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (_, runs) = records(&sweep_out.join("sweep_runs.csv"));
    assert_eq!(runs[0][3], last[col("train_loss")]);
    assert_eq!(runs[0][4], last[col("train_err_pct")]);
    assert_eq!(runs[0][5], last[col("test_err_pct")]);
}

#[test]
fn smallnet_lite_trains_on_idx_files() {
    let dir = tempfile::tempdir().unwrap();
    let (n, side) = (12, 8);
    let mut pixels = Vec::with_capacity(n * side * side);
    for i in 0..n {
        for p in 0..side * side {
            // Class 1 images are bright on the left half.
            let bright = i % 2 == 1 && p % side < side / 2;
            pixels.push(if bright {
                220
            } else {
                ((i * 31 + p * 7) % 40) as u8
            });
        }
    }
    let images = IdxArray {
        dims: vec![n, side, side],
        data: pixels,
    };
    let labels = IdxArray {
        dims: vec![n],
        data: (0..n).map(|i| (i % 2) as u8).collect(),
    };
    write_idx(&dir.path().join("images.idx"), &images).unwrap();
    write_idx(&dir.path().join("labels.idx"), &labels).unwrap();

    let config = json!({
        "architecture": "smallnet-lite",
        "optimizer": {"learning_rate": 0.01},
        "epochs": 2,
        "batch_size": 4,
        "seed": 1,
        "dataset": {"idx": {"train_images": "images.idx", "train_labels": "labels.idx"}},
        "augment": "hflip",
        "log_every": 1
    });
    let out = train(&config, dir.path(), "run");
    assert!(out.status.success(), "{}", stderr(&out));
    let (_, rows) = records(&dir.path().join("run/metrics.csv"));
    assert_eq!(rows.len(), 2);
    // Four PELU layers, one record each per iteration, three iterations per epoch.
    let (_, progression) = records(&dir.path().join("run/progression.csv"));
    assert_eq!(progression.len(), 4 * 3 * 2);

    let mut bytes = std::fs::read(dir.path().join("images.idx")).unwrap();
    bytes[0] = 0xFF;
    std::fs::write(dir.path().join("images.idx"), bytes).unwrap();
    assert_eq!(train(&config, dir.path(), "bad").status.code(), Some(1));
}
