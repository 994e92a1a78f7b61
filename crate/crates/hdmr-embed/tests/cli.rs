//! End-to-end checks of the command-line interface: fit/transform/
//! evaluate round trips, experiment determinism, and exit codes.

use std::path::Path;
use std::process::Command;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hdmr_embed::pipeline::write_matrix_csv;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hdmr-embed"))
}

/// Two well-separated classes in three features.
fn toy_data(dir: &Path, m: usize, seed: u64) -> (std::path::PathBuf, Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((m, 3));
    let mut labels = Vec::new();
    for i in 0..m {
        let c = i % 2;
        for j in 0..3 {
            x[[i, j]] = c as f64 * 4.0 + rng.gen_range(-0.5..0.5) + 0.1 * j as f64;
        }
        labels.push(c + 1);
    }
    let path = dir.join("train.csv");
    write_matrix_csv(&path, x.view(), Some(&labels)).unwrap();
    (path, x, labels)
}

#[test]
fn fit_transform_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (train_csv, x, labels) = toy_data(dir.path(), 24, 61);

    let model_path = dir.path().join("model.txt");
    let status = bin()
        .args([
            "fit",
            train_csv.to_str().unwrap(),
            "--method",
            "hdmr",
            "--p",
            "2",
            "--beta",
            "1",
            "--k",
            "3",
            "--d",
            "2",
            "--out",
            model_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "fit failed: {}",
        String::from_utf8_lossy(&status.stderr)
    );

    // Transform the training features (label column stripped in-flight).
    let emb_train = dir.path().join("emb_train.csv");
    let status = bin()
        .args([
            "transform",
            train_csv.to_str().unwrap(),
            "--label-col",
            "3",
            "--model",
            model_path.to_str().unwrap(),
            "--out",
            emb_train.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "transform failed: {}",
        String::from_utf8_lossy(&status.stderr)
    );

    // Same invocation twice: byte-identical embedding output.
    let emb_again = dir.path().join("emb_again.csv");
    bin()
        .args([
            "transform",
            train_csv.to_str().unwrap(),
            "--label-col",
            "3",
            "--model",
            model_path.to_str().unwrap(),
            "--out",
            emb_again.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(
        std::fs::read(&emb_train).unwrap(),
        std::fs::read(&emb_again).unwrap()
    );

    // Held-out rows from the same generator, then evaluate with the
    // training embedding for nearest-neighbor accuracy.
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    let mut x_test = Array2::zeros((10, 3));
    let mut l_test = Vec::new();
    for i in 0..10 {
        let c = i % 2;
        for j in 0..3 {
            x_test[[i, j]] = c as f64 * 4.0 + rng.gen_range(-0.5..0.5) + 0.1 * j as f64;
        }
        l_test.push(c + 1);
    }
    let test_csv = dir.path().join("test.csv");
    write_matrix_csv(&test_csv, x_test.view(), None).unwrap();
    let emb_test = dir.path().join("emb_test.csv");
    bin()
        .args([
            "transform",
            test_csv.to_str().unwrap(),
            "--model",
            model_path.to_str().unwrap(),
            "--out",
            emb_test.to_str().unwrap(),
        ])
        .output()
        .unwrap();

    let labels_path = dir.path().join("labels.txt");
    std::fs::write(
        &labels_path,
        l_test
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join("\n"),
    )
    .unwrap();
    let train_labels_path = dir.path().join("train_labels.txt");
    std::fs::write(
        &train_labels_path,
        labels
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join("\n"),
    )
    .unwrap();

    let metrics_path = dir.path().join("metrics.csv");
    let out = bin()
        .args([
            "evaluate",
            emb_test.to_str().unwrap(),
            "--labels",
            labels_path.to_str().unwrap(),
            "--train-embedding",
            emb_train.to_str().unwrap(),
            "--train-labels",
            train_labels_path.to_str().unwrap(),
            "--out",
            metrics_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "evaluate failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let metrics = std::fs::read_to_string(&metrics_path).unwrap();
    let data_row = metrics.lines().nth(1).unwrap();
    let oa: f64 = data_row.split(',').nth(1).unwrap().parse().unwrap();
    assert!(oa > 0.9, "separable toy data should classify well: {oa}");

    let _ = x; // training matrix only needed to build the files above
}

#[test]
fn experiment_cli_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (train_csv, _, _) = toy_data(dir.path(), 30, 63);
    let cfg_path = dir.path().join("exp.cfg");
    std::fs::write(
        &cfg_path,
        format!(
            "dataset = {}\nmethod = hdmr\np = 2\nbeta = 1\nk = 3\nd_max = 3\n\
             train_fraction = 0.4\nseeds = 5,6\nsnr = 20\nout = unused\n",
            train_csv.display()
        ),
    )
    .unwrap();

    for out in ["a", "b"] {
        let status = bin()
            .args([
                "experiment",
                cfg_path.to_str().unwrap(),
                "--out",
                dir.path().join(out).to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(
            status.status.success(),
            "experiment failed: {}",
            String::from_utf8_lossy(&status.stderr)
        );
    }
    for file in ["learning_curve.csv", "metrics.csv", "snr_sweep.csv"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between reruns");
    }
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let (train_csv, _, _) = toy_data(dir.path(), 20, 64);

    // Unknown method: usage error (2).
    let out = bin()
        .args([
            "fit",
            train_csv.to_str().unwrap(),
            "--method",
            "bogus",
            "--out",
            dir.path().join("m.txt").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Excessive embedding dimension: parameter error (2).
    let out = bin()
        .args([
            "fit",
            train_csv.to_str().unwrap(),
            "--p",
            "1",
            "--d",
            "99",
            "--out",
            dir.path().join("m.txt").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Missing input file: data error (3).
    let out = bin()
        .args([
            "transform",
            dir.path().join("missing.csv").to_str().unwrap(),
            "--model",
            dir.path().join("missing_model.txt").to_str().unwrap(),
            "--out",
            dir.path().join("e.csv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}
