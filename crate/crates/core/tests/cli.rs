mod common;

use std::fs;
use std::path::Path;

use common::{code, vie};
use vie::cli::io::read_dataset;
use vie::trainer::{initial_model, TrainConfig, VariantSpec};

fn gen_small(dir: &Path, name: &str, extra: &[&str]) {
    let mut args = vec!["generate", "--out", name, "--n", "2000", "--rate", "0.05"];
    args.extend_from_slice(extra);
    let o = vie(&args, dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn series(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn generate_default_is_calibrated_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        assert_eq!(code(&vie(&["generate", "--out", out], dir.path())), 0);
    }
    for f in ["train.csv", "valid.csv", "test.csv", "manifest.json", "resolved.conf"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        if f == "resolved.conf" {
            assert_eq!(String::from_utf8(a).unwrap().replace("out = a", "out = b"), String::from_utf8(b).unwrap());
        } else {
            assert_eq!(a, b, "{f} differs between identical runs");
        }
    }
    let m = json(&dir.path().join("a/manifest.json"));
    for split in ["train", "valid", "test"] {
        let rate = m[format!("{split}_rate")].as_f64().unwrap();
        assert!((rate - 0.01).abs() <= 0.002, "{split} rate {rate}");
        let data = read_dataset(&dir.path().join("a").join(format!("{split}.csv"))).unwrap();
        assert_eq!(data.len() as u64, m[format!("{split}_rows")].as_u64().unwrap());
        assert!(data.oracle_risk.is_some());
    }
    assert!(m["t0"].as_f64().unwrap() > 0.0);
}

#[test]
fn generate_smoke_variants() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&vie(&["generate", "--out", "h", "--n", "1000", "--rate", "0.5"], dir.path())), 0);
    let o = vie(&["generate", "--out", "s", "--generator", "semisynthetic", "--n", "1000", "--risk-kind", "mlp"], dir.path());
    assert_eq!(code(&o), 0);
    assert_eq!(read_dataset(&dir.path().join("s/train.csv")).unwrap().dim(), 9);
    assert_eq!(code(&vie(&["generate", "--out", "x", "--bogus", "1"], dir.path())), 2);
    assert_eq!(code(&vie(&["generate", "--out", "x", "--rate", "1.5"], dir.path())), 2);
}

#[test]
fn train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen_small(d, "d", &[]);
    let train = ["train", "--data", "d", "--out", "m", "--variant", "vie", "--epochs", "1", "--bins", "10", "--max-iterations", "3"];
    let o = vie(&train, d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["model.ckpt", "history.csv", "metrics.json", "resolved.conf", "validation.csv"] {
        assert!(d.join("m").join(f).exists(), "missing {f}");
    }
    let v = json(&d.join("m/metrics.json"));
    assert!(v["auc"].is_f64() && v["auprc"].is_f64());
    assert_eq!(fs::read_to_string(d.join("m/history.csv")).unwrap().lines().count(), 2 + 3);

    // the resolved config alone reproduces the checkpoint
    assert_eq!(code(&vie(&["train", "--config", "m/resolved.conf", "--out", "m2"], d)), 0);
    assert_eq!(fs::read(d.join("m/model.ckpt")).unwrap(), fs::read(d.join("m2/model.ckpt")).unwrap());

    let eval = |out: &str| vie(&["eval", "--model", "m/model.ckpt", "--data", "d", "--out", out, "--bootstrap", "30", "--seed", "4"], d);
    assert_eq!(code(&eval("e1")), 0);
    assert_eq!(code(&eval("e2")), 0);
    for f in ["metrics.json", "roc.csv", "pr.csv", "latent_hist.csv", "risk_curve.csv"] {
        assert_eq!(fs::read(d.join("e1").join(f)).unwrap(), fs::read(d.join("e2").join(f)).unwrap(), "{f}");
    }
    let m = json(&d.join("e1/metrics.json"));
    let roc = series(&d.join("e1/roc.csv"));
    let area: f64 = roc.windows(2).map(|w| (w[1][0] - w[0][0]) * (w[1][1] + w[0][1]) / 2.0).sum();
    assert!((area - m["auc"].as_f64().unwrap()).abs() < 1e-9);
    assert_eq!(roc.first().unwrap(), &vec![0.0, 0.0]);
    assert_eq!(roc.last().unwrap(), &vec![1.0, 1.0]);

    // documented schema: flat object with exactly these keys
    let mut expected = vec!["format", "model", "rows", "positives", "bootstrap_resamples", "bootstrap_seed"];
    let metric_keys: Vec<String> = ["auc", "auprc", "bce", "positive_bce"]
        .iter()
        .flat_map(|k| ["", "_mean", "_std", "_ci_lo", "_ci_hi", "_redrawn"].map(|s| format!("{k}{s}")))
        .collect();
    expected.extend(metric_keys.iter().map(String::as_str));
    let obj = m.as_object().unwrap();
    let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    keys.sort_unstable();
    expected.sort_unstable();
    assert_eq!(keys, expected);
    assert_eq!(m["format"], "vie-metrics v1");
    for k in ["auc", "auprc", "bce", "positive_bce"] {
        let (lo, hi) = (obj[&format!("{k}_ci_lo")].as_f64().unwrap(), obj[&format!("{k}_ci_hi")].as_f64().unwrap());
        assert!(lo <= hi);
    }

    let hist = series(&d.join("e1/latent_hist.csv"));
    assert_eq!(hist.len(), 4 * 40);
    let curve = series(&d.join("e1/risk_curve.csv"));
    assert_eq!(curve.len(), 4 * 101);
    assert!(curve.iter().all(|r| r[2] > 0.0 && r[2] < 1.0));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen_small(d, "d", &[]);
    gen_small(d, "d5", &["--covariate-dim", "5"]);
    let o = vie(&["train", "--data", "d", "--out", "x", "--variant", "nope"], d);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("usage"));
    assert_eq!(code(&vie(&["train", "--data", "d", "--out", "x", "--flow-steps"], d)), 2);
    assert_eq!(code(&vie(&["train", "--data", "missing", "--out", "x"], d)), 2);
    assert_eq!(code(&vie(&["frobnicate"], d)), 2);
    assert_eq!(code(&vie(&["train", "--help"], d)), 0);
    assert_eq!(code(&vie(&["train", "--data", "d", "--out", "b", "--baseline", "lasso", "--lasso-steps", "50"], d)), 0);
    let o = vie(&["eval", "--model", "b/model.ckpt", "--data", "d5", "--out", "e"], d);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&vie(&["eval", "--model", "b/model.ckpt", "--data", "d", "--out", "e"], d)), 0);
    assert!(!d.join("e/latent_hist.csv").exists());
}

#[test]
fn multiclass_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen_small(d, "d", &["--labels", "multiclass"]);
    let m = json(&d.join("d/manifest.json"));
    let rates: Vec<f64> = m["train_class_rates"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    for (r, want) in rates.iter().zip([0.05, 0.10, 0.15, 0.30, 0.40]) {
        assert!((r - want).abs() < 0.01, "{rates:?}");
    }
    let o = vie(&["train", "--data", "d", "--out", "m", "--epochs", "1", "--bins", "10", "--max-iterations", "2"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&vie(&["eval", "--model", "m/model.ckpt", "--data", "d", "--out", "e"], d)), 0);
    let v = json(&d.join("e/metrics.json"));
    assert!(v["micro_f1"].as_f64().unwrap() >= 0.0);
    assert!(!d.join("e/roc.csv").exists());
    let curve = fs::read_to_string(d.join("e/risk_curve.csv")).unwrap();
    assert!(curve.lines().nth(1).unwrap().ends_with("p0,p1,p2,p3,p4"));
}

#[test]
fn zero_penalty_vae_run_equals_supervised_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen_small(d, "d", &[]);
    let args = [
        "train", "--data", "d", "--out", "m", "--variant", "vae", "--beta", "0", "--lambda", "0", "--epochs", "2",
        "--patience", "0", "--adam-lr", "0.001", "--seed", "11",
    ];
    assert_eq!(code(&vie(&args, d)), 0);
    let history = series(&d.join("m/history.csv"));
    let train = read_dataset(&d.join("d/train.csv")).unwrap();
    let config = TrainConfig { beta: Some(0.0), lambda: Some(0.0), epochs: 2, patience: 0, adam_lr: 1e-3, seed: 11, ..TrainConfig::default() };
    let model = initial_model(&train, VariantSpec::vae(), &config).unwrap();
    let oracle = common::supervised::trajectory(&model, &train, &config, history.len());
    assert_eq!(history.len(), 12);
    for (row, want) in history.iter().zip(&oracle) {
        // objective column; with zero weights it is the mean log-likelihood
        assert!((row[6] - want).abs() < 1e-10, "iteration {}: {} vs {}", row[0], row[6], want);
        assert!((row[2] + want).abs() < 1e-10);
    }
}
