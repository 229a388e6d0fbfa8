use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use super::config::{parse_value, write_resolved, RunConfig};
use super::io::{create_dir, read_dataset, write_json, write_series};
use super::train::AnyModel;
use crate::autodiff::Tensor;
use crate::dataset::LabeledDataset;
use crate::error::{contract, Result};
use crate::metrics::{bootstrap, bootstrap_with, micro_f1, percentile, pr_points, roc_points, Metric};
use crate::nn::{rng_from_seed, split_seed};
use crate::trainer::TrainedModel;

pub const METRICS_FORMAT: &str = "vie-metrics v1";

fn insert_report(map: &mut Map<String, Value>, r: &crate::metrics::MetricReport) {
    let m = &r.metric;
    map.insert(format!("{m}_mean"), json!(r.mean));
    map.insert(format!("{m}_std"), json!(r.std));
    map.insert(format!("{m}_ci_lo"), json!(r.lo));
    map.insert(format!("{m}_ci_hi"), json!(r.hi));
    map.insert(format!("{m}_redrawn"), json!(r.redrawn));
}

fn header(rows: usize, bootstrap_b: usize, seed: u64) -> Map<String, Value> {
    let mut map = Map::new();
    map.insert("format".into(), json!(METRICS_FORMAT));
    map.insert("rows".into(), json!(rows));
    if bootstrap_b > 0 {
        map.insert("bootstrap_resamples".into(), json!(bootstrap_b));
        map.insert("bootstrap_seed".into(), json!(seed));
    }
    map
}

/// Flat metrics object for event probabilities. With `bootstrap_b > 0`
/// every metric gains `_mean`, `_std`, `_ci_lo`, `_ci_hi` and `_redrawn`
/// from stratified resamples; all metrics share the same resamples.
pub fn binary_metrics(scores: &[f64], labels: &[usize], bootstrap_b: usize, seed: u64) -> Result<Value> {
    if labels.iter().any(|&l| l > 1) {
        return contract("binary metrics need 0/1 labels");
    }
    let mut map = header(labels.len(), bootstrap_b, seed);
    map.insert("positives".into(), json!(labels.iter().sum::<usize>()));
    for m in Metric::ALL {
        map.insert(m.name().into(), json!(m.eval(scores, labels)?));
        if bootstrap_b > 0 {
            insert_report(&mut map, &bootstrap(m, scores, labels, bootstrap_b, seed)?);
        }
    }
    Ok(Value::Object(map))
}

/// Flat metrics object for predicted classes: micro-F1.
pub fn multiclass_metrics(pred: &[usize], labels: &[usize], bootstrap_b: usize, seed: u64) -> Result<Value> {
    let mut map = header(labels.len(), bootstrap_b, seed);
    map.insert("micro_f1".into(), json!(micro_f1(pred, labels)?));
    if bootstrap_b > 0 {
        // Predicted classes ride along as the "scores" being resampled.
        let as_scores: Vec<f64> = pred.iter().map(|&p| p as f64).collect();
        let f = |s: &[f64], l: &[usize]| micro_f1(&s.iter().map(|&v| v as usize).collect::<Vec<_>>(), l);
        insert_report(&mut map, &bootstrap_with("micro_f1", f, &as_scores, labels, bootstrap_b, seed)?);
    }
    Ok(Value::Object(map))
}

/// Histogram of column `j` of `z` over `[lo, hi)`: densities normalized
/// by the full sample size, so mass outside the range is not redistributed.
fn density(z: &Tensor, j: usize, lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for i in 0..z.rows() {
        let v = z.get(i, j);
        if v >= lo && v < hi {
            counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
        }
    }
    counts.iter().map(|&c| c as f64 / (z.rows() as f64 * width)).collect()
}

/// Range covering the central 99% of both samples in dimension `j`.
fn latent_range(prior: &Tensor, post: &Tensor, j: usize) -> (f64, f64) {
    let mut all: Vec<f64> = (0..prior.rows()).map(|i| prior.get(i, j)).chain((0..post.rows()).map(|i| post.get(i, j))).collect();
    all.sort_by(|a, b| a.total_cmp(b));
    let (lo, hi) = (percentile(&all, 0.005), percentile(&all, 0.995));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

/// Per-dimension latent histograms (`latent_hist.csv`) and predicted-risk
/// curves along each latent axis with the others held at the posterior
/// median (`risk_curve.csv`).
pub fn write_latent_series(dir: &Path, m: &TrainedModel, x: &Tensor, s: &EvalSettings) -> Result<()> {
    let post = m.posterior_sample(x, split_seed(s.seed, 1))?;
    let prior = m.sample_prior(s.prior_samples, &mut rng_from_seed(split_seed(s.seed, 2)))?;
    let p = m.latent_dim();
    let mut hist_rows = Vec::new();
    let mut curve_rows = Vec::new();
    let medians: Vec<f64> = (0..p)
        .map(|j| {
            let mut col: Vec<f64> = (0..post.rows()).map(|i| post.get(i, j)).collect();
            col.sort_by(|a, b| a.total_cmp(b));
            percentile(&col, 0.5)
        })
        .collect();
    for j in 0..p {
        let (lo, hi) = latent_range(&prior, &post, j);
        let width = (hi - lo) / s.hist_bins as f64;
        let (dp, dq) = (density(&prior, j, lo, hi, s.hist_bins), density(&post, j, lo, hi, s.hist_bins));
        for b in 0..s.hist_bins {
            let left = lo + b as f64 * width;
            hist_rows.push(vec![j as f64, left, left + width, dp[b], dq[b]]);
        }
        let k = s.curve_points;
        let mut grid = Vec::with_capacity(k * p);
        for t in 0..k {
            let mut row = medians.clone();
            row[j] = lo + (hi - lo) * t as f64 / (k - 1) as f64;
            grid.extend(row);
        }
        let grid = Tensor::new(vec![k, p], grid)?;
        let proba = m.proba_from_latent(&grid, &mut rng_from_seed(split_seed(s.seed, 3 + j as u64)))?;
        for t in 0..k {
            let mut row = vec![j as f64, grid.get(t, j)];
            if m.classes() == 2 {
                row.push(proba.get(t, 1));
            } else {
                row.extend((0..m.classes()).map(|c| proba.get(t, c)));
            }
            curve_rows.push(row);
        }
    }
    write_series(&dir.join("latent_hist.csv"), &["dim", "left", "right", "prior_density", "posterior_density"], &hist_rows)?;
    let mut columns = vec!["dim".to_string(), "z".to_string()];
    if m.classes() == 2 {
        columns.push("risk".into());
    } else {
        columns.extend((0..m.classes()).map(|c| format!("p{c}")));
    }
    let names: Vec<&str> = columns.iter().map(String::as_str).collect();
    write_series(&dir.join("risk_curve.csv"), &names, &curve_rows)
}

pub const EVAL_KEYS: [&str; 9] =
    ["model", "data", "out", "bootstrap", "seed", "draws", "hist_bins", "prior_samples", "curve_points"];

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSettings {
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Bootstrap resamples; 0 skips intervals.
    pub bootstrap: usize,
    pub seed: u64,
    /// Posterior draws per prediction; `None` uses the model's setting.
    pub draws: Option<usize>,
    pub hist_bins: usize,
    pub prior_samples: usize,
    pub curve_points: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            model: None,
            data: None,
            out: None,
            bootstrap: 0,
            seed: 0,
            draws: None,
            hist_bins: 40,
            prior_samples: 20_000,
            curve_points: 101,
        }
    }
}

impl EvalSettings {
    pub fn from_config(c: &RunConfig) -> Result<Self> {
        c.check_keys("eval", &EVAL_KEYS)?;
        let mut s = EvalSettings::default();
        for (k, v) in c.pairs() {
            match k.as_str() {
                "model" => s.model = Some(PathBuf::from(v)),
                "data" => s.data = Some(PathBuf::from(v)),
                "out" => s.out = Some(PathBuf::from(v)),
                "bootstrap" => s.bootstrap = parse_value(k, v)?,
                "seed" => s.seed = parse_value(k, v)?,
                "draws" => s.draws = if v == "auto" { None } else { Some(parse_value(k, v)?) },
                "hist_bins" => s.hist_bins = parse_value(k, v)?,
                "prior_samples" => s.prior_samples = parse_value(k, v)?,
                "curve_points" => s.curve_points = parse_value(k, v)?,
                _ => unreachable!("keys checked"),
            }
        }
        if s.hist_bins == 0 || s.prior_samples == 0 || s.curve_points < 2 || s.draws == Some(0) {
            return contract("hist_bins, prior_samples and draws must be positive and curve_points at least 2");
        }
        Ok(s)
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let mut pairs: Vec<(String, String)> = [("model", path(&self.model)), ("data", path(&self.data)), ("out", path(&self.out))]
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
            .collect();
        pairs.extend([
            ("bootstrap".to_string(), self.bootstrap.to_string()),
            ("seed".to_string(), self.seed.to_string()),
            ("draws".to_string(), self.draws.map_or("auto".to_string(), |d| d.to_string())),
            ("hist_bins".to_string(), self.hist_bins.to_string()),
            ("prior_samples".to_string(), self.prior_samples.to_string()),
            ("curve_points".to_string(), self.curve_points.to_string()),
        ]);
        pairs
    }
}

/// Test split path: a CSV file, or `test.csv` inside a directory.
fn data_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("test.csv")
    } else {
        p.to_path_buf()
    }
}

/// Metrics and series for `model` on `data`, written into `out`.
pub fn evaluate(model: &AnyModel, data: &LabeledDataset, out: &Path, s: &EvalSettings) -> Result<Value> {
    create_dir(out)?;
    let draws = s.draws.unwrap_or(model.default_draws());
    let seed = split_seed(s.seed, 0);
    let mut metrics = model.score(data, seed, draws, s.bootstrap)?;
    if let Value::Object(map) = &mut metrics {
        map.insert("model".into(), json!(model.name()));
    }
    write_json(&out.join("metrics.json"), &metrics)?;
    if model.classes() == 2 {
        let scores = model.predict_risk(&data.features, seed, draws)?;
        let pairs = |v: Vec<(f64, f64)>| v.into_iter().map(|(a, b)| vec![a, b]).collect::<Vec<_>>();
        write_series(&out.join("roc.csv"), &["fpr", "tpr"], &pairs(roc_points(&scores, &data.labels)?))?;
        write_series(&out.join("pr.csv"), &["recall", "precision"], &pairs(pr_points(&scores, &data.labels)?))?;
    }
    if let AnyModel::Vie(m) = model {
        write_latent_series(out, m, &data.features, s)?;
    }
    Ok(metrics)
}

pub fn cmd_eval(c: &RunConfig) -> Result<()> {
    let s = EvalSettings::from_config(c)?;
    let (Some(model_path), Some(data), Some(out)) = (&s.model, &s.data, &s.out) else {
        return contract("eval needs --model FILE --data PATH --out DIR");
    };
    let model = AnyModel::load(model_path)?;
    let data = read_dataset(&data_path(data))?;
    let metrics = evaluate(&model, &data, out, &s)?;
    write_resolved(out, "eval", &s.to_pairs())?;
    eprintln!("{}", serde_json::to_string(&metrics).unwrap_or_default());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_object_is_flat_and_complete() {
        let scores = [0.1, 0.4, 0.35, 0.8, 0.2, 0.7];
        let labels = [0, 0, 1, 1, 0, 1];
        let v = binary_metrics(&scores, &labels, 50, 3).unwrap();
        let map = v.as_object().unwrap();
        assert!(map.values().all(|x| !x.is_object() && !x.is_array()));
        for m in Metric::ALL {
            let lo = map[&format!("{}_ci_lo", m.name())].as_f64().unwrap();
            let hi = map[&format!("{}_ci_hi", m.name())].as_f64().unwrap();
            assert!(lo <= hi);
        }
        assert_eq!(map["positives"], json!(3));
        assert_eq!(v, binary_metrics(&scores, &labels, 50, 3).unwrap());
        assert!(binary_metrics(&scores, &[0, 2, 1, 1, 0, 1], 0, 0).is_err());
    }

    #[test]
    fn density_integrates_to_in_range_mass() {
        let z = Tensor::new(vec![5, 1], vec![0.0, 0.25, 0.5, 0.75, 5.0]).unwrap();
        let d = density(&z, 0, 0.0, 1.0, 4);
        assert!((d.iter().sum::<f64>() * 0.25 - 0.8).abs() < 1e-12);
    }
}
