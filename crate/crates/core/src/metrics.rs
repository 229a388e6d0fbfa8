//! Ranking and loss metrics with stratified bootstrap intervals.

use std::cmp::Ordering;

use rand::Rng;

use crate::error::{contract, Result};
use crate::nn::{rng_from_seed, split_seed};

/// Probability clamp for log-losses.
pub const PROB_CLAMP: f64 = 1e-12;
pub const DEFAULT_BOOTSTRAP: usize = 200;

fn check_pair(scores: &[f64], labels: &[usize]) -> Result<()> {
    if scores.len() != labels.len() {
        return contract(format!("{} scores but {} labels", scores.len(), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return contract("scores contain NaN");
    }
    Ok(())
}

/// `(score, positive)` groups of tied scores in ascending score order,
/// as `(positives, negatives)` per group.
fn tie_groups(scores: &[f64], labels: &[usize]) -> Vec<(u64, u64)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    let mut groups: Vec<(u64, u64)> = Vec::new();
    let mut last = f64::NAN;
    for i in idx {
        if groups.is_empty() || scores[i] != last {
            groups.push((0, 0));
            last = scores[i];
        }
        let g = groups.last_mut().expect("pushed above");
        if labels[i] == 1 {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

/// Area under the ROC curve: the chance a random positive (label 1) outranks
/// a random negative, ties counting one half. Counts are kept as integers so
/// the only rounding is the final division.
pub fn roc_auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    check_pair(scores, labels)?;
    let groups = tie_groups(scores, labels);
    let (pos, neg) = groups.iter().fold((0u64, 0u64), |(p, n), g| (p + g.0, n + g.1));
    if pos == 0 || neg == 0 {
        return contract("roc_auc needs both classes");
    }
    // twice the Mann-Whitney statistic
    let mut doubled: u128 = 0;
    let mut neg_below: u64 = 0;
    for &(p, n) in &groups {
        doubled += 2 * p as u128 * neg_below as u128 + p as u128 * n as u128;
        neg_below += n;
    }
    Ok(doubled as f64 / (2.0 * pos as f64 * neg as f64))
}

/// Average precision with tied scores entering the curve together.
pub fn auprc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    check_pair(scores, labels)?;
    let groups = tie_groups(scores, labels);
    let total_pos: u64 = groups.iter().map(|g| g.0).sum();
    if total_pos == 0 {
        return contract("auprc needs at least one positive");
    }
    let (mut tp, mut fp, mut ap) = (0u64, 0u64, 0.0);
    for &(p, n) in groups.iter().rev() {
        tp += p;
        fp += n;
        if p > 0 {
            ap += (p as f64 / total_pos as f64) * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(ap)
}

fn log_loss(p: f64, y: usize) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Mean binary cross-entropy.
pub fn bce(scores: &[f64], labels: &[usize]) -> Result<f64> {
    check_pair(scores, labels)?;
    if scores.is_empty() {
        return contract("bce of an empty set");
    }
    Ok(scores.iter().zip(labels).map(|(&p, &y)| log_loss(p, y)).sum::<f64>() / scores.len() as f64)
}

/// Mean cross-entropy over the positive examples only.
pub fn positive_bce(scores: &[f64], labels: &[usize]) -> Result<f64> {
    check_pair(scores, labels)?;
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(&p, _)| log_loss(p, 1)).collect();
    if pos.is_empty() {
        return contract("positive_bce needs at least one positive");
    }
    Ok(pos.iter().sum::<f64>() / pos.len() as f64)
}

/// Micro-averaged F1 for single-label predictions (equal to accuracy).
pub fn micro_f1(predicted: &[usize], labels: &[usize]) -> Result<f64> {
    if predicted.len() != labels.len() {
        return contract("predictions and labels differ in length");
    }
    if labels.is_empty() {
        return contract("micro_f1 of an empty set");
    }
    let tp = predicted.iter().zip(labels).filter(|(a, b)| a == b).count() as f64;
    let wrong = labels.len() as f64 - tp;
    // every wrong prediction is one false positive and one false negative
    Ok(2.0 * tp / (2.0 * tp + 2.0 * wrong))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Auc,
    Auprc,
    Bce,
    PositiveBce,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Auc, Metric::Auprc, Metric::Bce, Metric::PositiveBce];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Auc => "auc",
            Metric::Auprc => "auprc",
            Metric::Bce => "bce",
            Metric::PositiveBce => "positive_bce",
        }
    }

    pub fn eval(self, scores: &[f64], labels: &[usize]) -> Result<f64> {
        match self {
            Metric::Auc => roc_auc(scores, labels),
            Metric::Auprc => auprc(scores, labels),
            Metric::Bce => bce(scores, labels),
            Metric::PositiveBce => positive_bce(scores, labels),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub metric: String,
    pub estimate: f64,
    pub mean: f64,
    pub std: f64,
    pub lo: f64,
    pub hi: f64,
    pub resamples: usize,
    pub seed: u64,
    /// Resamples on which the metric failed and that were drawn again.
    pub redrawn: usize,
}

/// Linear-interpolation percentile of sorted data, `q ∈ [0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Stratified bootstrap: every resample keeps each class's count. Returns
/// the point estimate on the full data with a 95% percentile interval.
pub fn bootstrap(metric: Metric, scores: &[f64], labels: &[usize], b: usize, seed: u64) -> Result<MetricReport> {
    bootstrap_with(metric.name(), |s, l| metric.eval(s, l), scores, labels, b, seed)
}

pub fn bootstrap_with<F>(name: &str, f: F, scores: &[f64], labels: &[usize], b: usize, seed: u64) -> Result<MetricReport>
where
    F: Fn(&[f64], &[usize]) -> Result<f64>,
{
    if b == 0 {
        return contract("bootstrap needs at least one resample");
    }
    check_pair(scores, labels)?;
    let estimate = f(scores, labels)?;
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let strata: Vec<Vec<usize>> =
        (0..classes).map(|c| (0..labels.len()).filter(|&i| labels[i] == c).collect()).collect();
    let mut rng = rng_from_seed(split_seed(seed, 0xB007));
    let mut values = Vec::with_capacity(b);
    let mut redrawn = 0;
    let (mut s, mut l) = (Vec::with_capacity(scores.len()), Vec::with_capacity(scores.len()));
    while values.len() < b {
        s.clear();
        l.clear();
        for stratum in strata.iter().filter(|st| !st.is_empty()) {
            for _ in 0..stratum.len() {
                let i = stratum[rng.gen_range(0..stratum.len())];
                s.push(scores[i]);
                l.push(labels[i]);
            }
        }
        match f(&s, &l) {
            Ok(v) if v.is_finite() => values.push(v),
            _ => {
                redrawn += 1;
                if redrawn > 10 * b {
                    return contract(format!("metric {name} failed on {redrawn} resamples"));
                }
            }
        }
    }
    let mean = values.iter().sum::<f64>() / b as f64;
    let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / b as f64).sqrt();
    values.sort_by(|a, c| a.partial_cmp(c).expect("finite"));
    Ok(MetricReport {
        metric: name.to_string(),
        estimate,
        mean,
        std,
        lo: percentile(&values, 0.025),
        hi: percentile(&values, 0.975),
        resamples: b,
        seed,
        redrawn,
    })
}

/// ROC curve points `(fpr, tpr)` from the strictest threshold down, one per
/// tie group, starting at `(0, 0)`.
pub fn roc_points(scores: &[f64], labels: &[usize]) -> Result<Vec<(f64, f64)>> {
    check_pair(scores, labels)?;
    let groups = tie_groups(scores, labels);
    let (pos, neg) = groups.iter().fold((0u64, 0u64), |(p, n), g| (p + g.0, n + g.1));
    if pos == 0 || neg == 0 {
        return contract("roc curve needs both classes");
    }
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    for &(p, n) in groups.iter().rev() {
        tp += p;
        fp += n;
        pts.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(pts)
}

/// Precision-recall points `(recall, precision)`, one per tie group.
pub fn pr_points(scores: &[f64], labels: &[usize]) -> Result<Vec<(f64, f64)>> {
    check_pair(scores, labels)?;
    let groups = tie_groups(scores, labels);
    let pos: u64 = groups.iter().map(|g| g.0).sum();
    if pos == 0 {
        return contract("pr curve needs at least one positive");
    }
    let (mut tp, mut fp) = (0u64, 0u64);
    Ok(groups
        .iter()
        .rev()
        .map(|&(p, n)| {
            tp += p;
            fp += n;
            (tp as f64 / pos as f64, tp as f64 / (tp + fp) as f64)
        })
        .collect())
}
