//! Comparison learners: L1-penalized logistic regression, class-reweighted or
//! oversampled MLP, importance-weighted MLP and focal-loss MLP.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::{sigmoid, Tape, Tensor, Var};
use crate::dataset::{LabeledDataset, Standardizer};
use crate::error::{contract, Result, VieError};
use crate::metrics::{roc_auc, PROB_CLAMP};
use crate::nn::{rng_from_seed, split_seed, Activation, AdamState, Mlp};
use crate::trainer::checkpoint::{parse_document, parse_err, write_block};
use crate::trainer::TrainedModel;

/// Consecutive objective increases after which lasso training is declared
/// divergent.
pub const LASSO_DIVERGENCE_WINDOW: usize = 50;

/// Anything that maps raw features to event probabilities.
pub trait RiskModel {
    fn input_dim(&self) -> usize;
    /// `P(y = 1)` per row of raw (unstandardized) features. Stochastic
    /// models average `n_draws` draws seeded from `seed`.
    fn predict_risk(&self, x_raw: &Tensor, seed: u64, n_draws: usize) -> Result<Vec<f64>>;
}

impl RiskModel for TrainedModel {
    fn input_dim(&self) -> usize {
        TrainedModel::input_dim(self)
    }

    fn predict_risk(&self, x_raw: &Tensor, seed: u64, n_draws: usize) -> Result<Vec<f64>> {
        self.predict(x_raw, seed, n_draws)
    }
}

/// `−(1 − p_t)^γ ln p_t` with `p_t = p` for `y = 1` and `1 − p` otherwise.
pub fn focal_loss(p: f64, y: usize, gamma: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let pt = if y == 1 { p } else { 1.0 - p };
    -(1.0 - pt).powf(gamma) * pt.ln()
}

/// Per-example cross-entropy scaled by a label weight, normalized by the
/// total weight of the batch.
pub fn importance_weighted_loss(p: &[f64], y: &[usize], weights: [f64; 2]) -> Result<f64> {
    if p.len() != y.len() || p.is_empty() {
        return contract("probabilities and labels must be nonempty and of equal length");
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (&pi, &yi) in p.iter().zip(y) {
        let w = weights[usize::from(yi == 1)];
        num += w * focal_loss(pi, yi, 0.0);
        den += w;
    }
    Ok(num / den)
}

/// Proximal map of `t·|w|`.
pub fn soft_threshold(w: f64, t: f64) -> f64 {
    w.signum() * (w.abs() - t).max(0.0)
}

/// Class weights `(1, (1 − r)/r)`: in expectation both classes contribute
/// equally to a batch.
pub fn inverse_prevalence_weights(rate: f64) -> [f64; 2] {
    [1.0, (1.0 - rate) / rate]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MlpBalance {
    /// Weighted mean cross-entropy; `None` picks inverse-prevalence weights.
    Reweight(Option<[f64; 2]>),
    /// Minibatches drawn half from each class, with replacement.
    Oversample,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BaselineSpec {
    Lasso { alpha: f64 },
    MlpWeighted(MlpBalance),
    /// `None` picks inverse-prevalence weights.
    ImportanceWeighted(Option<[f64; 2]>),
    Focal { gamma: f64 },
}

pub const BASELINE_NAMES: [&str; 4] = ["lasso", "mlp-weighted", "importance-weighted", "focal"];

impl BaselineSpec {
    pub fn validate(&self) -> Result<()> {
        let weights_ok = |w: &Option<[f64; 2]>| w.map_or(true, |w| w.iter().all(|&v| v > 0.0 && v.is_finite()));
        match self {
            BaselineSpec::Lasso { alpha } if !(*alpha >= 0.0 && alpha.is_finite()) => contract("lasso alpha must be ≥ 0"),
            BaselineSpec::Focal { gamma } if !(*gamma >= 0.0 && gamma.is_finite()) => contract("focal gamma must be ≥ 0"),
            BaselineSpec::MlpWeighted(MlpBalance::Reweight(w)) | BaselineSpec::ImportanceWeighted(w) if !weights_ok(w) => {
                contract("class weights must be positive")
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaselineSpec::Lasso { .. } => "lasso",
            BaselineSpec::MlpWeighted(_) => "mlp-weighted",
            BaselineSpec::ImportanceWeighted(_) => "importance-weighted",
            BaselineSpec::Focal { .. } => "focal",
        }
    }
}

impl fmt::Display for BaselineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let weights = |w: &Option<[f64; 2]>| w.map_or(String::new(), |w| format!(" w0={} w1={}", w[0], w[1]));
        match self {
            BaselineSpec::Lasso { alpha } => write!(f, "lasso alpha={alpha}"),
            BaselineSpec::MlpWeighted(MlpBalance::Reweight(w)) => write!(f, "mlp-weighted mode=reweight{}", weights(w)),
            BaselineSpec::MlpWeighted(MlpBalance::Oversample) => write!(f, "mlp-weighted mode=oversample"),
            BaselineSpec::ImportanceWeighted(w) => write!(f, "importance-weighted{}", weights(w)),
            BaselineSpec::Focal { gamma } => write!(f, "focal gamma={gamma}"),
        }
    }
}

impl FromStr for BaselineSpec {
    type Err = VieError;

    /// `name key=value …`, e.g. `focal gamma=2` or `mlp-weighted mode=oversample`.
    fn from_str(s: &str) -> Result<Self> {
        let mut toks = s.split_whitespace();
        let name = toks.next().ok_or_else(|| VieError::Contract("empty baseline spec".into()))?;
        let mut alpha = 0.01;
        let mut gamma = 2.0;
        let mut mode = "reweight".to_string();
        let (mut w0, mut w1) = (None, None);
        for t in toks {
            let (k, v) = t.split_once('=').ok_or_else(|| VieError::Contract(format!("expected key=value, got '{t}'")))?;
            let num = || v.parse::<f64>().map_err(|e| VieError::Contract(format!("{k}: {e}")));
            match k {
                "alpha" => alpha = num()?,
                "gamma" => gamma = num()?,
                "mode" => mode = v.to_string(),
                "w0" => w0 = Some(num()?),
                "w1" => w1 = Some(num()?),
                _ => return contract(format!("unknown baseline setting '{k}'")),
            }
        }
        let weights = match (w0, w1) {
            (Some(a), Some(b)) => Some([a, b]),
            (None, None) => None,
            _ => return contract("give both w0 and w1 or neither"),
        };
        let spec = match name {
            "lasso" => BaselineSpec::Lasso { alpha },
            "focal" => BaselineSpec::Focal { gamma },
            "importance-weighted" => BaselineSpec::ImportanceWeighted(weights),
            "mlp-weighted" => match mode.as_str() {
                "reweight" => BaselineSpec::MlpWeighted(MlpBalance::Reweight(weights)),
                "oversample" => BaselineSpec::MlpWeighted(MlpBalance::Oversample),
                other => return contract(format!("unknown mlp-weighted mode '{other}'")),
            },
            other => return contract(format!("unknown baseline '{other}'; expected one of {}", BASELINE_NAMES.join(", "))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation AUC improvement before stopping; 0 disables.
    pub patience: usize,
    pub mlp_hidden: Vec<usize>,
    pub mlp_lr: f64,
    pub lasso_steps: usize,
    pub lasso_lr: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            seed: 0,
            epochs: 20,
            batch_size: 200,
            patience: 5,
            mlp_hidden: vec![32, 32, 32],
            mlp_lr: 1e-3,
            lasso_steps: 2000,
            lasso_lr: 0.1,
        }
    }
}

pub const BASELINE_CONFIG_KEYS: [&str; 8] =
    ["seed", "epochs", "batch_size", "patience", "mlp_hidden", "mlp_lr", "lasso_steps", "lasso_lr"];

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.lasso_steps == 0 {
            return contract("epochs, batch_size and lasso_steps must be positive");
        }
        if self.mlp_hidden.is_empty() || self.mlp_hidden.contains(&0) {
            return contract("mlp_hidden must be a nonempty list of positive widths");
        }
        if !(self.mlp_lr > 0.0 && self.lasso_lr > 0.0) {
            return contract("learning rates must be positive");
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let bad = |e: String| VieError::Contract(format!("{key}: {e}"));
        let int = |v: &str| v.parse::<usize>().map_err(|e| bad(e.to_string()));
        let float = |v: &str| v.parse::<f64>().map_err(|e| bad(e.to_string()));
        match key {
            "seed" => self.seed = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            "epochs" => self.epochs = int(v)?,
            "batch_size" => self.batch_size = int(v)?,
            "patience" => self.patience = int(v)?,
            "mlp_hidden" => self.mlp_hidden = v.split(',').map(|s| int(s.trim())).collect::<Result<_>>()?,
            "mlp_lr" => self.mlp_lr = float(v)?,
            "lasso_steps" => self.lasso_steps = int(v)?,
            "lasso_lr" => self.lasso_lr = float(v)?,
            _ => return contract(format!("unknown config key '{key}'")),
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let hidden = self.mlp_hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(",");
        let values = [
            self.seed.to_string(),
            self.epochs.to_string(),
            self.batch_size.to_string(),
            self.patience.to_string(),
            hidden,
            self.mlp_lr.to_string(),
            self.lasso_steps.to_string(),
            self.lasso_lr.to_string(),
        ];
        BASELINE_CONFIG_KEYS.iter().map(|k| k.to_string()).zip(values).collect()
    }
}

/// Trained baseline: a linear model (lasso) or an MLP emitting one logit.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineModel {
    pub spec: BaselineSpec,
    pub config: BaselineConfig,
    pub standardizer: Standardizer,
    pub net: Mlp,
    /// Training objective per optimizer step.
    pub history: Vec<f64>,
    /// Validation AUC per epoch (empty for lasso).
    pub validation: Vec<f64>,
}

impl BaselineModel {
    /// Logits for standardized features.
    pub fn logits(&self, x_std: &Tensor) -> Result<Vec<f64>> {
        Ok(self.net.eval(x_std)?.into_data())
    }

    /// `P(y = 1)` for raw features, inside `[1e-12, 1 − 1e-12]`.
    pub fn predict(&self, x_raw: &Tensor) -> Result<Vec<f64>> {
        if x_raw.rank() != 2 || x_raw.cols() != self.standardizer.mean.len() {
            return Err(VieError::Mismatch(format!(
                "model expects {} feature columns, got {:?}",
                self.standardizer.mean.len(),
                x_raw.shape()
            )));
        }
        let x = self.standardizer.apply(x_raw)?;
        Ok(self.logits(&x)?.into_iter().map(|l| sigmoid(l).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)).collect())
    }

    /// Lasso coefficients (the linear weights), empty for MLPs.
    pub fn coefficients(&self) -> Vec<f64> {
        if self.net.depth() == 1 {
            self.net.params[0].data().to_vec()
        } else {
            Vec::new()
        }
    }
}

impl RiskModel for BaselineModel {
    fn input_dim(&self) -> usize {
        self.standardizer.mean.len()
    }

    fn predict_risk(&self, x_raw: &Tensor, _seed: u64, _n_draws: usize) -> Result<Vec<f64>> {
        self.predict(x_raw)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn binary_counts(data: &LabeledDataset) -> Result<(usize, usize)> {
    if data.labels.iter().any(|&l| l > 1) {
        return contract("baselines need binary labels");
    }
    let pos = data.labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == data.len() {
        return contract("training data needs both classes");
    }
    Ok((data.len() - pos, pos))
}

/// Batch loss on the tape for the MLP-type baselines.
fn batch_loss(tape: &mut Tape, spec: &BaselineSpec, weights: [f64; 2], logits: Var, y: &[usize]) -> Result<Var> {
    let sign = Tensor::column(&y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect::<Vec<_>>());
    let sign = tape.constant(sign);
    let s = tape.mul(logits, sign)?;
    let neg_s = tape.neg(s)?;
    let ce = tape.softplus(neg_s)?;
    let w = || Tensor::column(&y.iter().map(|&l| weights[usize::from(l == 1)]).collect::<Vec<_>>());
    match spec {
        BaselineSpec::Focal { gamma } => {
            let sp = tape.softplus(s)?;
            let scaled = tape.scale(sp, -gamma)?;
            let factor = tape.exp(scaled)?;
            let per = tape.mul(factor, ce)?;
            tape.mean(per)
        }
        BaselineSpec::ImportanceWeighted(_) => {
            let wt = w();
            let total: f64 = wt.data().iter().sum();
            let wv = tape.constant(wt);
            let per = tape.mul(ce, wv)?;
            let sum = tape.sum(per)?;
            tape.scale(sum, 1.0 / total)
        }
        BaselineSpec::MlpWeighted(_) => {
            let wv = tape.constant(w());
            let per = tape.mul(ce, wv)?;
            tape.mean(per)
        }
        BaselineSpec::Lasso { .. } => contract("lasso is trained by proximal gradient"),
    }
}

/// Row indices: `size / 2` positives then the rest negatives, each drawn
/// with replacement.
pub fn oversampled_batch(positives: &[usize], negatives: &[usize], size: usize, rng: &mut impl Rng) -> Vec<usize> {
    let half = size / 2;
    let mut b: Vec<usize> = (0..half).map(|_| positives[rng.gen_range(0..positives.len())]).collect();
    b.extend((half..size).map(|_| negatives[rng.gen_range(0..negatives.len())]));
    b
}

fn gather(x: &Tensor, rows: &[usize]) -> Result<Tensor> {
    let d = x.cols();
    let mut data = Vec::with_capacity(rows.len() * d);
    for &i in rows {
        data.extend_from_slice(x.row_slice(i));
    }
    Tensor::new(vec![rows.len(), d], data)
}

/// Train any baseline; MLPs stop early on validation AUC and keep the best
/// epoch's parameters.
pub fn train_baseline(
    train: &LabeledDataset,
    valid: &LabeledDataset,
    spec: BaselineSpec,
    config: &BaselineConfig,
) -> Result<BaselineModel> {
    spec.validate()?;
    config.validate()?;
    match spec {
        BaselineSpec::Lasso { alpha } => train_lasso(train, alpha, config),
        _ => train_mlp(train, valid, spec, config),
    }
}

/// Flags an objective that is non-finite or has risen for
/// [`LASSO_DIVERGENCE_WINDOW`] consecutive steps.
#[derive(Clone, Debug, Default)]
pub struct DivergenceMonitor {
    prev: Option<f64>,
    rises: usize,
}

impl DivergenceMonitor {
    pub fn observe(&mut self, objective: f64) -> Result<()> {
        let fail = |message: String| Err(VieError::Training { component: "lasso".into(), message });
        if !objective.is_finite() {
            return fail("objective is not finite".into());
        }
        if self.prev.map_or(false, |p| objective > p) {
            self.rises += 1;
        } else {
            self.rises = 0;
        }
        self.prev = Some(objective);
        if self.rises >= LASSO_DIVERGENCE_WINDOW {
            return fail(format!("objective rose for {LASSO_DIVERGENCE_WINDOW} consecutive steps; lower lasso_lr"));
        }
        Ok(())
    }
}

/// Logistic loss plus `α‖w‖₁` by proximal gradient on the full training
/// split; the bias is unpenalized and starts at the prevalence log-odds.
pub fn train_lasso(train: &LabeledDataset, alpha: f64, config: &BaselineConfig) -> Result<BaselineModel> {
    let spec = BaselineSpec::Lasso { alpha };
    spec.validate()?;
    config.validate()?;
    let (_, pos) = binary_counts(train)?;
    let standardizer = Standardizer::fit(&train.features);
    let x = standardizer.apply(&train.features)?;
    let d = x.cols();
    let y = train.label_column();
    let mut w = Tensor::zeros(&[d, 1]);
    let mut b = Tensor::scalar(logit(pos as f64 / train.len() as f64)).reshape(&[1, 1])?;
    let eta = config.lasso_lr;
    let mut history = Vec::with_capacity(config.lasso_steps);
    let mut monitor = DivergenceMonitor::default();
    for _ in 0..config.lasso_steps {
        let mut tape = Tape::new();
        let (wv, bv) = (tape.var(w.clone()), tape.var(b.clone()));
        let xv = tape.constant(x.clone());
        let z = tape.matmul(xv, wv)?;
        let l = tape.add(z, bv)?;
        let loss = bce_mean_tape(&mut tape, l, &y)?;
        let objective = tape.value(loss).item() + alpha * w.data().iter().map(|v| v.abs()).sum::<f64>();
        monitor.observe(objective)?;
        history.push(objective);
        let g = tape.backward(loss)?;
        for (wi, gi) in w.data_mut().iter_mut().zip(g.wrt(wv).data()) {
            *wi = soft_threshold(*wi - eta * gi, eta * alpha);
        }
        for (bi, gi) in b.data_mut().iter_mut().zip(g.wrt(bv).data()) {
            *bi -= eta * gi;
        }
    }
    let net = Mlp::from_params(vec![w, b], Activation::Identity)?;
    Ok(BaselineModel { spec, config: config.clone(), standardizer, net, history, validation: Vec::new() })
}

/// Mean binary cross-entropy of logits `l` against a `0/1` column.
fn bce_mean_tape(tape: &mut Tape, l: Var, y: &Tensor) -> Result<Var> {
    let sign = tape.constant(y.map(|v| 2.0 * v - 1.0));
    let s = tape.mul(l, sign)?;
    let neg = tape.neg(s)?;
    let ce = tape.softplus(neg)?;
    tape.mean(ce)
}

fn train_mlp(train: &LabeledDataset, valid: &LabeledDataset, spec: BaselineSpec, config: &BaselineConfig) -> Result<BaselineModel> {
    let (neg, pos) = binary_counts(train)?;
    let rate = pos as f64 / train.len() as f64;
    let weights = match spec {
        BaselineSpec::MlpWeighted(MlpBalance::Reweight(w)) | BaselineSpec::ImportanceWeighted(w) => {
            w.unwrap_or_else(|| inverse_prevalence_weights(rate))
        }
        _ => [1.0, 1.0],
    };
    // Start the output at the prevalence the loss effectively sees.
    let effective = match spec {
        BaselineSpec::MlpWeighted(MlpBalance::Oversample) => 0.5,
        _ => weights[1] * pos as f64 / (weights[1] * pos as f64 + weights[0] * neg as f64),
    };
    let standardizer = Standardizer::fit(&train.features);
    let x = standardizer.apply(&train.features)?;
    let mut sizes = vec![x.cols()];
    sizes.extend_from_slice(&config.mlp_hidden);
    sizes.push(1);
    let mut net = Mlp::new(&sizes, split_seed(config.seed, 0))?;
    let last = net.params.len() - 1;
    net.params[last].data_mut()[0] = logit(effective);
    let mut model = BaselineModel {
        spec,
        config: config.clone(),
        standardizer,
        net,
        history: Vec::new(),
        validation: Vec::new(),
    };

    let mut adam = AdamState::new(config.mlp_lr, &model.net.params);
    let mut shuffle = rng_from_seed(split_seed(config.seed, 1));
    let positives: Vec<usize> = (0..train.len()).filter(|&i| train.labels[i] == 1).collect();
    let negatives: Vec<usize> = (0..train.len()).filter(|&i| train.labels[i] != 1).collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let scorable = valid.labels.iter().any(|&l| l == 1) && valid.labels.iter().any(|&l| l != 1);
    let mut best: Option<(f64, Mlp)> = None;
    let mut since_best = 0;
    for _ in 0..config.epochs {
        let batches: Vec<Vec<usize>> = match spec {
            BaselineSpec::MlpWeighted(MlpBalance::Oversample) => {
                let per_epoch = train.len().div_ceil(config.batch_size);
                (0..per_epoch).map(|_| oversampled_batch(&positives, &negatives, config.batch_size, &mut shuffle)).collect()
            }
            _ => {
                order.shuffle(&mut shuffle);
                order.chunks(config.batch_size).map(|c| c.to_vec()).collect()
            }
        };
        for rows in batches {
            let xb = gather(&x, &rows)?;
            let yb: Vec<usize> = rows.iter().map(|&i| train.labels[i]).collect();
            let mut tape = Tape::new();
            let bound = model.net.bind(&mut tape, true);
            let xv = tape.constant(xb);
            let l = model.net.forward(&mut tape, &bound, xv)?;
            let loss = batch_loss(&mut tape, &spec, weights, l, &yb)?;
            let value = tape.value(loss).item();
            let g = tape.backward(loss)?;
            let grads: Vec<Tensor> = bound.iter().map(|&v| g.wrt(v)).collect();
            if !value.is_finite() || grads.iter().any(|t| !t.all_finite()) {
                return Err(VieError::Training { component: spec.name().into(), message: "non-finite loss or gradient".into() });
            }
            adam.apply(&mut model.net.params, &grads)?;
            model.history.push(value);
        }
        if scorable {
            let auc = roc_auc(&model.predict(&valid.features)?, &valid.labels)?;
            model.validation.push(auc);
            if best.as_ref().map_or(true, |(b, _)| auc > *b) {
                best = Some((auc, model.net.clone()));
                since_best = 0;
            } else {
                since_best += 1;
            }
            if config.patience > 0 && since_best >= config.patience {
                break;
            }
        } else {
            model.validation.push(f64::NAN);
        }
    }
    if let Some((_, net)) = best {
        model.net = net;
    }
    Ok(model)
}

pub const BASELINE_HEADER: &str = "vie-baseline v1";

pub fn baseline_to_text(m: &BaselineModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{BASELINE_HEADER}");
    let _ = writeln!(out, "baseline {}", m.spec);
    for (k, v) in m.config.to_pairs() {
        let _ = writeln!(out, "config {k}={v}");
    }
    let d = m.standardizer.mean.len();
    write_block(&mut out, "standardizer.mean", &Tensor::new(vec![d], m.standardizer.mean.clone()).expect("d values"));
    write_block(&mut out, "standardizer.std", &Tensor::new(vec![d], m.standardizer.std.clone()).expect("d values"));
    write_block(&mut out, "history", &Tensor::new(vec![m.history.len()], m.history.clone()).expect("one per step"));
    write_block(&mut out, "validation", &Tensor::new(vec![m.validation.len()], m.validation.clone()).expect("one per epoch"));
    for (k, t) in m.net.params.iter().enumerate() {
        write_block(&mut out, &format!("net.{k}"), t);
    }
    out
}

pub fn baseline_from_text(text: &str) -> Result<BaselineModel> {
    let mut doc = parse_document(text, BASELINE_HEADER)?;
    let spec = match doc.meta.first() {
        Some((n, l)) => match l.strip_prefix("baseline ") {
            Some(s) => s.parse::<BaselineSpec>().map_err(|e| VieError::Parse { line: *n, message: e.to_string() })?,
            None => return parse_err(*n, "expected a baseline line"),
        },
        None => return parse_err(doc.last_line, "missing baseline line"),
    };
    let mut config = BaselineConfig::default();
    for (n, l) in &doc.meta[1..] {
        let kv = l.strip_prefix("config ").ok_or_else(|| VieError::Parse { line: *n, message: format!("unexpected line '{l}'") })?;
        let (k, v) = kv.split_once('=').ok_or_else(|| VieError::Parse { line: *n, message: "config line needs key=value".into() })?;
        config.set(k.trim(), v).map_err(|e| VieError::Parse { line: *n, message: e.to_string() })?;
    }
    let mean = doc.take("standardizer.mean")?.tensor.into_data();
    let std = doc.take("standardizer.std")?.tensor.into_data();
    let history = doc.take("history")?.tensor.into_data();
    let validation = doc.take("validation")?.tensor.into_data();
    let mut params = Vec::new();
    while let Ok(b) = doc.take(&format!("net.{}", params.len())) {
        params.push(b.tensor);
    }
    doc.finish()?;
    let activation = if matches!(spec, BaselineSpec::Lasso { .. }) { Activation::Identity } else { Activation::Relu };
    let net = Mlp::from_params(params, activation).map_err(|e| VieError::Parse { line: doc.last_line, message: e.to_string() })?;
    if mean.len() != std.len() || net.input_dim() != mean.len() || net.output_dim() != 1 {
        return parse_err(doc.last_line, "network and standardizer widths disagree");
    }
    Ok(BaselineModel { spec, config, standardizer: Standardizer { mean, std }, net, history, validation })
}

pub fn save_baseline(m: &BaselineModel, path: &Path) -> Result<()> {
    std::fs::write(path, baseline_to_text(m))?;
    Ok(())
}

pub fn load_baseline(path: &Path) -> Result<BaselineModel> {
    baseline_from_text(&std::fs::read_to_string(path)?)
}
