//! Synthetic survival-style data reduced to classification: Cox-Weibull event
//! times driven by a risk score, labels from a calibrated time cut, and the
//! true event probability kept as an oracle.

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Open01, StandardNormal};

use crate::amnn::{AmnnParams, IntegrationMode, DEFAULT_LOWER};
use crate::autodiff::Tensor;
use crate::dataset::LabeledDataset;
use crate::error::{contract, Result};
use crate::evt::{default_threshold, MixedGpdParams};
use crate::metrics::PROB_CLAMP;
use crate::nn::{rng_from_seed, split_seed, Mlp};

/// `t = (−ln u / (λ e^g))^{1/ν}` for a uniform draw `u ∈ (0, 1]`.
pub fn weibull_time(u: f64, g: f64, lambda: f64, nu: f64) -> Result<f64> {
    if !(u > 0.0 && u <= 1.0) {
        return contract(format!("uniform draw {u} outside (0, 1]"));
    }
    if !(lambda > 0.0 && nu > 0.0) {
        return contract("Weibull parameters must be positive");
    }
    Ok((-u.ln() / (lambda * g.exp())).powf(1.0 / nu))
}

/// `P(T < t0) = 1 − exp(−λ e^g t0^ν)`, kept inside `(0, 1)`.
pub fn weibull_event_probability(g: f64, t0: f64, lambda: f64, nu: f64) -> f64 {
    let p = -(-lambda * g.exp() * t0.powf(nu)).exp_m1();
    p.clamp(f64::MIN_POSITIVE, 1.0 - PROB_CLAMP)
}

/// Cut value with `round(q·n)` of `sorted` strictly below it: the midpoint
/// between the neighbouring order statistics.
fn cut_below(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let k = ((q * n as f64).round() as usize).clamp(1, n - 1);
    0.5 * (sorted[k - 1] + sorted[k])
}

/// Time cut whose empirical event rate `P(t < t0)` matches `target_rate`.
pub fn calibrate_t0(times: &[f64], target_rate: f64) -> Result<f64> {
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return contract(format!("target rate {target_rate} outside (0, 1)"));
    }
    if (times.len() as f64) < 1.0 / target_rate || times.len() < 2 {
        return contract(format!("{} times are too few for rate {target_rate}", times.len()));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return contract("times must be finite");
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return contract("all times are equal");
    }
    Ok(cut_below(&sorted, target_rate))
}

/// Class index = number of percentile cuts below each time.
pub fn multiclass_split(times: &[f64], percentiles: &[f64]) -> Result<Vec<usize>> {
    if percentiles.is_empty() || percentiles.iter().any(|&q| !(q > 0.0 && q < 100.0)) {
        return contract("percentiles must lie in (0, 100)");
    }
    if percentiles.windows(2).any(|w| w[1] <= w[0]) {
        return contract("percentiles must be strictly increasing");
    }
    if times.len() < 2 {
        return contract("need at least two times");
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = percentiles.iter().map(|&q| cut_below(&sorted, q / 100.0)).collect();
    Ok(times.iter().map(|&t| cuts.iter().filter(|&&c| c < t).count()).collect())
}

pub const DEFAULT_MULTICLASS_PERCENTILES: [f64; 4] = [5.0, 15.0, 30.0, 60.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RiskKind {
    Linear,
    RandomMlp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SemiSynthConfig {
    pub n: usize,
    pub continuous: usize,
    pub categorical: usize,
    pub category_rate: f64,
    pub kind: RiskKind,
    pub lambda: f64,
    pub nu: f64,
    pub rate: f64,
    pub seed: u64,
}

impl Default for SemiSynthConfig {
    fn default() -> Self {
        SemiSynthConfig {
            n: 10_000,
            continuous: 4,
            categorical: 5,
            category_rate: 0.3,
            kind: RiskKind::Linear,
            lambda: 1.0,
            nu: 2.0,
            rate: 0.01,
            seed: 0,
        }
    }
}

fn check_common(n: usize, rate: f64, lambda: f64, nu: f64) -> Result<()> {
    if n == 0 {
        return contract("n must be at least 1");
    }
    if !(rate > 0.0 && rate < 1.0) {
        return contract("event rate must lie in (0, 1)");
    }
    if !(lambda > 0.0 && nu > 0.0) {
        return contract("Weibull parameters must be positive");
    }
    Ok(())
}

/// Generator output with the quantities behind the labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub data: LabeledDataset,
    /// Risk score driving each row's event time.
    pub score: Vec<f64>,
    pub times: Vec<f64>,
    /// Calibrated cut-off: label 1 exactly when the time falls below it.
    pub t0: f64,
}

impl Generated {
    /// Same rows relabeled into classes by time percentiles; the binary
    /// oracle risk no longer applies and is dropped.
    pub fn multiclass(&self, percentiles: &[f64]) -> Result<LabeledDataset> {
        let labels = multiclass_split(&self.times, percentiles)?;
        let mut data = LabeledDataset::new(self.data.features.clone(), labels, None)?;
        data.latent = self.data.latent.clone();
        Ok(data)
    }
}

struct TimeLabels {
    times: Vec<f64>,
    labels: Vec<usize>,
    oracle: Vec<f64>,
    t0: f64,
}

/// Times, calibrated labels and oracle probabilities for risk scores `g`.
fn label_by_time(g: &[f64], lambda: f64, nu: f64, rate: f64, seed: u64) -> Result<TimeLabels> {
    let mut rng = rng_from_seed(seed);
    let times = g
        .iter()
        .map(|&s| weibull_time(rng.sample(Open01), s, lambda, nu))
        .collect::<Result<Vec<_>>>()?;
    let t0 = calibrate_t0(&times, rate)?;
    let labels = times.iter().map(|&t| usize::from(t < t0)).collect();
    let oracle = g.iter().map(|&s| weibull_event_probability(s, t0, lambda, nu)).collect();
    Ok(TimeLabels { times, labels, oracle, t0 })
}

pub fn gen_semisynthetic(config: &SemiSynthConfig) -> Result<LabeledDataset> {
    Ok(generate_semisynthetic(config)?.data)
}

/// Surrogate clinical covariates with a linear or random-network risk score.
pub fn generate_semisynthetic(config: &SemiSynthConfig) -> Result<Generated> {
    let c = config;
    check_common(c.n, c.rate, c.lambda, c.nu)?;
    if !(c.category_rate > 0.0 && c.category_rate < 1.0) || c.continuous + c.categorical == 0 {
        return contract("covariates need a shape and a category rate in (0, 1)");
    }
    let d = c.continuous + c.categorical;
    let mut rng = rng_from_seed(split_seed(c.seed, 0));
    let bern = Bernoulli::new(c.category_rate).expect("rate checked");
    let mut data = Vec::with_capacity(c.n * d);
    for _ in 0..c.n {
        data.extend((0..c.continuous).map(|_| rng.sample::<f64, _>(StandardNormal)));
        data.extend((0..c.categorical).map(|_| f64::from(u8::from(bern.sample(&mut rng)))));
    }
    let x = Tensor::new(vec![c.n, d], data)?;
    let g: Vec<f64> = match c.kind {
        RiskKind::Linear => {
            let mut r = rng_from_seed(split_seed(c.seed, 1));
            let beta: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
            (0..c.n).map(|i| x.row_slice(i).iter().zip(&beta).map(|(a, b)| a * b).sum()).collect()
        }
        RiskKind::RandomMlp => Mlp::new(&[d, 32, 32, 1], split_seed(c.seed, 1))?.eval(&x)?.into_data(),
    };
    let t = label_by_time(&g, c.lambda, c.nu, c.rate, split_seed(c.seed, 2))?;
    let data = LabeledDataset::new(x, t.labels, Some(t.oracle))?;
    Ok(Generated { data, score: g, times: t.times, t0: t.t0 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LongTailConfig {
    pub n: usize,
    pub latent_dim: usize,
    pub covariate_dim: usize,
    pub threshold: f64,
    pub xi: f64,
    pub sigma: f64,
    /// Hidden widths of the covariate map `g: z → x`.
    pub feature_hidden: Vec<usize>,
    /// Hidden widths of each integrand of the risk network `H`.
    pub risk_hidden: Vec<usize>,
    /// Extra factor on the output layer of each risk integrand; smaller
    /// values make `H` closer to linear.
    pub risk_curvature: f64,
    /// Standard deviation of the risk score after centring and rescaling.
    pub risk_sd: f64,
    pub lambda: f64,
    pub nu: f64,
    pub rate: f64,
    pub seed: u64,
}

impl Default for LongTailConfig {
    fn default() -> Self {
        LongTailConfig {
            n: 20_000,
            latent_dim: 4,
            covariate_dim: 8,
            threshold: default_threshold(),
            xi: 0.3,
            sigma: 1.0,
            feature_hidden: vec![32],
            risk_hidden: vec![16, 16],
            risk_curvature: 0.3,
            risk_sd: 1.3,
            lambda: 1.0,
            nu: 2.0,
            rate: 0.01,
            seed: 0,
        }
    }
}

const RISK_CHUNK: usize = 1024;

/// Generator networks of the long-tailed design, fixed by the config seed.
#[derive(Clone, Debug)]
pub struct LongTailModel {
    pub prior: MixedGpdParams,
    pub features: Mlp,
    pub risk: AmnnParams,
}

impl LongTailModel {
    pub fn new(c: &LongTailConfig) -> Result<Self> {
        if c.latent_dim == 0 || c.covariate_dim == 0 || !(c.risk_sd > 0.0) {
            return contract("latent and covariate dims and the risk spread must be positive");
        }
        let prior = MixedGpdParams::shared(c.threshold, c.xi, c.sigma, c.latent_dim)?;
        let mut sizes = vec![c.latent_dim];
        sizes.extend_from_slice(&c.feature_hidden);
        sizes.push(c.covariate_dim);
        let features = Mlp::new(&sizes, split_seed(c.seed, 1))?;
        let risk_seed = split_seed(c.seed, 2);
        let mut risk = AmnnParams::new(c.latent_dim, &c.risk_hidden, 100, DEFAULT_LOWER, risk_seed)?;
        for net in &mut risk.nets {
            let k = net.params.len() - 2;
            for v in net.params[k].data_mut() {
                *v *= c.risk_curvature;
            }
        }
        let mut r = rng_from_seed(split_seed(risk_seed, 1_000));
        for a in risk.alpha.data_mut() {
            *a = r.gen_range(0.5..1.5);
        }
        Ok(LongTailModel { prior, features, risk })
    }

    /// Raw `H(z)`; monotone increasing in every coordinate.
    pub fn risk_score(&self, z: &Tensor) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(z.rows());
        let rows: Vec<usize> = (0..z.rows()).collect();
        for chunk in rows.chunks(RISK_CHUNK) {
            let mut data = Vec::with_capacity(chunk.len() * z.cols());
            for &i in chunk {
                data.extend_from_slice(z.row_slice(i));
            }
            let part = Tensor::new(vec![chunk.len(), z.cols()], data)?;
            let h = self.risk.forward(&part, IntegrationMode::Midpoint, None)?;
            out.extend(h);
        }
        Ok(out)
    }
}

/// Long-tailed latent draws mapped to covariates, with risk driven by a
/// monotone network of the latent.
pub fn generate_longtailed(config: &LongTailConfig) -> Result<Generated> {
    let c = config;
    check_common(c.n, c.rate, c.lambda, c.nu)?;
    let model = LongTailModel::new(c)?;
    let z = model.prior.sample(c.n, &mut rng_from_seed(split_seed(c.seed, 0)))?;
    let x = model.features.eval(&z)?;
    let mut g = model.risk_score(&z)?;
    let n = g.len() as f64;
    let mean = g.iter().sum::<f64>() / n;
    let sd = (g.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    if !(sd > 0.0) {
        return contract("risk network is constant on the sample");
    }
    g.iter_mut().for_each(|v| *v = c.risk_sd * (*v - mean) / sd);
    let t = label_by_time(&g, c.lambda, c.nu, c.rate, split_seed(c.seed, 3))?;
    let mut data = LabeledDataset::new(x, t.labels, Some(t.oracle))?;
    data.latent = Some(z);
    Ok(Generated { data, score: g, times: t.times, t0: t.t0 })
}

pub fn gen_longtailed(config: &LongTailConfig) -> Result<LabeledDataset> {
    Ok(generate_longtailed(config)?.data)
}
