//! Model state and one iteration of the variational mini-max game.
//!
//! Randomness inside [`Trainer::step`] comes from three streams derived from
//! the step seed `s` (see [`StepStreams`]):
//!
//! * `split_seed(s, 0)`: prior samples for the critic, one `m × p` block per
//!   critic step;
//! * `split_seed(s, 1)`: encoder noise, one [`EncoderNoise::draw`] (input
//!   noise then reparameterization noise) for the joint update followed by
//!   one per extra encoder update;
//! * `split_seed(s, 2)`: integration offsets in random mode, in the same
//!   order as the encoder noise.

use rand::RngCore;

use crate::amnn::{
    bin_offsets, cll_log_likelihood_tape, AmnnParams, BoundAmnn, BoundMulticlass, IntegrationMode, MulticlassAmnn,
};
use crate::autodiff::{Tape, Tensor, Var};
use crate::dataset::Standardizer;
use crate::error::{contract, Result, VieError};
use crate::evt::{learnable_view, mixed_log_pdf_tape, learnable_view_tape, MixedGpdParams, HALF_LN_2PI, SIGMA_FLOOR};
use crate::fenchel::Critic;
use crate::flow::{normal_tensor, BoundEncoder, EncoderNoise, EncoderParams, ImplicitEncoder};
use crate::nn::{clip_global_norm, rng_from_seed, split_seed, AdamState, Mlp, RmspropState, SeededRng};

use super::config::TrainConfig;
use super::variant::{DecoderKind, EncoderKind, PriorKind, VariantSpec};

/// Rows per chunk when predicting on large batches.
pub const PREDICT_CHUNK: usize = 1024;
/// Rows used to calibrate the decoder bias at initialization.
pub const CALIBRATION_ROWS: usize = 2000;

#[derive(Clone, Debug, PartialEq)]
pub enum Encoder {
    /// Gaussian base plus zero or more flow steps.
    Flow(EncoderParams),
    Implicit(ImplicitEncoder),
}

#[derive(Clone, Debug)]
enum BoundEnc {
    Flow(BoundEncoder),
    Implicit(Vec<Var>),
}

impl BoundEnc {
    fn all(&self) -> Vec<Var> {
        match self {
            BoundEnc::Flow(b) => b.all(),
            BoundEnc::Implicit(v) => v.clone(),
        }
    }
}

impl Encoder {
    pub fn latent_dim(&self) -> usize {
        match self {
            Encoder::Flow(e) => e.latent_dim(),
            Encoder::Implicit(e) => e.latent_dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Encoder::Flow(e) => e.input_dim(),
            Encoder::Implicit(e) => e.input_dim(),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Encoder::Flow(e) => e.params(),
            Encoder::Implicit(e) => e.net.params.iter().collect(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Encoder::Flow(e) => e.params_mut(),
            Encoder::Implicit(e) => e.net.params.iter_mut().collect(),
        }
    }

    fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundEnc {
        match self {
            Encoder::Flow(e) => BoundEnc::Flow(e.bind(tape, trainable)),
            Encoder::Implicit(e) => BoundEnc::Implicit(e.net.bind(tape, trainable)),
        }
    }

    fn encode_tape(&self, tape: &mut Tape, bound: &BoundEnc, x: Var, noise: &EncoderNoise) -> Result<EncOut> {
        match (self, bound) {
            (Encoder::Flow(e), BoundEnc::Flow(b)) => {
                let d = e.sample_posterior_tape(tape, b, x, noise)?;
                Ok(EncOut { z_t: d.z_t, log_q: Some(d.log_q), mu0: Some(d.mu0), sigma0: Some(d.sigma0) })
            }
            (Encoder::Implicit(e), BoundEnc::Implicit(b)) => {
                let z_t = e.encode_tape(tape, b, x, &noise.eps)?;
                Ok(EncOut { z_t, log_q: None, mu0: None, sigma0: None })
            }
            _ => unreachable!("bound encoder matches its parameters"),
        }
    }
}

struct EncOut {
    z_t: Var,
    log_q: Option<Var>,
    mu0: Option<Var>,
    sigma0: Option<Var>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Decoder {
    Amnn(AmnnParams),
    /// `p → hidden → 1` network feeding the same complementary log-log link.
    Mlp(Mlp),
    Multiclass(MulticlassAmnn),
}

#[derive(Clone, Debug)]
enum BoundDec {
    Amnn(BoundAmnn),
    Mlp(Vec<Var>),
    Multiclass(BoundMulticlass),
}

impl BoundDec {
    fn all(&self) -> Vec<Var> {
        match self {
            BoundDec::Amnn(b) => b.all(),
            BoundDec::Mlp(v) => v.clone(),
            BoundDec::Multiclass(b) => b.all(),
        }
    }
}

impl Decoder {
    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Decoder::Amnn(d) => d.params(),
            Decoder::Mlp(d) => d.params.iter().collect(),
            Decoder::Multiclass(d) => d.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Decoder::Amnn(d) => d.params_mut(),
            Decoder::Mlp(d) => d.params.iter_mut().collect(),
            Decoder::Multiclass(d) => d.params_mut(),
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Decoder::Multiclass(d) => d.classes(),
            _ => 2,
        }
    }

    /// Whether the decoder integrates numerically (and so consumes offsets).
    pub fn integrates(&self) -> bool {
        !matches!(self, Decoder::Mlp(_))
    }

    fn bins(&self) -> usize {
        match self {
            Decoder::Amnn(d) => d.bins,
            Decoder::Multiclass(d) => d.bins,
            Decoder::Mlp(_) => 0,
        }
    }

    fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundDec {
        match self {
            Decoder::Amnn(d) => BoundDec::Amnn(d.bind(tape, trainable)),
            Decoder::Mlp(d) => BoundDec::Mlp(d.bind(tape, trainable)),
            Decoder::Multiclass(d) => BoundDec::Multiclass(d.bind(tape, trainable)),
        }
    }

    /// Binary: `H(z)` (`n × 1`). Multiclass: log-probabilities (`n × C`).
    fn output_tape(&self, tape: &mut Tape, bound: &BoundDec, z: Var, offsets: Option<&Tensor>) -> Result<Var> {
        match (self, bound) {
            (Decoder::Amnn(d), BoundDec::Amnn(b)) => d.forward_tape(tape, b, z, need(offsets)?),
            (Decoder::Mlp(d), BoundDec::Mlp(b)) => d.forward(tape, b, z),
            (Decoder::Multiclass(d), BoundDec::Multiclass(b)) => d.log_probs_tape(tape, b, z, need(offsets)?),
            _ => unreachable!("bound decoder matches its parameters"),
        }
    }

    /// Per-example log-likelihood, `n × 1`.
    fn log_likelihood_tape(
        &self,
        tape: &mut Tape,
        bound: &BoundDec,
        z: Var,
        labels: &[usize],
        offsets: Option<&Tensor>,
    ) -> Result<Var> {
        let out = self.output_tape(tape, bound, z, offsets)?;
        match self {
            Decoder::Multiclass(d) => {
                let m = d.classes();
                if labels.iter().any(|&c| c >= m) {
                    return contract("label exceeds the class count");
                }
                let mut onehot = vec![0.0; labels.len() * m];
                for (i, &c) in labels.iter().enumerate() {
                    onehot[i * m + c] = 1.0;
                }
                let oh = tape.constant(Tensor::new(vec![labels.len(), m], onehot)?);
                let picked = tape.mul(out, oh)?;
                tape.sum_axis(picked, 1)
            }
            _ => {
                if labels.iter().any(|&c| c > 1) {
                    return contract("binary decoder got a label above 1");
                }
                let y = Tensor::column(&labels.iter().map(|&c| c as f64).collect::<Vec<_>>());
                cll_log_likelihood_tape(tape, out, &y)
            }
        }
    }
}

fn need(offsets: Option<&Tensor>) -> Result<&Tensor> {
    offsets.ok_or_else(|| VieError::Contract("integrating decoder needs offsets".into()))
}

/// Unconstrained prior parameters; `ξ = softplus(raw_xi)`,
/// `σ = softplus(raw_sigma) + 1e-6`. Each is `1 × p`, or `1 × 1` when shared.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorParams {
    pub raw_xi: Tensor,
    pub raw_sigma: Tensor,
}

fn softplus_inverse(y: f64) -> f64 {
    y.exp_m1().ln()
}

impl PriorParams {
    pub fn new(p: usize, xi: f64, sigma: f64) -> Self {
        PriorParams {
            raw_xi: Tensor::full(&[1, p], softplus_inverse(xi)),
            raw_sigma: Tensor::full(&[1, p], softplus_inverse(sigma - SIGMA_FLOOR)),
        }
    }

    /// The prior as plain distribution parameters for latent size `p`.
    pub fn view(&self, u: f64, p: usize) -> Result<MixedGpdParams> {
        let expand = |t: &Tensor| (0..p).map(|j| t.data()[j.min(t.len() - 1)]).collect::<Vec<_>>();
        learnable_view(u, &expand(&self.raw_xi), &expand(&self.raw_sigma))
    }
}

/// One row of training history.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub iteration: usize,
    pub epoch: usize,
    /// `−mean log p(y | z_T)`.
    pub nll: f64,
    /// Mean single-sample `log q − log p`; zero when the encoder has no density.
    pub kl: f64,
    /// Mean `ln r(z_T)`; zero without prior matching.
    pub critic_penalty: f64,
    /// Critic loss before its last update; zero without prior matching.
    pub critic_loss: f64,
    /// Ascent objective `mean[ll − λ ln r − β KL]` before the joint update.
    pub objective: f64,
    /// Encoder gradient applications in the iteration.
    pub encoder_updates: usize,
}

pub const HISTORY_COLUMNS: [&str; 8] =
    ["iteration", "epoch", "nll", "kl", "critic_penalty", "critic_loss", "objective", "encoder_updates"];

impl HistoryRow {
    pub fn values(&self) -> [f64; 8] {
        [
            self.iteration as f64,
            self.epoch as f64,
            self.nll,
            self.kl,
            self.critic_penalty,
            self.critic_loss,
            self.objective,
            self.encoder_updates as f64,
        ]
    }

    pub fn from_values(v: &[f64]) -> Result<Self> {
        if v.len() != 8 {
            return contract("history row needs eight values");
        }
        Ok(HistoryRow {
            iteration: v[0] as usize,
            epoch: v[1] as usize,
            nll: v[2],
            kl: v[3],
            critic_penalty: v[4],
            critic_loss: v[5],
            objective: v[6],
            encoder_updates: v[7] as usize,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub variant: VariantSpec,
    pub config: TrainConfig,
    pub standardizer: Standardizer,
    pub encoder: Encoder,
    /// Present for the mixed prior; the Gaussian prior has no parameters.
    pub prior: Option<PriorParams>,
    pub decoder: Decoder,
    /// Present when the aggregated posterior is matched to the prior.
    pub critic: Option<Critic>,
    /// Resolved KL weight.
    pub beta: f64,
    /// Resolved critic penalty weight.
    pub lambda: f64,
    pub history: Vec<HistoryRow>,
    /// Validation score after each epoch (AUC, or micro-F1 for multiclass).
    pub validation: Vec<f64>,
}

/// The three random streams of one training step.
pub struct StepStreams {
    pub prior: SeededRng,
    pub encoder: SeededRng,
    pub offsets: SeededRng,
}

impl StepStreams {
    pub fn new(step_seed: u64) -> Self {
        StepStreams {
            prior: rng_from_seed(split_seed(step_seed, 0)),
            encoder: rng_from_seed(split_seed(step_seed, 1)),
            offsets: rng_from_seed(split_seed(step_seed, 2)),
        }
    }
}

impl TrainedModel {
    /// Freshly initialized model for `input_dim` features and `classes`
    /// labels, with identity standardization and `(β, λ)` resolved from
    /// `event_rate`.
    pub fn init(
        variant: VariantSpec,
        config: TrainConfig,
        input_dim: usize,
        classes: usize,
        event_rate: f64,
        seed: u64,
    ) -> Result<Self> {
        variant.validate()?;
        config.validate()?;
        if input_dim == 0 {
            return contract("no feature columns");
        }
        if classes < 2 {
            return contract("need at least two classes");
        }
        let analytic_ok = variant.prior == PriorKind::Gaussian && variant.encoder == EncoderKind::Gaussian;
        if config.analytic_kl && !analytic_ok {
            return contract("analytic_kl needs a Gaussian encoder and a Gaussian prior");
        }
        let p = config.latent_dim;
        let s = |k| split_seed(seed, k);
        let encoder = match variant.encoder {
            EncoderKind::Gaussian | EncoderKind::Iaf => {
                let steps = if variant.encoder == EncoderKind::Iaf { config.flow_steps } else { 0 };
                Encoder::Flow(EncoderParams::new(
                    input_dim,
                    p,
                    steps,
                    &config.init_hidden,
                    &config.hidden,
                    config.reverse_flow,
                    s(1),
                )?)
            }
            EncoderKind::Implicit => Encoder::Implicit(ImplicitEncoder::new(input_dim, p, &config.init_hidden, s(1))?),
        };
        let prior = match variant.prior {
            PriorKind::Gaussian => None,
            PriorKind::MixedGpd => {
                Some(PriorParams::new(if config.shared_prior { 1 } else { p }, config.xi_init, config.sigma_init))
            }
        };
        let decoder = match (variant.decoder, classes) {
            (DecoderKind::Amnn, 2) => Decoder::Amnn(AmnnParams::new(p, &config.hidden, config.bins, config.lower, s(2))?),
            (DecoderKind::Amnn, c) => Decoder::Multiclass(MulticlassAmnn::new(
                p,
                config.multiclass_nets,
                c,
                &config.hidden,
                config.bins,
                config.lower,
                s(2),
            )?),
            (DecoderKind::Mlp, 2) => {
                let mut sizes = vec![p];
                sizes.extend_from_slice(&config.hidden);
                sizes.push(1);
                Decoder::Mlp(Mlp::new(&sizes, s(2))?)
            }
            (DecoderKind::Mlp, _) => return contract("the MLP decoder is binary only"),
        };
        let critic = if variant.prior_match { Some(Critic::new(p, &config.hidden, s(3))?) } else { None };
        let (beta, lambda) = config.penalties(event_rate);
        Ok(TrainedModel {
            variant,
            config,
            standardizer: Standardizer::identity(input_dim),
            encoder,
            prior,
            decoder,
            critic,
            beta,
            lambda,
            history: Vec::new(),
            validation: Vec::new(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.latent_dim()
    }

    pub fn classes(&self) -> usize {
        self.decoder.classes()
    }

    /// The learned prior; `None` for the standard normal prior.
    pub fn prior_view(&self) -> Result<Option<MixedGpdParams>> {
        self.prior.as_ref().map(|p| p.view(self.config.threshold, self.latent_dim())).transpose()
    }

    /// Shift the decoder bias so the mean predicted class frequencies on a
    /// posterior sample of `x` (already standardized) match `labels`.
    pub fn calibrate_bias(&mut self, x: &Tensor, labels: &[usize], seed: u64) -> Result<()> {
        let n = x.rows().min(CALIBRATION_ROWS);
        if n == 0 {
            return contract("calibration needs data");
        }
        let x = Tensor::new(vec![n, x.cols()], x.data()[..n * x.cols()].to_vec())?;
        let labels = &labels[..n];
        let mut rng = rng_from_seed(seed);
        let z = self.encode(&x, &mut rng)?;
        let offsets = self.offsets(n, IntegrationMode::Midpoint, None)?;
        let classes = self.classes();
        let mut freq = vec![0.0; classes];
        for &l in labels {
            freq[l] += 1.0 / n as f64;
        }
        let floor = 0.5 / n as f64;
        let mut tape = Tape::new();
        let b = self.decoder.bind(&mut tape, false);
        let zv = tape.constant(z);
        let out = self.decoder.output_tape(&mut tape, &b, zv, offsets.as_ref())?;
        let out = tape.value(out).clone();
        match &mut self.decoder {
            Decoder::Multiclass(d) => {
                for c in 0..classes {
                    let mean = (0..n).map(|i| out.get(i, c)).sum::<f64>() / n as f64;
                    d.bias.data_mut()[c] += freq[c].max(floor).ln() - mean;
                }
            }
            dec => {
                let rate = freq[1].clamp(floor, 1.0 - floor);
                let target = (-(-rate).ln_1p()).ln();
                let mean = out.data().iter().sum::<f64>() / n as f64;
                match dec {
                    Decoder::Amnn(a) => a.gamma.data_mut()[0] += target - mean,
                    Decoder::Mlp(m) => {
                        let k = m.params.len() - 1;
                        m.params[k].data_mut()[0] += target - mean;
                    }
                    Decoder::Multiclass(_) => unreachable!(),
                }
            }
        }
        Ok(())
    }

    fn offsets(&self, n: usize, mode: IntegrationMode, rng: Option<&mut dyn RngCore>) -> Result<Option<Tensor>> {
        if self.decoder.integrates() {
            Ok(Some(bin_offsets(n, self.decoder.bins(), mode, rng)?))
        } else {
            Ok(None)
        }
    }

    /// Posterior draw `z_T` for standardized features.
    pub fn encode(&self, x: &Tensor, rng: &mut SeededRng) -> Result<Tensor> {
        self.check_input(x)?;
        let noise = EncoderNoise::draw(x.rows(), self.latent_dim(), rng);
        let mut tape = Tape::new();
        let b = self.encoder.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let out = self.encoder.encode_tape(&mut tape, &b, xv, &noise)?;
        Ok(tape.value(out.z_t).clone())
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.rank() != 2 || x.cols() != self.input_dim() {
            return Err(VieError::Mismatch(format!(
                "model expects {} feature columns, got {:?}",
                self.input_dim(),
                x.shape()
            )));
        }
        Ok(())
    }

    /// Prior draws, `n × p`.
    pub fn sample_prior(&self, n: usize, rng: &mut SeededRng) -> Result<Tensor> {
        match self.prior_view()? {
            Some(view) => view.sample(n, rng),
            None => Ok(normal_tensor(n, self.latent_dim(), rng)),
        }
    }

    /// Class probabilities `n × C` for raw (unstandardized) features,
    /// averaged over `n_draws` posterior draws. Draw `d` uses the stream
    /// `split_seed(seed, d)` across all chunks in order.
    pub fn predict_proba(&self, x_raw: &Tensor, seed: u64, n_draws: usize) -> Result<Tensor> {
        self.check_input(x_raw)?;
        if n_draws == 0 {
            return contract("n_draws must be positive");
        }
        let x = self.standardizer.apply(x_raw)?;
        let (n, d, c) = (x.rows(), x.cols(), self.classes());
        let mut acc = vec![0.0; n * c];
        for draw in 0..n_draws {
            let mut rng = rng_from_seed(split_seed(seed, draw as u64));
            let mut start = 0;
            while start < n {
                let len = PREDICT_CHUNK.min(n - start);
                let chunk = Tensor::new(vec![len, d], x.data()[start * d..(start + len) * d].to_vec())?;
                let z = self.encode(&chunk, &mut rng)?;
                let proba = self.proba_from_latent(&z, &mut rng)?;
                for (slot, v) in acc[start * c..(start + len) * c].iter_mut().zip(proba.data()) {
                    *slot += v;
                }
                start += len;
            }
        }
        acc.iter_mut().for_each(|v| *v /= n_draws as f64);
        Tensor::new(vec![n, c], acc)
    }

    /// Class probabilities `n × C` decoded from latent rows `z` (`n × p`),
    /// using the evaluation integration mode.
    pub fn proba_from_latent(&self, z: &Tensor, rng: &mut SeededRng) -> Result<Tensor> {
        if z.rank() != 2 || z.cols() != self.latent_dim() {
            return Err(VieError::Mismatch(format!("latent rows must have {} columns", self.latent_dim())));
        }
        let (n, c) = (z.rows(), self.classes());
        let offsets = self.offsets(n, self.config.eval_integration, Some(rng))?;
        let mut tape = Tape::new();
        let b = self.decoder.bind(&mut tape, false);
        let zv = tape.constant(z.clone());
        let out = self.decoder.output_tape(&mut tape, &b, zv, offsets.as_ref())?;
        let out = tape.value(out);
        let mut proba = vec![0.0; n * c];
        for (i, row) in proba.chunks_mut(c).enumerate() {
            if let Decoder::Multiclass(_) = self.decoder {
                for (k, slot) in row.iter_mut().enumerate() {
                    *slot = out.get(i, k).exp();
                }
            } else {
                let p = crate::amnn::cll_probability(out.data()[i]);
                row[0] = 1.0 - p;
                row[1] = p;
            }
        }
        Tensor::new(vec![n, c], proba)
    }

    /// Binary risk `P(y = 1 | x)` for raw features.
    pub fn predict(&self, x_raw: &Tensor, seed: u64, n_draws: usize) -> Result<Vec<f64>> {
        if self.classes() != 2 {
            return contract("predict is binary; use predict_proba for multiclass models");
        }
        let proba = self.predict_proba(x_raw, seed, n_draws)?;
        Ok((0..proba.rows()).map(|i| proba.get(i, 1)).collect())
    }

    /// Most probable class per row.
    pub fn predict_class(&self, x_raw: &Tensor, seed: u64, n_draws: usize) -> Result<Vec<usize>> {
        let proba = self.predict_proba(x_raw, seed, n_draws)?;
        Ok((0..proba.rows())
            .map(|i| {
                let row = proba.row_slice(i);
                (0..row.len()).fold(0, |best, k| if row[k] > row[best] { k } else { best })
            })
            .collect())
    }

    /// Posterior draw for raw features.
    pub fn posterior_sample(&self, x_raw: &Tensor, seed: u64) -> Result<Tensor> {
        let x = self.standardizer.apply(x_raw)?;
        self.encode(&x, &mut rng_from_seed(seed))
    }

    /// Every parameter is finite.
    pub fn is_finite(&self) -> bool {
        let prior = self.prior.iter().flat_map(|p| [&p.raw_xi, &p.raw_sigma]);
        let critic = self.critic.iter().flat_map(|c| c.net.params.iter());
        self.encoder.params().into_iter().chain(self.decoder.params()).chain(prior).chain(critic).all(|t| t.all_finite())
    }

    /// Per-example log-prior `n × 1`.
    fn log_prior_tape(&self, tape: &mut Tape, z: Var, prior_vars: &[Var]) -> Result<Var> {
        match prior_vars {
            [raw_xi, raw_sigma] => {
                let (xi, sigma) = learnable_view_tape(tape, *raw_xi, *raw_sigma)?;
                mixed_log_pdf_tape(tape, z, xi, sigma, self.config.threshold)
            }
            _ => {
                let sq = tape.mul(z, z)?;
                let half = tape.scale(sq, -0.5)?;
                let per = tape.shift(half, -HALF_LN_2PI)?;
                tape.sum_axis(per, 1)
            }
        }
    }

    fn bind_prior(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        match &self.prior {
            Some(p) if trainable => vec![tape.var(p.raw_xi.clone()), tape.var(p.raw_sigma.clone())],
            Some(p) => vec![tape.constant(p.raw_xi.clone()), tape.constant(p.raw_sigma.clone())],
            None => Vec::new(),
        }
    }

    /// Objective terms for an encoded batch. Returns `(J, ll, kl, penalty)`,
    /// `J` a scalar var, the rest batch means.
    fn objective_tape(
        &self,
        tape: &mut Tape,
        enc: &EncOut,
        prior_vars: &[Var],
        dec: &BoundDec,
        labels: &[usize],
        offsets: Option<&Tensor>,
    ) -> Result<(Var, f64, f64, f64)> {
        let ll = self
            .decoder
            .log_likelihood_tape(tape, dec, enc.z_t, labels, offsets)
            .map_err(|e| named("decoder", e))?;
        let ll_mean = tape.mean(ll)?;
        finite(tape, ll_mean, "decoder")?;
        let mut j = ll_mean;

        let kl = if self.config.analytic_kl {
            let (mu, sigma) = (enc.mu0.expect("flow encoder"), enc.sigma0.expect("flow encoder"));
            let m2 = tape.mul(mu, mu)?;
            let s2 = tape.mul(sigma, sigma)?;
            let a = tape.add(m2, s2)?;
            let a = tape.shift(a, -1.0)?;
            let a = tape.scale(a, 0.5)?;
            let ls = tape.log(sigma)?;
            let per = tape.sub(a, ls)?;
            Some(tape.sum_axis(per, 1)?)
        } else if let Some(log_q) = enc.log_q {
            let lp = self.log_prior_tape(tape, enc.z_t, prior_vars).map_err(|e| named("prior", e))?;
            Some(tape.sub(log_q, lp)?)
        } else {
            None
        };
        let mut kl_mean = 0.0;
        if let Some(kl) = kl {
            let m = tape.mean(kl)?;
            finite(tape, m, "kl")?;
            kl_mean = tape.value(m).item();
            if self.beta > 0.0 {
                let w = tape.scale(m, self.beta)?;
                j = tape.sub(j, w)?;
            }
        }

        let mut pen_mean = 0.0;
        if let Some(critic) = &self.critic {
            let cb = critic.net.bind(tape, false);
            let pen = critic.generator_penalty_tape(tape, &cb, enc.z_t).map_err(|e| named("critic", e))?;
            finite(tape, pen, "critic")?;
            pen_mean = tape.value(pen).item();
            if self.lambda > 0.0 {
                let w = tape.scale(pen, self.lambda)?;
                j = tape.sub(j, w)?;
            }
        }
        let ll_value = tape.value(ll_mean).item();
        Ok((j, ll_value, kl_mean, pen_mean))
    }
}

fn named(component: &str, e: VieError) -> VieError {
    match e {
        VieError::Domain(m) => VieError::Training { component: component.into(), message: m },
        other => other,
    }
}

fn finite(tape: &Tape, v: Var, component: &str) -> Result<()> {
    if tape.value(v).all_finite() {
        Ok(())
    } else {
        Err(VieError::Training { component: component.into(), message: "non-finite loss term".into() })
    }
}

fn check_grads(grads: &[Tensor], component: &str) -> Result<()> {
    if grads.iter().all(|g| g.all_finite()) {
        Ok(())
    } else {
        Err(VieError::Training { component: component.into(), message: "non-finite gradient".into() })
    }
}

/// Gradient descent on `−J` for a group of parameters behind references.
fn adam_apply(opt: &mut AdamState, targets: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<()> {
    let mut cur: Vec<Tensor> = targets.iter().map(|t| (**t).clone()).collect();
    opt.apply(&mut cur, grads)?;
    for (t, c) in targets.into_iter().zip(cur) {
        *t = c;
    }
    Ok(())
}

/// Model plus optimizer state.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: TrainedModel,
    encoder_opt: AdamState,
    prior_opt: Option<AdamState>,
    decoder_opt: AdamState,
    critic_opt: Option<RmspropState>,
    iteration: usize,
    epoch: usize,
}

impl Trainer {
    pub fn new(model: TrainedModel) -> Self {
        let lr = model.config.adam_lr;
        let own = |v: Vec<&Tensor>| v.into_iter().cloned().collect::<Vec<_>>();
        Trainer {
            encoder_opt: AdamState::new(lr, &own(model.encoder.params())),
            prior_opt: model.prior.as_ref().map(|p| AdamState::new(lr, &[p.raw_xi.clone(), p.raw_sigma.clone()])),
            decoder_opt: AdamState::new(lr, &own(model.decoder.params())),
            critic_opt: model.critic.as_ref().map(|c| RmspropState::new(model.config.critic_lr, &c.net.params)),
            iteration: 0,
            epoch: 0,
            model,
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn set_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
    }

    /// One training iteration on a standardized batch; see the module docs
    /// for the random streams derived from `step_seed`.
    pub fn step(&mut self, x: &Tensor, labels: &[usize], step_seed: u64) -> Result<HistoryRow> {
        let n = x.rows();
        if n == 0 || labels.len() != n {
            return contract("batch must be nonempty with one label per row");
        }
        self.model.check_input(x)?;
        let mut streams = StepStreams::new(step_seed);
        let p = self.model.latent_dim();
        let mode = self.model.config.train_integration;

        // joint pass: encode
        let noise = EncoderNoise::draw(n, p, &mut streams.encoder);
        let offsets = self.model.offsets(n, mode, Some(&mut streams.offsets))?;
        let mut tape = Tape::new();
        let enc_b = self.model.encoder.bind(&mut tape, true);
        let xv = tape.constant(x.clone());
        let enc = self.model.encoder.encode_tape(&mut tape, &enc_b, xv, &noise).map_err(|e| named("encoder", e))?;
        finite(&tape, enc.z_t, "encoder")?;

        // critic descent on the current posterior sample
        let mut critic_loss = 0.0;
        if let (Some(critic), Some(opt)) = (self.model.critic.as_mut(), self.critic_opt.as_mut()) {
            let z_post = tape.value(enc.z_t).clone();
            for _ in 0..self.model.config.critic_steps {
                let z_prior = match &self.model.prior {
                    Some(pp) => pp.view(self.model.config.threshold, p)?.sample(n, &mut streams.prior)?,
                    None => normal_tensor(n, p, &mut streams.prior),
                };
                critic_loss = critic.descend(opt, &z_prior, &z_post).map_err(|e| named("critic", e))?;
                if !critic_loss.is_finite() {
                    return Err(VieError::Training { component: "critic".into(), message: "non-finite critic loss".into() });
                }
            }
        }

        // joint ascent of encoder, prior and decoder
        let prior_b = self.model.bind_prior(&mut tape, true);
        let dec_b = self.model.decoder.bind(&mut tape, true);
        let (j, ll, kl, pen) = self.model.objective_tape(&mut tape, &enc, &prior_b, &dec_b, labels, offsets.as_ref())?;
        let objective = tape.value(j).item();
        let loss = tape.neg(j)?;
        let mut g = tape.backward(loss)?;
        let (enc_vars, dec_vars) = (enc_b.all(), dec_b.all());
        let mut grads: Vec<Tensor> = enc_vars.iter().chain(&prior_b).chain(&dec_vars).map(|&v| g.take(v)).collect();
        check_grads(&grads[..enc_vars.len()], "encoder")?;
        check_grads(&grads[enc_vars.len()..enc_vars.len() + prior_b.len()], "prior")?;
        check_grads(&grads[enc_vars.len() + prior_b.len()..], "decoder")?;
        if let Some(c) = self.model.config.grad_clip_norm {
            clip_global_norm(&mut grads, c);
        }
        let (ge, rest) = grads.split_at(enc_vars.len());
        let (gp, gd) = rest.split_at(prior_b.len());
        adam_apply(&mut self.encoder_opt, self.model.encoder.params_mut(), ge)?;
        if let (Some(pp), Some(opt)) = (self.model.prior.as_mut(), self.prior_opt.as_mut()) {
            adam_apply(opt, vec![&mut pp.raw_xi, &mut pp.raw_sigma], gp)?;
        }
        adam_apply(&mut self.decoder_opt, self.model.decoder.params_mut(), gd)?;
        let mut encoder_updates = 1;

        // extra encoder-only ascents with fresh noise
        for _ in 0..self.model.config.encoder_extra_updates {
            let noise = EncoderNoise::draw(n, p, &mut streams.encoder);
            let offsets = self.model.offsets(n, mode, Some(&mut streams.offsets))?;
            let mut tape = Tape::new();
            let enc_b = self.model.encoder.bind(&mut tape, true);
            let xv = tape.constant(x.clone());
            let enc = self.model.encoder.encode_tape(&mut tape, &enc_b, xv, &noise).map_err(|e| named("encoder", e))?;
            let prior_b = self.model.bind_prior(&mut tape, false);
            let dec_b = self.model.decoder.bind(&mut tape, false);
            let (j, ..) = self.model.objective_tape(&mut tape, &enc, &prior_b, &dec_b, labels, offsets.as_ref())?;
            let loss = tape.neg(j)?;
            let mut g = tape.backward(loss)?;
            let mut grads: Vec<Tensor> = enc_b.all().iter().map(|&v| g.take(v)).collect();
            check_grads(&grads, "encoder")?;
            if let Some(c) = self.model.config.grad_clip_norm {
                clip_global_norm(&mut grads, c);
            }
            adam_apply(&mut self.encoder_opt, self.model.encoder.params_mut(), &grads)?;
            encoder_updates += 1;
        }

        self.iteration += 1;
        let row = HistoryRow {
            iteration: self.iteration,
            epoch: self.epoch,
            nll: -ll,
            kl,
            critic_penalty: pen,
            critic_loss,
            objective,
            encoder_updates,
        };
        self.model.history.push(row.clone());
        Ok(row)
    }
}
