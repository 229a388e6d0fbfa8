//! Stochastic encoder: noise-augmented Gaussian base, inverse autoregressive
//! flow steps, and the exact posterior log-density along the sampled path.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{contract, Result, VieError};
use crate::evt::HALF_LN_2PI;
use crate::nn::{bind_all, split_seed, MadeNet, Mlp};

/// Floor added to every softplus scale.
pub const SCALE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    /// `(x ‖ ε) → (μ₀ ‖ raw σ₀)`.
    pub init: Mlp,
    /// One masked network per flow step.
    pub steps: Vec<MadeNet>,
    latent_dim: usize,
}

/// Noise consumed by one batch of posterior draws.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderNoise {
    /// Input noise concatenated to `x`, `n × p`.
    pub eps: Tensor,
    /// Reparameterization noise for `z₀`, `n × p`.
    pub eta: Tensor,
}

impl EncoderNoise {
    pub fn draw(n: usize, p: usize, rng: &mut impl Rng) -> Self {
        EncoderNoise { eps: normal_tensor(n, p, rng), eta: normal_tensor(n, p, rng) }
    }
}

pub(crate) fn normal_tensor(n: usize, p: usize, rng: &mut impl Rng) -> Tensor {
    let data = (0..n * p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(vec![n, p], data).expect("n × p buffer")
}

/// Parameters of [`EncoderParams`] recorded on a tape.
#[derive(Clone, Debug)]
pub struct BoundEncoder {
    pub init: Vec<Var>,
    pub steps: Vec<Vec<Var>>,
}

impl BoundEncoder {
    pub fn all(&self) -> Vec<Var> {
        self.init.iter().chain(self.steps.iter().flatten()).copied().collect()
    }
}

/// Tape handles for one batch of posterior draws.
#[derive(Clone, Debug)]
pub struct DrawVars {
    pub mu0: Var,
    pub sigma0: Var,
    pub z0: Var,
    pub z_t: Var,
    /// Per-step scales `σ_t`, each `n × p`.
    pub step_sigmas: Vec<Var>,
    /// `n × 1` column of `log q(z_T | x)`.
    pub log_q: Var,
}

/// Batch of posterior samples with their exact log-density.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorDraw {
    pub z_t: Tensor,
    pub log_q: Vec<f64>,
    pub z0: Tensor,
    pub mu0: Tensor,
    pub sigma0: Tensor,
    pub step_sigmas: Vec<Tensor>,
}

impl EncoderParams {
    /// `input_dim` features, latent size `p`, `T = flow_steps`; hidden widths
    /// for the initial encoder and each masked net. Successive steps alternate
    /// the variable ordering when `reverse` is set.
    pub fn new(
        input_dim: usize,
        p: usize,
        flow_steps: usize,
        init_hidden: &[usize],
        step_hidden: &[usize],
        reverse: bool,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 || p == 0 {
            return contract("encoder needs positive input and latent dimensions");
        }
        let mut sizes = vec![input_dim + p];
        sizes.extend_from_slice(init_hidden);
        sizes.push(2 * p);
        let init = Mlp::new(&sizes, split_seed(seed, 0))?;
        let steps = (0..flow_steps)
            .map(|t| MadeNet::new(p, step_hidden, reverse && t % 2 == 1, split_seed(seed, 1 + t as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(EncoderParams { init, steps, latent_dim: p })
    }

    pub fn from_parts(init: Mlp, steps: Vec<MadeNet>) -> Result<Self> {
        if init.output_dim() % 2 != 0 {
            return contract("initial encoder must emit 2p values");
        }
        let p = init.output_dim() / 2;
        if init.input_dim() <= p {
            return contract("initial encoder input must hold features and p noise columns");
        }
        if steps.iter().any(|s| s.dim() != p) {
            return contract("flow step dimension disagrees with the initial encoder");
        }
        Ok(EncoderParams { init, steps, latent_dim: p })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn input_dim(&self) -> usize {
        self.init.input_dim() - self.latent_dim
    }

    pub fn flow_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.init.params.iter().chain(self.steps.iter().flat_map(|s| s.params.iter())).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.init
            .params
            .iter_mut()
            .chain(self.steps.iter_mut().flat_map(|s| s.params.iter_mut()))
            .collect()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundEncoder {
        BoundEncoder {
            init: bind_all(&self.init.params, tape, trainable),
            steps: self.steps.iter().map(|s| s.bind(tape, trainable)).collect(),
        }
    }

    /// Initial encoder: returns `(μ₀, σ₀, z₀)` with `z₀ = μ₀ + σ₀ ⊙ η`.
    pub fn encode_base(
        &self,
        tape: &mut Tape,
        bound: &BoundEncoder,
        x: Var,
        noise: &EncoderNoise,
    ) -> Result<(Var, Var, Var)> {
        let p = self.latent_dim;
        let n = check_batch(tape, x, self.input_dim())?;
        if noise.eps.shape() != [n, p] || noise.eta.shape() != [n, p] {
            return contract(format!("noise must be {n} × {p}"));
        }
        let eps = tape.constant(noise.eps.clone());
        let input = tape.concat(&[x, eps], 1)?;
        let out = self.init.forward(tape, &bound.init, input).map_err(|e| guard("init-encoder", e))?;
        let mu0 = tape.slice(out, 1, 0, p)?;
        let raw = tape.slice(out, 1, p, p)?;
        let sp = tape.softplus(raw)?;
        let sigma0 = tape.shift(sp, SCALE_FLOOR)?;
        let eta = tape.constant(noise.eta.clone());
        let spread = tape.mul(sigma0, eta)?;
        let z0 = tape.add(mu0, spread)?;
        Ok((mu0, sigma0, z0))
    }

    /// Apply every flow step; returns `(z_T, Σ_t Σ_j ln σ_{t,j}` as `n × 1`,
    /// per-step scales)`.
    pub fn flow_forward(&self, tape: &mut Tape, bound: &BoundEncoder, z0: Var) -> Result<(Var, Var, Vec<Var>)> {
        let n = tape.shape(z0)[0];
        let mut z = z0;
        let mut sum_log = tape.constant(Tensor::zeros(&[n, 1]));
        let mut sigmas = Vec::with_capacity(self.steps.len());
        for (net, b) in self.steps.iter().zip(&bound.steps) {
            let (mu, s_raw) = net.forward(tape, b, z).map_err(|e| guard("iaf", e))?;
            let sp = tape.softplus(s_raw)?;
            let sigma = tape.shift(sp, SCALE_FLOOR)?;
            let scaled = tape.mul(sigma, z)?;
            z = tape.add(mu, scaled)?;
            let ls = tape.log(sigma)?;
            let row = tape.sum_axis(ls, 1)?;
            sum_log = tape.add(sum_log, row)?;
            sigmas.push(sigma);
        }
        Ok((z, sum_log, sigmas))
    }

    /// Full posterior draw on the tape.
    pub fn sample_posterior_tape(
        &self,
        tape: &mut Tape,
        bound: &BoundEncoder,
        x: Var,
        noise: &EncoderNoise,
    ) -> Result<DrawVars> {
        let (mu0, sigma0, z0) = self.encode_base(tape, bound, x, noise)?;
        let (z_t, sum_log, step_sigmas) = self.flow_forward(tape, bound, z0)?;
        let base = gaussian_base_log_density_tape(tape, z0, mu0, sigma0)?;
        let log_q = tape.sub(base, sum_log)?;
        Ok(DrawVars { mu0, sigma0, z0, z_t, step_sigmas, log_q })
    }

    /// Tape-free posterior draw for a feature batch.
    pub fn sample_posterior(&self, x: &Tensor, rng: &mut impl Rng) -> Result<PosteriorDraw> {
        let n = x.rows();
        let noise = EncoderNoise::draw(n, self.latent_dim, rng);
        self.sample_posterior_with(x, &noise)
    }

    pub fn sample_posterior_with(&self, x: &Tensor, noise: &EncoderNoise) -> Result<PosteriorDraw> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let d = self.sample_posterior_tape(&mut tape, &bound, xv, noise)?;
        Ok(PosteriorDraw {
            z_t: tape.value(d.z_t).clone(),
            log_q: tape.value(d.log_q).data().to_vec(),
            z0: tape.value(d.z0).clone(),
            mu0: tape.value(d.mu0).clone(),
            sigma0: tape.value(d.sigma0).clone(),
            step_sigmas: d.step_sigmas.iter().map(|&s| tape.value(s).clone()).collect(),
        })
    }
}

fn check_batch(tape: &Tape, x: Var, d: usize) -> Result<usize> {
    let s = tape.shape(x);
    if s.len() != 2 || s[1] != d {
        return contract(format!("feature batch {:?} does not have {} columns", s, d));
    }
    if s[0] == 0 {
        return contract("empty feature batch");
    }
    Ok(s[0])
}

fn guard(component: &str, e: VieError) -> VieError {
    match e {
        VieError::Domain(m) => VieError::Training { component: component.into(), message: m },
        other => other,
    }
}

/// `Σ_j [−e_j²/2 − ln(2π)/2 − ln σ₀_j]` with `e = (z₀ − μ₀)/σ₀`, as `n × 1`.
fn gaussian_base_log_density_tape(tape: &mut Tape, z0: Var, mu0: Var, sigma0: Var) -> Result<Var> {
    let diff = tape.sub(z0, mu0)?;
    let e = tape.div(diff, sigma0)?;
    let e2 = tape.mul(e, e)?;
    let half = tape.scale(e2, 0.5)?;
    let ls = tape.log(sigma0)?;
    let per = tape.add(half, ls)?;
    let per = tape.shift(per, HALF_LN_2PI)?;
    let s = tape.sum_axis(per, 1)?;
    tape.neg(s)
}

/// Exact posterior log-density of each row along a stored path.
pub fn posterior_log_density(
    z0: &Tensor,
    mu0: &Tensor,
    sigma0: &Tensor,
    step_sigmas: &[Tensor],
) -> Result<Vec<f64>> {
    let shape = z0.shape();
    if mu0.shape() != shape || sigma0.shape() != shape || step_sigmas.iter().any(|s| s.shape() != shape) {
        return contract("posterior path tensors disagree in shape");
    }
    if sigma0.data().iter().chain(step_sigmas.iter().flat_map(|s| s.data())).any(|&s| !(s > 0.0)) {
        return contract("posterior scales must be positive");
    }
    let (n, p) = (z0.rows(), z0.cols());
    Ok((0..n)
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..p {
                let k = i * p + j;
                let e = (z0.data()[k] - mu0.data()[k]) / sigma0.data()[k];
                acc += e * e / 2.0 + HALF_LN_2PI + sigma0.data()[k].ln();
                for s in step_sigmas {
                    acc += s.data()[k].ln();
                }
            }
            -acc
        })
        .collect())
}

/// Implicit encoder: `z = net(x ‖ ε)` with no tractable density.
#[derive(Clone, Debug, PartialEq)]
pub struct ImplicitEncoder {
    pub net: Mlp,
    latent_dim: usize,
}

impl ImplicitEncoder {
    pub fn new(input_dim: usize, p: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if input_dim == 0 || p == 0 {
            return contract("encoder needs positive input and latent dimensions");
        }
        let mut sizes = vec![input_dim + p];
        sizes.extend_from_slice(hidden);
        sizes.push(p);
        Ok(ImplicitEncoder { net: Mlp::new(&sizes, split_seed(seed, 0))?, latent_dim: p })
    }

    pub fn from_net(net: Mlp, p: usize) -> Result<Self> {
        if net.output_dim() != p || net.input_dim() <= p {
            return contract("implicit encoder layout disagrees with latent dimension");
        }
        Ok(ImplicitEncoder { net, latent_dim: p })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim() - self.latent_dim
    }

    pub fn encode_tape(&self, tape: &mut Tape, bound: &[Var], x: Var, eps: &Tensor) -> Result<Var> {
        let n = check_batch(tape, x, self.input_dim())?;
        if eps.shape() != [n, self.latent_dim] {
            return contract(format!("noise must be {n} × {}", self.latent_dim));
        }
        let e = tape.constant(eps.clone());
        let input = tape.concat(&[x, e], 1)?;
        self.net.forward(tape, bound, input).map_err(|e| guard("implicit-encoder", e))
    }

    pub fn encode(&self, x: &Tensor, rng: &mut impl Rng) -> Result<Tensor> {
        let eps = normal_tensor(x.rows(), self.latent_dim, rng);
        let mut tape = Tape::new();
        let bound = self.net.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let z = self.encode_tape(&mut tape, &bound, xv, &eps)?;
        Ok(tape.value(z).clone())
    }
}
