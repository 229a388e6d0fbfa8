use rand::Rng;
use rand_distr::Open01;

use super::gpd::GpdParams;
use super::normal::{std_normal_cdf, std_normal_log_pdf, std_normal_quantile, std_normal_sf, HALF_LN_2PI};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{contract, Result};

/// Floor added to the softplus view of the scale parameters.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Probability mass below the default threshold, `u = Φ⁻¹(0.99)`.
pub const DEFAULT_BULK_MASS: f64 = 0.99;

pub fn default_threshold() -> f64 {
    std_normal_quantile(DEFAULT_BULK_MASS)
}

/// Independent per-dimension prior: standard normal below the shared
/// threshold `u`, GPD(ξ_j, σ_j, u) exceedances above it, carrying mass
/// `1 − Φ(u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedGpdParams {
    pub u: f64,
    pub xi: Vec<f64>,
    pub sigma: Vec<f64>,
    phi_u: f64,
    tail_mass: f64,
}

impl MixedGpdParams {
    pub fn new(u: f64, xi: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if xi.len() != sigma.len() || xi.is_empty() {
            return contract("xi and sigma must be nonempty and of equal length");
        }
        if sigma.iter().any(|&s| !(s > 0.0)) || xi.iter().any(|x| !x.is_finite()) || !u.is_finite() {
            return contract("sigma must be positive and xi, u finite");
        }
        Ok(MixedGpdParams { u, xi, sigma, phi_u: std_normal_cdf(u), tail_mass: std_normal_sf(u) })
    }

    /// Same `(ξ, σ)` in every one of `p` dimensions.
    pub fn shared(u: f64, xi: f64, sigma: f64, p: usize) -> Result<Self> {
        Self::new(u, vec![xi; p], vec![sigma; p])
    }

    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    /// Φ(u).
    pub fn phi_u(&self) -> f64 {
        self.phi_u
    }

    pub fn tail_gpd(&self, j: usize) -> GpdParams {
        GpdParams { xi: self.xi[j], sigma: self.sigma[j], u: self.u }
    }

    /// Marginal CDF of dimension `j`.
    pub fn cdf(&self, j: usize, z: f64) -> f64 {
        if z <= self.u {
            std_normal_cdf(z)
        } else {
            self.phi_u + self.tail_mass * self.tail_gpd(j).cdf(z)
        }
    }

    /// Marginal quantile of dimension `j` at `v ∈ (0, 1)`.
    pub fn quantile(&self, j: usize, v: f64) -> Result<f64> {
        if !(v > 0.0 && v < 1.0) {
            return contract(format!("probability {v} outside (0, 1)"));
        }
        if v <= self.phi_u {
            Ok(std_normal_quantile(v))
        } else {
            let q = ((v - self.phi_u) / self.tail_mass).min(1.0 - f64::EPSILON);
            self.tail_gpd(j).quantile(q)
        }
    }

    /// Marginal log-density of dimension `j`.
    pub fn log_pdf_dim(&self, j: usize, z: f64) -> f64 {
        if z <= self.u {
            std_normal_log_pdf(z)
        } else {
            let lp = self.tail_gpd(j).log_pdf(z).unwrap_or(f64::NEG_INFINITY);
            self.tail_mass.ln() + lp
        }
    }

    /// Joint log-density of one latent vector.
    pub fn log_pdf(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim() {
            return contract(format!("latent vector has {} entries, prior has {}", z.len(), self.dim()));
        }
        Ok(z.iter().enumerate().map(|(j, &v)| self.log_pdf_dim(j, v)).sum())
    }

    /// `n × p` draws by per-dimension inverse-CDF sampling.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Tensor> {
        if n == 0 {
            return contract("sample count must be at least 1");
        }
        let p = self.dim();
        let mut data = Vec::with_capacity(n * p);
        for _ in 0..n {
            for j in 0..p {
                let v: f64 = rng.sample(Open01);
                data.push(self.quantile(j, v)?);
            }
        }
        Tensor::new(vec![n, p], data)
    }
}

/// Map unconstrained parameters to the prior: `ξ = softplus(raw_xi)`,
/// `σ = softplus(raw_sigma) + 1e-6`.
pub fn learnable_view(u: f64, raw_xi: &[f64], raw_sigma: &[f64]) -> Result<MixedGpdParams> {
    use crate::autodiff::softplus;
    MixedGpdParams::new(
        u,
        raw_xi.iter().map(|&r| softplus(r)).collect(),
        raw_sigma.iter().map(|&r| softplus(r) + SIGMA_FLOOR).collect(),
    )
}

/// Differentiable version of [`learnable_view`]; returns `(ξ, σ)` vars.
pub fn learnable_view_tape(tape: &mut Tape, raw_xi: Var, raw_sigma: Var) -> Result<(Var, Var)> {
    let xi = tape.softplus(raw_xi)?;
    let s = tape.softplus(raw_sigma)?;
    let sigma = tape.shift(s, SIGMA_FLOOR)?;
    Ok((xi, sigma))
}

/// Differentiable joint log-density of each row of `z` (`n × p`) under the
/// mixed prior with per-dimension `xi`, `sigma` (each `1 × p` or `1 × 1`).
/// Returns an `n × 1` column. At exactly `z = u` the Gaussian branch is used.
pub fn mixed_log_pdf_tape(tape: &mut Tape, z: Var, xi: Var, sigma: Var, u: f64) -> Result<Var> {
    let zt = tape.value(z).clone();
    if zt.rank() != 2 {
        return contract("latent batch must be rank 2");
    }
    let mask = zt.map(|v| if v > u { 1.0 } else { 0.0 });
    let inv_mask = mask.map(|m| 1.0 - m);
    let mask_v = tape.constant(mask);
    let inv_v = tape.constant(inv_mask.clone());

    // Gaussian bulk: −z²/2 − ln(2π)/2
    let sq = tape.mul(z, z)?;
    let half = tape.scale(sq, -0.5)?;
    let bulk = tape.shift(half, -HALF_LN_2PI)?;

    // GPD tail evaluated at max(z, u) so the unused branch stays in-domain.
    let zm = tape.mul(z, mask_v)?;
    let fill = tape.constant(inv_mask.map(|m| m * u));
    let z_safe = tape.add(zm, fill)?;
    let excess = tape.shift(z_safe, -u)?;
    let t = tape.div(excess, sigma)?;
    let r = tape.log1p_ratio(xi, t)?;
    let one_plus_xi = tape.shift(xi, 1.0)?;
    let rr = tape.mul(r, one_plus_xi)?;
    let log_sigma = tape.log(sigma)?;
    let neg = tape.add(rr, log_sigma)?;
    let tail_core = tape.neg(neg)?;
    let tail = tape.shift(tail_core, std_normal_sf(u).ln())?;

    let a = tape.mul(tail, mask_v)?;
    let b = tape.mul(bulk, inv_v)?;
    let per_dim = tape.add(a, b)?;
    tape.sum_axis(per_dim, 1)
}
