use crate::error::{contract, domain, Result};

/// Below this |ξ| the exponential (ξ = 0) branch is used.
pub const XI_ZERO: f64 = 1e-12;
/// Below this |ξ| the log-density uses a series for `ln(1 + ξt)/ξ`.
pub const XI_SERIES: f64 = 1e-4;

/// Generalized Pareto distribution with shape `xi`, scale `sigma > 0`
/// and location (threshold) `u`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GpdParams {
    pub xi: f64,
    pub sigma: f64,
    pub u: f64,
}

impl GpdParams {
    pub fn new(xi: f64, sigma: f64, u: f64) -> Result<Self> {
        if !(sigma > 0.0) || !xi.is_finite() || !u.is_finite() {
            return contract(format!("invalid GPD parameters xi={xi} sigma={sigma} u={u}"));
        }
        Ok(GpdParams { xi, sigma, u })
    }

    /// Upper end of the support (`+∞` for ξ ≥ 0).
    pub fn upper(&self) -> f64 {
        if self.xi < 0.0 {
            self.u - self.sigma / self.xi
        } else {
            f64::INFINITY
        }
    }

    /// CDF. Saturates to 0 below `u` and to 1 above a bounded support.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.u {
            return 0.0;
        }
        if x >= self.upper() {
            return 1.0;
        }
        let t = (x - self.u) / self.sigma;
        if self.xi.abs() < XI_ZERO {
            -(-t).exp_m1()
        } else {
            -(-(self.xi * t).ln_1p() / self.xi).exp_m1()
        }
    }

    /// Log-density on `[u, upper)`; points outside the support are a
    /// domain error.
    pub fn log_pdf(&self, x: f64) -> Result<f64> {
        if !(x >= self.u) || x >= self.upper() {
            return domain(format!("x={x} outside GPD support [{}, {})", self.u, self.upper()));
        }
        let t = (x - self.u) / self.sigma;
        let xi = self.xi;
        let lp = if xi.abs() < XI_ZERO {
            -t
        } else {
            // −(1/ξ + 1) ln(1 + ξt) = −r − ξ r with r = ln(1 + ξt)/ξ
            let r = if xi.abs() < XI_SERIES {
                t - xi * t * t / 2.0 + xi * xi * t * t * t / 3.0
            } else {
                (xi * t).ln_1p() / xi
            };
            -r * (1.0 + xi)
        };
        Ok(lp - self.sigma.ln())
    }

    /// Inverse CDF on `[0, 1)`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&p) {
            return contract(format!("probability {p} outside [0, 1)"));
        }
        let l = (-p).ln_1p(); // ln(1 − p)
        let x = if self.xi.abs() < XI_ZERO {
            self.u - self.sigma * l
        } else {
            self.u + self.sigma * (-self.xi * l).exp_m1() / self.xi
        };
        Ok(x)
    }

    /// Express `(1 − φ_u)·G(x) + φ_u` for `x > u` as a single GPD.
    pub fn tail_reparameterize(&self, phi_u: f64) -> Result<GpdParams> {
        if !(phi_u > 0.0 && phi_u < 1.0) {
            return contract(format!("phi_u={phi_u} must lie in (0, 1)"));
        }
        let tail = 1.0 - phi_u;
        let xi = self.xi;
        if xi.abs() < XI_ZERO {
            let sigma = self.sigma;
            Ok(GpdParams { xi, sigma, u: self.u + sigma * tail.ln() })
        } else {
            let sigma = self.sigma * tail.powf(xi);
            let u = self.u - sigma * (tail.powf(-xi) - 1.0) / xi;
            Ok(GpdParams { xi, sigma, u })
        }
    }
}
