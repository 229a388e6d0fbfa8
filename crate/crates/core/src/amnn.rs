//! Additive monotonic decoder `H(z) = Σ_j α_j ∫_l^{z_j} h_j(s) ds + γ` with
//! positive integrands, a Riemann integration scheme, and the complementary
//! log-log link.

use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{contract, Result};
use crate::nn::{bind_all, split_seed, Mlp};

pub const DEFAULT_BINS: usize = 100;
pub const DEFAULT_LOWER: f64 = -5.0;
/// Bound on the exponent inside the link and the integrand.
pub const EXP_CLAMP: f64 = 30.0;
/// Initial scale of each integrand's output layer relative to He-uniform.
/// Keeps initial integrands nearly flat: the midpoint sum stops being
/// monotone once `|d ln h/ds|` exceeds about two bin widths' worth.
pub const INTEGRAND_OUTPUT_SCALE: f64 = 0.1;

pub(crate) fn integrand_net(hidden: &[usize], seed: u64) -> Result<Mlp> {
    let mut sizes = vec![1];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    let mut net = Mlp::new(&sizes, seed)?;
    let k = net.params.len() - 2;
    for v in net.params[k].data_mut() {
        *v *= INTEGRAND_OUTPUT_SCALE;
    }
    Ok(net)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntegrationMode {
    /// Bin midpoints; deterministic.
    Midpoint,
    /// One uniform node per bin and example.
    Random,
}

/// Node positions within bins, `offsets[i][k] ∈ [k, k + 1)`, one row per
/// example, shared across dimensions.
pub fn bin_offsets(n: usize, bins: usize, mode: IntegrationMode, rng: Option<&mut dyn rand::RngCore>) -> Result<Tensor> {
    let mut data = Vec::with_capacity(n * bins);
    match (mode, rng) {
        (IntegrationMode::Midpoint, _) => {
            for _ in 0..n {
                data.extend((0..bins).map(|k| k as f64 + 0.5));
            }
        }
        (IntegrationMode::Random, Some(rng)) => {
            for _ in 0..n {
                data.extend((0..bins).map(|k| k as f64 + rng.gen::<f64>()));
            }
        }
        (IntegrationMode::Random, None) => return contract("random integration needs an rng"),
    }
    Tensor::new(vec![n, bins], data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AmnnParams {
    /// Integrand networks `1 → … → 1`, one per latent dimension.
    pub nets: Vec<Mlp>,
    /// Direction weights, `1 × p`.
    pub alpha: Tensor,
    /// Bias, `1 × 1`.
    pub gamma: Tensor,
    pub lower: f64,
    pub bins: usize,
}

#[derive(Clone, Debug)]
pub struct BoundAmnn {
    pub nets: Vec<Vec<Var>>,
    pub alpha: Var,
    pub gamma: Var,
}

impl BoundAmnn {
    pub fn all(&self) -> Vec<Var> {
        let mut v: Vec<Var> = self.nets.iter().flatten().copied().collect();
        v.push(self.alpha);
        v.push(self.gamma);
        v
    }
}

impl AmnnParams {
    /// `α = 1`, `γ = 0`, He-initialized integrands.
    pub fn new(p: usize, hidden: &[usize], bins: usize, lower: f64, seed: u64) -> Result<Self> {
        if p == 0 || bins == 0 || !lower.is_finite() {
            return contract("AMNN needs p ≥ 1, at least one bin and a finite lower end");
        }
        let nets = (0..p).map(|j| integrand_net(hidden, split_seed(seed, j as u64))).collect::<Result<_>>()?;
        Ok(AmnnParams { nets, alpha: Tensor::full(&[1, p], 1.0), gamma: Tensor::scalar(0.0), lower, bins })
    }

    pub fn dim(&self) -> usize {
        self.nets.len()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut v: Vec<&Tensor> = self.nets.iter().flat_map(|n| n.params.iter()).collect();
        v.push(&self.alpha);
        v.push(&self.gamma);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = self.nets.iter_mut().flat_map(|n| n.params.iter_mut()).collect();
        v.push(&mut self.alpha);
        v.push(&mut self.gamma);
        v
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundAmnn {
        BoundAmnn {
            nets: self.nets.iter().map(|n| bind_all(&n.params, tape, trainable)).collect(),
            alpha: if trainable { tape.var(self.alpha.clone()) } else { tape.constant(self.alpha.clone()) },
            gamma: if trainable { tape.var(self.gamma.clone()) } else { tape.constant(self.gamma.clone()) },
        }
    }

    /// Per-dimension integrals `∫_l^{z_j} h_j`, each `n × 1`.
    pub fn integrals_tape(&self, tape: &mut Tape, bound: &BoundAmnn, z: Var, offsets: &Tensor) -> Result<Vec<Var>> {
        let s = tape.shape(z).to_vec();
        if s.len() != 2 || s[1] != self.dim() {
            return contract(format!("AMNN input {:?} does not have {} columns", s, self.dim()));
        }
        if offsets.shape() != [s[0], self.bins] {
            return contract("integration offsets must be n × bins");
        }
        let off = tape.constant(offsets.clone());
        (0..self.dim())
            .map(|j| {
                let zj = tape.slice(z, 1, j, 1)?;
                integrate_tape(tape, &bound.nets[j], zj, off, self.lower, self.bins)
            })
            .collect()
    }

    /// `H(z)` for a batch, `n × 1`.
    pub fn forward_tape(&self, tape: &mut Tape, bound: &BoundAmnn, z: Var, offsets: &Tensor) -> Result<Var> {
        let parts = self.integrals_tape(tape, bound, z, offsets)?;
        let cat = tape.concat(&parts, 1)?;
        let weighted = tape.mul(cat, bound.alpha)?;
        let sum = tape.sum_axis(weighted, 1)?;
        tape.add(sum, bound.gamma)
    }

    /// Tape-free `H(z)`.
    pub fn forward(&self, z: &Tensor, mode: IntegrationMode, rng: Option<&mut dyn rand::RngCore>) -> Result<Vec<f64>> {
        let offsets = bin_offsets(z.rows(), self.bins, mode, rng)?;
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, false);
        let zv = tape.constant(z.clone());
        let h = self.forward_tape(&mut tape, &b, zv, &offsets)?;
        Ok(tape.value(h).data().to_vec())
    }

    /// `1 − exp(−exp(H(z)))` with midpoint integration.
    pub fn predict_risk(&self, z: &Tensor) -> Result<Vec<f64>> {
        Ok(self.forward(z, IntegrationMode::Midpoint, None)?.into_iter().map(cll_probability).collect())
    }
}

/// Signed Riemann sum `d Σ_k h(l + offset_k d)` with `d = (z − l)/M`, for a
/// column `z` of shape `n × 1`.
pub fn integrate_tape(tape: &mut Tape, net: &[Var], z: Var, offsets: Var, lower: f64, bins: usize) -> Result<Var> {
    let n = tape.shape(z)[0];
    let shifted = tape.shift(z, -lower)?;
    let d = tape.scale(shifted, 1.0 / bins as f64)?;
    let steps = tape.mul(d, offsets)?;
    let nodes = tape.shift(steps, lower)?;
    let flat = tape.reshape(nodes, &[n * bins, 1])?;
    let raw = crate::nn::mlp_forward(tape, net, crate::nn::Activation::Relu, flat)?;
    let raw = tape.clamp(raw, -EXP_CLAMP, EXP_CLAMP)?;
    let h = tape.exp(raw)?;
    let grid = tape.reshape(h, &[n, bins])?;
    let total = tape.sum_axis(grid, 1)?;
    tape.mul(total, d)
}

/// Scalar integral of one integrand net from `lower` to `z`.
pub fn integrate_dim(
    net: &Mlp,
    z: f64,
    lower: f64,
    bins: usize,
    mode: IntegrationMode,
    rng: Option<&mut dyn rand::RngCore>,
) -> Result<f64> {
    if !z.is_finite() {
        return contract("integration endpoint must be finite");
    }
    let offsets = bin_offsets(1, bins, mode, rng)?;
    let mut tape = Tape::new();
    let b = net.bind(&mut tape, false);
    let zv = tape.constant(Tensor::scalar(z));
    let off = tape.constant(offsets);
    let v = integrate_tape(&mut tape, &b, zv, off, lower, bins)?;
    Ok(tape.value(v).item())
}

/// `P(y = 1 | H) = 1 − exp(−exp(H))`, kept strictly inside (0, 1): above
/// `H ≈ 3.6` the exact value rounds to 1 in f64, so it is capped at the
/// largest double below one.
pub fn cll_probability(h: f64) -> f64 {
    (-(-h.clamp(-EXP_CLAMP, EXP_CLAMP).exp()).exp_m1()).min(1.0 - f64::EPSILON / 2.0)
}

pub fn cll_log_likelihood(y: f64, h: f64) -> f64 {
    let e = h.clamp(-EXP_CLAMP, EXP_CLAMP).exp();
    if y > 0.5 {
        (-(-e).exp_m1()).ln()
    } else {
        -e
    }
}

/// Per-example CLL log-likelihood on the tape; `h` and `y` are `n × 1`.
pub fn cll_log_likelihood_tape(tape: &mut Tape, h: Var, y: &Tensor) -> Result<Var> {
    if tape.shape(h) != y.shape() {
        return contract(format!("labels {:?} disagree with predictions {:?}", y.shape(), tape.shape(h)));
    }
    let hc = tape.clamp(h, -EXP_CLAMP, EXP_CLAMP)?;
    let e = tape.exp(hc)?;
    let pos = tape.log1m_exp_neg(e)?;
    let yv = tape.constant(y.clone());
    let nv = tape.constant(y.map(|v| 1.0 - v));
    let a = tape.mul(pos, yv)?;
    let b = tape.mul(e, nv)?;
    tape.sub(a, b)
}

/// Multiclass head: `k` monotone integrals per dimension feed a dense layer
/// and a softmax over `classes` outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct MulticlassAmnn {
    /// Integrand nets in dimension-major order: `nets[j * k + c]`.
    pub nets: Vec<Mlp>,
    /// `p·k × classes`.
    pub weight: Tensor,
    /// `1 × classes`.
    pub bias: Tensor,
    pub per_dim: usize,
    pub lower: f64,
    pub bins: usize,
}

#[derive(Clone, Debug)]
pub struct BoundMulticlass {
    pub nets: Vec<Vec<Var>>,
    pub weight: Var,
    pub bias: Var,
}

impl BoundMulticlass {
    pub fn all(&self) -> Vec<Var> {
        let mut v: Vec<Var> = self.nets.iter().flatten().copied().collect();
        v.push(self.weight);
        v.push(self.bias);
        v
    }
}

impl MulticlassAmnn {
    /// The `k` nets of each dimension differ only by initialization seed.
    pub fn new(p: usize, per_dim: usize, classes: usize, hidden: &[usize], bins: usize, lower: f64, seed: u64) -> Result<Self> {
        if classes < 2 {
            return contract("multiclass head needs at least two classes");
        }
        if p == 0 || per_dim == 0 || bins == 0 {
            return contract("multiclass head needs p, k and bins ≥ 1");
        }
        let nets = (0..p * per_dim)
            .map(|i| integrand_net(hidden, split_seed(seed, i as u64)))
            .collect::<Result<_>>()?;
        let dense = crate::nn::init_params(&[p * per_dim, classes], split_seed(seed, u64::MAX));
        Ok(MulticlassAmnn {
            nets,
            weight: dense[0].clone(),
            bias: dense[1].clone(),
            per_dim,
            lower,
            bins,
        })
    }

    pub fn dim(&self) -> usize {
        self.nets.len() / self.per_dim
    }

    pub fn classes(&self) -> usize {
        self.weight.cols()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut v: Vec<&Tensor> = self.nets.iter().flat_map(|n| n.params.iter()).collect();
        v.push(&self.weight);
        v.push(&self.bias);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = self.nets.iter_mut().flat_map(|n| n.params.iter_mut()).collect();
        v.push(&mut self.weight);
        v.push(&mut self.bias);
        v
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundMulticlass {
        let mk = |tape: &mut Tape, t: &Tensor| if trainable { tape.var(t.clone()) } else { tape.constant(t.clone()) };
        BoundMulticlass {
            nets: self.nets.iter().map(|n| bind_all(&n.params, tape, trainable)).collect(),
            weight: mk(tape, &self.weight),
            bias: mk(tape, &self.bias),
        }
    }

    /// Log-probabilities, `n × classes`.
    pub fn log_probs_tape(&self, tape: &mut Tape, bound: &BoundMulticlass, z: Var, offsets: &Tensor) -> Result<Var> {
        let s = tape.shape(z).to_vec();
        if s.len() != 2 || s[1] != self.dim() {
            return contract(format!("multiclass input {:?} does not have {} columns", s, self.dim()));
        }
        let off = tape.constant(offsets.clone());
        let mut feats = Vec::with_capacity(self.nets.len());
        for j in 0..self.dim() {
            let zj = tape.slice(z, 1, j, 1)?;
            for c in 0..self.per_dim {
                let net = &bound.nets[j * self.per_dim + c];
                feats.push(integrate_tape(tape, net, zj, off, self.lower, self.bins)?);
            }
        }
        let f = tape.concat(&feats, 1)?;
        let lin = tape.matmul(f, bound.weight)?;
        let logits = tape.add(lin, bound.bias)?;
        log_softmax_tape(tape, logits)
    }

    pub fn predict_proba(&self, z: &Tensor) -> Result<Tensor> {
        let offsets = bin_offsets(z.rows(), self.bins, IntegrationMode::Midpoint, None)?;
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, false);
        let zv = tape.constant(z.clone());
        let lp = self.log_probs_tape(&mut tape, &b, zv, &offsets)?;
        Ok(tape.value(lp).map(f64::exp))
    }
}

/// Row-wise log-softmax of an `n × m` tensor.
pub fn log_softmax_tape(tape: &mut Tape, logits: Var) -> Result<Var> {
    let v = tape.value(logits);
    let n = v.rows();
    let maxes: Vec<f64> = (0..n).map(|i| v.row_slice(i).iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    let shift = tape.constant(Tensor::new(vec![n, 1], maxes)?);
    let centered = tape.sub(logits, shift)?;
    let e = tape.exp(centered)?;
    let s = tape.sum_axis(e, 1)?;
    let ls = tape.log(s)?;
    tape.sub(centered, ls)
}

/// Mean cross-entropy of integer labels against `n × m` log-probabilities.
pub fn cross_entropy_tape(tape: &mut Tape, log_probs: Var, labels: &[usize]) -> Result<Var> {
    let (n, m) = (tape.shape(log_probs)[0], tape.shape(log_probs)[1]);
    if labels.len() != n || labels.iter().any(|&c| c >= m) {
        return contract("labels disagree with the class count or batch size");
    }
    let mut onehot = vec![0.0; n * m];
    for (i, &c) in labels.iter().enumerate() {
        onehot[i * m + c] = 1.0;
    }
    let oh = tape.constant(Tensor::new(vec![n, m], onehot)?);
    let picked = tape.mul(log_probs, oh)?;
    let s = tape.sum(picked)?;
    tape.scale(s, -1.0 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_diff_check;
    use crate::nn::rng_from_seed;

    fn zero_net(hidden: &[usize]) -> Mlp {
        let mut sizes = vec![1];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut net = Mlp::new(&sizes, 0).unwrap();
        for p in net.params.iter_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        net
    }

    /// Integrand `h(s) = e^s`: the raw output reproduces `s` through
    /// `relu(s) − relu(−s)`.
    fn exp_net() -> Mlp {
        let mut net = zero_net(&[32, 32]);
        net.params[0].data_mut()[0] = 1.0;
        net.params[0].data_mut()[1] = -1.0;
        let w1 = &mut net.params[2];
        let c = w1.cols();
        w1.data_mut()[0] = 1.0;
        w1.data_mut()[c + 1] = 1.0;
        net.params[4].data_mut()[0] = 1.0;
        net.params[4].data_mut()[1] = -1.0;
        net
    }

    fn random_amnn(p: usize, seed: u64) -> AmnnParams {
        let mut a = AmnnParams::new(p, &[32, 32], DEFAULT_BINS, DEFAULT_LOWER, seed).unwrap();
        let mut rng = rng_from_seed(seed + 1);
        for j in 0..p {
            a.alpha.data_mut()[j] = rng.gen_range(-2.0..2.0);
        }
        a.gamma.data_mut()[0] = rng.gen_range(-1.0..1.0);
        a
    }

    #[test]
    fn constant_integrand_is_exact() {
        let net = zero_net(&[32, 32]);
        let v = integrate_dim(&net, 1.0, -5.0, 100, IntegrationMode::Midpoint, None).unwrap();
        assert_eq!(v, 6.0);
        assert_eq!(integrate_dim(&net, -5.0, -5.0, 100, IntegrationMode::Midpoint, None).unwrap(), 0.0);
        let below = integrate_dim(&net, -7.0, -5.0, 100, IntegrationMode::Midpoint, None).unwrap();
        assert!((below + 2.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_integrand_matches_closed_form() {
        let v = integrate_dim(&exp_net(), 0.0, -5.0, 100, IntegrationMode::Midpoint, None).unwrap();
        let exact = 1.0 - (-5f64).exp();
        assert!((v - exact).abs() < 1e-3);
        assert!((v - 0.993262).abs() < 1e-3);
        let mut rng = rng_from_seed(1);
        let r = integrate_dim(&exp_net(), 0.0, -5.0, 100, IntegrationMode::Random, Some(&mut rng)).unwrap();
        assert!((r - exact).abs() < 0.05);
    }

    #[test]
    fn forward_examples() {
        let p = 4;
        let mut a = AmnnParams::new(p, &[32, 32], 100, -5.0, 0).unwrap();
        for n in a.nets.iter_mut() {
            *n = zero_net(&[32, 32]);
        }
        let z = Tensor::full(&[1, p], 1.0);
        assert_eq!(a.forward(&z, IntegrationMode::Midpoint, None).unwrap()[0], 24.0);
        let mut b = random_amnn(p, 3);
        b.alpha = Tensor::zeros(&[1, p]);
        b.gamma = Tensor::scalar(0.37);
        let zs = crate::flow::normal_tensor(5, p, &mut rng_from_seed(2));
        assert!(b.forward(&zs, IntegrationMode::Midpoint, None).unwrap().iter().all(|&h| h == 0.37));
    }

    #[test]
    fn additivity() {
        let a = random_amnn(3, 8);
        let z = crate::flow::normal_tensor(6, 3, &mut rng_from_seed(4));
        let h = a.forward(&z, IntegrationMode::Midpoint, None).unwrap();
        for i in 0..6 {
            let mut s = a.gamma.item();
            for j in 0..3 {
                let part = integrate_dim(&a.nets[j], z.get(i, j), a.lower, a.bins, IntegrationMode::Midpoint, None).unwrap();
                s += a.alpha.data()[j] * part;
            }
            assert!((h[i] - s).abs() < 1e-12 * h[i].abs().max(1.0));
        }
    }

    #[test]
    fn monotone_in_each_dimension() {
        let mut rng = rng_from_seed(12);
        let a = random_amnn(4, 5);
        let mut violations = 0;
        for _ in 0..200 {
            let z: Vec<f64> = (0..4).map(|_| rng.gen_range(-6.0..4.0)).collect();
            let j = rng.gen_range(0..4);
            let mut z2 = z.clone();
            z2[j] += rng.gen_range(0.01..2.0);
            let h = a.forward(&Tensor::from_rows(&[z.clone(), z2.clone()]).unwrap(), IntegrationMode::Midpoint, None).unwrap();
            let diff = h[1] - h[0];
            if diff * a.alpha.data()[j].signum() < 0.0 {
                violations += 1;
            }
        }
        assert_eq!(violations, 0);
    }

    #[test]
    fn monotone_on_grids() {
        let grid: Vec<f64> = (0..=400).map(|i| -8.0 + i as f64 * 0.04).collect();
        let z = Tensor::column(&grid);
        for seed in 0..10 {
            let mut a = AmnnParams::new(1, &[32, 32], DEFAULT_BINS, DEFAULT_LOWER, seed).unwrap();
            a.alpha.data_mut()[0] = if seed % 2 == 0 { 0.8 } else { -1.3 };
            let h = a.forward(&z, IntegrationMode::Midpoint, None).unwrap();
            let sign = a.alpha.data()[0].signum();
            assert!(h.windows(2).all(|w| (w[1] - w[0]) * sign >= 0.0), "seed {seed}");
        }
    }

    #[test]
    fn cll_examples() {
        let h = 2f64.ln().ln();
        assert!((cll_probability(h) - 0.5).abs() < 1e-12);
        assert!((cll_log_likelihood(1.0, h) + 0.693147).abs() < 1e-6);
        assert!((cll_log_likelihood(0.0, h) + 0.693147).abs() < 1e-6);
        assert!((cll_log_likelihood(1.0, 0.0) + 0.458675).abs() < 1e-6);
        assert!(cll_log_likelihood(0.0, -100.0).abs() < 1e-12);
        for h in [-100.0, -30.0, 3.6, 5.0, 100.0] {
            let p = cll_probability(h);
            assert!(p > 0.0 && p < 1.0, "h {h}: {p}");
        }
        let mut tape = Tape::new();
        let hv = tape.constant(Tensor::column(&[h, 0.0, -40.0]));
        let ll = cll_log_likelihood_tape(&mut tape, hv, &Tensor::column(&[1.0, 1.0, 0.0])).unwrap();
        let v = tape.value(ll).data();
        assert!((v[0] + 0.693147).abs() < 1e-6 && (v[1] + 0.458675).abs() < 1e-6 && v[2] <= 0.0);
    }

    #[test]
    fn full_loss_gradient_check() {
        let a = random_amnn(2, 17);
        let z = Tensor::from_rows(&[vec![0.3, -1.2], vec![1.5, 2.0], vec![-6.0, 0.2]]).unwrap();
        let y = Tensor::column(&[1.0, 0.0, 1.0]);
        let offsets = bin_offsets(3, 20, IntegrationMode::Midpoint, None).unwrap();
        let mut small = a.clone();
        small.bins = 20;
        let loss = |tape: &mut Tape, b: &BoundAmnn, zv: Var| -> Result<Var> {
            let h = small.forward_tape(tape, b, zv, &offsets)?;
            let ll = cll_log_likelihood_tape(tape, h, &y)?;
            tape.mean(ll)
        };
        let g = |tape: &mut Tape, zv: Var| {
            let b = small.bind(tape, false);
            loss(tape, &b, zv)
        };
        assert!(finite_diff_check(g, &z, 1e-6).unwrap() < 1e-4);
        for k in 0..small.nets[0].params.len() {
            let f = |tape: &mut Tape, w: Var| {
                let mut b = small.bind(tape, false);
                b.nets[1][k] = w;
                let zv = tape.constant(z.clone());
                loss(tape, &b, zv)
            };
            assert!(finite_diff_check(f, &small.nets[1].params[k], 1e-6).unwrap() < 1e-4);
        }
        let f = |tape: &mut Tape, al: Var| {
            let mut b = small.bind(tape, false);
            b.alpha = al;
            let zv = tape.constant(z.clone());
            loss(tape, &b, zv)
        };
        assert!(finite_diff_check(f, &small.alpha, 1e-6).unwrap() < 1e-4);
    }

    #[test]
    fn multiclass_probabilities() {
        let m = MulticlassAmnn::new(3, 2, 5, &[8, 8], 20, -5.0, 4).unwrap();
        let z = crate::flow::normal_tensor(7, 3, &mut rng_from_seed(1));
        let p = m.predict_proba(&z).unwrap();
        for i in 0..7 {
            assert!((p.row_slice(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(MulticlassAmnn::new(3, 2, 1, &[8], 20, -5.0, 4).is_err());
    }

    #[test]
    fn multiclass_two_class_reduces_to_logit_difference() {
        let mut m = MulticlassAmnn::new(2, 1, 2, &[8, 8], 20, -5.0, 9).unwrap();
        // tied columns except for a sign flip in one dimension
        let w = Tensor::from_rows(&[vec![0.7, -0.7], vec![0.2, -0.2]]).unwrap();
        m.weight = w;
        m.bias = Tensor::row(&[0.1, -0.1]);
        let z = crate::flow::normal_tensor(4, 2, &mut rng_from_seed(2));
        let p = m.predict_proba(&z).unwrap();
        for i in 0..4 {
            let mut f = 0.1;
            for j in 0..2 {
                let v = integrate_dim(&m.nets[j], z.get(i, j), -5.0, 20, IntegrationMode::Midpoint, None).unwrap();
                f += m.weight.get(j, 0) * v;
            }
            let expect = 1.0 / (1.0 + (-2.0 * f).exp());
            assert!((p.get(i, 0) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn multiclass_gradient_check() {
        let m = MulticlassAmnn::new(2, 2, 3, &[8, 8], 10, -5.0, 6).unwrap();
        let z = Tensor::from_rows(&[vec![0.3, -1.2], vec![1.5, 2.0]]).unwrap();
        let offsets = bin_offsets(2, 10, IntegrationMode::Midpoint, None).unwrap();
        let labels = [2usize, 0];
        let f = |tape: &mut Tape, w: Var| {
            let mut b = m.bind(tape, false);
            b.weight = w;
            let zv = tape.constant(z.clone());
            let lp = m.log_probs_tape(tape, &b, zv, &offsets)?;
            cross_entropy_tape(tape, lp, &labels)
        };
        assert!(finite_diff_check(f, &m.weight, 1e-6).unwrap() < 1e-4);
        let g = |tape: &mut Tape, zv: Var| {
            let b = m.bind(tape, false);
            let lp = m.log_probs_tape(tape, &b, zv, &offsets)?;
            cross_entropy_tape(tape, lp, &labels)
        };
        assert!(finite_diff_check(g, &z, 1e-6).unwrap() < 1e-4);
    }
}
