use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{contract, Result};

use super::dense::bind_all;
use super::init::init_params;

/// Masked autoregressive network (MADE) mapping `z ∈ ℝᵖ` to `(μ, s_raw)`.
///
/// Output coordinate `j` of either head depends only on inputs whose degree
/// is strictly below the degree of `j`. With natural ordering the degree of
/// coordinate `i` is `i + 1`; with reversed ordering it is `p − i`.
#[derive(Clone, Debug, PartialEq)]
pub struct MadeNet {
    /// `[w0, b0, …, w_out, b_out]`; the output layer has `2p` columns.
    pub params: Vec<Tensor>,
    masks: Vec<Tensor>,
    input_degrees: Vec<usize>,
}

impl MadeNet {
    /// Sequential hidden degrees, natural or reversed input order.
    pub fn new(p: usize, hidden: &[usize], reversed: bool, seed: u64) -> Result<Self> {
        if p == 0 {
            return contract("latent dimension must be positive");
        }
        let input_degrees: Vec<usize> =
            (0..p).map(|i| if reversed { p - i } else { i + 1 }).collect();
        let span = (p - 1).max(1);
        let hidden_degrees: Vec<Vec<usize>> =
            hidden.iter().map(|&h| (0..h).map(|k| k % span + 1).collect()).collect();
        Self::with_degrees(input_degrees, hidden_degrees, seed)
    }

    /// Build from explicit degrees, rejecting assignments that would break
    /// the strict autoregressive property.
    pub fn with_degrees(
        input_degrees: Vec<usize>,
        hidden_degrees: Vec<Vec<usize>>,
        seed: u64,
    ) -> Result<Self> {
        let p = input_degrees.len();
        let mut sorted = input_degrees.clone();
        sorted.sort_unstable();
        if sorted != (1..=p).collect::<Vec<_>>() {
            return contract(format!("input degrees {:?} are not a permutation of 1..={}", input_degrees, p));
        }
        if hidden_degrees.iter().any(|layer| layer.is_empty()) {
            return contract("hidden layers must be nonempty");
        }
        let max_hidden = if p > 1 { p - 1 } else { 1 };
        if hidden_degrees.iter().flatten().any(|&d| d == 0 || d > max_hidden) {
            return contract(format!("hidden degrees must lie in 1..={}", max_hidden));
        }

        let mut sizes = vec![p];
        sizes.extend(hidden_degrees.iter().map(Vec::len));
        sizes.push(2 * p);
        let mut params = init_params(&sizes, seed);

        let mut layer_degrees = vec![input_degrees.clone()];
        layer_degrees.extend(hidden_degrees.iter().cloned());
        let out_degrees: Vec<usize> = input_degrees.iter().chain(&input_degrees).copied().collect();
        layer_degrees.push(out_degrees);

        let n_layers = layer_degrees.len() - 1;
        let masks: Vec<Tensor> = (0..n_layers)
            .map(|k| {
                let (din, dout) = (&layer_degrees[k], &layer_degrees[k + 1]);
                let strict = k + 1 == n_layers;
                let data = din
                    .iter()
                    .flat_map(|&a| {
                        dout.iter().map(move |&b| {
                            let connected = if strict { b > a } else { b >= a };
                            if connected { 1.0 } else { 0.0 }
                        })
                    })
                    .collect();
                Tensor::new(vec![din.len(), dout.len()], data).expect("mask sizes")
            })
            .collect();

        // Masked-out weights are zeroed so they also read as zero in checkpoints.
        for (k, mask) in masks.iter().enumerate() {
            for (w, m) in params[2 * k].data_mut().iter_mut().zip(mask.data()) {
                *w *= m;
            }
        }
        // Start each step near the identity: small output weights and the
        // scale head at σ = 1, since softplus(0.5413) ≈ 1.
        let last = params.len() - 1;
        for w in params[last - 1].data_mut() {
            *w *= MADE_OUTPUT_SCALE;
        }
        for b in &mut params[last].data_mut()[p..] {
            *b = SOFTPLUS_INV_ONE;
        }

        let net = MadeNet { params, masks, input_degrees };
        net.check_connectivity()?;
        Ok(net)
    }

    pub fn dim(&self) -> usize {
        self.input_degrees.len()
    }

    pub fn input_degrees(&self) -> &[usize] {
        &self.input_degrees
    }

    pub fn masks(&self) -> &[Tensor] {
        &self.masks
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.params.iter().step_by(2).skip(1).map(|w| w.rows()).collect()
    }

    fn check_connectivity(&self) -> Result<()> {
        // reach[i][j] > 0 when input i can influence output column j
        let p = self.dim();
        let mut reach: Vec<f64> = self.masks[0].data().to_vec();
        let mut cols = self.masks[0].cols();
        for m in &self.masks[1..] {
            reach = crate::autodiff::gemm(p, cols, m.cols(), &reach, m.data());
            cols = m.cols();
        }
        for i in 0..p {
            for j in 0..cols {
                let out = j % p;
                if reach[i * cols + j] > 0.0 && self.input_degrees[i] >= self.input_degrees[out] {
                    return contract(format!("output {} reaches input {}", out, i));
                }
            }
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        bind_all(&self.params, tape, trainable)
    }

    /// `(μ, s_raw)`, each `n × p`, for a batch `z` of shape `n × p`.
    pub fn forward(&self, tape: &mut Tape, bound: &[Var], z: Var) -> Result<(Var, Var)> {
        let p = self.dim();
        if tape.shape(z).len() != 2 || tape.shape(z)[1] != p {
            return contract(format!("MADE input {:?} does not have {} columns", tape.shape(z), p));
        }
        let n_layers = self.masks.len();
        let mut h = z;
        for (k, mask) in self.masks.iter().enumerate() {
            let m = tape.constant(mask.clone());
            let w = tape.mul(bound[2 * k], m)?;
            let a = tape.matmul(h, w)?;
            h = tape.add(a, bound[2 * k + 1])?;
            if k + 1 < n_layers {
                h = tape.relu(h)?;
            }
        }
        let mu = tape.slice(h, 1, 0, p)?;
        let s_raw = tape.slice(h, 1, p, p)?;
        Ok((mu, s_raw))
    }

    /// Tape-free evaluation.
    pub fn eval(&self, z: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let zv = tape.constant(z.clone());
        let (mu, s) = self.forward(&mut tape, &bound, zv)?;
        Ok((tape.value(mu).clone(), tape.value(s).clone()))
    }

    /// Rebuild from stored parameters, recomputing masks from the layout.
    pub fn from_params(params: Vec<Tensor>, reversed: bool) -> Result<Self> {
        if params.len() < 4 || params.len() % 2 != 0 {
            return contract("MADE needs at least one hidden layer");
        }
        let p = params[0].rows();
        let hidden: Vec<usize> = params.iter().step_by(2).skip(1).map(|w| w.rows()).collect();
        let mut net = MadeNet::new(p, &hidden, reversed, 0)?;
        for (dst, src) in net.params.iter().zip(&params) {
            if dst.shape() != src.shape() {
                return contract("MADE parameter shapes disagree with the layout");
            }
        }
        net.params = params;
        Ok(net)
    }
}

/// Initial scale of the output layer relative to He-uniform. Full-scale
/// ReLU heads make `σ` grow with `|z|`, so stacked steps square large
/// inputs and the flow diverges at initialization.
pub const MADE_OUTPUT_SCALE: f64 = 0.1;

/// `ln(e − 1)`, the softplus preimage of 1.
pub const SOFTPLUS_INV_ONE: f64 = 0.541_324_854_612_918_1;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init::rng_from_seed;
    use rand::Rng;

    fn random_z(p: usize, seed: u64) -> Tensor {
        let mut rng = rng_from_seed(seed);
        Tensor::row(&(0..p).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<_>>())
    }

    fn randomize(net: &mut MadeNet, seed: u64) {
        let mut rng = rng_from_seed(seed);
        for (k, p) in net.params.iter_mut().enumerate() {
            for v in p.data_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            if k % 2 == 0 {
                let mask = &net.masks[k / 2];
                for (v, m) in p.data_mut().iter_mut().zip(mask.data()) {
                    *v *= m;
                }
            }
        }
    }

    #[test]
    fn perturbing_a_coordinate_leaves_earlier_outputs_fixed() {
        let p = 4;
        let mut net = MadeNet::new(p, &[32, 32], false, 5).unwrap();
        randomize(&mut net, 6);
        let z = random_z(p, 1);
        let (mu, s) = net.eval(&z).unwrap();
        for j in 0..p {
            let mut zp = z.clone();
            zp.data_mut()[j] += 0.731;
            let (mu2, s2) = net.eval(&zp).unwrap();
            for i in 0..=j {
                assert_eq!(mu.data()[i], mu2.data()[i], "mu[{i}] moved when z[{j}] changed");
                assert_eq!(s.data()[i], s2.data()[i]);
            }
        }
    }

    #[test]
    fn single_dimension_outputs_are_constant() {
        let mut net = MadeNet::new(1, &[8, 8], false, 2).unwrap();
        randomize(&mut net, 3);
        let a = net.eval(&Tensor::row(&[-3.0])).unwrap();
        let b = net.eval(&Tensor::row(&[7.5])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn numeric_jacobian_is_strictly_lower_triangular() {
        let p = 4;
        for reversed in [false, true] {
            let mut net = MadeNet::new(p, &[32, 32], reversed, 9).unwrap();
            randomize(&mut net, 10);
            let z = random_z(p, 4);
            let h = 1e-6;
            for k in 0..p {
                let mut zp = z.clone();
                zp.data_mut()[k] += h;
                let mut zm = z.clone();
                zm.data_mut()[k] -= h;
                let (mp, _) = net.eval(&zp).unwrap();
                let (mm, _) = net.eval(&zm).unwrap();
                for j in 0..p {
                    let d = (mp.data()[j] - mm.data()[j]) / (2.0 * h);
                    let allowed = net.input_degrees()[k] < net.input_degrees()[j];
                    if !allowed {
                        assert!(d.abs() < 1e-8, "reversed={reversed} d mu_{j}/d z_{k} = {d}");
                    }
                }
            }
        }
    }

    #[test]
    fn bad_degrees_rejected() {
        assert!(MadeNet::with_degrees(vec![1, 1, 3], vec![vec![1, 2]], 0).is_err());
        assert!(MadeNet::with_degrees(vec![1, 2, 3], vec![vec![1, 3]], 0).is_err());
        assert!(MadeNet::with_degrees(vec![2, 1, 3], vec![vec![1, 2]], 0).is_ok());
    }

    #[test]
    fn scale_head_starts_near_one() {
        let net = MadeNet::new(3, &[16], false, 0).unwrap();
        let (_, s) = net.eval(&Tensor::row(&[0.0, 0.0, 0.0])).unwrap();
        for v in s.data() {
            assert!((crate::autodiff::softplus(*v) - 1.0).abs() < 1e-12);
        }
    }
}
