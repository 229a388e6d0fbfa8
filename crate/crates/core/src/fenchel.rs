//! Dual critic for the KL divergence between the aggregated posterior and
//! the prior. The critic emits `r(z) = exp(raw(z))`, so `ln r` is the
//! unconstrained dual potential and `r` its positive counterpart.

use crate::amnn::EXP_CLAMP;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{contract, Result};
use crate::nn::{Mlp, RmspropState};

#[derive(Clone, Debug, PartialEq)]
pub struct Critic {
    /// `p → … → 1`.
    pub net: Mlp,
}

impl Critic {
    pub fn new(p: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut sizes = vec![p];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Ok(Critic { net: Mlp::new(&sizes, seed)? })
    }

    pub fn dim(&self) -> usize {
        self.net.input_dim()
    }

    /// `ln r(z)`, `n × 1`.
    pub fn log_r_tape(&self, tape: &mut Tape, bound: &[Var], z: Var) -> Result<Var> {
        let raw = self.net.forward(tape, bound, z)?;
        tape.clamp(raw, -EXP_CLAMP, EXP_CLAMP)
    }

    /// `mean r(z_prior) − mean ln r(z_post)`, descended in the critic.
    pub fn critic_loss_tape(&self, tape: &mut Tape, bound: &[Var], z_prior: Var, z_post: Var) -> Result<Var> {
        let lp = self.log_r_tape(tape, bound, z_prior)?;
        let r = tape.exp(lp)?;
        let a = tape.mean(r)?;
        let lq = self.log_r_tape(tape, bound, z_post)?;
        let b = tape.mean(lq)?;
        tape.sub(a, b)
    }

    /// `mean ln r(z_post)`.
    pub fn generator_penalty_tape(&self, tape: &mut Tape, bound: &[Var], z_post: Var) -> Result<Var> {
        let lq = self.log_r_tape(tape, bound, z_post)?;
        tape.mean(lq)
    }

    fn check(&self, z: &Tensor) -> Result<()> {
        if z.rank() != 2 || z.cols() != self.dim() || z.rows() == 0 {
            return contract(format!("critic batch {:?} does not have {} columns", z.shape(), self.dim()));
        }
        Ok(())
    }

    pub fn log_r(&self, z: &Tensor) -> Result<Vec<f64>> {
        self.check(z)?;
        Ok(self.net.eval(z)?.data().iter().map(|v| v.clamp(-EXP_CLAMP, EXP_CLAMP)).collect())
    }

    pub fn critic_loss(&self, z_prior: &Tensor, z_post: &Tensor) -> Result<f64> {
        let r = mean(self.log_r(z_prior)?.iter().map(|v| v.exp()));
        Ok(r - mean(self.log_r(z_post)?.into_iter()))
    }

    pub fn generator_penalty(&self, z_post: &Tensor) -> Result<f64> {
        Ok(mean(self.log_r(z_post)?.into_iter()))
    }

    /// Dual lower bound on `KL(q ‖ p)` with the additive constant restored.
    pub fn kl_estimate(&self, z_prior: &Tensor, z_post: &Tensor) -> Result<f64> {
        Ok(1.0 - self.critic_loss(z_prior, z_post)?)
    }

    /// One descent step on the critic loss; returns the loss before the step.
    pub fn descend(&mut self, opt: &mut RmspropState, z_prior: &Tensor, z_post: &Tensor) -> Result<f64> {
        self.check(z_prior)?;
        self.check(z_post)?;
        let mut tape = Tape::new();
        let bound = self.net.bind(&mut tape, true);
        let zp = tape.constant(z_prior.clone());
        let zq = tape.constant(z_post.clone());
        let loss = self.critic_loss_tape(&mut tape, &bound, zp, zq)?;
        let mut g = tape.backward(loss)?;
        let grads: Vec<Tensor> = bound.iter().map(|&v| g.take(v)).collect();
        opt.apply(&mut self.net.params, &grads)?;
        Ok(tape.value(loss).item())
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_diff_check;
    use crate::flow::normal_tensor;
    use crate::nn::rng_from_seed;

    fn constant_critic(p: usize, raw: f64) -> Critic {
        let mut c = Critic::new(p, &[8, 8], 0).unwrap();
        for t in c.net.params.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let last = c.net.params.len() - 1;
        c.net.params[last].data_mut()[0] = raw;
        c
    }

    #[test]
    fn trivial_critic_values() {
        let z = normal_tensor(10, 2, &mut rng_from_seed(1));
        let c = constant_critic(2, 0.0);
        assert_eq!(c.critic_loss(&z, &z).unwrap(), 1.0);
        assert_eq!(c.generator_penalty(&z).unwrap(), 0.0);
        assert_eq!(c.kl_estimate(&z, &z).unwrap(), 0.0);
        assert_eq!(constant_critic(2, 1.0).generator_penalty(&z).unwrap(), 1.0);
        let c = Critic::new(2, &[8, 8], 3).unwrap();
        let big = z.map(|v| 1e3 * v);
        assert!(c.log_r(&big).unwrap().iter().all(|v| v.exp() > 0.0));
    }

    #[test]
    fn stationary_at_trivial_critic_on_equal_batches() {
        // d loss / d raw-bias = mean r − 1 = 0 when r ≡ 1 and batches coincide
        let z = normal_tensor(16, 2, &mut rng_from_seed(2));
        let c = constant_critic(2, 0.0);
        let mut tape = Tape::new();
        let b = c.net.bind(&mut tape, true);
        let zp = tape.constant(z.clone());
        let zq = tape.constant(z);
        let loss = c.critic_loss_tape(&mut tape, &b, zp, zq).unwrap();
        let g = tape.backward(loss).unwrap();
        assert!(g.wrt(*b.last().unwrap()).item().abs() < 1e-15);
    }

    #[test]
    fn generator_penalty_gradient_reaches_samples() {
        let c = Critic::new(3, &[8, 8], 5).unwrap();
        let z = normal_tensor(2, 3, &mut rng_from_seed(3));
        let f = |tape: &mut Tape, zv: Var| {
            let b = c.net.bind(tape, false);
            c.generator_penalty_tape(tape, &b, zv)
        };
        assert!(finite_diff_check(f, &z, 1e-6).unwrap() < 1e-6);
        let mut tape = Tape::new();
        let b = c.net.bind(&mut tape, false);
        let zv = tape.var(z);
        let pen = c.generator_penalty_tape(&mut tape, &b, zv).unwrap();
        let g = tape.backward(pen).unwrap();
        assert!(g.wrt(zv).data().iter().any(|v| v.abs() > 0.0));
    }

    #[test]
    fn descent_reduces_loss_on_fixed_batch() {
        let mut rng = rng_from_seed(4);
        let zp = normal_tensor(64, 2, &mut rng);
        let zq = normal_tensor(64, 2, &mut rng).map(|v| v + 0.8);
        let mut c = Critic::new(2, &[16, 16], 6).unwrap();
        let mut opt = RmspropState::new(1e-3, &c.net.params);
        let first = c.critic_loss(&zp, &zq).unwrap();
        for _ in 0..10 {
            c.descend(&mut opt, &zp, &zq).unwrap();
        }
        assert!(c.critic_loss(&zp, &zq).unwrap() < first);
    }

    #[test]
    fn gaussian_shift_kl() {
        let mut rng = rng_from_seed(7);
        let mut c = Critic::new(1, &[32, 32], 8).unwrap();
        let mut opt = RmspropState::new(1e-3, &c.net.params);
        for _ in 0..2000 {
            let zp = normal_tensor(200, 1, &mut rng);
            let zq = normal_tensor(200, 1, &mut rng).map(|v| v + 1.0);
            c.descend(&mut opt, &zp, &zq).unwrap();
        }
        let zp = normal_tensor(100_000, 1, &mut rng);
        let zq = normal_tensor(100_000, 1, &mut rng).map(|v| v + 1.0);
        let kl = c.kl_estimate(&zp, &zq).unwrap();
        assert!((kl - 0.5).abs() < 0.075, "kl={kl}");
    }
}
