use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{contract, Result};

use super::init::init_params;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Fully connected stack. Parameters are stored flat as
/// `[w0, b0, w1, b1, …]` with `w_k` of shape `in × out` and `b_k` of `1 × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub params: Vec<Tensor>,
    pub activation: Activation,
}

impl Mlp {
    /// He-uniform initialized stack with layer widths `sizes`.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return contract(format!("invalid layer sizes {:?}", sizes));
        }
        Ok(Mlp { params: init_params(sizes, seed), activation: Activation::Relu })
    }

    pub fn from_params(params: Vec<Tensor>, activation: Activation) -> Result<Self> {
        if params.is_empty() || params.len() % 2 != 0 {
            return contract("an MLP needs weight/bias pairs");
        }
        for pair in params.chunks(2) {
            let (w, b) = (&pair[0], &pair[1]);
            if w.rank() != 2 || b.shape() != [1, w.cols()] {
                return contract(format!("weight {:?} and bias {:?} disagree", w.shape(), b.shape()));
            }
        }
        for k in 1..params.len() / 2 {
            if params[2 * k].rows() != params[2 * k - 2].cols() {
                return contract("consecutive layer widths disagree");
            }
        }
        Ok(Mlp { params, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.params[0].rows()
    }

    pub fn output_dim(&self) -> usize {
        self.params[self.params.len() - 2].cols()
    }

    pub fn depth(&self) -> usize {
        self.params.len() / 2
    }

    /// Record the parameters on `tape`; `trainable` controls gradient flow.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        bind_all(&self.params, tape, trainable)
    }

    pub fn forward(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<Var> {
        mlp_forward(tape, bound, self.activation, x)
    }

    /// Tape-free evaluation on a batch `n × in`.
    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound: Vec<Var> = self.params.iter().map(|p| tape.constant(p.clone())).collect();
        let xv = tape.constant(x.clone());
        let out = self.forward(&mut tape, &bound, xv)?;
        Ok(tape.value(out).clone())
    }
}

pub(crate) fn bind_all(params: &[Tensor], tape: &mut Tape, trainable: bool) -> Vec<Var> {
    params
        .iter()
        .map(|p| if trainable { tape.var(p.clone()) } else { tape.constant(p.clone()) })
        .collect()
}

/// Alternating affine maps and activations; the last affine map has no
/// activation.
pub fn mlp_forward(tape: &mut Tape, layers: &[Var], activation: Activation, x: Var) -> Result<Var> {
    let n_layers = layers.len() / 2;
    let in_dim = tape.shape(layers[0])[0];
    if tape.shape(x).len() != 2 || tape.shape(x)[1] != in_dim {
        return contract(format!("input {:?} does not match first layer width {}", tape.shape(x), in_dim));
    }
    let mut h = x;
    for k in 0..n_layers {
        let z = tape.matmul(h, layers[2 * k])?;
        h = tape.add(z, layers[2 * k + 1])?;
        if k + 1 < n_layers && activation == Activation::Relu {
            h = tape.relu(h)?;
        }
    }
    Ok(h)
}
