//! Reverse-mode automatic differentiation over small dense `f64` tensors.
//!
//! A [`Tape`] records every primitive applied to [`Var`] handles. Calling
//! [`Tape::backward`] on a scalar sweeps the tape once in reverse and
//! returns [`Gradients`] for every leaf created with [`Tape::var`].
//! Reductions sum left to right, so replaying a tape on identical inputs
//! gives bit-identical values and gradients.

mod tape;
mod tensor;

pub use tape::{sigmoid, softplus, Gradients, Primitive, Tape, Var};
pub use tensor::{broadcast_shape, Tensor};
pub(crate) use tensor::gemm;

use crate::error::{domain, Result};

/// Compare the tape gradient of a scalar function with central differences.
///
/// Returns `max_i |analytic_i − numeric_i| / max(1, |numeric_i|)`.
pub fn finite_diff_check<F>(f: F, x: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.var(x.clone());
    let out = f(&mut tape, xv)?;
    let analytic = tape.backward(out)?.wrt(xv);

    let eval = |point: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.constant(point);
        let out = f(&mut tape, v)?;
        let value = tape.value(out).item();
        if !value.is_finite() {
            return domain("objective is not finite during finite differencing");
        }
        Ok(value)
    };

    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += step;
        let mut minus = x.clone();
        minus.data_mut()[i] -= step;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * step);
        let err = (analytic.data()[i] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_by_hand() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let b = tape.constant(t(&[&[1.0], &[1.0]]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[3.0, 7.0]);
        assert_eq!(tape.value(c).shape(), &[2, 1]);
    }

    #[test]
    fn scalar_identities() {
        let mut tape = Tape::new();
        let zero = tape.var(Tensor::scalar(0.0));
        let e = tape.exp(zero).unwrap();
        assert_eq!(tape.value(e).item(), 1.0);
        let sp = tape.softplus(zero).unwrap();
        assert!((tape.value(sp).item() - 0.693147).abs() < 1e-6);
        let g = tape.backward(e).unwrap();
        assert_eq!(g.wrt(zero).item(), 1.0);
    }

    #[test]
    fn product_rule() {
        let mut tape = Tape::new();
        let x = tape.var(Tensor::scalar(2.0));
        let y = tape.var(Tensor::scalar(3.0));
        let p = tape.mul(x, y).unwrap();
        let g = tape.backward(p).unwrap();
        assert_eq!(g.wrt(x).item(), 3.0);
        assert_eq!(g.wrt(y).item(), 2.0);
    }

    #[test]
    fn unreachable_leaf_gets_zero() {
        let mut tape = Tape::new();
        let x = tape.var(Tensor::row(&[1.0, 2.0]));
        let y = tape.var(Tensor::row(&[5.0, 6.0]));
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(y).data(), &[0.0, 0.0]);
        assert_eq!(g.wrt(x).data(), &[1.0, 1.0]);
    }

    #[test]
    fn backward_needs_scalar() {
        let mut tape = Tape::new();
        let x = tape.var(Tensor::row(&[1.0, 2.0]));
        let y = tape.exp(x).unwrap();
        assert!(matches!(tape.backward(y), Err(crate::VieError::Contract(_))));
    }

    #[test]
    fn domain_errors() {
        let mut tape = Tape::new();
        let x = tape.var(Tensor::row(&[1.0, 0.0]));
        assert!(matches!(tape.log(x), Err(crate::VieError::Domain(_))));
        let one = tape.var(Tensor::row(&[1.0, 1.0]));
        assert!(matches!(tape.div(one, x), Err(crate::VieError::Domain(_))));
        let big = tape.var(Tensor::scalar(1000.0));
        assert!(matches!(tape.exp(big), Err(crate::VieError::Domain(_))));
    }

    #[test]
    fn shape_mismatch_is_contract_violation() {
        let mut tape = Tape::new();
        let a = tape.var(Tensor::zeros(&[2, 3]));
        let b = tape.var(Tensor::zeros(&[2, 3]));
        assert!(matches!(tape.matmul(a, b), Err(crate::VieError::Contract(_))));
        let c = tape.var(Tensor::zeros(&[3, 2]));
        assert!(matches!(tape.add(a, c), Err(crate::VieError::Contract(_))));
    }

    #[test]
    fn square_gradient_check() {
        let err = finite_diff_check(|tp, x| tp.mul(x, x), &Tensor::scalar(3.0), 1e-6).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn relu_sum_gradient_check() {
        let x = Tensor::row(&[-1.3, 0.4, 2.0, -0.2]);
        let err = finite_diff_check(
            |tp, x| {
                let r = tp.relu(x)?;
                tp.sum(r)
            },
            &x,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn zero_upstream_gives_exact_zeros() {
        let mut tape = Tape::new();
        let x = tape.var(Tensor::row(&[0.3, -0.7]));
        let e = tape.exp(x).unwrap();
        let z = tape.scale(e, 0.0).unwrap();
        let s = tape.sum(z).unwrap();
        let g = tape.backward(s).unwrap();
        assert!(g.wrt(x).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn clamp_blocks_gradient_outside_bounds() {
        let mut tape = Tape::new();
        let x = tape.var(Tensor::row(&[-5.0, 0.5, 5.0]));
        let c = tape.clamp(x, -1.0, 1.0).unwrap();
        let s = tape.sum(c).unwrap();
        assert_eq!(tape.value(c).data(), &[-1.0, 0.5, 1.0]);
        assert_eq!(tape.backward(s).unwrap().wrt(x).data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn log1p_ratio_series_matches_closed_form() {
        let mut tape = Tape::new();
        let xi = tape.var(Tensor::row(&[1e-5, 2e-4, 0.5]));
        let t = tape.var(Tensor::row(&[1.5, 1.5, 1.5]));
        let f = tape.log1p_ratio(xi, t).unwrap();
        let v = tape.value(f).data().to_vec();
        assert!((v[0] - (1e-5f64 * 1.5).ln_1p() / 1e-5).abs() < 1e-12);
        assert!((v[1] - (2e-4f64 * 1.5).ln_1p() / 2e-4).abs() < 1e-12);
        assert!((v[2] - (0.75f64).ln_1p() / 0.5).abs() < 1e-15);
    }
}
