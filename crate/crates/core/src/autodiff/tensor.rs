use crate::error::{contract, Result};

/// Dense row-major array of `f64` values.
///
/// A `Tensor` is a plain value. Recording it on a [`Tape`](super::Tape)
/// yields a [`Var`](super::Var), the tape reference used by differentiable
/// operations.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return contract(format!(
                "shape {:?} holds {} values but {} were given",
                shape,
                n,
                data.len()
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![1, 1], data: vec![value] }
    }

    /// Row vector `1 × n`.
    pub fn row(values: &[f64]) -> Self {
        Tensor { shape: vec![1, values.len()], data: values.to_vec() }
    }

    /// Column vector `n × 1`.
    pub fn column(values: &[f64]) -> Self {
        Tensor { shape: vec![values.len(), 1], data: values.to_vec() }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return contract("ragged rows");
        }
        Ok(Tensor { shape: vec![r, c], data: rows.concat() })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Rows of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Columns of a rank-2 tensor.
    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.shape[1];
        &self.data[r * c..(r + 1) * c]
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::new(shape.to_vec(), self.data.clone())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Materialize this tensor broadcast to `target` (numpy rules).
    pub fn broadcast_to(&self, target: &[usize]) -> Result<Tensor> {
        if self.shape == target {
            return Ok(self.clone());
        }
        let src = aligned_shape(&self.shape, target.len())?;
        for (s, t) in src.iter().zip(target) {
            if *s != *t && *s != 1 {
                return contract(format!("cannot broadcast {:?} to {:?}", self.shape, target));
            }
        }
        if self.data.len() == 1 {
            return Ok(Tensor::full(target, self.data[0]));
        }
        if let ([r0, c0], [r, c]) = (src.as_slice(), target) {
            let mut out = Vec::with_capacity(r * c);
            if *r0 == 1 {
                for _ in 0..*r {
                    out.extend_from_slice(&self.data);
                }
            } else {
                debug_assert_eq!(*c0, 1);
                for &v in &self.data {
                    out.extend(std::iter::repeat(v).take(*c));
                }
            }
            return Ok(Tensor { shape: target.to_vec(), data: out });
        }
        let src_strides = strides(&src);
        let n: usize = target.iter().product();
        let mut out = Vec::with_capacity(n);
        let mut idx = vec![0usize; target.len()];
        for _ in 0..n {
            let off: usize = idx
                .iter()
                .zip(&src)
                .zip(&src_strides)
                .map(|((&i, &s), &st)| if s == 1 { 0 } else { i * st })
                .sum();
            out.push(self.data[off]);
            increment(&mut idx, target);
        }
        Ok(Tensor { shape: target.to_vec(), data: out })
    }

    /// Sum this tensor down to `target`, the adjoint of [`broadcast_to`](Self::broadcast_to).
    pub fn sum_to(&self, target: &[usize]) -> Result<Tensor> {
        if self.shape == target {
            return Ok(self.clone());
        }
        let dst = aligned_shape(target, self.shape.len())?;
        let n_dst: usize = dst.iter().product();
        if n_dst == 1 {
            let s = self.data.iter().sum();
            return Ok(Tensor { shape: target.to_vec(), data: vec![s] });
        }
        if let ([r0, _], [_, c]) = (dst.as_slice(), self.shape.as_slice()) {
            // same accumulation order as the general path
            let mut out = vec![0.0; n_dst];
            if *r0 == 1 {
                for row in self.data.chunks(*c) {
                    for (o, v) in out.iter_mut().zip(row) {
                        *o += v;
                    }
                }
            } else {
                for (o, row) in out.iter_mut().zip(self.data.chunks(*c)) {
                    for v in row {
                        *o += v;
                    }
                }
            }
            return Ok(Tensor { shape: target.to_vec(), data: out });
        }
        let dst_strides = strides(&dst);
        let mut out = vec![0.0; n_dst];
        let mut idx = vec![0usize; self.shape.len()];
        for &v in &self.data {
            let off: usize = idx
                .iter()
                .zip(&dst)
                .zip(&dst_strides)
                .map(|((&i, &s), &st)| if s == 1 { 0 } else { i * st })
                .sum();
            out[off] += v;
            increment(&mut idx, &self.shape);
        }
        Ok(Tensor { shape: target.to_vec(), data: out })
    }
}

/// Broadcast result shape of two operands.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let a2 = aligned_shape(a, rank)?;
    let b2 = aligned_shape(b, rank)?;
    a2.iter()
        .zip(&b2)
        .map(|(&x, &y)| match (x, y) {
            _ if x == y => Ok(x),
            (1, _) => Ok(y),
            (_, 1) => Ok(x),
            _ => contract(format!("shapes {:?} and {:?} are not broadcastable", a, b)),
        })
        .collect()
}

fn aligned_shape(shape: &[usize], rank: usize) -> Result<Vec<usize>> {
    if shape.len() > rank {
        return contract(format!("shape {:?} has rank above {}", shape, rank));
    }
    let mut out = vec![1; rank - shape.len()];
    out.extend_from_slice(shape);
    Ok(out)
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut st = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        st[i] = st[i + 1] * shape[i + 1];
    }
    st
}

fn increment(idx: &mut [usize], shape: &[usize]) {
    for d in (0..idx.len()).rev() {
        idx[d] += 1;
        if idx[d] < shape[d] {
            return;
        }
        idx[d] = 0;
    }
}

/// `c = a · b` for row-major `m×k` and `k×n` buffers.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: buffer lengths match the declared dimensions and strides.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), n as isize, 1, 0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
    c
}

/// `c = aᵀ · b` where `a` is stored `k×m` and `b` is `k×n`.
pub(crate) fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: `a` is k×m row-major, read through swapped strides.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), 1, m as isize, b.as_ptr(), n as isize, 1, 0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
    c
}

/// `c = a · bᵀ` where `a` is `m×k` and `b` is stored `n×k`.
pub(crate) fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: `b` is n×k row-major, read through swapped strides.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), 1, k as isize, 0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
    c
}
