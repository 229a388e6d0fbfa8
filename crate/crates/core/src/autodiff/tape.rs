use super::tensor::{broadcast_shape, gemm, gemm_nt, gemm_tn, Tensor};
use crate::error::{contract, domain, Result};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Differentiable primitive operations understood by the tape.
#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    Add,
    Sub,
    Mul,
    Div,
    MatMul,
    Exp,
    Log,
    Neg,
    Relu,
    Softplus,
    Sigmoid,
    /// Sum of every element, producing a `1×1` tensor.
    Sum,
    /// Mean of every element, producing a `1×1` tensor.
    Mean,
    /// Rank-2 sum along one axis, keeping the reduced axis with extent 1.
    SumAxis(usize),
    /// Rank-2 concatenation along an axis.
    Concat(usize),
    /// Rank-2 slice `[start, start + len)` along an axis.
    Slice { axis: usize, start: usize, len: usize },
    Broadcast(Vec<usize>),
    Reshape(Vec<usize>),
    /// Elementwise clamp; the gradient is zero outside `[lo, hi]`.
    Clamp { lo: f64, hi: f64 },
    /// `ln(1 − e^{−x})` for `x > 0`.
    Log1mExpNeg,
    /// `ln(1 + ξ t) / ξ` for operands `(ξ, t)`, with its `ξ → 0` limit `t`.
    Log1pRatio,
}

#[derive(Debug)]
enum NodeOp {
    Leaf,
    Op(Primitive),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: NodeOp,
    parents: Vec<usize>,
    requires_grad: bool,
}

/// Below this |ξ| the `Log1pRatio` primitive switches to a series expansion.
const RATIO_SERIES_XI: f64 = 1e-4;

/// Reverse-mode recording of tensor computations.
///
/// Nodes are appended in evaluation order, so parents always precede their
/// children and a single reverse sweep visits every node once.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` does not reach the output.
    pub fn wrt(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        self.grads[v.0].take().unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record a differentiable leaf.
    pub fn var(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    /// Record a leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: NodeOp::Leaf, parents: Vec::new(), requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Evaluate `kind` on `inputs` and record the result.
    pub fn apply_primitive(&mut self, kind: Primitive, inputs: &[Var]) -> Result<Var> {
        use Primitive::*;
        let arity = match kind {
            Add | Sub | Mul | Div | MatMul | Log1pRatio => Some(2),
            Concat(_) => None,
            _ => Some(1),
        };
        if let Some(n) = arity {
            if inputs.len() != n {
                return contract(format!("{:?} takes {} inputs, got {}", kind, n, inputs.len()));
            }
        }
        if inputs.is_empty() {
            return contract(format!("{:?} needs at least one input", kind));
        }
        let mut inputs = inputs.to_vec();
        if matches!(kind, Add | Sub | Mul | Div | Log1pRatio) {
            let target = broadcast_shape(self.shape(inputs[0]), self.shape(inputs[1]))?;
            for v in inputs.iter_mut() {
                if self.shape(*v) != target.as_slice() {
                    *v = self.apply_primitive(Broadcast(target.clone()), &[*v])?;
                }
            }
        }
        let value = self.forward(&kind, &inputs)?;
        if !value.all_finite() {
            return domain(format!("{:?} produced a non-finite value", kind));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op: NodeOp::Op(kind),
            parents: inputs.iter().map(|v| v.0).collect(),
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn forward(&self, kind: &Primitive, inputs: &[Var]) -> Result<Tensor> {
        use Primitive::*;
        let x = self.value(inputs[0]);
        let zip = |f: &dyn Fn(f64, f64) -> f64| -> Tensor {
            let y = self.value(inputs[1]);
            let data = x.data().iter().zip(y.data()).map(|(&a, &b)| f(a, b)).collect();
            Tensor::from_parts(x.shape().to_vec(), data)
        };
        let out = match kind {
            Add => zip(&|a, b| a + b),
            Sub => zip(&|a, b| a - b),
            Mul => zip(&|a, b| a * b),
            Div => {
                if self.value(inputs[1]).data().iter().any(|&b| b == 0.0) {
                    return domain("division by zero");
                }
                zip(&|a, b| a / b)
            }
            MatMul => {
                let y = self.value(inputs[1]);
                if x.rank() != 2 || y.rank() != 2 || x.cols() != y.rows() {
                    return contract(format!("matmul of {:?} and {:?}", x.shape(), y.shape()));
                }
                let (m, k, n) = (x.rows(), x.cols(), y.cols());
                Tensor::from_parts(vec![m, n], gemm(m, k, n, x.data(), y.data()))
            }
            Exp => x.map(f64::exp),
            Log => {
                if x.data().iter().any(|&v| v <= 0.0) {
                    return domain("log of a non-positive value");
                }
                x.map(f64::ln)
            }
            Neg => x.map(|v| -v),
            Relu => x.map(|v| v.max(0.0)),
            Softplus => x.map(softplus),
            Sigmoid => x.map(sigmoid),
            Sum => Tensor::scalar(x.data().iter().sum()),
            Mean => {
                if x.is_empty() {
                    return contract("mean of an empty tensor");
                }
                Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64)
            }
            SumAxis(axis) => sum_axis(x, *axis)?,
            Concat(axis) => {
                let parts: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
                concat(&parts, *axis)?
            }
            Slice { axis, start, len } => slice(x, *axis, *start, *len)?,
            Broadcast(shape) => x.broadcast_to(shape)?,
            Reshape(shape) => x.reshape(shape)?,
            Clamp { lo, hi } => x.map(|v| v.clamp(*lo, *hi)),
            Log1mExpNeg => {
                if x.data().iter().any(|&v| v <= 0.0) {
                    return domain("ln(1 - exp(-x)) needs x > 0");
                }
                x.map(|v| (-(-v).exp_m1()).ln())
            }
            Log1pRatio => {
                let t = self.value(inputs[1]);
                if x.data().iter().zip(t.data()).any(|(&xi, &t)| 1.0 + xi * t <= 0.0) {
                    return domain("ln(1 + xi t) outside its support");
                }
                zip(&log1p_ratio)
            }
        };
        Ok(out)
    }

    /// Gradients of the scalar `output` with respect to every leaf.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).len() != 1 {
            return contract(format!(
                "backward needs a scalar output, got shape {:?}",
                self.shape(output)
            ));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        grads[output.0] = Some(Tensor::full(self.shape(output), 1.0));
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            let kind = match &node.op {
                NodeOp::Leaf => continue,
                NodeOp::Op(kind) => kind,
            };
            let Some(g) = grads[i].take() else { continue };
            let parent_grads = self.local_backward(kind, node, &g)?;
            for (&p, pg) in node.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !self.nodes[p].requires_grad {
                    continue;
                }
                match &mut grads[p] {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(pg.data()) {
                            *a += b;
                        }
                    }
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn local_backward(
        &self,
        kind: &Primitive,
        node: &Node,
        g: &Tensor,
    ) -> Result<Vec<Option<Tensor>>> {
        use Primitive::*;
        let pv = |k: usize| &self.nodes[node.parents[k]].value;
        let wants = |k: usize| self.nodes[node.parents[k]].requires_grad;
        let elementwise = |x: &Tensor, f: &dyn Fn(f64, f64) -> f64| -> Tensor {
            let data = g.data().iter().zip(x.data()).map(|(&g, &x)| f(g, x)).collect();
            Tensor::from_parts(g.shape().to_vec(), data)
        };
        let y = &node.value;
        let out = match kind {
            Add => vec![Some(g.clone()), Some(g.clone())],
            Sub => vec![Some(g.clone()), Some(g.map(|v| -v))],
            Mul => vec![
                wants(0).then(|| elementwise(pv(1), &|g, b| g * b)),
                wants(1).then(|| elementwise(pv(0), &|g, a| g * a)),
            ],
            Div => {
                let a = pv(0);
                let b = pv(1);
                let gb = wants(1).then(|| {
                    let data = g
                        .data()
                        .iter()
                        .zip(a.data().iter().zip(b.data()))
                        .map(|(&g, (&a, &b))| -g * a / (b * b))
                        .collect();
                    Tensor::from_parts(g.shape().to_vec(), data)
                });
                vec![wants(0).then(|| elementwise(b, &|g, b| g / b)), gb]
            }
            MatMul => {
                let a = pv(0);
                let b = pv(1);
                let (m, k, n) = (a.rows(), a.cols(), b.cols());
                vec![
                    wants(0)
                        .then(|| Tensor::from_parts(vec![m, k], gemm_nt(m, n, k, g.data(), b.data()))),
                    wants(1)
                        .then(|| Tensor::from_parts(vec![k, n], gemm_tn(k, m, n, a.data(), g.data()))),
                ]
            }
            Exp => vec![Some(elementwise(y, &|g, y| g * y))],
            Log => vec![Some(elementwise(pv(0), &|g, x| g / x))],
            Neg => vec![Some(g.map(|v| -v))],
            Relu => vec![Some(elementwise(pv(0), &|g, x| if x > 0.0 { g } else { 0.0 }))],
            Softplus => vec![Some(elementwise(pv(0), &|g, x| g * sigmoid(x)))],
            Sigmoid => vec![Some(elementwise(y, &|g, y| g * y * (1.0 - y)))],
            Sum => vec![Some(Tensor::full(pv(0).shape(), g.item()))],
            Mean => {
                let x = pv(0);
                vec![Some(Tensor::full(x.shape(), g.item() / x.len() as f64))]
            }
            SumAxis(_) => vec![Some(g.broadcast_to(pv(0).shape())?)],
            Concat(axis) => {
                let mut start = 0;
                let mut parts = Vec::with_capacity(node.parents.len());
                for k in 0..node.parents.len() {
                    let len = pv(k).shape()[*axis];
                    parts.push(wants(k).then(|| slice(g, *axis, start, len)).transpose()?);
                    start += len;
                }
                parts
            }
            Slice { axis, start, len } => {
                let x = pv(0);
                vec![Some(scatter_slice(g, x.shape(), *axis, *start, *len))]
            }
            Broadcast(_) => vec![Some(g.sum_to(pv(0).shape())?)],
            Reshape(_) => vec![Some(g.reshape(pv(0).shape())?)],
            Clamp { lo, hi } => vec![Some(elementwise(pv(0), &|g, x| {
                if x >= *lo && x <= *hi {
                    g
                } else {
                    0.0
                }
            }))],
            Log1mExpNeg => vec![Some(elementwise(pv(0), &|g, x| g / x.exp_m1()))],
            Log1pRatio => {
                let xi = pv(0);
                let t = pv(1);
                let (mut gxi, mut gt) = (Vec::with_capacity(g.len()), Vec::with_capacity(g.len()));
                for ((&g, &xi), &t) in g.data().iter().zip(xi.data()).zip(t.data()) {
                    let (dxi, dt) = log1p_ratio_grad(xi, t);
                    gxi.push(g * dxi);
                    gt.push(g * dt);
                }
                vec![
                    Some(Tensor::from_parts(g.shape().to_vec(), gxi)),
                    Some(Tensor::from_parts(g.shape().to_vec(), gt)),
                ]
            }
        };
        Ok(out)
    }

    // Convenience wrappers.

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply_primitive(Primitive::Add, &[a, b])
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply_primitive(Primitive::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply_primitive(Primitive::Mul, &[a, b])
    }
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply_primitive(Primitive::Div, &[a, b])
    }
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply_primitive(Primitive::MatMul, &[a, b])
    }
    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.apply_primitive(Primitive::Exp, &[a])
    }
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.apply_primitive(Primitive::Log, &[a])
    }
    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.apply_primitive(Primitive::Neg, &[a])
    }
    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.apply_primitive(Primitive::Relu, &[a])
    }
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.apply_primitive(Primitive::Softplus, &[a])
    }
    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.apply_primitive(Primitive::Sigmoid, &[a])
    }
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.apply_primitive(Primitive::Sum, &[a])
    }
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.apply_primitive(Primitive::Mean, &[a])
    }
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.apply_primitive(Primitive::SumAxis(axis), &[a])
    }
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        self.apply_primitive(Primitive::Concat(axis), parts)
    }
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        self.apply_primitive(Primitive::Slice { axis, start, len }, &[a])
    }
    pub fn broadcast(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        self.apply_primitive(Primitive::Broadcast(shape.to_vec()), &[a])
    }
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        self.apply_primitive(Primitive::Reshape(shape.to_vec()), &[a])
    }
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        self.apply_primitive(Primitive::Clamp { lo, hi }, &[a])
    }
    pub fn log1m_exp_neg(&mut self, a: Var) -> Result<Var> {
        self.apply_primitive(Primitive::Log1mExpNeg, &[a])
    }
    pub fn log1p_ratio(&mut self, xi: Var, t: Var) -> Result<Var> {
        self.apply_primitive(Primitive::Log1pRatio, &[xi, t])
    }

    /// `a * c` for a constant scalar `c`.
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let s = self.scalar(c);
        self.mul(a, s)
    }

    /// `a + c` for a constant scalar `c`.
    pub fn shift(&mut self, a: Var, c: f64) -> Result<Var> {
        let s = self.scalar(c);
        self.add(a, s)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log1p_ratio(xi: f64, t: f64) -> f64 {
    if xi.abs() < RATIO_SERIES_XI {
        t - xi * t * t / 2.0 + xi * xi * t * t * t / 3.0
    } else {
        (xi * t).ln_1p() / xi
    }
}

/// Partials `(∂/∂ξ, ∂/∂t)` of `ln(1 + ξ t) / ξ`.
fn log1p_ratio_grad(xi: f64, t: f64) -> (f64, f64) {
    let dt = 1.0 / (1.0 + xi * t);
    let dxi = if xi.abs() < RATIO_SERIES_XI {
        -t * t / 2.0 + 2.0 * xi * t * t * t / 3.0
    } else {
        (xi * t / (1.0 + xi * t) - (xi * t).ln_1p()) / (xi * xi)
    };
    (dxi, dt)
}

fn require_rank2(x: &Tensor, what: &str) -> Result<()> {
    if x.rank() != 2 {
        return contract(format!("{} needs a rank-2 tensor, got {:?}", what, x.shape()));
    }
    Ok(())
}

fn sum_axis(x: &Tensor, axis: usize) -> Result<Tensor> {
    require_rank2(x, "sum_axis")?;
    let (r, c) = (x.rows(), x.cols());
    match axis {
        0 => {
            let mut out = vec![0.0; c];
            for i in 0..r {
                for (o, v) in out.iter_mut().zip(x.row_slice(i)) {
                    *o += v;
                }
            }
            Ok(Tensor::from_parts(vec![1, c], out))
        }
        1 => {
            let out = (0..r).map(|i| x.row_slice(i).iter().sum()).collect();
            Ok(Tensor::from_parts(vec![r, 1], out))
        }
        _ => contract(format!("axis {} out of range for rank 2", axis)),
    }
}

fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    for p in parts {
        require_rank2(p, "concat")?;
    }
    match axis {
        0 => {
            let c = parts[0].cols();
            if parts.iter().any(|p| p.cols() != c) {
                return contract("concat along rows needs equal column counts");
            }
            let r = parts.iter().map(|p| p.rows()).sum();
            let data = parts.iter().flat_map(|p| p.data().iter().copied()).collect();
            Ok(Tensor::from_parts(vec![r, c], data))
        }
        1 => {
            let r = parts[0].rows();
            if parts.iter().any(|p| p.rows() != r) {
                return contract("concat along columns needs equal row counts");
            }
            let c: usize = parts.iter().map(|p| p.cols()).sum();
            let mut data = Vec::with_capacity(r * c);
            for i in 0..r {
                for p in parts {
                    data.extend_from_slice(p.row_slice(i));
                }
            }
            Ok(Tensor::from_parts(vec![r, c], data))
        }
        _ => contract(format!("axis {} out of range for rank 2", axis)),
    }
}

fn slice(x: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    require_rank2(x, "slice")?;
    let (r, c) = (x.rows(), x.cols());
    match axis {
        0 if start + len <= r => {
            Ok(Tensor::from_parts(vec![len, c], x.data()[start * c..(start + len) * c].to_vec()))
        }
        1 if start + len <= c => {
            let mut data = Vec::with_capacity(r * len);
            for i in 0..r {
                data.extend_from_slice(&x.row_slice(i)[start..start + len]);
            }
            Ok(Tensor::from_parts(vec![r, len], data))
        }
        _ => contract(format!("slice {}..{} on axis {} of {:?}", start, start + len, axis, x.shape())),
    }
}

fn scatter_slice(g: &Tensor, shape: &[usize], axis: usize, start: usize, len: usize) -> Tensor {
    let mut out = Tensor::zeros(shape);
    let c = shape[1];
    if axis == 0 {
        out.data_mut()[start * c..(start + len) * c].copy_from_slice(g.data());
    } else {
        for i in 0..shape[0] {
            out.data_mut()[i * c + start..i * c + start + len].copy_from_slice(g.row_slice(i));
        }
    }
    out
}
