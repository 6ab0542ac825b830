//! Tape-based reverse-mode automatic differentiation.
//!
//! Every operation appends a node to a [`Tape`]; node ids increase strictly, so
//! the recorded graph is acyclic and already in topological order. [`Tape::backward`]
//! is a single reverse sweep over that order. Node values are never mutated after
//! they are recorded.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Differentiable operations. Shape rules are given per variant.
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    /// `a + b`, identical shapes.
    Add,
    /// `a - b`, identical shapes.
    Sub,
    /// `a * b` elementwise, identical shapes.
    Mul,
    /// `a + c` for a constant scalar `c`.
    AddScalar(f64),
    /// `a * c` for a constant scalar `c`.
    MulScalar(f64),
    /// `a[.., k] + b[k]`: bias broadcast over every leading index.
    AddRow,
    /// `[n, k] x [k, m] -> [n, m]`.
    MatMul,
    /// Sum of all entries, producing a scalar of shape `[]`.
    Sum,
    /// Sum over one axis, which is removed from the shape.
    SumAxis(usize),
    /// Mean over one (non-empty) axis, which is removed from the shape.
    MeanAxis(usize),
    /// Inserts a new axis of the given length, repeating the input along it.
    Broadcast { axis: usize, size: usize },
    /// Stacks identically shaped inputs along a new axis.
    Stack(usize),
    /// `ln(0.5 e^x + 0.5)`, elementwise.
    ShiftedSoftplus,
    /// `|x|`, elementwise; the derivative at 0 is taken as 0.
    Abs,
    /// `x^2`, elementwise.
    Square,
    /// Concatenation along the last axis; all other dims must agree.
    Concat,
    /// Selects leading-dimension rows: `[n, ..] -> [len(idx), ..]`.
    Gather(Vec<usize>),
    /// Adds row `k` of the input into output row `indices[k]`:
    /// `[len(idx), ..] -> [rows, ..]`.
    ScatterAdd { indices: Vec<usize>, rows: usize },
}

impl OpKind {
    /// Every variant's [`OpKind::name`], in declaration order.
    pub const NAMES: [&'static str; 18] = [
        "add",
        "sub",
        "mul",
        "add_scalar",
        "mul_scalar",
        "add_row",
        "matmul",
        "sum",
        "sum_axis",
        "mean_axis",
        "broadcast",
        "stack",
        "shifted_softplus",
        "abs",
        "square",
        "concat",
        "gather",
        "scatter_add",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::AddScalar(_) => "add_scalar",
            OpKind::MulScalar(_) => "mul_scalar",
            OpKind::AddRow => "add_row",
            OpKind::MatMul => "matmul",
            OpKind::Sum => "sum",
            OpKind::SumAxis(_) => "sum_axis",
            OpKind::MeanAxis(_) => "mean_axis",
            OpKind::Broadcast { .. } => "broadcast",
            OpKind::Stack(_) => "stack",
            OpKind::ShiftedSoftplus => "shifted_softplus",
            OpKind::Abs => "abs",
            OpKind::Square => "square",
            OpKind::Concat => "concat",
            OpKind::Gather(_) => "gather",
            OpKind::ScatterAdd { .. } => "scatter_add",
        }
    }
}

#[derive(Debug)]
enum Origin {
    Leaf,
    Op(OpKind, Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    origin: Origin,
    requires_grad: bool,
}

/// Append-only record of a computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `var`, or `None` when `var` does not require
    /// gradients or is unreachable from the loss.
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf tensor with empty provenance.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Origin::Leaf, requires_grad)
    }

    /// Builds and records a leaf from raw parts.
    pub fn tensor_from(
        &mut self,
        shape: Vec<usize>,
        values: Vec<f64>,
        requires_grad: bool,
    ) -> Result<Var> {
        Ok(self.leaf(Tensor::new(shape, values)?, requires_grad))
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Scalar value of a one-element node.
    pub fn item(&self, var: Var) -> f64 {
        self.nodes[var.0].value.values()[0]
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// The operation that produced `var`, or `None` for leaves.
    pub fn op(&self, var: Var) -> Option<&OpKind> {
        match &self.nodes[var.0].origin {
            Origin::Leaf => None,
            Origin::Op(op, _) => Some(op),
        }
    }

    /// Parent ids recorded for `var` (empty for leaves).
    pub fn parents(&self, var: Var) -> &[Var] {
        match &self.nodes[var.0].origin {
            Origin::Leaf => &[],
            Origin::Op(_, parents) => parents,
        }
    }

    fn push(&mut self, value: Tensor, origin: Origin, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            origin,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Evaluates `op` on `inputs` and records the result.
    pub fn apply(&mut self, op: OpKind, inputs: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
        let out = forward(&op, &values)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(out, Origin::Op(op, inputs.to_vec()), requires_grad))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Mul, &[a, b])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.apply(OpKind::AddScalar(c), &[a])
    }

    pub fn mul_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.apply(OpKind::MulScalar(c), &[a])
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        self.apply(OpKind::AddRow, &[a, bias])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::MatMul, &[a, b])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Sum, &[a])
    }

    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.apply(OpKind::SumAxis(axis), &[a])
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.apply(OpKind::MeanAxis(axis), &[a])
    }

    pub fn broadcast(&mut self, a: Var, axis: usize, size: usize) -> Result<Var> {
        self.apply(OpKind::Broadcast { axis, size }, &[a])
    }

    pub fn stack(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        self.apply(OpKind::Stack(axis), inputs)
    }

    pub fn shifted_softplus(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::ShiftedSoftplus, &[a])
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Abs, &[a])
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Square, &[a])
    }

    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var> {
        self.apply(OpKind::Concat, inputs)
    }

    pub fn gather(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        self.apply(OpKind::Gather(indices.to_vec()), &[a])
    }

    pub fn scatter_add(&mut self, a: Var, indices: &[usize], rows: usize) -> Result<Var> {
        self.apply(
            OpKind::ScatterAdd {
                indices: indices.to_vec(),
                rows,
            },
            &[a],
        )
    }

    /// Reverse sweep from a scalar `loss`. Gradients of nodes used several
    /// times accumulate additively.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.len() != 1 || loss_value.shape().len() > 1 {
            return Err(Error::NonScalarLoss {
                shape: loss_value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            let Origin::Op(op, parents) = &node.origin else {
                continue;
            };
            let Some(upstream) = grads[id].take() else {
                continue;
            };
            let needs: Vec<bool> = parents
                .iter()
                .map(|p| self.nodes[p.0].requires_grad)
                .collect();
            let inputs: Vec<&Tensor> = parents.iter().map(|p| &self.nodes[p.0].value).collect();
            let parent_grads = backward_op(op, &inputs, &node.value, &upstream, &needs);
            for (parent, pg) in parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                match &mut grads[parent.0] {
                    Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, g)| *a += g),
                    slot @ None => *slot = Some(pg),
                }
            }
            // Keep gradients of leaves and of the loss' ancestors the caller may query.
            grads[id] = Some(upstream);
        }
        Ok(Gradients { grads })
    }
}

fn shape_err(op: &OpKind, lhs: &Tensor, rhs: &Tensor) -> Error {
    Error::Shape {
        op: op.name(),
        lhs: lhs.shape().to_vec(),
        rhs: rhs.shape().to_vec(),
    }
}

fn expect_arity(op: &OpKind, inputs: &[&Tensor], n: usize, expected: &'static str) -> Result<()> {
    if inputs.len() != n {
        return Err(Error::Arity {
            op: op.name(),
            expected,
            got: inputs.len(),
        });
    }
    Ok(())
}

fn axis_err(op: &OpKind, t: &Tensor, axis: usize) -> Error {
    Error::Shape {
        op: op.name(),
        lhs: t.shape().to_vec(),
        rhs: vec![axis],
    }
}

/// Splits a shape around `axis` into (outer, mid, inner) extents.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let mid = shape[axis];
    let inner = shape[axis + 1..].iter().product();
    (outer, mid, inner)
}

fn insert_axis(shape: &[usize], axis: usize, size: usize) -> Vec<usize> {
    let mut out = shape.to_vec();
    out.insert(axis, size);
    out
}

fn remove_axis(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut out = shape.to_vec();
    out.remove(axis);
    out
}

/// `ln(0.5 e^x + 0.5)` evaluated without overflow.
pub fn shifted_softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(0.5 * libm::expm1(-libm::fabs(x)))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

fn forward(op: &OpKind, inputs: &[&Tensor]) -> Result<Tensor> {
    match op {
        OpKind::Add | OpKind::Sub | OpKind::Mul => {
            expect_arity(op, inputs, 2, "2")?;
            let (a, b) = (inputs[0], inputs[1]);
            if a.shape() != b.shape() {
                return Err(shape_err(op, a, b));
            }
            let f: fn(f64, f64) -> f64 = match op {
                OpKind::Add => |x, y| x + y,
                OpKind::Sub => |x, y| x - y,
                _ => |x, y| x * y,
            };
            let values = a
                .values()
                .iter()
                .zip(b.values())
                .map(|(&x, &y)| f(x, y))
                .collect();
            Ok(Tensor::from_parts(a.shape().to_vec(), values))
        }
        OpKind::AddScalar(c) | OpKind::MulScalar(c) => {
            expect_arity(op, inputs, 1, "1")?;
            let a = inputs[0];
            let values = if matches!(op, OpKind::AddScalar(_)) {
                a.values().iter().map(|x| x + c).collect()
            } else {
                a.values().iter().map(|x| x * c).collect()
            };
            Ok(Tensor::from_parts(a.shape().to_vec(), values))
        }
        OpKind::AddRow => {
            expect_arity(op, inputs, 2, "2")?;
            let (a, b) = (inputs[0], inputs[1]);
            let k = match a.shape().last() {
                Some(&k) if b.shape() == [k] => k,
                _ => return Err(shape_err(op, a, b)),
            };
            let mut values = a.values().to_vec();
            if k > 0 {
                for row in values.chunks_mut(k) {
                    row.iter_mut().zip(b.values()).for_each(|(x, y)| *x += y);
                }
            }
            Ok(Tensor::from_parts(a.shape().to_vec(), values))
        }
        OpKind::MatMul => {
            expect_arity(op, inputs, 2, "2")?;
            let (a, b) = (inputs[0], inputs[1]);
            let (&[n, k], &[k2, m]) = (a.shape(), b.shape()) else {
                return Err(shape_err(op, a, b));
            };
            if k != k2 {
                return Err(shape_err(op, a, b));
            }
            let mut out = vec![0.0; n * m];
            matmul_into(a.values(), b.values(), &mut out, n, k, m);
            Ok(Tensor::from_parts(vec![n, m], out))
        }
        OpKind::Sum => {
            expect_arity(op, inputs, 1, "1")?;
            Ok(Tensor::scalar(inputs[0].values().iter().sum()))
        }
        OpKind::SumAxis(axis) | OpKind::MeanAxis(axis) => {
            expect_arity(op, inputs, 1, "1")?;
            let a = inputs[0];
            if *axis >= a.shape().len() {
                return Err(axis_err(op, a, *axis));
            }
            let (outer, mid, inner) = split_axis(a.shape(), *axis);
            let is_mean = matches!(op, OpKind::MeanAxis(_));
            if is_mean && mid == 0 {
                return Err(axis_err(op, a, *axis));
            }
            let mut out = vec![0.0; outer * inner];
            let av = a.values();
            for o in 0..outer {
                for s in 0..mid {
                    let src = &av[(o * mid + s) * inner..(o * mid + s + 1) * inner];
                    out[o * inner..(o + 1) * inner]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(x, y)| *x += y);
                }
            }
            if is_mean {
                let scale = mid as f64;
                out.iter_mut().for_each(|x| *x /= scale);
            }
            Ok(Tensor::from_parts(remove_axis(a.shape(), *axis), out))
        }
        OpKind::Broadcast { axis, size } => {
            expect_arity(op, inputs, 1, "1")?;
            let a = inputs[0];
            if *axis > a.shape().len() {
                return Err(axis_err(op, a, *axis));
            }
            let outer: usize = a.shape()[..*axis].iter().product();
            let inner: usize = a.shape()[*axis..].iter().product();
            let mut out = Vec::with_capacity(outer * size * inner);
            for o in 0..outer {
                let src = &a.values()[o * inner..(o + 1) * inner];
                for _ in 0..*size {
                    out.extend_from_slice(src);
                }
            }
            Ok(Tensor::from_parts(
                insert_axis(a.shape(), *axis, *size),
                out,
            ))
        }
        OpKind::Stack(axis) => {
            if inputs.is_empty() {
                return Err(Error::Arity {
                    op: op.name(),
                    expected: ">= 1",
                    got: 0,
                });
            }
            let first = inputs[0];
            if let Some(bad) = inputs.iter().find(|t| t.shape() != first.shape()) {
                return Err(shape_err(op, first, bad));
            }
            if *axis > first.shape().len() {
                return Err(axis_err(op, first, *axis));
            }
            let outer: usize = first.shape()[..*axis].iter().product();
            let inner: usize = first.shape()[*axis..].iter().product();
            let mut out = Vec::with_capacity(outer * inputs.len() * inner);
            for o in 0..outer {
                for t in inputs {
                    out.extend_from_slice(&t.values()[o * inner..(o + 1) * inner]);
                }
            }
            Ok(Tensor::from_parts(
                insert_axis(first.shape(), *axis, inputs.len()),
                out,
            ))
        }
        OpKind::ShiftedSoftplus | OpKind::Abs | OpKind::Square => {
            expect_arity(op, inputs, 1, "1")?;
            let a = inputs[0];
            let f: fn(f64) -> f64 = match op {
                OpKind::ShiftedSoftplus => shifted_softplus,
                OpKind::Abs => libm::fabs,
                _ => |x| x * x,
            };
            let values = a.values().iter().map(|&x| f(x)).collect();
            Ok(Tensor::from_parts(a.shape().to_vec(), values))
        }
        OpKind::Concat => {
            if inputs.is_empty() {
                return Err(Error::Arity {
                    op: op.name(),
                    expected: ">= 1",
                    got: 0,
                });
            }
            let first = inputs[0];
            let rank = first.shape().len();
            if rank == 0 {
                return Err(shape_err(op, first, first));
            }
            let lead = &first.shape()[..rank - 1];
            for t in inputs {
                if t.shape().len() != rank || &t.shape()[..rank - 1] != lead {
                    return Err(shape_err(op, first, t));
                }
            }
            let rows: usize = lead.iter().product();
            let widths: Vec<usize> = inputs.iter().map(|t| t.shape()[rank - 1]).collect();
            let total: usize = widths.iter().sum();
            let mut out = Vec::with_capacity(rows * total);
            for r in 0..rows {
                for (t, &w) in inputs.iter().zip(&widths) {
                    out.extend_from_slice(&t.values()[r * w..(r + 1) * w]);
                }
            }
            let mut shape = lead.to_vec();
            shape.push(total);
            Ok(Tensor::from_parts(shape, out))
        }
        OpKind::Gather(indices) => {
            expect_arity(op, inputs, 1, "1")?;
            let a = inputs[0];
            if a.shape().is_empty() {
                return Err(shape_err(op, a, a));
            }
            let (rows, w) = (a.rows(), a.row_len());
            let mut out = Vec::with_capacity(indices.len() * w);
            for &i in indices {
                if i >= rows {
                    return Err(Error::IndexOutOfRange {
                        what: "gather row",
                        index: i,
                        bound: rows,
                    });
                }
                out.extend_from_slice(&a.values()[i * w..(i + 1) * w]);
            }
            let mut shape = a.shape().to_vec();
            shape[0] = indices.len();
            Ok(Tensor::from_parts(shape, out))
        }
        OpKind::ScatterAdd { indices, rows } => {
            expect_arity(op, inputs, 1, "1")?;
            let a = inputs[0];
            if a.shape().is_empty() || a.rows() != indices.len() {
                return Err(Error::Shape {
                    op: op.name(),
                    lhs: a.shape().to_vec(),
                    rhs: vec![indices.len()],
                });
            }
            let w = a.row_len();
            let mut out = vec![0.0; rows * w];
            for (k, &i) in indices.iter().enumerate() {
                if i >= *rows {
                    return Err(Error::IndexOutOfRange {
                        what: "scatter row",
                        index: i,
                        bound: *rows,
                    });
                }
                out[i * w..(i + 1) * w]
                    .iter_mut()
                    .zip(&a.values()[k * w..(k + 1) * w])
                    .for_each(|(x, y)| *x += y);
            }
            let mut shape = a.shape().to_vec();
            shape[0] = *rows;
            Ok(Tensor::from_parts(shape, out))
        }
    }
}

/// Vector-Jacobian products for `op`. Entry `k` is `None` when input `k` needs no gradient.
fn backward_op(
    op: &OpKind,
    inputs: &[&Tensor],
    output: &Tensor,
    g: &[f64],
    needs: &[bool],
) -> Vec<Option<Vec<f64>>> {
    let mut out: Vec<Option<Vec<f64>>> = vec![None; inputs.len()];
    match op {
        OpKind::Add => {
            out[0] = needs[0].then(|| g.to_vec());
            out[1] = needs[1].then(|| g.to_vec());
        }
        OpKind::Sub => {
            out[0] = needs[0].then(|| g.to_vec());
            out[1] = needs[1].then(|| g.iter().map(|x| -x).collect());
        }
        OpKind::Mul => {
            let (a, b) = (inputs[0].values(), inputs[1].values());
            out[0] = needs[0].then(|| g.iter().zip(b).map(|(g, b)| g * b).collect());
            out[1] = needs[1].then(|| g.iter().zip(a).map(|(g, a)| g * a).collect());
        }
        OpKind::AddScalar(_) => out[0] = Some(g.to_vec()),
        OpKind::MulScalar(c) => out[0] = Some(g.iter().map(|x| x * c).collect()),
        OpKind::AddRow => {
            out[0] = needs[0].then(|| g.to_vec());
            if needs[1] {
                let k = inputs[1].len();
                let mut gb = vec![0.0; k];
                if k > 0 {
                    for row in g.chunks(k) {
                        gb.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                    }
                }
                out[1] = Some(gb);
            }
        }
        OpKind::MatMul => {
            let (a, b) = (inputs[0], inputs[1]);
            let (n, k, m) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            if needs[0] {
                // dA[i, p] = sum_j g[i, j] * B[p, j]
                let bv = b.values();
                let mut ga = vec![0.0; n * k];
                for i in 0..n {
                    let grow = &g[i * m..(i + 1) * m];
                    for p in 0..k {
                        let brow = &bv[p * m..(p + 1) * m];
                        ga[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                    }
                }
                out[0] = Some(ga);
            }
            if needs[1] {
                // dB[p, j] = sum_i A[i, p] * g[i, j]
                let av = a.values();
                let mut gb = vec![0.0; k * m];
                for i in 0..n {
                    let grow = &g[i * m..(i + 1) * m];
                    for p in 0..k {
                        let aip = av[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        gb[p * m..(p + 1) * m]
                            .iter_mut()
                            .zip(grow)
                            .for_each(|(x, y)| *x += aip * y);
                    }
                }
                out[1] = Some(gb);
            }
        }
        OpKind::Sum => out[0] = Some(vec![g[0]; inputs[0].len()]),
        OpKind::SumAxis(axis) | OpKind::MeanAxis(axis) => {
            let a = inputs[0];
            let (outer, mid, inner) = split_axis(a.shape(), *axis);
            let scale = if matches!(op, OpKind::MeanAxis(_)) {
                1.0 / mid as f64
            } else {
                1.0
            };
            let mut ga = Vec::with_capacity(a.len());
            for o in 0..outer {
                let src = &g[o * inner..(o + 1) * inner];
                for _ in 0..mid {
                    ga.extend(src.iter().map(|x| x * scale));
                }
            }
            out[0] = Some(ga);
        }
        OpKind::Broadcast { axis, size } => {
            let a = inputs[0];
            let (outer, mid, inner) = split_axis(output.shape(), *axis);
            debug_assert_eq!(mid, *size);
            let mut ga = vec![0.0; a.len()];
            for o in 0..outer {
                for s in 0..mid {
                    let src = &g[(o * mid + s) * inner..(o * mid + s + 1) * inner];
                    ga[o * inner..(o + 1) * inner]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(x, y)| *x += y);
                }
            }
            out[0] = Some(ga);
        }
        OpKind::Stack(axis) => {
            let (outer, k, inner) = split_axis(output.shape(), *axis);
            for (s, slot) in out.iter_mut().enumerate() {
                if !needs[s] {
                    continue;
                }
                let mut gs = Vec::with_capacity(outer * inner);
                for o in 0..outer {
                    gs.extend_from_slice(&g[(o * k + s) * inner..(o * k + s + 1) * inner]);
                }
                *slot = Some(gs);
            }
        }
        OpKind::ShiftedSoftplus => {
            let a = inputs[0].values();
            out[0] = Some(g.iter().zip(a).map(|(g, &x)| g * sigmoid(x)).collect());
        }
        OpKind::Abs => {
            let a = inputs[0].values();
            out[0] = Some(
                g.iter()
                    .zip(a)
                    .map(|(g, &x)| {
                        if x > 0.0 {
                            *g
                        } else if x < 0.0 {
                            -g
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            );
        }
        OpKind::Square => {
            let a = inputs[0].values();
            out[0] = Some(g.iter().zip(a).map(|(g, x)| 2.0 * x * g).collect());
        }
        OpKind::Concat => {
            let rank = output.shape().len();
            let total = output.shape()[rank - 1];
            let rows = output.len().checked_div(total).unwrap_or(0);
            let mut offset = 0;
            for (s, t) in inputs.iter().enumerate() {
                let w = t.shape()[rank - 1];
                if needs[s] {
                    let mut gs = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        gs.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                    }
                    out[s] = Some(gs);
                }
                offset += w;
            }
        }
        OpKind::Gather(indices) => {
            let a = inputs[0];
            let w = a.row_len();
            let mut ga = vec![0.0; a.len()];
            for (k, &i) in indices.iter().enumerate() {
                ga[i * w..(i + 1) * w]
                    .iter_mut()
                    .zip(&g[k * w..(k + 1) * w])
                    .for_each(|(x, y)| *x += y);
            }
            out[0] = Some(ga);
        }
        OpKind::ScatterAdd { indices, .. } => {
            let w = inputs[0].row_len();
            let mut ga = Vec::with_capacity(inputs[0].len());
            for &i in indices {
                ga.extend_from_slice(&g[i * w..(i + 1) * w]);
            }
            out[0] = Some(ga);
        }
    }
    out
}
