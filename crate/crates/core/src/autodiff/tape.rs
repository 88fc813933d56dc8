//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Tape`] records every primitive in evaluation order. Because nodes are
//! appended only after their inputs exist, the node list is already a
//! topological order and the backward sweep is a single reverse pass.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::rc::Rc;

use super::tensor::{bget, broadcast_shape, reduce_to, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Op {
    Const,
    Param { offset: usize },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    Shift(usize),
    MatMul(usize, usize),
    Relu(usize),
    Tanh(usize),
    Sigmoid(usize),
    Exp(usize),
    Ln(usize),
    PowAbs(usize, usize),
    Max(usize, usize),
    Select { mask: Vec<bool>, a: usize, b: usize },
    SliceCols { x: usize, start: usize },
    ConcatCols(Vec<usize>),
    GatherRows { x: usize, idx: Vec<usize> },
    SumAll(usize),
    MeanCols(usize),
    LogSumExpRows(usize),
    PickCols { x: usize, idx: Vec<usize> },
}

#[derive(Default)]
struct Nodes {
    vals: Vec<Tensor>,
    ops: Vec<Op>,
}

impl Nodes {
    fn push(&mut self, v: Tensor, op: Op) -> usize {
        self.vals.push(v);
        self.ops.push(op);
        self.vals.len() - 1
    }
}

/// Recording context. Cloning a tape yields another handle to the same
/// recording.
#[derive(Clone, Default)]
pub struct Tape {
    nodes: Rc<RefCell<Nodes>>,
}

/// Handle to one recorded node.
#[derive(Clone)]
pub struct Var {
    nodes: Rc<RefCell<Nodes>>,
    id: usize,
}

impl std::fmt::Debug for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let n = self.nodes.borrow();
        f.debug_struct("Var").field("id", &self.id).field("value", &n.vals[self.id]).finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn wrap(&self, id: usize) -> Var {
        Var { nodes: self.nodes.clone(), id }
    }

    pub fn constant(&self, t: Tensor) -> Var {
        let id = self.nodes.borrow_mut().push(t, Op::Const);
        self.wrap(id)
    }

    pub fn scalar(&self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    /// Leaf whose gradient is accumulated into the flat parameter gradient
    /// starting at `offset`. `values` is the row-major slice of the segment.
    pub fn param(&self, offset: usize, rows: usize, cols: usize, values: &[f64]) -> Var {
        let t = Tensor::new(rows, cols, values.to_vec());
        let id = self.nodes.borrow_mut().push(t, Op::Param { offset });
        self.wrap(id)
    }

    /// Reverse sweep from a scalar root. Returns d(root)/d(param) for the
    /// flat parameter vector of length `n_params`.
    pub fn gradient(&self, root: &Var, n_params: usize) -> Result<Vec<f64>> {
        let nodes = self.nodes.borrow();
        if nodes.vals[root.id].shape() != (1, 1) {
            let (r, c) = nodes.vals[root.id].shape();
            return Err(Error::Contract(format!("gradient root must be 1x1, got {r}x{c}")));
        }
        let mut grad = vec![0.0; n_params];
        let mut adj: Vec<Option<Tensor>> = vec![None; root.id + 1];
        adj[root.id] = Some(Tensor::scalar(1.0));
        for id in (0..=root.id).rev() {
            let Some(g) = adj[id].take() else { continue };
            let val = &nodes.vals[id];
            let shape_of = |i: usize| nodes.vals[i].shape();
            match &nodes.ops[id] {
                Op::Const => {}
                Op::Param { offset } => {
                    let dst = grad
                        .get_mut(*offset..*offset + g.data().len())
                        .ok_or_else(|| Error::Contract("parameter leaf outside gradient range".into()))?;
                    for (d, s) in dst.iter_mut().zip(g.data()) {
                        *d += s;
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, reduce_to(&g, shape_of(*a)));
                    accumulate(&mut adj, *b, reduce_to(&g, shape_of(*b)));
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *a, reduce_to(&g, shape_of(*a)));
                    accumulate(&mut adj, *b, reduce_to(&g.map(|v| -v), shape_of(*b)));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&nodes.vals[*a], &nodes.vals[*b]);
                    let ga = zip_out(&g, |r, c, gv| gv * bget(vb, r, c));
                    let gb = zip_out(&g, |r, c, gv| gv * bget(va, r, c));
                    accumulate(&mut adj, *a, reduce_to(&ga, va.shape()));
                    accumulate(&mut adj, *b, reduce_to(&gb, vb.shape()));
                }
                Op::Div(a, b) => {
                    let (va, vb) = (&nodes.vals[*a], &nodes.vals[*b]);
                    let ga = zip_out(&g, |r, c, gv| gv / bget(vb, r, c));
                    let gb = zip_out(&g, |r, c, gv| {
                        let d = bget(vb, r, c);
                        -gv * bget(va, r, c) / (d * d)
                    });
                    accumulate(&mut adj, *a, reduce_to(&ga, va.shape()));
                    accumulate(&mut adj, *b, reduce_to(&gb, vb.shape()));
                }
                Op::Neg(a) => accumulate(&mut adj, *a, g.map(|v| -v)),
                Op::Scale(a, k) => {
                    let k = *k;
                    accumulate(&mut adj, *a, g.map(|v| v * k));
                }
                Op::Shift(a) => accumulate(&mut adj, *a, g),
                Op::MatMul(a, b) => {
                    let (va, vb) = (&nodes.vals[*a], &nodes.vals[*b]);
                    accumulate(&mut adj, *a, g.matmul(&vb.transpose()));
                    accumulate(&mut adj, *b, va.transpose().matmul(&g));
                }
                Op::Relu(a) => {
                    let x = &nodes.vals[*a];
                    accumulate(&mut adj, *a, zip_same(&g, x, |gv, xv| if xv > 0.0 { gv } else { 0.0 }));
                }
                Op::Tanh(a) => {
                    accumulate(&mut adj, *a, zip_same(&g, val, |gv, y| gv * (1.0 - y * y)));
                }
                Op::Sigmoid(a) => {
                    accumulate(&mut adj, *a, zip_same(&g, val, |gv, y| gv * y * (1.0 - y)));
                }
                Op::Exp(a) => accumulate(&mut adj, *a, zip_same(&g, val, |gv, y| gv * y)),
                Op::Ln(a) => {
                    let x = &nodes.vals[*a];
                    accumulate(&mut adj, *a, zip_same(&g, x, |gv, xv| gv / xv));
                }
                Op::PowAbs(b, e) => {
                    let (vb, ve) = (&nodes.vals[*b], &nodes.vals[*e]);
                    let gb = zip_out(&g, |r, c, gv| {
                        let x = bget(vb, r, c);
                        if x == 0.0 {
                            0.0
                        } else {
                            let p = bget(ve, r, c);
                            gv * p * x.abs().powf(p - 1.0) * x.signum()
                        }
                    });
                    let ge = zip_out(&g, |r, c, gv| {
                        let x = bget(vb, r, c);
                        if x == 0.0 {
                            0.0
                        } else {
                            gv * val.get(r, c) * x.abs().ln()
                        }
                    });
                    accumulate(&mut adj, *b, reduce_to(&gb, vb.shape()));
                    accumulate(&mut adj, *e, reduce_to(&ge, ve.shape()));
                }
                Op::Max(a, b) => {
                    let (va, vb) = (&nodes.vals[*a], &nodes.vals[*b]);
                    let ga = zip_out(&g, |r, c, gv| if bget(va, r, c) > bget(vb, r, c) { gv } else { 0.0 });
                    let gb = zip_out(&g, |r, c, gv| if bget(va, r, c) > bget(vb, r, c) { 0.0 } else { gv });
                    accumulate(&mut adj, *a, reduce_to(&ga, va.shape()));
                    accumulate(&mut adj, *b, reduce_to(&gb, vb.shape()));
                }
                Op::Select { mask, a, b } => {
                    let cols = g.cols();
                    let ga = zip_out(&g, |r, c, gv| if mask[r * cols + c] { gv } else { 0.0 });
                    let gb = zip_out(&g, |r, c, gv| if mask[r * cols + c] { 0.0 } else { gv });
                    accumulate(&mut adj, *a, reduce_to(&ga, shape_of(*a)));
                    accumulate(&mut adj, *b, reduce_to(&gb, shape_of(*b)));
                }
                Op::SliceCols { x, start } => {
                    let (rows, cols) = shape_of(*x);
                    let mut gx = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        for c in 0..g.cols() {
                            gx.set(r, start + c, g.get(r, c));
                        }
                    }
                    accumulate(&mut adj, *x, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let (rows, cols) = shape_of(p);
                        let mut gp = Tensor::zeros(rows, cols);
                        for r in 0..rows {
                            for c in 0..cols {
                                gp.set(r, c, g.get(r, start + c));
                            }
                        }
                        start += cols;
                        accumulate(&mut adj, p, gp);
                    }
                }
                Op::GatherRows { x, idx } => {
                    let (rows, cols) = shape_of(*x);
                    let mut gx = Tensor::zeros(rows, cols);
                    for (o, &src) in idx.iter().enumerate() {
                        for c in 0..cols {
                            let v = gx.get(src, c) + g.get(o, c);
                            gx.set(src, c, v);
                        }
                    }
                    accumulate(&mut adj, *x, gx);
                }
                Op::SumAll(x) => {
                    let (rows, cols) = shape_of(*x);
                    accumulate(&mut adj, *x, Tensor::filled(rows, cols, g.item()));
                }
                Op::MeanCols(x) => {
                    let (rows, cols) = shape_of(*x);
                    let mut gx = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        let v = g.get(r, 0) / cols as f64;
                        for c in 0..cols {
                            gx.set(r, c, v);
                        }
                    }
                    accumulate(&mut adj, *x, gx);
                }
                Op::LogSumExpRows(x) => {
                    let vx = &nodes.vals[*x];
                    let mut gx = Tensor::zeros(vx.rows(), vx.cols());
                    for r in 0..vx.rows() {
                        let lse = val.get(r, 0);
                        for c in 0..vx.cols() {
                            gx.set(r, c, g.get(r, 0) * (vx.get(r, c) - lse).exp());
                        }
                    }
                    accumulate(&mut adj, *x, gx);
                }
                Op::PickCols { x, idx } => {
                    let (rows, cols) = shape_of(*x);
                    let mut gx = Tensor::zeros(rows, cols);
                    for (r, &c) in idx.iter().enumerate() {
                        gx.set(r, c, g.get(r, 0));
                    }
                    accumulate(&mut adj, *x, gx);
                }
            }
        }
        Ok(grad)
    }
}

fn accumulate(adj: &mut [Option<Tensor>], id: usize, g: Tensor) {
    match &mut adj[id] {
        Some(t) => t.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_out(g: &Tensor, f: impl Fn(usize, usize, f64) -> f64) -> Tensor {
    let mut out = Tensor::zeros(g.rows(), g.cols());
    for r in 0..g.rows() {
        for c in 0..g.cols() {
            out.set(r, c, f(r, c, g.get(r, c)));
        }
    }
    out
}

fn zip_same(g: &Tensor, x: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::new(g.rows(), g.cols(), g.data().iter().zip(x.data()).map(|(&a, &b)| f(a, b)).collect())
}

fn broadcast_binary(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let (rows, cols) = broadcast_shape(a.shape(), b.shape())
        .unwrap_or_else(|| panic!("incompatible shapes {:?} and {:?}", a.shape(), b.shape()));
    if a.shape() == b.shape() {
        return zip_same(a, b, f);
    }
    let mut out = Tensor::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            out.set(r, c, f(bget(a, r, c), bget(b, r, c)));
        }
    }
    out
}

impl Var {
    fn unary(&self, f: impl FnOnce(&Tensor) -> Tensor, op: Op) -> Var {
        let mut n = self.nodes.borrow_mut();
        let v = f(&n.vals[self.id]);
        let id = n.push(v, op);
        Var { nodes: self.nodes.clone(), id }
    }

    fn binary(&self, other: &Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        debug_assert!(Rc::ptr_eq(&self.nodes, &other.nodes), "vars from different tapes");
        let mut n = self.nodes.borrow_mut();
        let v = broadcast_binary(&n.vals[self.id], &n.vals[other.id], f);
        let id = n.push(v, op);
        Var { nodes: self.nodes.clone(), id }
    }

    pub fn tape(&self) -> Tape {
        Tape { nodes: self.nodes.clone() }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Tensor {
        self.nodes.borrow().vals[self.id].clone()
    }

    pub fn with_value<R>(&self, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.nodes.borrow().vals[self.id])
    }

    pub fn shape(&self) -> (usize, usize) {
        self.with_value(Tensor::shape)
    }

    pub fn rows(&self) -> usize {
        self.shape().0
    }

    pub fn cols(&self) -> usize {
        self.shape().1
    }

    /// Value of a `1 × 1` node.
    pub fn item(&self) -> f64 {
        self.with_value(Tensor::item)
    }

    pub fn is_finite(&self) -> bool {
        self.with_value(Tensor::is_finite)
    }

    pub fn constant_like(&self, v: f64) -> Var {
        self.tape().scalar(v)
    }

    pub fn scale(&self, k: f64) -> Var {
        self.unary(|x| x.map(|v| v * k), Op::Scale(self.id, k))
    }

    pub fn shift(&self, k: f64) -> Var {
        self.unary(|x| x.map(|v| v + k), Op::Shift(self.id))
    }

    pub fn matmul(&self, w: &Var) -> Var {
        let mut n = self.nodes.borrow_mut();
        let v = n.vals[self.id].matmul(&n.vals[w.id]);
        let id = n.push(v, Op::MatMul(self.id, w.id));
        Var { nodes: self.nodes.clone(), id }
    }

    /// `max(x, 0)` with subgradient 0 at the kink.
    pub fn relu(&self) -> Var {
        self.unary(|x| x.map(|v| v.max(0.0)), Op::Relu(self.id))
    }

    pub fn tanh(&self) -> Var {
        self.unary(|x| x.map(f64::tanh), Op::Tanh(self.id))
    }

    pub fn sigmoid(&self) -> Var {
        self.unary(|x| x.map(|v| 1.0 / (1.0 + (-v).exp())), Op::Sigmoid(self.id))
    }

    pub fn exp(&self) -> Var {
        self.unary(|x| x.map(f64::exp), Op::Exp(self.id))
    }

    pub fn ln(&self) -> Var {
        self.unary(|x| x.map(f64::ln), Op::Ln(self.id))
    }

    /// `|x|^e`, defined as 0 at x = 0 with zero gradient there.
    pub fn pow_abs(&self, e: &Var) -> Var {
        self.binary(e, |x, p| if x == 0.0 { 0.0 } else { x.abs().powf(p) }, Op::PowAbs(self.id, e.id))
    }

    /// Elementwise maximum; on ties the gradient goes to `other`.
    pub fn max(&self, other: &Var) -> Var {
        self.binary(other, |a, b| if a > b { a } else { b }, Op::Max(self.id, other.id))
    }

    pub fn min(&self, other: &Var) -> Var {
        -((-self).max(&-other))
    }

    /// Elementwise `if self >= threshold { then } else { otherwise }`.
    pub fn select_ge(&self, threshold: &Var, then: &Var, otherwise: &Var) -> Var {
        let mut n = self.nodes.borrow_mut();
        let (x, t, a, b) = (&n.vals[self.id], &n.vals[threshold.id], &n.vals[then.id], &n.vals[otherwise.id]);
        let shape = [x.shape(), t.shape(), a.shape(), b.shape()]
            .into_iter()
            .try_fold((1, 1), broadcast_shape)
            .expect("select_ge operands do not broadcast");
        let mut mask = Vec::with_capacity(shape.0 * shape.1);
        let mut out = Tensor::zeros(shape.0, shape.1);
        for r in 0..shape.0 {
            for c in 0..shape.1 {
                let m = bget(x, r, c) >= bget(t, r, c);
                mask.push(m);
                out.set(r, c, if m { bget(a, r, c) } else { bget(b, r, c) });
            }
        }
        let id = n.push(out, Op::Select { mask, a: then.id, b: otherwise.id });
        Var { nodes: self.nodes.clone(), id }
    }

    pub fn slice_cols(&self, start: usize, len: usize) -> Var {
        self.unary(
            |x| {
                assert!(start + len <= x.cols(), "column slice out of range");
                let mut out = Tensor::zeros(x.rows(), len);
                for r in 0..x.rows() {
                    for c in 0..len {
                        out.set(r, c, x.get(r, start + c));
                    }
                }
                out
            },
            Op::SliceCols { x: self.id, start },
        )
    }

    pub fn col(&self, j: usize) -> Var {
        self.slice_cols(j, 1)
    }

    /// Splits into `cols()` column vectors.
    pub fn columns(&self) -> Vec<Var> {
        (0..self.cols()).map(|j| self.col(j)).collect()
    }

    pub fn concat_cols(parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let nodes = parts[0].nodes.clone();
        let mut n = nodes.borrow_mut();
        let rows = parts.iter().map(|p| n.vals[p.id].rows()).max().unwrap_or(1);
        let cols: usize = parts.iter().map(|p| n.vals[p.id].cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut start = 0;
        for p in parts {
            let v = &n.vals[p.id];
            assert_eq!(v.rows(), rows, "concat_cols requires equal row counts");
            for r in 0..rows {
                for c in 0..v.cols() {
                    out.set(r, start + c, v.get(r, c));
                }
            }
            start += v.cols();
        }
        let id = n.push(out, Op::ConcatCols(parts.iter().map(|p| p.id).collect()));
        drop(n);
        Var { nodes, id }
    }

    pub fn gather_rows(&self, idx: &[usize]) -> Var {
        self.unary(
            |x| {
                let mut out = Tensor::zeros(idx.len(), x.cols());
                for (o, &src) in idx.iter().enumerate() {
                    for c in 0..x.cols() {
                        out.set(o, c, x.get(src, c));
                    }
                }
                out
            },
            Op::GatherRows { x: self.id, idx: idx.to_vec() },
        )
    }

    pub fn sum(&self) -> Var {
        self.unary(|x| Tensor::scalar(x.data().iter().sum()), Op::SumAll(self.id))
    }

    pub fn mean(&self) -> Var {
        let n = self.with_value(|t| t.data().len()) as f64;
        self.sum().scale(1.0 / n)
    }

    /// Row means as a column vector.
    pub fn mean_cols(&self) -> Var {
        self.unary(
            |x| Tensor::column((0..x.rows()).map(|r| x.row_slice(r).iter().sum::<f64>() / x.cols() as f64).collect()),
            Op::MeanCols(self.id),
        )
    }

    /// Row-wise log-sum-exp with max subtraction.
    pub fn logsumexp_rows(&self) -> Var {
        self.unary(
            |x| {
                Tensor::column(
                    (0..x.rows())
                        .map(|r| {
                            let row = x.row_slice(r);
                            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                            m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
                        })
                        .collect(),
                )
            },
            Op::LogSumExpRows(self.id),
        )
    }

    /// Picks column `idx[r]` from each row `r`, giving a column vector.
    pub fn pick_cols(&self, idx: &[usize]) -> Var {
        self.unary(
            |x| {
                assert_eq!(idx.len(), x.rows(), "one index per row");
                Tensor::column(idx.iter().enumerate().map(|(r, &c)| x.get(r, c)).collect())
            },
            Op::PickCols { x: self.id, idx: idx.to_vec() },
        )
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $op:ident, $f:expr) => {
        impl $trait<&Var> for &Var {
            type Output = Var;
            fn $method(self, rhs: &Var) -> Var {
                self.binary(rhs, $f, Op::$op(self.id, rhs.id))
            }
        }
        impl $trait<Var> for Var {
            type Output = Var;
            fn $method(self, rhs: Var) -> Var {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&Var> for Var {
            type Output = Var;
            fn $method(self, rhs: &Var) -> Var {
                (&self).$method(rhs)
            }
        }
        impl $trait<Var> for &Var {
            type Output = Var;
            fn $method(self, rhs: Var) -> Var {
                self.$method(&rhs)
            }
        }
    };
}

binop!(Add, add, Add, |a, b| a + b);
binop!(Sub, sub, Sub, |a, b| a - b);
binop!(Mul, mul, Mul, |a, b| a * b);
binop!(Div, div, Div, |a, b| a / b);

impl Neg for &Var {
    type Output = Var;
    fn neg(self) -> Var {
        self.unary(|x| x.map(|v| -v), Op::Neg(self.id))
    }
}

impl Neg for Var {
    type Output = Var;
    fn neg(self) -> Var {
        -&self
    }
}

impl Add<f64> for Var {
    type Output = Var;
    fn add(self, k: f64) -> Var {
        self.shift(k)
    }
}

impl Sub<f64> for Var {
    type Output = Var;
    fn sub(self, k: f64) -> Var {
        self.shift(-k)
    }
}

impl Mul<f64> for Var {
    type Output = Var;
    fn mul(self, k: f64) -> Var {
        self.scale(k)
    }
}

impl Div<f64> for Var {
    type Output = Var;
    fn div(self, k: f64) -> Var {
        self.scale(1.0 / k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(t: &Tape, offset: usize, v: &[f64]) -> Var {
        t.param(offset, v.len(), 1, v)
    }

    #[test]
    fn quadratic_gradient() {
        let t = Tape::new();
        let w = leaf(&t, 0, &[1.0, 2.0]);
        let loss = (&w * &w).sum();
        assert_eq!(t.gradient(&loss, 2).unwrap(), vec![2.0, 4.0]);
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let t = Tape::new();
        let w = leaf(&t, 0, &[1.0, 2.0]);
        assert!(matches!(t.gradient(&w, 2), Err(Error::Contract(_))));
    }

    #[test]
    fn unused_parameters_get_zero() {
        let t = Tape::new();
        let a = leaf(&t, 0, &[3.0]);
        let _b = leaf(&t, 1, &[5.0]);
        let loss = (&a * &a).sum();
        assert_eq!(t.gradient(&loss, 2).unwrap(), vec![6.0, 0.0]);
    }

    #[test]
    fn broadcast_gradient_reduces() {
        let t = Tape::new();
        let s = t.param(0, 1, 1, &[2.0]);
        let x = t.constant(Tensor::column(vec![1.0, 2.0, 3.0]));
        let loss = (&x * &s).sum();
        assert_eq!(t.gradient(&loss, 1).unwrap(), vec![6.0]);
    }

    #[test]
    fn relu_kink_has_zero_subgradient() {
        let t = Tape::new();
        let x = t.param(0, 1, 1, &[0.0]);
        let loss = x.relu().sum();
        assert_eq!(t.gradient(&loss, 1).unwrap(), vec![0.0]);
    }

    #[test]
    fn max_with_zero_at_kink_sends_gradient_to_zero_side() {
        let t = Tape::new();
        let x = t.param(0, 1, 1, &[0.0]);
        let loss = x.max(&t.scalar(0.0)).sum();
        assert_eq!(t.gradient(&loss, 1).unwrap(), vec![0.0]);
    }

    #[test]
    fn logsumexp_pick_is_cross_entropy() {
        let t = Tape::new();
        let s = t.param(0, 1, 3, &[0.0, 0.0, 2f64.ln()]);
        let ce = (s.logsumexp_rows() - s.pick_cols(&[2])).sum();
        assert!((ce.item() - (-(0.5f64).ln())).abs() < 1e-12);
        let g = t.gradient(&ce, 3).unwrap();
        assert!((g[0] - 0.25).abs() < 1e-12 && (g[2] + 0.5).abs() < 1e-12);
    }
}
