//! Matrix-valued reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation performed on its [`Var`]s. Calling
//! [`Tape::backward`] on a scalar output walks the record in reverse and
//! returns the gradient of that output with respect to every node.

use std::cell::{Ref, RefCell};
use std::ops::{Add, Mul, Neg, Sub};

use crate::compfun::jet::{sigmoid, softplus_f64};
use crate::linalg::Mat;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    MatMul(usize, usize),
    AddRow(usize, usize),
    Tanh(usize),
    Softplus(usize),
    Exp(usize),
    SqrtEps(usize),
    Columns(usize, usize),
    HCat(Vec<usize>),
    Sum(usize),
    SumRows(usize),
    LogSoftmaxRows(usize),
}

struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({})", self.idx)
    }
}

/// Gradients of one scalar output with respect to the nodes of a tape.
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    /// Gradient for `v`, zeros if the output does not depend on it.
    pub fn get(&self, v: Var<'_>) -> Mat {
        self.get_index(v.idx, v.value().shape())
    }

    pub fn get_index(&self, idx: usize, shape: (usize, usize)) -> Mat {
        self.grads[idx].clone().unwrap_or_else(|| Mat::zeros(shape.0, shape.1))
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&self, value: Mat, op: Op, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op, needs_grad });
        Var { tape: self, idx: nodes.len() - 1 }
    }

    /// Leaf that gradients are tracked for.
    pub fn param(&self, value: Mat) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&self, value: Mat) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn var(&self, idx: usize) -> Var<'_> {
        Var { tape: self, idx }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn unary(&self, a: usize, value: Mat, op: Op) -> Var<'_> {
        let g = self.nodes.borrow()[a].needs_grad;
        self.push(value, op, g)
    }

    fn binary(&self, a: usize, b: usize, value: Mat, op: Op) -> Var<'_> {
        let g = {
            let n = self.nodes.borrow();
            n[a].needs_grad || n[b].needs_grad
        };
        self.push(value, op, g)
    }

    /// Horizontal concatenation.
    pub fn hcat<'t>(&'t self, parts: &[Var<'t>]) -> Var<'t> {
        let nodes = self.nodes.borrow();
        let rows = nodes[parts[0].idx].value.nrows();
        let cols: usize = parts.iter().map(|p| nodes[p.idx].value.ncols()).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut at = 0;
        for p in parts {
            let v = &nodes[p.idx].value;
            assert_eq!(v.nrows(), rows, "hcat row mismatch");
            out.columns_mut(at, v.ncols()).copy_from(v);
            at += v.ncols();
        }
        let g = parts.iter().any(|p| nodes[p.idx].needs_grad);
        drop(nodes);
        self.push(out, Op::HCat(parts.iter().map(|p| p.idx).collect()), g)
    }

    /// Gradient of the scalar `out` with respect to every node.
    pub fn backward(&self, out: Var<'_>) -> Gradients {
        assert_eq!(out.value().shape(), (1, 1), "backward needs a scalar output");
        self.backward_from(out, Mat::from_element(1, 1, 1.0))
    }

    /// Vector-Jacobian product seeded with `seed` at `out`.
    pub fn backward_from(&self, out: Var<'_>, seed: Mat) -> Gradients {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Mat>> = vec![None; nodes.len()];
        grads[out.idx] = Some(seed);
        for i in (0..=out.idx).rev() {
            if !nodes[i].needs_grad || matches!(nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            let mut acc = |idx: usize, d: Mat| {
                if nodes[idx].needs_grad {
                    match &mut grads[idx] {
                        Some(x) => *x += d,
                        slot => *slot = Some(d),
                    }
                }
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, -g.clone());
                }
                Op::Mul(a, b) => {
                    acc(*a, g.component_mul(&nodes[*b].value));
                    acc(*b, g.component_mul(&nodes[*a].value));
                }
                Op::Scale(a, s) => acc(*a, &g * *s),
                Op::AddScalar(a) => acc(*a, g.clone()),
                Op::MatMul(a, b) => {
                    if nodes[*a].needs_grad {
                        acc(*a, &g * nodes[*b].value.transpose());
                    }
                    if nodes[*b].needs_grad {
                        acc(*b, nodes[*a].value.transpose() * &g);
                    }
                }
                Op::AddRow(a, b) => {
                    acc(*a, g.clone());
                    if nodes[*b].needs_grad {
                        let rs = g.row_sum();
                        acc(*b, Mat::from_row_slice(1, rs.len(), rs.as_slice()));
                    }
                }
                Op::Tanh(a) => acc(*a, g.zip_map(&node.value, |d, t| d * (1.0 - t * t))),
                Op::Softplus(a) => acc(*a, g.zip_map(&nodes[*a].value, |d, x| d * sigmoid(x))),
                Op::Exp(a) => acc(*a, g.component_mul(&node.value)),
                Op::SqrtEps(a) => acc(*a, g.zip_map(&node.value, |d, s| d / (2.0 * s))),
                Op::Columns(a, start) => {
                    let src = &nodes[*a].value;
                    let mut d = Mat::zeros(src.nrows(), src.ncols());
                    d.columns_mut(*start, g.ncols()).copy_from(&g);
                    acc(*a, d);
                }
                Op::HCat(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let c = nodes[p].value.ncols();
                        acc(p, g.columns(at, c).into_owned());
                        at += c;
                    }
                }
                Op::Sum(a) => {
                    let s = &nodes[*a].value;
                    acc(*a, Mat::from_element(s.nrows(), s.ncols(), g[(0, 0)]));
                }
                Op::SumRows(a) => {
                    let s = &nodes[*a].value;
                    let mut d = Mat::zeros(s.nrows(), s.ncols());
                    for j in 0..s.ncols() {
                        d.set_column(j, &g.column(0));
                    }
                    acc(*a, d);
                }
                Op::LogSoftmaxRows(a) => {
                    let p = node.value.map(f64::exp);
                    let rs = g.column_sum();
                    let mut d = g.clone();
                    for j in 0..d.ncols() {
                        for r in 0..d.nrows() {
                            d[(r, j)] -= p[(r, j)] * rs[r];
                        }
                    }
                    acc(*a, d);
                }
            }
        }
        Gradients { grads }
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> Ref<'t, Mat> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.idx].value)
    }

    pub fn index(&self) -> usize {
        self.idx
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self) -> f64 {
        self.value()[(0, 0)]
    }

    fn map(self, f: impl Fn(f64) -> f64, op: Op) -> Var<'t> {
        let v = self.value().map(f);
        self.tape.unary(self.idx, v, op)
    }

    pub fn matmul(self, rhs: Var<'t>) -> Var<'t> {
        let v = &*self.value() * &*rhs.value();
        self.tape.binary(self.idx, rhs.idx, v, Op::MatMul(self.idx, rhs.idx))
    }

    /// Adds the `1 x c` row `row` to every row.
    pub fn add_row(self, row: Var<'t>) -> Var<'t> {
        let mut v = self.value().clone();
        {
            let r = row.value();
            assert_eq!(r.shape(), (1, v.ncols()), "add_row shape mismatch");
            for j in 0..v.ncols() {
                v.column_mut(j).add_scalar_mut(r[(0, j)]);
            }
        }
        self.tape.binary(self.idx, row.idx, v, Op::AddRow(self.idx, row.idx))
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        self.map(|x| x * s, Op::Scale(self.idx, s))
    }

    pub fn add_scalar(self, s: f64) -> Var<'t> {
        self.map(|x| x + s, Op::AddScalar(self.idx))
    }

    pub fn tanh(self) -> Var<'t> {
        self.map(f64::tanh, Op::Tanh(self.idx))
    }

    pub fn softplus(self) -> Var<'t> {
        self.map(softplus_f64, Op::Softplus(self.idx))
    }

    pub fn exp(self) -> Var<'t> {
        self.map(f64::exp, Op::Exp(self.idx))
    }

    /// `sqrt(x + eps)`, smooth at zero.
    pub fn sqrt_eps(self, eps: f64) -> Var<'t> {
        let v = self.value().map(|x| (x + eps).sqrt());
        self.tape.unary(self.idx, v, Op::SqrtEps(self.idx))
    }

    pub fn square(self) -> Var<'t> {
        self * self
    }

    pub fn columns(self, start: usize, len: usize) -> Var<'t> {
        let v = self.value().columns(start, len).into_owned();
        self.tape.unary(self.idx, v, Op::Columns(self.idx, start))
    }

    pub fn sum(self) -> Var<'t> {
        let v = Mat::from_element(1, 1, self.value().sum());
        self.tape.unary(self.idx, v, Op::Sum(self.idx))
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.value().len() as f64;
        self.sum().scale(1.0 / n)
    }

    /// `r x 1` column of row sums.
    pub fn sum_rows(self) -> Var<'t> {
        let v = self.value().column_sum();
        let v = Mat::from_column_slice(v.len(), 1, v.as_slice());
        self.tape.unary(self.idx, v, Op::SumRows(self.idx))
    }

    pub fn log_softmax_rows(self) -> Var<'t> {
        let mut v = self.value().clone();
        for r in 0..v.nrows() {
            let row = v.row(r);
            let m = row.max();
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            for j in 0..v.ncols() {
                v[(r, j)] -= lse;
            }
        }
        self.tape.unary(self.idx, v, Op::LogSoftmaxRows(self.idx))
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        let v = &*self.value() + &*rhs.value();
        self.tape.binary(self.idx, rhs.idx, v, Op::Add(self.idx, rhs.idx))
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        let v = &*self.value() - &*rhs.value();
        self.tape.binary(self.idx, rhs.idx, v, Op::Sub(self.idx, rhs.idx))
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        let v = self.value().component_mul(&*rhs.value());
        self.tape.binary(self.idx, rhs.idx, v, Op::Mul(self.idx, rhs.idx))
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.scale(rhs)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(build: impl for<'t> Fn(&'t Tape, Var<'t>) -> Var<'t>, x0: Mat) {
        let tape = Tape::new();
        let x = tape.param(x0.clone());
        let out = build(&tape, x);
        let g = tape.backward(out).get(x);
        let h = 1e-6;
        for i in 0..x0.len() {
            let mut xp = x0.clone();
            xp[i] += h;
            let mut xm = x0.clone();
            xm[i] -= h;
            let t1 = Tape::new();
            let fp = build(&t1, t1.constant(xp)).scalar();
            let t2 = Tape::new();
            let fm = build(&t2, t2.constant(xm)).scalar();
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()), "entry {i}: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn gradients_of_composite_ops() {
        let x0 = Mat::from_row_slice(2, 3, &[0.1, -0.4, 0.7, 1.2, -0.3, 0.5]);
        fd_check(
            |t, x| {
                let w = t.constant(Mat::from_row_slice(3, 2, &[0.3, -1.0, 0.5, 0.2, -0.7, 0.9]));
                let b = t.constant(Mat::from_row_slice(1, 2, &[0.1, -0.2]));
                let h = x.matmul(w).add_row(b).tanh();
                let s = x.softplus().columns(1, 2);
                let c = t.hcat(&[h, s]);
                (c.log_softmax_rows() * c.exp()).sum_rows().square().sqrt_eps(1e-12).sum() - c.mean().scale(0.5)
            },
            x0,
        );
    }

    #[test]
    fn constants_get_no_gradient_work() {
        let tape = Tape::new();
        let a = tape.constant(Mat::from_element(2, 2, 1.0));
        let b = tape.param(Mat::from_element(2, 2, 2.0));
        let out = (a.matmul(b)).sum();
        let g = tape.backward(out);
        assert_eq!(g.get(b), Mat::from_element(2, 2, 2.0));
        assert_eq!(g.get(a), Mat::zeros(2, 2));
    }
}
