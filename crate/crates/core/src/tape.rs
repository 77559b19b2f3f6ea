//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! Every operation appends a node holding its output value and the handles
//! of its inputs. [`Tape::backward`] walks the nodes in reverse order and
//! accumulates adjoints; a slot that feeds several consumers receives the
//! sum of their contributions.
//!
//! ```
//! use eirehn_core::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let p = tape.leaf(Tensor::scalar(3.0));
//! let loss = tape.mul(p, p).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(p).item().unwrap(), 6.0);
//! ```

use crate::error::{Error, Result};
use crate::tensor::{broadcast_shape, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary {
    Tanh,
    Sigm,
    Softplus,
    /// `max(v, 0)` with derivative 0 for `v <= 0`.
    Max0,
    Exp,
    Log,
    /// `mul * v + add` for constants.
    Affine { mul: f64, add: f64 },
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatTVec(Var, Var),
    Binary(Binary, Var, Var),
    Unary(Unary, Var),
    Concat(Vec<Var>),
    Slice { src: Var, start: usize },
    Column { src: Var, col: usize },
    Sum(Var),
    Mean(Var),
    Mix { gate: Var, cand: Var, prev: Var },
    CrossEntropy { logits: Var, label: usize, probs: Vec<f64> },
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by one backward pass.
pub struct Gradients {
    shapes: Vec<Vec<usize>>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` does not influence the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        let shape = &self.shapes[v.0];
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape.clone(), g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    /// Borrowed raw gradient, `None` when no path reaches the loss.
    pub fn raw(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn max0(x: f64) -> f64 {
    // NaN must survive so that divergence is detected downstream.
    if x > 0.0 || x.is_nan() {
        x
    } else {
        0.0
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input or parameter.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.leaf(Tensor::scalar(value))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `aᵀ · v` for a matrix `a` of shape `[m, n]` and a vector `v` of length `m`.
    pub fn matvec_t(&mut self, a: Var, v: Var) -> Result<Var> {
        let (at, vt) = (self.value(a), self.value(v));
        if at.rank() != 2 || vt.rank() != 1 || at.shape()[0] != vt.len() {
            return Err(Error::shape("matvec_t", at.shape(), vt.shape()));
        }
        let (m, n) = (at.shape()[0], at.shape()[1]);
        let mut out = vec![0.0; n];
        for i in 0..m {
            let s = vt.data()[i];
            if s == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(&at.data()[i * n..(i + 1) * n]) {
                *o += w * s;
            }
        }
        Ok(self.push(Tensor::vector(out), Op::MatTVec(a, v)))
    }

    pub fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (at, bt) = (self.value(a), self.value(b));
        let shape = broadcast_shape(at.shape(), bt.shape())
            .ok_or_else(|| Error::shape(binary_name(kind), at.shape(), bt.shape()))?
            .to_vec();
        let f = match kind {
            Binary::Add => |x: f64, y: f64| x + y,
            Binary::Sub => |x: f64, y: f64| x - y,
            Binary::Mul => |x: f64, y: f64| x * y,
        };
        let (ad, bd) = (at.data(), bt.data());
        let data: Vec<f64> = if ad.len() == bd.len() {
            ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect()
        } else if ad.len() == 1 {
            bd.iter().map(|&y| f(ad[0], y)).collect()
        } else {
            ad.iter().map(|&x| f(x, bd[0])).collect()
        };
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Binary(kind, a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn unary(&mut self, kind: Unary, a: Var) -> Result<Var> {
        let x = self.value(a);
        let value = match kind {
            Unary::Tanh => x.map(f64::tanh),
            Unary::Sigm => x.map(sigmoid),
            Unary::Softplus => x.map(softplus),
            Unary::Max0 => x.map(max0),
            Unary::Exp => x.map(f64::exp),
            Unary::Log => {
                if let Some(bad) = x.data().iter().find(|&&v| !(v > 0.0)) {
                    return Err(Error::Domain {
                        op: "log",
                        detail: format!("non-positive argument {bad}"),
                    });
                }
                x.map(f64::ln)
            }
            Unary::Affine { mul, add } => x.map(|v| mul * v + add),
        };
        Ok(self.push(value, Op::Unary(kind, a)))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Tanh, a)
    }

    pub fn sigm(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Sigm, a)
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Softplus, a)
    }

    pub fn max0(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Max0, a)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Exp, a)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Log, a)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.unary(Unary::Affine { mul: factor, add: 0.0 }, a)
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Affine { mul: -1.0, add: 1.0 }, a)
    }

    /// Concatenates rank-0/1 values into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.rank() > 1 {
                return Err(Error::shape("concat", t.shape(), &[]));
            }
            data.extend_from_slice(t.data());
        }
        Ok(self.push(Tensor::vector(data), Op::Concat(parts.to_vec())))
    }

    /// Contiguous sub-vector `[start, start + len)`.
    pub fn slice(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(src);
        if t.rank() != 1 || start + len > t.len() {
            return Err(Error::shape("slice", t.shape(), &[start, len]));
        }
        let value = Tensor::vector(t.data()[start..start + len].to_vec());
        Ok(self.push(value, Op::Slice { src, start }))
    }

    /// Column `col` of a matrix as a vector.
    pub fn column(&mut self, src: Var, col: usize) -> Result<Var> {
        let t = self.value(src);
        if t.rank() != 2 || col >= t.shape()[1] {
            return Err(Error::Domain {
                op: "column",
                detail: format!("column {col} out of range for shape {:?}", t.shape()),
            });
        }
        let (m, n) = (t.shape()[0], t.shape()[1]);
        let value = Tensor::vector((0..m).map(|i| t.data()[i * n + col]).collect());
        Ok(self.push(value, Op::Column { src, col }))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.sum() / t.len() as f64;
        self.push(Tensor::scalar(m), Op::Mean(a))
    }

    /// Gated mix `gate ⊗ cand + (1 - gate) ⊗ prev`. Where a gate element is
    /// exactly zero the previous value is copied unchanged, bit for bit.
    pub fn mix(&mut self, gate: Var, cand: Var, prev: Var) -> Result<Var> {
        let (g, s, h) = (self.value(gate), self.value(cand), self.value(prev));
        if g.shape() != s.shape() || g.shape() != h.shape() {
            return Err(Error::shape("mix", g.shape(), s.shape()));
        }
        let data = g
            .data()
            .iter()
            .zip(s.data())
            .zip(h.data())
            .map(|((&g, &s), &h)| if g == 0.0 { h } else { g * s + (1.0 - g) * h })
            .collect();
        let value = Tensor::new(g.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Mix { gate, cand, prev }))
    }

    /// `-log softmax(logits)[label]`, evaluated with max subtraction.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let z = self.value(logits);
        if z.rank() != 1 {
            return Err(Error::shape("cross_entropy", z.shape(), &[]));
        }
        if label >= z.len() {
            return Err(Error::Domain {
                op: "cross_entropy",
                detail: format!("label {label} out of range for {} classes", z.len()),
            });
        }
        let probs = softmax(z.data());
        let max = z.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.data().iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - z.data()[label];
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy { logits, label, probs }))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..n).rev() {
            let Some(up) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (at, bt) = (self.value(*a), self.value(*b));
                    let (m, k) = (at.shape()[0], at.shape()[1]);
                    let ncols = bt.cols();
                    // dA = dY · Bᵀ, dB = Aᵀ · dY
                    let ga = acc(&mut grads, *a, at.len());
                    for i in 0..m {
                        let urow = &up[i * ncols..(i + 1) * ncols];
                        for p in 0..k {
                            let brow = &bt.data()[p * ncols..(p + 1) * ncols];
                            ga[i * k + p] += dot(urow, brow);
                        }
                    }
                    let gb = acc(&mut grads, *b, bt.len());
                    for i in 0..m {
                        let urow = &up[i * ncols..(i + 1) * ncols];
                        for p in 0..k {
                            let a_ip = at.data()[i * k + p];
                            if a_ip == 0.0 {
                                continue;
                            }
                            for (g, &u) in gb[p * ncols..(p + 1) * ncols].iter_mut().zip(urow) {
                                *g += a_ip * u;
                            }
                        }
                    }
                }
                Op::MatTVec(a, v) => {
                    let (at, vt) = (self.value(*a), self.value(*v));
                    let (m, ncols) = (at.shape()[0], at.shape()[1]);
                    let ga = acc(&mut grads, *a, at.len());
                    for i in 0..m {
                        let s = vt.data()[i];
                        for (g, &u) in ga[i * ncols..(i + 1) * ncols].iter_mut().zip(&up) {
                            *g += s * u;
                        }
                    }
                    let gv = acc(&mut grads, *v, vt.len());
                    for i in 0..m {
                        gv[i] += dot(&at.data()[i * ncols..(i + 1) * ncols], &up);
                    }
                }
                Op::Binary(kind, a, b) => {
                    let (at, bt) = (self.value(*a), self.value(*b));
                    let (da, db): (Vec<f64>, Vec<f64>) = match kind {
                        Binary::Add => (up.clone(), up.clone()),
                        Binary::Sub => (up.clone(), up.iter().map(|u| -u).collect()),
                        Binary::Mul => (
                            (0..up.len()).map(|i| up[i] * pick(bt.data(), i)).collect(),
                            (0..up.len()).map(|i| up[i] * pick(at.data(), i)).collect(),
                        ),
                    };
                    reduce_into(acc(&mut grads, *a, at.len()), &da);
                    reduce_into(acc(&mut grads, *b, bt.len()), &db);
                }
                Op::Unary(kind, a) => {
                    let x = self.value(*a).data();
                    let y = node.value.data();
                    let ga = acc(&mut grads, *a, x.len());
                    for i in 0..up.len() {
                        let u = up[i];
                        if u == 0.0 {
                            continue;
                        }
                        let d = match kind {
                            Unary::Tanh => 1.0 - y[i] * y[i],
                            Unary::Sigm => y[i] * (1.0 - y[i]),
                            Unary::Softplus => sigmoid(x[i]),
                            Unary::Max0 => {
                                if x[i] > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            Unary::Exp => y[i],
                            Unary::Log => 1.0 / x[i],
                            Unary::Affine { mul, .. } => *mul,
                        };
                        ga[i] += u * d;
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        let gp = acc(&mut grads, p, len);
                        for (g, u) in gp.iter_mut().zip(&up[offset..offset + len]) {
                            *g += u;
                        }
                        offset += len;
                    }
                }
                Op::Slice { src, start } => {
                    let len = self.value(*src).len();
                    let gs = acc(&mut grads, *src, len);
                    for (g, u) in gs[*start..*start + up.len()].iter_mut().zip(&up) {
                        *g += u;
                    }
                }
                Op::Column { src, col } => {
                    let t = self.value(*src);
                    let ncols = t.shape()[1];
                    let gs = acc(&mut grads, *src, t.len());
                    for (i, u) in up.iter().enumerate() {
                        gs[i * ncols + col] += u;
                    }
                }
                Op::Sum(a) => {
                    let ga = acc(&mut grads, *a, self.value(*a).len());
                    ga.iter_mut().for_each(|g| *g += up[0]);
                }
                Op::Mean(a) => {
                    let len = self.value(*a).len();
                    let ga = acc(&mut grads, *a, len);
                    let share = up[0] / len as f64;
                    ga.iter_mut().for_each(|g| *g += share);
                }
                Op::Mix { gate, cand, prev } => {
                    let (g, s, h) = (self.value(*gate), self.value(*cand), self.value(*prev));
                    let len = g.len();
                    {
                        let gg = acc(&mut grads, *gate, len);
                        for i in 0..len {
                            gg[i] += up[i] * (s.data()[i] - h.data()[i]);
                        }
                    }
                    {
                        let gs = acc(&mut grads, *cand, len);
                        for i in 0..len {
                            gs[i] += up[i] * g.data()[i];
                        }
                    }
                    let gh = acc(&mut grads, *prev, len);
                    for i in 0..len {
                        gh[i] += up[i] * (1.0 - g.data()[i]);
                    }
                }
                Op::CrossEntropy { logits, label, probs } => {
                    let gl = acc(&mut grads, *logits, probs.len());
                    for (i, p) in probs.iter().enumerate() {
                        let target = if i == *label { 1.0 } else { 0.0 };
                        gl[i] += up[0] * (p - target);
                    }
                }
            }
            grads[idx] = Some(up);
        }

        Ok(Gradients {
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            grads,
        })
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn binary_name(kind: Binary) -> &'static str {
    match kind {
        Binary::Add => "add",
        Binary::Sub => "sub",
        Binary::Mul => "mul",
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn pick(data: &[f64], i: usize) -> f64 {
    if data.len() == 1 {
        data[0]
    } else {
        data[i]
    }
}

/// Adds `src` into `dst`, summing when `dst` is a broadcast scalar.
fn reduce_into(dst: &mut [f64], src: &[f64]) {
    if dst.len() == src.len() {
        for (d, s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    } else {
        dst[0] += src.iter().sum::<f64>();
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
