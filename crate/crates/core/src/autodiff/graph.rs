//! Computation graphs. `Tape` records every op for reverse-mode gradients;
//! `Eager` evaluates the same ops without bookkeeping. Model code is written
//! once against the `Graph` trait and runs on either.

use std::rc::Rc;
use std::sync::Arc;

use super::tensor::{kernels, Tensor};
use crate::error::{Error, Result};
use crate::models::GmpTerm;

pub trait Graph {
    type Var: Clone;

    fn value<'a>(&'a self, v: &'a Self::Var) -> &'a Tensor;
    /// A constant input; never receives a gradient.
    fn constant(&mut self, t: Tensor) -> Self::Var;
    /// A trainable leaf whose gradient is tracked.
    fn parameter(&mut self, t: &Tensor) -> Self::Var;

    fn linear(&mut self, x: &Self::Var, w: &Self::Var, b: Option<&Self::Var>) -> Self::Var;
    fn add(&mut self, a: &Self::Var, b: &Self::Var) -> Self::Var;
    fn sub(&mut self, a: &Self::Var, b: &Self::Var) -> Self::Var;
    fn mul(&mut self, a: &Self::Var, b: &Self::Var) -> Self::Var;
    fn sigmoid(&mut self, a: &Self::Var) -> Self::Var;
    fn tanh(&mut self, a: &Self::Var) -> Self::Var;
    fn scale(&mut self, a: &Self::Var, k: f64) -> Self::Var;
    fn concat(&mut self, parts: &[Self::Var]) -> Self::Var;
    fn slice_cols(&mut self, a: &Self::Var, start: usize, end: usize) -> Self::Var;
    fn features(&mut self, x: &Self::Var) -> Self::Var;
    fn gmp_basis(
        &mut self,
        taps: &[Option<Self::Var>],
        min_delay: i64,
        terms: &Arc<Vec<GmpTerm>>,
        rows: usize,
    ) -> Self::Var;
    /// `Σ (a - target)²` as a 1×1 value.
    fn squared_error(&mut self, a: &Self::Var, target: &Tensor) -> Self::Var;
    fn sum(&mut self, parts: &[Self::Var]) -> Self::Var;
}

/// Mean squared I/Q error over a batch of sequences:
/// `Σ_{b,t} (ΔI² + ΔQ²) / (B·T)`.
pub fn mse_loss<G: Graph>(g: &mut G, outputs: &[G::Var], targets: &[Tensor]) -> Result<G::Var> {
    if outputs.is_empty() || outputs.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: outputs.len(),
            right: targets.len(),
        });
    }
    let mut parts = Vec::with_capacity(outputs.len());
    for (o, t) in outputs.iter().zip(targets) {
        if g.value(o).shape() != t.shape() {
            return Err(Error::Shape(format!(
                "prediction {:?} vs target {:?}",
                g.value(o).shape(),
                t.shape()
            )));
        }
        parts.push(g.squared_error(o, t));
    }
    let rows = targets[0].rows;
    let total = g.sum(&parts);
    Ok(g.scale(&total, 1.0 / (rows * targets.len()) as f64))
}

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Linear(NodeId, NodeId, Option<NodeId>),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Scale(NodeId, f64),
    Concat(Vec<NodeId>),
    SliceCols(NodeId, usize),
    Features(NodeId),
    GmpBasis {
        taps: Vec<Option<NodeId>>,
        min_delay: i64,
        terms: Arc<Vec<GmpTerm>>,
    },
    SquaredError(NodeId, Tensor),
    Sum(Vec<NodeId>),
}

impl Op {
    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => vec![],
            Op::Linear(x, w, b) => {
                let mut v = vec![*x, *w];
                v.extend(b);
                v
            }
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Scale(a, _)
            | Op::SliceCols(a, _)
            | Op::Features(a)
            | Op::SquaredError(a, _) => vec![*a],
            Op::Concat(v) | Op::Sum(v) => v.clone(),
            Op::GmpBasis { taps, .. } => taps.iter().flatten().copied().collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Recording graph. Nodes are appended in evaluation order, so every node's
/// parents have smaller ids and a single reverse sweep suffices.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes.get(id).and_then(|n| n.grad.as_ref())
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        let requires_grad = op.parents().iter().any(|&p| self.nodes[p].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        self.nodes.len() - 1
    }

    fn v(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    /// Reverse sweep from a scalar `loss`, accumulating into every node that
    /// depends on a parameter. Gradients from a previous sweep are cleared.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        let node = self
            .nodes
            .get(loss)
            .ok_or_else(|| Error::Graph(format!("unknown node {loss}")))?;
        if node.value.shape() != (1, 1) {
            return Err(Error::Graph(format!(
                "loss must be scalar, got shape {:?}",
                node.value.shape()
            )));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.op.parents().iter().any(|&p| p >= i) {
                return Err(Error::Graph(format!("node {i} is part of a cycle")));
            }
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[loss].grad = Some(Tensor::scalar(1.0));

        for i in (0..=loss).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            let contributions = self.local_grads(i, &g);
            self.nodes[i].grad = Some(g);
            for (p, dg) in contributions {
                if !self.nodes[p].requires_grad {
                    continue;
                }
                match &mut self.nodes[p].grad {
                    Some(acc) => acc.add_assign(&dg),
                    slot @ None => *slot = Some(dg),
                }
            }
        }
        Ok(())
    }

    fn local_grads(&self, i: NodeId, g: &Tensor) -> Vec<(NodeId, Tensor)> {
        let out = &self.nodes[i].value;
        let need = |p: NodeId| self.nodes[p].requires_grad;
        match &self.nodes[i].op {
            Op::Leaf => vec![],
            Op::Linear(x, w, b) => {
                let (xv, wv) = (self.v(*x), self.v(*w));
                let (rows, inp) = xv.shape();
                let outc = wv.rows;
                let mut res = Vec::with_capacity(3);
                if need(*x) {
                    let mut dx = Tensor::zeros(rows, inp);
                    for r in 0..rows {
                        let gr = g.row(r);
                        let dxr = &mut dx.data[r * inp..(r + 1) * inp];
                        for (o, &go) in gr.iter().enumerate() {
                            if go == 0.0 {
                                continue;
                            }
                            let wr = &wv.data[o * inp..(o + 1) * inp];
                            for k in 0..inp {
                                dxr[k] += go * wr[k];
                            }
                        }
                    }
                    res.push((*x, dx));
                }
                if need(*w) {
                    let mut dw = Tensor::zeros(outc, inp);
                    for r in 0..rows {
                        let xr = xv.row(r);
                        let gr = g.row(r);
                        for (o, &go) in gr.iter().enumerate() {
                            let dwr = &mut dw.data[o * inp..(o + 1) * inp];
                            for k in 0..inp {
                                dwr[k] += go * xr[k];
                            }
                        }
                    }
                    res.push((*w, dw));
                }
                if let Some(b) = b {
                    if need(*b) {
                        let mut db = Tensor::zeros(1, outc);
                        for r in 0..rows {
                            for (o, &go) in g.row(r).iter().enumerate() {
                                db.data[o] += go;
                            }
                        }
                        res.push((*b, db));
                    }
                }
                res
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|v| -v))],
            Op::Mul(a, b) => {
                let (av, bv) = (self.v(*a), self.v(*b));
                let mut res = Vec::with_capacity(2);
                if need(*a) {
                    res.push((*a, kernels::zip(g, bv, |g, b| g * b)));
                }
                if need(*b) {
                    res.push((*b, kernels::zip(g, av, |g, a| g * a)));
                }
                res
            }
            Op::Sigmoid(a) => vec![(*a, kernels::zip(g, out, |g, s| g * s * (1.0 - s)))],
            Op::Tanh(a) => vec![(*a, kernels::zip(g, out, |g, t| g * (1.0 - t * t)))],
            Op::Scale(a, k) => vec![(*a, g.map(|v| v * k))],
            Op::Concat(parts) => {
                let mut res = Vec::with_capacity(parts.len());
                let mut start = 0;
                for &p in parts {
                    let c = self.v(p).cols;
                    if need(p) {
                        res.push((p, kernels::slice_cols(g, start, start + c)));
                    }
                    start += c;
                }
                res
            }
            Op::SliceCols(a, start) => {
                let av = self.v(*a);
                let mut da = Tensor::zeros(av.rows, av.cols);
                for r in 0..av.rows {
                    da.data[r * av.cols + start..r * av.cols + start + g.cols]
                        .copy_from_slice(g.row(r));
                }
                vec![(*a, da)]
            }
            Op::Features(x) => {
                let xv = self.v(*x);
                let mut dx = Tensor::zeros(xv.rows, 2);
                for r in 0..xv.rows {
                    let (i, q) = (xv.get(r, 0), xv.get(r, 1));
                    let gr = g.row(r);
                    let mut di = gr[0];
                    let mut dq = gr[1];
                    let amp = (i * i + q * q).sqrt();
                    if amp >= super::tensor::FEATURE_EPS {
                        let (c, s) = (i / amp, q / amp);
                        // d|x| = (c, s); d|x|³ = 3|x|²(c, s)
                        let da = gr[2] + 3.0 * amp * amp * gr[3];
                        di += da * c;
                        dq += da * s;
                        // dsin = (-s c, c²)/|x|; dcos = (s², -s c)/|x|
                        di += (-s * c * gr[4] + s * s * gr[5]) / amp;
                        dq += (c * c * gr[4] - s * c * gr[5]) / amp;
                    }
                    dx.set(r, 0, di);
                    dx.set(r, 1, dq);
                }
                vec![(*x, dx)]
            }
            Op::GmpBasis {
                taps,
                min_delay,
                terms,
            } => {
                let k = terms.len();
                let rows = out.rows;
                let mut grads: Vec<Option<Tensor>> = taps
                    .iter()
                    .map(|t| t.filter(|&id| need(id)).map(|_| Tensor::zeros(rows, 2)))
                    .collect();
                for (j, t) in terms.iter().enumerate() {
                    let si = (t.signal_delay() - min_delay) as usize;
                    let ei = (t.envelope_delay() - min_delay) as usize;
                    let (Some(sid), Some(eid)) = (taps[si], taps[ei]) else {
                        continue;
                    };
                    let (sv, ev) = (self.v(sid), self.v(eid));
                    let half = 0.5 * (t.order - 1) as f64;
                    for r in 0..rows {
                        let (xr, xi) = (sv.get(r, 0), sv.get(r, 1));
                        let (er, ei_) = (ev.get(r, 0), ev.get(r, 1));
                        let e2 = er * er + ei_ * ei_;
                        let scale = e2.powf(half);
                        let (gr, gi) = (g.get(r, j), g.get(r, k + j));
                        if let Some(d) = &mut grads[si] {
                            d.data[r * 2] += gr * scale;
                            d.data[r * 2 + 1] += gi * scale;
                        }
                        if t.order > 1 && e2 > 0.0 {
                            if let Some(d) = &mut grads[ei] {
                                // d(e2^half)/d(er) = 2 half er e2^(half-1)
                                let ds = 2.0 * half * e2.powf(half - 1.0);
                                let common = (gr * xr + gi * xi) * ds;
                                d.data[r * 2] += common * er;
                                d.data[r * 2 + 1] += common * ei_;
                            }
                        }
                    }
                }
                taps.iter()
                    .zip(grads)
                    .filter_map(|(t, g)| Some(((*t)?, g?)))
                    .collect()
            }
            Op::SquaredError(a, target) => {
                let g0 = g.data[0];
                vec![(
                    *a,
                    kernels::zip(self.v(*a), target, |x, t| 2.0 * g0 * (x - t)),
                )]
            }
            Op::Sum(parts) => parts.iter().map(|&p| (p, g.clone())).collect(),
        }
    }
}

impl Graph for Tape {
    type Var = NodeId;

    fn value<'a>(&'a self, v: &'a NodeId) -> &'a Tensor {
        &self.nodes[*v].value
    }

    fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Leaf)
    }

    fn parameter(&mut self, t: &Tensor) -> NodeId {
        self.nodes.push(Node {
            value: t.clone(),
            grad: None,
            op: Op::Leaf,
            requires_grad: true,
        });
        self.nodes.len() - 1
    }

    fn linear(&mut self, x: &NodeId, w: &NodeId, b: Option<&NodeId>) -> NodeId {
        let v = kernels::linear(self.v(*x), self.v(*w), b.map(|b| self.v(*b)));
        self.push(v, Op::Linear(*x, *w, b.copied()))
    }

    fn add(&mut self, a: &NodeId, b: &NodeId) -> NodeId {
        let v = kernels::zip(self.v(*a), self.v(*b), |x, y| x + y);
        self.push(v, Op::Add(*a, *b))
    }

    fn sub(&mut self, a: &NodeId, b: &NodeId) -> NodeId {
        let v = kernels::zip(self.v(*a), self.v(*b), |x, y| x - y);
        self.push(v, Op::Sub(*a, *b))
    }

    fn mul(&mut self, a: &NodeId, b: &NodeId) -> NodeId {
        let v = kernels::zip(self.v(*a), self.v(*b), |x, y| x * y);
        self.push(v, Op::Mul(*a, *b))
    }

    fn sigmoid(&mut self, a: &NodeId) -> NodeId {
        let v = kernels::sigmoid_t(self.v(*a));
        self.push(v, Op::Sigmoid(*a))
    }

    fn tanh(&mut self, a: &NodeId) -> NodeId {
        let v = kernels::tanh_t(self.v(*a));
        self.push(v, Op::Tanh(*a))
    }

    fn scale(&mut self, a: &NodeId, k: f64) -> NodeId {
        let v = self.v(*a).map(|x| x * k);
        self.push(v, Op::Scale(*a, k))
    }

    fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let vals: Vec<&Tensor> = parts.iter().map(|p| self.v(*p)).collect();
        let v = kernels::concat(&vals);
        self.push(v, Op::Concat(parts.to_vec()))
    }

    fn slice_cols(&mut self, a: &NodeId, start: usize, end: usize) -> NodeId {
        let v = kernels::slice_cols(self.v(*a), start, end);
        self.push(v, Op::SliceCols(*a, start))
    }

    fn features(&mut self, x: &NodeId) -> NodeId {
        let v = kernels::features(self.v(*x));
        self.push(v, Op::Features(*x))
    }

    fn gmp_basis(
        &mut self,
        taps: &[Option<NodeId>],
        min_delay: i64,
        terms: &Arc<Vec<GmpTerm>>,
        rows: usize,
    ) -> NodeId {
        let vals: Vec<Option<&Tensor>> = taps.iter().map(|t| t.map(|id| self.v(id))).collect();
        let v = kernels::gmp_basis(&vals, min_delay, terms, rows);
        self.push(
            v,
            Op::GmpBasis {
                taps: taps.to_vec(),
                min_delay,
                terms: Arc::clone(terms),
            },
        )
    }

    fn squared_error(&mut self, a: &NodeId, target: &Tensor) -> NodeId {
        let v = kernels::squared_error(self.v(*a), target);
        self.push(v, Op::SquaredError(*a, target.clone()))
    }

    fn sum(&mut self, parts: &[NodeId]) -> NodeId {
        let vals: Vec<&Tensor> = parts.iter().map(|p| self.v(*p)).collect();
        let v = kernels::sum(&vals);
        self.push(v, Op::Sum(parts.to_vec()))
    }
}

/// Evaluates ops immediately and keeps nothing but the values still in use.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eager;

impl Graph for Eager {
    type Var = Rc<Tensor>;

    fn value<'a>(&'a self, v: &'a Rc<Tensor>) -> &'a Tensor {
        v
    }

    fn constant(&mut self, t: Tensor) -> Rc<Tensor> {
        Rc::new(t)
    }

    fn parameter(&mut self, t: &Tensor) -> Rc<Tensor> {
        Rc::new(t.clone())
    }

    fn linear(&mut self, x: &Rc<Tensor>, w: &Rc<Tensor>, b: Option<&Rc<Tensor>>) -> Rc<Tensor> {
        Rc::new(kernels::linear(x, w, b.map(|b| &**b)))
    }

    fn add(&mut self, a: &Rc<Tensor>, b: &Rc<Tensor>) -> Rc<Tensor> {
        Rc::new(kernels::zip(a, b, |x, y| x + y))
    }

    fn sub(&mut self, a: &Rc<Tensor>, b: &Rc<Tensor>) -> Rc<Tensor> {
        Rc::new(kernels::zip(a, b, |x, y| x - y))
    }

    fn mul(&mut self, a: &Rc<Tensor>, b: &Rc<Tensor>) -> Rc<Tensor> {
        Rc::new(kernels::zip(a, b, |x, y| x * y))
    }

    fn sigmoid(&mut self, a: &Rc<Tensor>) -> Rc<Tensor> {
        Rc::new(kernels::sigmoid_t(a))
    }

    fn tanh(&mut self, a: &Rc<Tensor>) -> Rc<Tensor> {
        Rc::new(kernels::tanh_t(a))
    }

    fn scale(&mut self, a: &Rc<Tensor>, k: f64) -> Rc<Tensor> {
        Rc::new(a.map(|x| x * k))
    }

    fn concat(&mut self, parts: &[Rc<Tensor>]) -> Rc<Tensor> {
        let vals: Vec<&Tensor> = parts.iter().map(|p| &**p).collect();
        Rc::new(kernels::concat(&vals))
    }

    fn slice_cols(&mut self, a: &Rc<Tensor>, start: usize, end: usize) -> Rc<Tensor> {
        Rc::new(kernels::slice_cols(a, start, end))
    }

    fn features(&mut self, x: &Rc<Tensor>) -> Rc<Tensor> {
        Rc::new(kernels::features(x))
    }

    fn gmp_basis(
        &mut self,
        taps: &[Option<Rc<Tensor>>],
        min_delay: i64,
        terms: &Arc<Vec<GmpTerm>>,
        rows: usize,
    ) -> Rc<Tensor> {
        let vals: Vec<Option<&Tensor>> = taps.iter().map(|t| t.as_deref()).collect();
        Rc::new(kernels::gmp_basis(&vals, min_delay, terms, rows))
    }

    fn squared_error(&mut self, a: &Rc<Tensor>, target: &Tensor) -> Rc<Tensor> {
        Rc::new(kernels::squared_error(a, target))
    }

    fn sum(&mut self, parts: &[Rc<Tensor>]) -> Rc<Tensor> {
        let vals: Vec<&Tensor> = parts.iter().map(|p| &**p).collect();
        Rc::new(kernels::sum(&vals))
    }
}
