//! Reverse-mode differentiation over whole tensors.
//!
//! A [`Tape`] records one forward pass. Every op appends a node holding its
//! output value; [`Tape::backward`] walks the nodes in reverse and
//! accumulates gradients for every node that depends on a differentiable
//! input. A tape supports one backward pass per recording; call
//! [`Tape::reset`] (or use a fresh tape) before the next forward.

use std::sync::Arc;

use super::kernels::{self, ConvGeom};
use super::param::{ParamId, ParamStore};
use super::scalar::{gemm, MatRef, Scalar};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Probability clamp used by [`Tape::sigmoid`] and [`Tape::bce_loss`].
pub const PROB_EPS: f64 = 1e-7;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    Conv2d { x: Var, w: Var, b: Var, geom: ConvGeom },
    MaxPool2 { x: Var, argmax: Vec<usize> },
    TConv2 { x: Var, w: Var, b: Var },
    Relu(Var),
    Sigmoid(Var),
    Concat { a: Var, b: Var },
    Bce { p: Var, target: Vec<T> },
    Sum(Var),
    Mean(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    NeighborSum { x: Var, adjacency: Arc<Vec<usize>>, k: usize },
    Linear { x: Var, w: Var, b: Var },
    ToNodes(Var),
    FromNodes(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    backward_done: bool,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
        }
    }

    /// Discards the recording so the tape can hold a new forward pass.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.grads.clear();
        self.backward_done = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient of the last backward pass with respect to `v`, if `v` was
    /// reached.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records an input tensor.
    pub fn input(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Records the current value of a stored parameter.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let p = store.get(id);
        self.push(p.tensor.clone(), Op::Param(id), p.trainable)
    }

    /// Cross-correlation with zero padding and unit stride.
    /// `x: [N, Cin, H, W]`, `w: [Cout, Cin, kh, kw]`, `b: [Cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, padding: usize) -> Result<Var> {
        let (n, cin, h, wd) = self.value(x).dims4()?;
        let (cout, wcin, kh, kw) = self.value(w).dims4().map_err(|_| {
            Error::shape(format!("conv2d weight must be 4-D, got {:?}", self.value(w).shape()))
        })?;
        if wcin != cin || self.value(b).shape() != [cout] {
            return Err(Error::shape(format!(
                "conv2d input {:?}, weight {:?}, bias {:?}",
                self.value(x).shape(),
                self.value(w).shape(),
                self.value(b).shape()
            )));
        }
        if kh > h + 2 * padding || kw > wd + 2 * padding {
            return Err(Error::shape(format!(
                "conv2d kernel {kh}x{kw} does not fit input {:?} with padding {padding}",
                self.value(x).shape()
            )));
        }
        let geom = ConvGeom { cin, h, w: wd, kh, kw, pad: padding };
        let out = kernels::conv2d_forward(
            &geom,
            n,
            cout,
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
        );
        let t = Tensor::new(&[n, cout, geom.out_h(), geom.out_w()], out)?;
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(t, Op::Conv2d { x, w, b, geom }, rg))
    }

    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape(format!(
                "maxpool2 needs even spatial dims, got {:?}",
                self.value(x).shape()
            )));
        }
        let (out, argmax) = kernels::maxpool2_forward(n * c, h, w, self.value(x).data());
        let t = Tensor::new(&[n, c, h / 2, w / 2], out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::MaxPool2 { x, argmax }, rg))
    }

    /// Stride-2 transposed convolution with a 2×2 kernel.
    /// `x: [N, Cin, H, W]`, `w: [Cin, Cout, 2, 2]`, `b: [Cout]` → `[N, Cout, 2H, 2W]`.
    pub fn tconv2(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, cin, h, wd) = self.value(x).dims4()?;
        let ws = self.value(w).shape().to_vec();
        if ws.len() != 4 || ws[0] != cin || ws[2] != 2 || ws[3] != 2 || self.value(b).shape() != [ws[1]] {
            return Err(Error::shape(format!(
                "tconv2 input {:?}, weight {:?}, bias {:?}",
                self.value(x).shape(),
                ws,
                self.value(b).shape()
            )));
        }
        let cout = ws[1];
        let out = kernels::tconv2_forward(
            n,
            cin,
            cout,
            h,
            wd,
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
        );
        let t = Tensor::new(&[n, cout, 2 * h, 2 * wd], out)?;
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(t, Op::TConv2 { x, w, b }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let t = Tensor::new(
            v.shape(),
            v.data().iter().map(|&a| if a > T::zero() { a } else { T::zero() }).collect(),
        )
        .expect("same shape");
        let rg = self.rg(&[x]);
        self.push(t, Op::Relu(x), rg)
    }

    /// Logistic function, clamped to `[ε, 1 − ε]`.
    pub fn sigmoid(&mut self, x: Var) -> Var {
        let eps = T::lit(PROB_EPS);
        let hi = T::one() - eps;
        let v = self.value(x);
        let data = v
            .data()
            .iter()
            .map(|&a| {
                let s = if a >= T::zero() {
                    T::one() / (T::one() + (-a).exp())
                } else {
                    let e = a.exp();
                    e / (T::one() + e)
                };
                s.max(eps).min(hi)
            })
            .collect();
        let t = Tensor::new(v.shape(), data).expect("same shape");
        let rg = self.rg(&[x]);
        self.push(t, Op::Sigmoid(x), rg)
    }

    /// Concatenates two NCHW tensors along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, ca, h, w) = self.value(a).dims4()?;
        let (nb, cb, hb, wb) = self.value(b).dims4()?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(Error::shape(format!(
                "concat {:?} with {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let plane = h * w;
        let mut out = Vec::with_capacity(n * (ca + cb) * plane);
        for bi in 0..n {
            out.extend_from_slice(&self.value(a).data()[bi * ca * plane..(bi + 1) * ca * plane]);
            out.extend_from_slice(&self.value(b).data()[bi * cb * plane..(bi + 1) * cb * plane]);
        }
        let t = Tensor::new(&[n, ca + cb, h, w], out)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Concat { a, b }, rg))
    }

    /// Mean binary cross-entropy of probabilities against a {0, 1} target,
    /// with probabilities clamped to `[ε, 1 − ε]`.
    pub fn bce_loss(&mut self, p: Var, target: &[T]) -> Result<Var> {
        let pv = self.value(p);
        if pv.numel() != target.len() {
            return Err(Error::shape(format!(
                "bce prediction {:?} vs target of {} values",
                pv.shape(),
                target.len()
            )));
        }
        let eps = T::lit(PROB_EPS);
        let hi = T::one() - eps;
        let mut acc = 0.0f64;
        for (&q, &t) in pv.data().iter().zip(target) {
            let q = q.max(eps).min(hi).as_f64();
            let t = t.as_f64();
            acc -= t * q.ln() + (1.0 - t) * (1.0 - q).ln();
        }
        let loss = T::lit(acc / target.len() as f64);
        let rg = self.rg(&[p]);
        Ok(self.push(Tensor::scalar(loss), Op::Bce { p, target: target.to_vec() }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum::<T>();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.data().iter().copied().sum::<T>() / T::lit(v.numel() as f64);
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(format!(
                "{what}: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x + y).collect();
        let t = Tensor::new(self.value(a).shape(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x * y).collect();
        let t = Tensor::new(self.value(a).shape(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let v = self.value(x);
        let t = Tensor::new(v.shape(), v.data().iter().map(|&a| a * s).collect()).expect("same shape");
        let rg = self.rg(&[x]);
        self.push(t, Op::Scale(x, s), rg)
    }

    /// `[N, C, H, W]` → `[N·H·W, C]`; node `y·W + x` of image `n` is row
    /// `n·H·W + y·W + x`.
    pub fn to_nodes(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let plane = h * w;
        let src = self.value(x).data();
        let mut out = vec![T::zero(); n * plane * c];
        for bi in 0..n {
            for ci in 0..c {
                for p in 0..plane {
                    out[(bi * plane + p) * c + ci] = src[(bi * c + ci) * plane + p];
                }
            }
        }
        let t = Tensor::new(&[n * plane, c], out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::ToNodes(x), rg))
    }

    /// Inverse of [`Tape::to_nodes`].
    pub fn from_nodes(&mut self, x: Var, n: usize, h: usize, w: usize) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        let plane = h * w;
        if shape.len() != 2 || shape[0] != n * plane {
            return Err(Error::shape(format!(
                "node tensor {:?} cannot be reshaped to {n} maps of {h}x{w}",
                shape
            )));
        }
        let c = shape[1];
        let src = self.value(x).data();
        let mut out = vec![T::zero(); n * c * plane];
        for bi in 0..n {
            for ci in 0..c {
                for p in 0..plane {
                    out[(bi * c + ci) * plane + p] = src[(bi * plane + p) * c + ci];
                }
            }
        }
        let t = Tensor::new(&[n, c, h, w], out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::FromNodes(x), rg))
    }

    /// Row `i` of the output is the sum of rows `adjacency[i·k .. (i+1)·k]`
    /// of `x: [M, C]`.
    pub fn neighbor_sum(&mut self, x: Var, adjacency: Arc<Vec<usize>>, k: usize) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        if shape.len() != 2 || adjacency.len() != shape[0] * k {
            return Err(Error::shape(format!(
                "neighbour sum over {:?} with {} adjacency entries (k = {k})",
                shape,
                adjacency.len()
            )));
        }
        let (m, c) = (shape[0], shape[1]);
        if let Some(&bad) = adjacency.iter().find(|&&j| j >= m) {
            return Err(Error::shape(format!("neighbour index {bad} out of {m} nodes")));
        }
        let src = self.value(x).data();
        let mut out = vec![T::zero(); m * c];
        for i in 0..m {
            let dst = &mut out[i * c..(i + 1) * c];
            for &j in &adjacency[i * k..(i + 1) * k] {
                for (d, &s) in dst.iter_mut().zip(&src[j * c..(j + 1) * c]) {
                    *d = *d + s;
                }
            }
        }
        let t = Tensor::new(&[m, c], out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::NeighborSum { x, adjacency, k }, rg))
    }

    /// `x·Wᵀ + b` for `x: [M, Cin]`, `w: [Cout, Cin]`, `b: [Cout]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] || self.value(b).shape() != [ws[0]] {
            return Err(Error::shape(format!(
                "linear input {:?}, weight {:?}, bias {:?}",
                xs,
                ws,
                self.value(b).shape()
            )));
        }
        let (m, cin, cout) = (xs[0], xs[1], ws[0]);
        let mut out = Vec::with_capacity(m * cout);
        for _ in 0..m {
            out.extend_from_slice(self.value(b).data());
        }
        gemm(
            MatRef::new(self.value(x).data(), m, cin),
            MatRef::new(self.value(w).data(), cout, cin).t(),
            T::one(),
            &mut out,
        );
        let t = Tensor::new(&[m, cout], out)?;
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(t, Op::Linear { x, w, b }, rg))
    }

    /// Back-propagates from a single-element `loss`. Fails if this tape has
    /// already been differentiated.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::State(
                "backward already ran on this tape; record a new forward pass first".into(),
            ));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.backward_done = true;
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else { continue };
            if self.nodes[i].requires_grad {
                self.backprop_node(i, &g);
            }
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, f: impl FnOnce(&mut [T])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let n = self.nodes[v.0].value.numel();
        let slot = self.grads[v.0].get_or_insert_with(|| vec![T::zero(); n]);
        f(slot);
    }

    fn take_grad_buf(&mut self, v: Var) -> Option<Vec<T>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].value.numel();
        Some(self.grads[v.0].take().unwrap_or_else(|| vec![T::zero(); n]))
    }

    fn backprop_node(&mut self, i: usize, g: &[T]) {
        // The op is moved out while its inputs are updated, then restored.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        match &op {
            Op::Leaf | Op::Param(_) => {}
            Op::Conv2d { x, w, b, geom } => {
                let (n, cout) = (self.value(*x).shape()[0], self.value(*w).shape()[0]);
                let mut dx = self.take_grad_buf(*x);
                let mut dw = self.take_grad_buf(*w);
                let mut db = self.take_grad_buf(*b);
                kernels::conv2d_backward(
                    geom,
                    n,
                    cout,
                    self.nodes[x.0].value.data(),
                    self.nodes[w.0].value.data(),
                    g,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                    db.as_deref_mut(),
                );
                self.restore(*x, dx);
                self.restore(*w, dw);
                self.restore(*b, db);
            }
            Op::TConv2 { x, w, b } => {
                let (n, cin, h, wd) = self.value(*x).dims4().expect("recorded shape");
                let cout = self.value(*w).shape()[1];
                let mut dx = self.take_grad_buf(*x);
                let mut dw = self.take_grad_buf(*w);
                let mut db = self.take_grad_buf(*b);
                kernels::tconv2_backward(
                    n,
                    cin,
                    cout,
                    h,
                    wd,
                    self.nodes[x.0].value.data(),
                    self.nodes[w.0].value.data(),
                    g,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                    db.as_deref_mut(),
                );
                self.restore(*x, dx);
                self.restore(*w, dw);
                self.restore(*b, db);
            }
            Op::MaxPool2 { x, argmax } => self.accumulate(*x, |dx| {
                for (&src, &gv) in argmax.iter().zip(g) {
                    dx[src] = dx[src] + gv;
                }
            }),
            Op::Relu(x) => {
                let y = self.nodes[i].value.data().to_vec();
                self.accumulate(*x, |dx| {
                    for ((d, &gv), &yv) in dx.iter_mut().zip(g).zip(&y) {
                        if yv > T::zero() {
                            *d = *d + gv;
                        }
                    }
                })
            }
            Op::Sigmoid(x) => {
                let y = self.nodes[i].value.data().to_vec();
                self.accumulate(*x, |dx| {
                    for ((d, &gv), &s) in dx.iter_mut().zip(g).zip(&y) {
                        *d = *d + gv * s * (T::one() - s);
                    }
                })
            }
            Op::Concat { a, b } => {
                let (n, ca, h, w) = self.value(*a).dims4().expect("recorded shape");
                let cb = self.value(*b).shape()[1];
                let plane = h * w;
                self.accumulate(*a, |da| {
                    for bi in 0..n {
                        let src = &g[bi * (ca + cb) * plane..bi * (ca + cb) * plane + ca * plane];
                        for (d, &s) in da[bi * ca * plane..(bi + 1) * ca * plane].iter_mut().zip(src) {
                            *d = *d + s;
                        }
                    }
                });
                self.accumulate(*b, |db| {
                    for bi in 0..n {
                        let off = bi * (ca + cb) * plane + ca * plane;
                        let src = &g[off..off + cb * plane];
                        for (d, &s) in db[bi * cb * plane..(bi + 1) * cb * plane].iter_mut().zip(src) {
                            *d = *d + s;
                        }
                    }
                });
            }
            Op::Bce { p, target } => {
                let eps = T::lit(PROB_EPS);
                let hi = T::one() - eps;
                let scale = g[0] / T::lit(target.len() as f64);
                let pv = self.nodes[p.0].value.data().to_vec();
                self.accumulate(*p, |dp| {
                    for ((d, &q), &t) in dp.iter_mut().zip(&pv).zip(target) {
                        let q = q.max(eps).min(hi);
                        *d = *d + scale * (q - t) / (q * (T::one() - q));
                    }
                })
            }
            Op::Sum(x) => self.accumulate(*x, |dx| {
                for d in dx.iter_mut() {
                    *d = *d + g[0];
                }
            }),
            Op::Mean(x) => {
                let n = T::lit(self.value(*x).numel() as f64);
                self.accumulate(*x, |dx| {
                    for d in dx.iter_mut() {
                        *d = *d + g[0] / n;
                    }
                })
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    self.accumulate(v, |dv| {
                        for (d, &gv) in dv.iter_mut().zip(g) {
                            *d = *d + gv;
                        }
                    });
                }
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data().to_vec();
                let bv = self.value(*b).data().to_vec();
                self.accumulate(*a, |da| {
                    for ((d, &gv), &o) in da.iter_mut().zip(g).zip(&bv) {
                        *d = *d + gv * o;
                    }
                });
                self.accumulate(*b, |db| {
                    for ((d, &gv), &o) in db.iter_mut().zip(g).zip(&av) {
                        *d = *d + gv * o;
                    }
                });
            }
            Op::Scale(x, s) => self.accumulate(*x, |dx| {
                for (d, &gv) in dx.iter_mut().zip(g) {
                    *d = *d + gv * *s;
                }
            }),
            Op::NeighborSum { x, adjacency, k } => {
                let c = self.value(*x).shape()[1];
                self.accumulate(*x, |dx| {
                    for (i, nbrs) in adjacency.chunks(*k).enumerate() {
                        let gi = &g[i * c..(i + 1) * c];
                        for &j in nbrs {
                            for (d, &gv) in dx[j * c..(j + 1) * c].iter_mut().zip(gi) {
                                *d = *d + gv;
                            }
                        }
                    }
                })
            }
            Op::Linear { x, w, b } => {
                let (m, cin) = (self.value(*x).shape()[0], self.value(*x).shape()[1]);
                let cout = self.value(*w).shape()[0];
                let gm = MatRef::new(g, m, cout);
                if let Some(mut dx) = self.take_grad_buf(*x) {
                    gemm(gm, MatRef::new(self.nodes[w.0].value.data(), cout, cin), T::one(), &mut dx);
                    self.grads[x.0] = Some(dx);
                }
                if let Some(mut dw) = self.take_grad_buf(*w) {
                    gemm(gm.t(), MatRef::new(self.nodes[x.0].value.data(), m, cin), T::one(), &mut dw);
                    self.grads[w.0] = Some(dw);
                }
                self.accumulate(*b, |db| {
                    for row in g.chunks(cout) {
                        for (d, &gv) in db.iter_mut().zip(row) {
                            *d = *d + gv;
                        }
                    }
                });
            }
            Op::ToNodes(x) => {
                let (n, c, h, w) = self.value(*x).dims4().expect("recorded shape");
                let plane = h * w;
                self.accumulate(*x, |dx| {
                    for bi in 0..n {
                        for ci in 0..c {
                            for p in 0..plane {
                                let d = &mut dx[(bi * c + ci) * plane + p];
                                *d = *d + g[(bi * plane + p) * c + ci];
                            }
                        }
                    }
                })
            }
            Op::FromNodes(x) => {
                let (n, c, h, w) = self.nodes[i].value.dims4().expect("recorded shape");
                let plane = h * w;
                self.accumulate(*x, |dx| {
                    for bi in 0..n {
                        for ci in 0..c {
                            for p in 0..plane {
                                let d = &mut dx[(bi * plane + p) * c + ci];
                                *d = *d + g[(bi * c + ci) * plane + p];
                            }
                        }
                    }
                })
            }
        }
        self.nodes[i].op = op;
    }

    fn restore(&mut self, v: Var, buf: Option<Vec<T>>) {
        if let Some(b) = buf {
            self.grads[v.0] = Some(b);
        }
    }

    /// Adds the gradients of every parameter node into `store`.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore<T>) -> Result<()> {
        if !self.backward_done {
            return Err(Error::State("no backward pass recorded".into()));
        }
        for (node, grad) in self.nodes.iter().zip(&self.grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, grad) {
                store.add_grad(*id, g);
            }
        }
        Ok(())
    }
}
