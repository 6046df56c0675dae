//! Reverse-mode tape. Every op appends a node holding its value; `backward`
//! walks the nodes in reverse creation order.

use crate::tensor::gemm;
use crate::{NnError, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `x[.., n] @ w[n, m]`
    MatMul { x: usize, w: usize, rows: usize, n: usize, m: usize },
    /// bias broadcast over the last axis
    AddBias { x: usize, b: usize },
    Conv1d { x: usize, w: usize, b: Option<usize>, dims: ConvDims },
    Conv1dT { x: usize, w: usize, b: Option<usize>, dims: ConvDims },
    Relu(usize),
    Sigmoid(usize),
    /// `[.., a, c] -> [.., c, a]`
    SwapLast2 { x: usize, outer: usize, a: usize, c: usize },
    Reshape(usize),
    EmaScan { u: usize, alpha: usize, batch: usize, len: usize, ch: usize },
    Softmax(usize),
    WeightedSum { xs: Vec<usize>, w: usize },
    Add(usize, usize),
    Axpy { a: usize, b: usize, beta: f64 },
    Clamp { x: usize, lo: f64, hi: f64 },
    Reparam { mu: usize, logvar: usize, eps: Vec<f64> },
    Mse { pred: usize, target: usize },
    Kl { mu: usize, logvar: usize, batch: usize },
    Project { x: usize, c: Vec<f64> },
}

/// Batch, input/output channels, length and kernel of a convolution, named
/// from the forward op's point of view.
#[derive(Debug, Clone, Copy)]
struct ConvDims {
    b: usize,
    c_in: usize,
    c_out: usize,
    l: usize,
    k: usize,
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn im2col(x: &[f64], c: usize, l: usize, k: usize, cols: &mut [f64]) {
    let pad = (k - 1) / 2;
    for ci in 0..c {
        let row = &x[ci * l..(ci + 1) * l];
        for j in 0..k {
            let dst = &mut cols[(ci * k + j) * l..(ci * k + j + 1) * l];
            for (t, d) in dst.iter_mut().enumerate() {
                let s = t + j;
                *d = if s >= pad && s - pad < l { row[s - pad] } else { 0.0 };
            }
        }
    }
}

fn col2im_add(cols: &[f64], c: usize, l: usize, k: usize, x: &mut [f64]) {
    let pad = (k - 1) / 2;
    for ci in 0..c {
        for j in 0..k {
            let src = &cols[(ci * k + j) * l..(ci * k + j + 1) * l];
            let row = &mut x[ci * l..(ci + 1) * l];
            for (t, v) in src.iter().enumerate() {
                let s = t + j;
                if s >= pad && s - pad < l {
                    row[s - pad] += v;
                }
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check(cond: bool, op: &'static str, detail: impl FnOnce() -> String) -> Result<(), NnError> {
    if cond {
        Ok(())
    } else {
        Err(NnError::shape(op, detail()))
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

    /// Drop every node created after the first `len`. Handles to dropped
    /// nodes must not be used again.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[usize]) -> Var {
        let requires_grad = parents.iter().any(|&p| self.nodes[p].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Trainable input; gradients are reported for it.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Input that needs no gradient (data, targets).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// `x[.., n] @ w[n, m] -> [.., m]`
    pub fn matmul(&mut self, x: Var, w: Var) -> Result<Var, NnError> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        check(ws.len() == 2 && !xs.is_empty() && xs[xs.len() - 1] == ws[0], "matmul", || format!("{xs:?} @ {ws:?}"))?;
        let (n, m) = (ws[0], ws[1]);
        let rows = self.value(x).len() / n.max(1);
        let mut out = vec![0.0; rows * m];
        gemm(rows, n, m, self.value(x).data(), false, self.value(w).data(), false, &mut out, 0.0);
        let mut shape = xs;
        *shape.last_mut().unwrap() = m;
        Ok(self.push(Tensor::new(shape, out)?, Op::MatMul { x: x.0, w: w.0, rows, n, m }, &[x.0, w.0]))
    }

    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var, NnError> {
        let (xs, bs) = (self.shape(x), self.shape(b));
        check(bs.len() == 1 && xs.last() == bs.first(), "add_bias", || format!("{xs:?} + {bs:?}"))?;
        let mut out = self.value(x).clone();
        let bias = self.value(b).data();
        for row in out.data_mut().chunks_mut(bias.len()) {
            for (o, v) in row.iter_mut().zip(bias) {
                *o += v;
            }
        }
        Ok(self.push(out, Op::AddBias { x: x.0, b: b.0 }, &[x.0, b.0]))
    }

    /// `y = x W + b`
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let h = self.matmul(x, w)?;
        self.add_bias(h, b)
    }

    fn conv_bias_check(&self, b: Option<Var>, c_out: usize, op: &'static str) -> Result<(), NnError> {
        if let Some(b) = b {
            let bs = self.shape(b);
            check(bs == [c_out], op, || format!("bias {bs:?} for {c_out} output channels"))?;
        }
        Ok(())
    }

    fn add_channel_bias(out: &mut [f64], bias: Option<&[f64]>, l: usize) {
        if let Some(bias) = bias {
            for (row, bv) in out.chunks_mut(l).zip(bias.iter().cycle()) {
                row.iter_mut().for_each(|v| *v += bv);
            }
        }
    }

    /// Stride-1 "same" cross-correlation. `x: [B, C_in, L]`,
    /// `w: [C_out, C_in, k]` with odd `k`, `b: [C_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, NnError> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        check(xs.len() == 3 && ws.len() == 3 && ws[1] == xs[1] && ws[2] % 2 == 1, "conv1d", || format!("x {xs:?}, w {ws:?}"))?;
        let d = ConvDims { b: xs[0], c_in: xs[1], c_out: ws[0], l: xs[2], k: ws[2] };
        self.conv_bias_check(b, d.c_out, "conv1d")?;
        let mut out = vec![0.0; d.b * d.c_out * d.l];
        let mut cols = vec![0.0; d.c_in * d.k * d.l];
        let (xv, wv) = (self.value(x).data(), self.value(w).data());
        for n in 0..d.b {
            im2col(&xv[n * d.c_in * d.l..(n + 1) * d.c_in * d.l], d.c_in, d.l, d.k, &mut cols);
            let y = &mut out[n * d.c_out * d.l..(n + 1) * d.c_out * d.l];
            gemm(d.c_out, d.c_in * d.k, d.l, wv, false, &cols, false, y, 0.0);
        }
        Self::add_channel_bias(&mut out, b.map(|b| self.value(b).data()), d.l);
        let parents: Vec<usize> = [Some(x.0), Some(w.0), b.map(|b| b.0)].into_iter().flatten().collect();
        let t = Tensor::new(vec![d.b, d.c_out, d.l], out)?;
        Ok(self.push(t, Op::Conv1d { x: x.0, w: w.0, b: b.map(|b| b.0), dims: d }, &parents))
    }

    /// Adjoint of [`Tape::conv1d`] with respect to its input.
    /// `x: [B, C_in, L]`, `w: [C_in, C_out, k]`, `b: [C_out]`.
    pub fn conv1d_transpose(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, NnError> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        check(xs.len() == 3 && ws.len() == 3 && ws[0] == xs[1] && ws[2] % 2 == 1, "conv1d_transpose", || {
            format!("x {xs:?}, w {ws:?}")
        })?;
        let d = ConvDims { b: xs[0], c_in: xs[1], c_out: ws[1], l: xs[2], k: ws[2] };
        self.conv_bias_check(b, d.c_out, "conv1d_transpose")?;
        let mut out = vec![0.0; d.b * d.c_out * d.l];
        let mut cols = vec![0.0; d.c_out * d.k * d.l];
        let (xv, wv) = (self.value(x).data(), self.value(w).data());
        for n in 0..d.b {
            let xb = &xv[n * d.c_in * d.l..(n + 1) * d.c_in * d.l];
            gemm(d.c_out * d.k, d.c_in, d.l, wv, true, xb, false, &mut cols, 0.0);
            col2im_add(&cols, d.c_out, d.l, d.k, &mut out[n * d.c_out * d.l..(n + 1) * d.c_out * d.l]);
        }
        Self::add_channel_bias(&mut out, b.map(|b| self.value(b).data()), d.l);
        let parents: Vec<usize> = [Some(x.0), Some(w.0), b.map(|b| b.0)].into_iter().flatten().collect();
        let t = Tensor::new(vec![d.b, d.c_out, d.l], out)?;
        Ok(self.push(t, Op::Conv1dT { x: x.0, w: w.0, b: b.map(|b| b.0), dims: d }, &parents))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let v = self.value(x);
        let out = Tensor::new(v.shape().to_vec(), v.data().iter().map(|&a| f(a)).collect()).expect("same shape");
        self.push(out, op, &[x.0])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |a| a.max(0.0), Op::Relu(x.0))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, Op::Sigmoid(x.0))
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.map(x, |a| a.clamp(lo, hi), Op::Clamp { x: x.0, lo, hi })
    }

    pub fn swap_last2(&mut self, x: Var) -> Result<Var, NnError> {
        let xs = self.shape(x).to_vec();
        check(xs.len() >= 2, "swap_last2", || format!("{xs:?}"))?;
        let (a, c) = (xs[xs.len() - 2], xs[xs.len() - 1]);
        let outer = self.value(x).len() / (a * c).max(1);
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            let base = o * a * c;
            for i in 0..a {
                for j in 0..c {
                    out[base + j * a + i] = src[base + i * c + j];
                }
            }
        }
        let mut shape = xs;
        let r = shape.len();
        shape.swap(r - 2, r - 1);
        Ok(self.push(Tensor::new(shape, out)?, Op::SwapLast2 { x: x.0, outer, a, c }, &[x.0]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, NnError> {
        let t = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(t, Op::Reshape(x.0), &[x.0]))
    }

    /// `y_0 = a u_0`, `y_t = a u_t + (1 - a) y_{t-1}` along axis 1 of
    /// `u: [B, L, C]`, with per-channel `alpha: [C]`.
    pub fn ema_scan(&mut self, u: Var, alpha: Var) -> Result<Var, NnError> {
        let (us, als) = (self.shape(u).to_vec(), self.shape(alpha).to_vec());
        check(us.len() == 3 && als == [us[2]], "ema_scan", || format!("u {us:?}, alpha {als:?}"))?;
        let (batch, len, ch) = (us[0], us[1], us[2]);
        let (uv, av) = (self.value(u).data(), self.value(alpha).data());
        let mut out = vec![0.0; uv.len()];
        for b in 0..batch {
            let base = b * len * ch;
            for c in 0..ch {
                out[base + c] = av[c] * uv[base + c];
            }
            for t in 1..len {
                let (prev, cur) = out[base + (t - 1) * ch..base + (t + 1) * ch].split_at_mut(ch);
                let ut = &uv[base + t * ch..base + (t + 1) * ch];
                for c in 0..ch {
                    cur[c] = av[c] * ut[c] + (1.0 - av[c]) * prev[c];
                }
            }
        }
        let t = Tensor::new(us, out)?;
        Ok(self.push(t, Op::EmaScan { u: u.0, alpha: alpha.0, batch, len, ch }, &[u.0, alpha.0]))
    }

    /// Softmax of a 1-D tensor.
    pub fn softmax(&mut self, x: Var) -> Result<Var, NnError> {
        let xs = self.shape(x).to_vec();
        check(xs.len() == 1 && xs[0] > 0, "softmax", || format!("{xs:?}"))?;
        let v = self.value(x).data();
        let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = v.iter().map(|a| (a - mx).exp()).collect();
        let s: f64 = e.iter().sum();
        let out = e.into_iter().map(|a| a / s).collect();
        Ok(self.push(Tensor::new(xs, out)?, Op::Softmax(x.0), &[x.0]))
    }

    /// `sum_i w[i] * xs[i]` over equally shaped tensors.
    pub fn weighted_sum(&mut self, xs: &[Var], w: Var) -> Result<Var, NnError> {
        check(!xs.is_empty() && self.shape(w) == [xs.len()], "weighted_sum", || {
            format!("{} inputs, weights {:?}", xs.len(), self.shape(w))
        })?;
        let shape = self.shape(xs[0]).to_vec();
        check(xs.iter().all(|v| self.shape(*v) == shape.as_slice()), "weighted_sum", || "input shapes differ".into())?;
        let wv = self.value(w).data().to_vec();
        let mut out = vec![0.0; self.value(xs[0]).len()];
        for (x, wi) in xs.iter().zip(&wv) {
            for (o, a) in out.iter_mut().zip(self.value(*x).data()) {
                *o += wi * a;
            }
        }
        let mut parents: Vec<usize> = xs.iter().map(|v| v.0).collect();
        parents.push(w.0);
        let op = Op::WeightedSum { xs: xs.iter().map(|v| v.0).collect(), w: w.0 };
        Ok(self.push(Tensor::new(shape, out)?, op, &parents))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.axpy_op(a, b, 1.0, true)
    }

    /// `a + beta * b`
    pub fn axpy(&mut self, a: Var, b: Var, beta: f64) -> Result<Var, NnError> {
        self.axpy_op(a, b, beta, false)
    }

    fn axpy_op(&mut self, a: Var, b: Var, beta: f64, plain: bool) -> Result<Var, NnError> {
        check(self.shape(a) == self.shape(b), "add", || format!("{:?} + {:?}", self.shape(a), self.shape(b)))?;
        let out: Vec<f64> = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + beta * y).collect();
        let t = Tensor::new(self.shape(a).to_vec(), out)?;
        let op = if plain { Op::Add(a.0, b.0) } else { Op::Axpy { a: a.0, b: b.0, beta } };
        Ok(self.push(t, op, &[a.0, b.0]))
    }

    /// `z = mu + eps * exp(logvar / 2)` with fixed noise `eps`.
    pub fn reparameterize(&mut self, mu: Var, logvar: Var, eps: Tensor) -> Result<Var, NnError> {
        check(self.shape(mu) == self.shape(logvar) && self.shape(mu) == eps.shape(), "reparameterize", || {
            format!("mu {:?}, logvar {:?}, eps {:?}", self.shape(mu), self.shape(logvar), eps.shape())
        })?;
        let (m, lv) = (self.value(mu).data(), self.value(logvar).data());
        let out: Vec<f64> = (0..m.len()).map(|i| m[i] + eps.data()[i] * (0.5 * lv[i]).exp()).collect();
        let t = Tensor::new(self.shape(mu).to_vec(), out)?;
        Ok(self.push(t, Op::Reparam { mu: mu.0, logvar: logvar.0, eps: eps.into_data() }, &[mu.0, logvar.0]))
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var, NnError> {
        check(self.shape(pred) == self.shape(target), "mse", || {
            format!("{:?} vs {:?}", self.shape(pred), self.shape(target))
        })?;
        let (p, t) = (self.value(pred).data(), self.value(target).data());
        let s: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        let v = s / p.len().max(1) as f64;
        Ok(self.push(Tensor::scalar(v), Op::Mse { pred: pred.0, target: target.0 }, &[pred.0, target.0]))
    }

    /// Batch mean of `-1/2 sum_j (1 + logvar - mu^2 - exp(logvar))` for
    /// `mu, logvar: [B, J]`.
    pub fn kl_divergence(&mut self, mu: Var, logvar: Var) -> Result<Var, NnError> {
        let s = self.shape(mu).to_vec();
        check(s.len() == 2 && s[1] > 0 && self.shape(logvar) == s.as_slice(), "kl_divergence", || {
            format!("mu {s:?}, logvar {:?}", self.shape(logvar))
        })?;
        let (m, lv) = (self.value(mu).data(), self.value(logvar).data());
        let total: f64 = m.iter().zip(lv).map(|(a, l)| 1.0 + l - a * a - l.exp()).sum();
        let v = -0.5 * total / s[0] as f64;
        Ok(self.push(Tensor::scalar(v), Op::Kl { mu: mu.0, logvar: logvar.0, batch: s[0] }, &[mu.0, logvar.0]))
    }

    /// `sum_i c[i] * x[i]`, used to reduce a tensor to a scalar in tests.
    pub fn project(&mut self, x: Var, c: &Tensor) -> Result<Var, NnError> {
        check(self.value(x).len() == c.len(), "project", || format!("{:?} . {:?}", self.shape(x), c.shape()))?;
        let v = self.value(x).dot(c);
        Ok(self.push(Tensor::scalar(v), Op::Project { x: x.0, c: c.data().to_vec() }, &[x.0]))
    }

    /// Gradients of the one-element node `root` with respect to every node
    /// that depends on a trainable leaf.
    pub fn backward(&self, root: Var) -> Result<Gradients, NnError> {
        check(self.value(root).len() == 1, "backward", || format!("root shape {:?}", self.shape(root)))?;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::full(self.shape(root), 1.0));
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Tensor>], i: usize) -> &'g mut [f64] {
        grads[i].get_or_insert_with(|| Tensor::zeros(self.nodes[i].value.shape())).data_mut()
    }

    fn backprop_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { x, w, rows, n, m } => {
                if self.wants(*x) {
                    let wv = self.nodes[*w].value.data();
                    gemm(*rows, *m, *n, gd, false, wv, true, self.acc(grads, *x), 1.0);
                }
                if self.wants(*w) {
                    let xv = self.nodes[*x].value.data();
                    gemm(*n, *rows, *m, xv, true, gd, false, self.acc(grads, *w), 1.0);
                }
            }
            Op::AddBias { x, b } => {
                if self.wants(*x) {
                    self.acc(grads, *x).iter_mut().zip(gd).for_each(|(a, v)| *a += v);
                }
                if self.wants(*b) {
                    let db = self.acc(grads, *b);
                    let n = db.len();
                    for row in gd.chunks(n) {
                        db.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                    }
                }
            }
            Op::Conv1d { x, w, b, dims: d } => {
                let (xv, wv) = (self.nodes[*x].value.data(), self.nodes[*w].value.data());
                let ck = d.c_in * d.k;
                let mut cols = vec![0.0; ck * d.l];
                let (want_x, want_w) = (self.wants(*x), self.wants(*w));
                for n in 0..d.b {
                    let gy = &gd[n * d.c_out * d.l..(n + 1) * d.c_out * d.l];
                    if want_w {
                        im2col(&xv[n * d.c_in * d.l..(n + 1) * d.c_in * d.l], d.c_in, d.l, d.k, &mut cols);
                        gemm(d.c_out, d.l, ck, gy, false, &cols, true, self.acc(grads, *w), 1.0);
                    }
                    if want_x {
                        gemm(ck, d.c_out, d.l, wv, true, gy, false, &mut cols, 0.0);
                        let dx = self.acc(grads, *x);
                        col2im_add(&cols, d.c_in, d.l, d.k, &mut dx[n * d.c_in * d.l..(n + 1) * d.c_in * d.l]);
                    }
                }
                self.conv_bias_grad(*b, gd, d.l, grads);
            }
            Op::Conv1dT { x, w, b, dims: d } => {
                let (xv, wv) = (self.nodes[*x].value.data(), self.nodes[*w].value.data());
                let ck = d.c_out * d.k;
                let mut cols = vec![0.0; ck * d.l];
                let (want_x, want_w) = (self.wants(*x), self.wants(*w));
                for n in 0..d.b {
                    im2col(&gd[n * d.c_out * d.l..(n + 1) * d.c_out * d.l], d.c_out, d.l, d.k, &mut cols);
                    if want_x {
                        let dx = &mut self.acc(grads, *x)[n * d.c_in * d.l..(n + 1) * d.c_in * d.l];
                        gemm(d.c_in, ck, d.l, wv, false, &cols, false, dx, 1.0);
                    }
                    if want_w {
                        let xb = &xv[n * d.c_in * d.l..(n + 1) * d.c_in * d.l];
                        gemm(d.c_in, d.l, ck, xb, false, &cols, true, self.acc(grads, *w), 1.0);
                    }
                }
                self.conv_bias_grad(*b, gd, d.l, grads);
            }
            Op::Relu(x) => {
                let xv = self.nodes[*x].value.data();
                let dx = self.acc(grads, *x);
                for ((d, a), v) in dx.iter_mut().zip(xv).zip(gd) {
                    if *a > 0.0 {
                        *d += v;
                    }
                }
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                let dx = self.acc(grads, *x);
                for ((d, s), v) in dx.iter_mut().zip(y).zip(gd) {
                    *d += v * s * (1.0 - s);
                }
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.nodes[*x].value.data();
                let dx = self.acc(grads, *x);
                for ((d, a), v) in dx.iter_mut().zip(xv).zip(gd) {
                    if *a >= *lo && *a <= *hi {
                        *d += v;
                    }
                }
            }
            Op::SwapLast2 { x, outer, a, c } => {
                let dx = self.acc(grads, *x);
                for o in 0..*outer {
                    let base = o * a * c;
                    for i in 0..*a {
                        for j in 0..*c {
                            dx[base + i * c + j] += gd[base + j * a + i];
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                self.acc(grads, *x).iter_mut().zip(gd).for_each(|(a, v)| *a += v);
            }
            Op::EmaScan { u, alpha, batch, len, ch } => {
                let (uv, av, y) = (self.nodes[*u].value.data(), self.nodes[*alpha].value.data(), node.value.data());
                let (batch, len, ch) = (*batch, *len, *ch);
                let mut du = vec![0.0; uv.len()];
                let mut da = vec![0.0; ch];
                let mut carry = vec![0.0; ch];
                for b in 0..batch {
                    let base = b * len * ch;
                    carry.iter_mut().for_each(|h| *h = 0.0);
                    for t in (0..len).rev() {
                        let off = base + t * ch;
                        for c in 0..ch {
                            let h = gd[off + c] + (1.0 - av[c]) * carry[c];
                            carry[c] = h;
                            du[off + c] = av[c] * h;
                            let prev = if t > 0 { y[off - ch + c] } else { 0.0 };
                            da[c] += h * (uv[off + c] - prev);
                        }
                    }
                }
                if self.wants(*u) {
                    self.acc(grads, *u).iter_mut().zip(&du).for_each(|(a, v)| *a += v);
                }
                if self.wants(*alpha) {
                    self.acc(grads, *alpha).iter_mut().zip(&da).for_each(|(a, v)| *a += v);
                }
            }
            Op::Softmax(x) => {
                let y = node.value.data();
                let s: f64 = y.iter().zip(gd).map(|(a, b)| a * b).sum();
                let dx = self.acc(grads, *x);
                for ((d, yi), gi) in dx.iter_mut().zip(y).zip(gd) {
                    *d += yi * (gi - s);
                }
            }
            Op::WeightedSum { xs, w } => {
                let wv = self.nodes[*w].value.data().to_vec();
                let mut dw = vec![0.0; xs.len()];
                for (k, x) in xs.iter().enumerate() {
                    dw[k] = self.nodes[*x].value.dot(g);
                    if self.wants(*x) {
                        self.acc(grads, *x).iter_mut().zip(gd).for_each(|(a, v)| *a += wv[k] * v);
                    }
                }
                if self.wants(*w) {
                    self.acc(grads, *w).iter_mut().zip(&dw).for_each(|(a, v)| *a += v);
                }
            }
            Op::Add(a, b) => {
                for p in [*a, *b] {
                    if self.wants(p) {
                        self.acc(grads, p).iter_mut().zip(gd).for_each(|(x, v)| *x += v);
                    }
                }
            }
            Op::Axpy { a, b, beta } => {
                if self.wants(*a) {
                    self.acc(grads, *a).iter_mut().zip(gd).for_each(|(x, v)| *x += v);
                }
                if self.wants(*b) {
                    self.acc(grads, *b).iter_mut().zip(gd).for_each(|(x, v)| *x += beta * v);
                }
            }
            Op::Reparam { mu, logvar, eps } => {
                if self.wants(*mu) {
                    self.acc(grads, *mu).iter_mut().zip(gd).for_each(|(x, v)| *x += v);
                }
                if self.wants(*logvar) {
                    let lv = self.nodes[*logvar].value.data().to_vec();
                    let dl = self.acc(grads, *logvar);
                    for i in 0..dl.len() {
                        dl[i] += gd[i] * eps[i] * 0.5 * (0.5 * lv[i]).exp();
                    }
                }
            }
            Op::Mse { pred, target } => {
                let (p, t) = (self.nodes[*pred].value.data(), self.nodes[*target].value.data());
                let scale = 2.0 * gd[0] / p.len().max(1) as f64;
                let diff: Vec<f64> = p.iter().zip(t).map(|(a, b)| scale * (a - b)).collect();
                if self.wants(*pred) {
                    self.acc(grads, *pred).iter_mut().zip(&diff).for_each(|(x, v)| *x += v);
                }
                if self.wants(*target) {
                    self.acc(grads, *target).iter_mut().zip(&diff).for_each(|(x, v)| *x -= v);
                }
            }
            Op::Kl { mu, logvar, batch } => {
                let s = gd[0] / *batch as f64;
                if self.wants(*mu) {
                    let m = self.nodes[*mu].value.data();
                    self.acc(grads, *mu).iter_mut().zip(m).for_each(|(x, a)| *x += s * a);
                }
                if self.wants(*logvar) {
                    let lv = self.nodes[*logvar].value.data();
                    self.acc(grads, *logvar).iter_mut().zip(lv).for_each(|(x, l)| *x += -0.5 * s * (1.0 - l.exp()));
                }
            }
            Op::Project { x, c } => {
                self.acc(grads, *x).iter_mut().zip(c).for_each(|(a, v)| *a += gd[0] * v);
            }
        }
    }

    fn conv_bias_grad(&self, b: Option<usize>, gd: &[f64], l: usize, grads: &mut [Option<Tensor>]) {
        let Some(b) = b else { return };
        if !self.wants(b) {
            return;
        }
        let db = self.acc(grads, b);
        let c = db.len();
        for (r, row) in gd.chunks(l).enumerate() {
            db[r % c] += row.iter().sum::<f64>();
        }
    }
}
