//! Reverse-mode automatic differentiation over a flat tape.
//!
//! A [`Tape`] records every operation of one forward pass. Leaves borrow
//! [`Tensor`]s; after [`Tape::backward`] their gradients are read back with
//! [`Tape::grad`] or [`Tape::leaf_grads`]. A tape lives for one training
//! step and must be dropped before the borrowed parameters are updated.

use std::borrow::Cow;

use super::gemm::{gemm, View};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One independent causal sequence inside a packed batch: rows
/// `start..start + len`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Vec<f64>),
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    RmsNorm {
        x: Var,
        gain: Var,
        inv_rms: Vec<f64>,
    },
    Silu(Var),
    SoftmaxRows(Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        n_heads: usize,
        n_kv_heads: usize,
        segments: Vec<Segment>,
        probs: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Vec<f64>,
        count: usize,
    },
    Sum(Var),
}

#[derive(Debug)]
struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    needs_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Leaves borrow their tensors for `'a`; everything computed on the tape is
/// owned by it.
#[derive(Debug, Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

const RMS_EPS: f64 = 1e-6;

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.push_cow(Cow::Owned(value), op, needs_grad)
    }

    fn push_cow(&mut self, value: Cow<'a, Tensor>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an owned leaf; gradients are tracked iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let needs = t.requires_grad();
        self.push(t, Op::Leaf, needs)
    }

    /// Borrows `t` as a trainable leaf.
    pub fn param(&mut self, t: &'a Tensor) -> Var {
        self.push_cow(Cow::Borrowed(t), Op::Leaf, true)
    }

    /// Borrows `t` as a constant.
    pub fn constant(&mut self, t: &'a Tensor) -> Var {
        self.push_cow(Cow::Borrowed(t), Op::Leaf, false)
    }

    /// Moves `t` onto the tape as a constant.
    pub fn constant_owned(&mut self, mut t: Tensor) -> Var {
        t.set_requires_grad(false);
        self.leaf(t)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn dims(&self, v: Var) -> Result<(usize, usize)> {
        self.nodes[v.0].value.dims2()
    }

    /// Gradient accumulated on a leaf by previous `backward` calls.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Leaf gradients of `vars`, with zeros for leaves no gradient reached.
    pub fn leaf_grads(&self, vars: &[Var]) -> Vec<Vec<f64>> {
        vars.iter()
            .map(|&v| {
                self.grad(v)
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; self.value(v).numel()])
            })
            .collect()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.dims(a)?;
        let (n2, p) = self.dims(b)?;
        if n != n2 {
            return Err(Error::Shape(format!(
                "matmul of {:?} and {:?}: inner dimensions differ",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut out = vec![0.0; m * p];
        gemm(
            m,
            n,
            p,
            View::rm(self.value(a).data(), n),
            View::rm(self.value(b).data(), p),
            &mut out,
            p,
            false,
        );
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(vec![m, p], out)?, Op::MatMul(a, b), needs))
    }

    /// `a · bᵀ`, i.e. a linear layer with weight `b` stored as `[out, in]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.dims(a)?;
        let (p, n2) = self.dims(b)?;
        if n != n2 {
            return Err(Error::Shape(format!(
                "linear of input {:?} with weight {:?}: inner dimensions differ",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut out = vec![0.0; m * p];
        gemm(
            m,
            n,
            p,
            View::rm(self.value(a).data(), n),
            View::t(self.value(b).data(), n),
            &mut out,
            p,
            false,
        );
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(vec![m, p], out)?, Op::MatMulNT(a, b), needs))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).transpose()?;
        let needs = self.needs(a);
        Ok(self.push(t, Op::Transpose(a), needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.value(a).add(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Add(a, b), needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.value(a).sub(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Sub(a, b), needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.value(a).hadamard(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Mul(a, b), needs))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let t = self.value(a).scale(k);
        let needs = self.needs(a);
        self.push(t, Op::Scale(a, k), needs)
    }

    /// Elementwise product with a constant mask (used for dropout).
    pub fn mul_const(&mut self, a: Var, mask: Vec<f64>) -> Result<Var> {
        let x = self.value(a);
        if mask.len() != x.numel() {
            return Err(Error::Shape(format!(
                "mask of length {} for tensor {:?}",
                mask.len(),
                x.shape()
            )));
        }
        let data = x.data().iter().zip(&mask).map(|(a, b)| a * b).collect();
        let t = Tensor::new(x.shape().to_vec(), data)?;
        let needs = self.needs(a);
        Ok(self.push(t, Op::MulConst(a, mask), needs))
    }

    /// Selects rows of `table` (an embedding lookup).
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, cols) = self.dims(table)?;
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(Error::Shape(format!(
                    "row {id} out of range for table with {rows} rows"
                )));
            }
            out.extend_from_slice(&src[id * cols..(id + 1) * cols]);
        }
        let t = Tensor::new(vec![ids.len(), cols], out)?;
        let needs = self.needs(table);
        Ok(self.push(
            t,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            needs,
        ))
    }

    /// Row-wise RMS normalisation with a learned gain of length `cols`.
    pub fn rms_norm(&mut self, x: Var, gain: Var) -> Result<Var> {
        let (rows, cols) = self.dims(x)?;
        if self.value(gain).numel() != cols {
            return Err(Error::Shape(format!(
                "rms_norm gain {:?} for input {:?}",
                self.value(gain).shape(),
                self.value(x).shape()
            )));
        }
        let xs = self.value(x).data();
        let gs = self.value(gain).data();
        let mut out = vec![0.0; rows * cols];
        let mut inv_rms = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &xs[r * cols..(r + 1) * cols];
            let ms = row.iter().map(|v| v * v).sum::<f64>() / cols as f64;
            let inv = 1.0 / (ms + RMS_EPS).sqrt();
            inv_rms.push(inv);
            for c in 0..cols {
                out[r * cols + c] = row[c] * inv * gs[c];
            }
        }
        let t = Tensor::new(vec![rows, cols], out)?;
        let needs = self.needs(x) || self.needs(gain);
        Ok(self.push(t, Op::RmsNorm { x, gain, inv_rms }, needs))
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| v * sigmoid(v));
        let needs = self.needs(x);
        self.push(t, Op::Silu(x), needs)
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = self.dims(x)?;
        let mut out = self.value(x).data().to_vec();
        for r in 0..rows {
            softmax_in_place(&mut out[r * cols..(r + 1) * cols]);
        }
        let t = Tensor::new(self.value(x).shape().to_vec(), out)?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::SoftmaxRows(x), needs))
    }

    /// Multi-head causal self-attention with grouped key/value heads over a
    /// packed batch. `q` is `[rows, n_heads·hd]`, `k` and `v` are
    /// `[rows, n_kv_heads·hd]`; each segment attends only within itself.
    pub fn causal_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        n_heads: usize,
        n_kv_heads: usize,
        segments: &[Segment],
    ) -> Result<Var> {
        let (rows, qc) = self.dims(q)?;
        let (krows, kc) = self.dims(k)?;
        if self.dims(v)? != (krows, kc) || krows != rows {
            return Err(Error::Shape(format!(
                "attention q {:?}, k {:?}, v {:?}",
                self.value(q).shape(),
                self.value(k).shape(),
                self.value(v).shape()
            )));
        }
        if n_heads == 0 || n_kv_heads == 0 || n_heads % n_kv_heads != 0 || qc % n_heads != 0 {
            return Err(Error::Shape(format!(
                "attention with {n_heads} heads / {n_kv_heads} kv heads over width {qc}"
            )));
        }
        let hd = qc / n_heads;
        if kc != hd * n_kv_heads {
            return Err(Error::Shape(format!(
                "key width {kc} does not match {n_kv_heads} heads of size {hd}"
            )));
        }
        let covered: usize = segments.iter().map(|s| s.len).sum();
        if covered != rows || segments.iter().any(|s| s.start + s.len > rows) {
            return Err(Error::Shape(format!(
                "segments cover {covered} of {rows} rows"
            )));
        }
        let group = n_heads / n_kv_heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let qd = self.value(q).data();
        let kd = self.value(k).data();
        let vd = self.value(v).data();
        let mut out = vec![0.0; rows * qc];
        let mut probs = Vec::with_capacity(segments.iter().map(|s| s.len * s.len).sum::<usize>() * n_heads);
        for seg in segments {
            let n = seg.len;
            if n == 0 {
                continue;
            }
            for h in 0..n_heads {
                let g = h / group;
                let mut p = vec![0.0; n * n];
                gemm(
                    n,
                    hd,
                    n,
                    View {
                        data: &qd[seg.start * qc + h * hd..],
                        rs: qc,
                        cs: 1,
                    },
                    View {
                        data: &kd[seg.start * kc + g * hd..],
                        rs: 1,
                        cs: kc,
                    },
                    &mut p,
                    n,
                    false,
                );
                for i in 0..n {
                    let row = &mut p[i * n..(i + 1) * n];
                    row.iter_mut().for_each(|s| *s *= scale);
                    softmax_in_place(&mut row[..=i]);
                    row[i + 1..].iter_mut().for_each(|s| *s = 0.0);
                }
                gemm(
                    n,
                    n,
                    hd,
                    View::rm(&p, n),
                    View {
                        data: &vd[seg.start * kc + g * hd..],
                        rs: kc,
                        cs: 1,
                    },
                    &mut out[seg.start * qc + h * hd..],
                    qc,
                    false,
                );
                probs.extend_from_slice(&p);
            }
        }
        let t = Tensor::new(vec![rows, qc], out)?;
        let needs = self.needs(q) || self.needs(k) || self.needs(v);
        Ok(self.push(
            t,
            Op::Attention {
                q,
                k,
                v,
                n_heads,
                n_kv_heads,
                segments: segments.to_vec(),
                probs,
            },
            needs,
        ))
    }

    /// Mean token cross-entropy over rows whose target is `Some`. Rows with
    /// `None` are masked out; with no targets the loss is zero.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
        let (rows, cols) = self.dims(logits)?;
        if targets.len() != rows {
            return Err(Error::Shape(format!(
                "{} targets for {rows} logit rows",
                targets.len()
            )));
        }
        let mut probs = self.value(logits).data().to_vec();
        let mut loss = 0.0;
        let mut count = 0;
        for (r, t) in targets.iter().enumerate() {
            let row = &mut probs[r * cols..(r + 1) * cols];
            softmax_in_place(row);
            if let Some(t) = *t {
                if t >= cols {
                    return Err(Error::Shape(format!("target {t} out of range for {cols} classes")));
                }
                loss -= row[t].max(f64::MIN_POSITIVE).ln();
                count += 1;
            }
        }
        if count > 0 {
            loss /= count as f64;
        }
        let needs = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                count,
            },
            needs,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(s), Op::Sum(x), needs)
    }

    /// Back-propagates from the scalar `loss`. Leaf gradients accumulate
    /// across calls; intermediate gradients do not persist.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                match &mut self.nodes[i].grad {
                    Some(buf) => buf.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => self.nodes[i].grad = Some(g),
                }
                continue;
            }
            self.backprop_node(i, &g, &mut grads)?;
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[i];
        let mut send = |v: Var, buf: Vec<f64>| {
            if self.needs(v) {
                accumulate(&mut grads[v.0], buf);
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, n) = self.dims(*a)?;
                let p = node.value.cols();
                if self.needs(*a) {
                    let mut da = vec![0.0; m * n];
                    gemm(m, p, n, View::rm(g, p), View::t(self.value(*b).data(), p), &mut da, n, false);
                    send(*a, da);
                }
                if self.needs(*b) {
                    let mut db = vec![0.0; n * p];
                    gemm(n, m, p, View::t(self.value(*a).data(), n), View::rm(g, p), &mut db, p, false);
                    send(*b, db);
                }
            }
            Op::MatMulNT(a, b) => {
                let (m, n) = self.dims(*a)?;
                let p = node.value.cols();
                if self.needs(*a) {
                    let mut da = vec![0.0; m * n];
                    gemm(m, p, n, View::rm(g, p), View::rm(self.value(*b).data(), n), &mut da, n, false);
                    send(*a, da);
                }
                if self.needs(*b) {
                    let mut db = vec![0.0; p * n];
                    gemm(p, m, n, View::t(g, p), View::rm(self.value(*a).data(), n), &mut db, n, false);
                    send(*b, db);
                }
            }
            Op::Transpose(a) => {
                let (r, c) = node.value.dims2()?;
                let mut da = vec![0.0; r * c];
                for x in 0..r {
                    for y in 0..c {
                        da[y * r + x] = g[x * c + y];
                    }
                }
                send(*a, da);
            }
            Op::Add(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let ad = self.value(*a).data();
                let bd = self.value(*b).data();
                if self.needs(*a) {
                    send(*a, g.iter().zip(bd).map(|(g, b)| g * b).collect());
                }
                if self.needs(*b) {
                    send(*b, g.iter().zip(ad).map(|(g, a)| g * a).collect());
                }
            }
            Op::Scale(a, k) => send(*a, g.iter().map(|v| v * k).collect()),
            Op::MulConst(a, mask) => send(*a, g.iter().zip(mask).map(|(g, m)| g * m).collect()),
            Op::Gather { table, ids } => {
                let (rows, cols) = self.dims(*table)?;
                let mut dt = vec![0.0; rows * cols];
                for (r, &id) in ids.iter().enumerate() {
                    let dst = &mut dt[id * cols..(id + 1) * cols];
                    dst.iter_mut().zip(&g[r * cols..(r + 1) * cols]).for_each(|(a, b)| *a += b);
                }
                send(*table, dt);
            }
            Op::RmsNorm { x, gain, inv_rms } => {
                let (rows, cols) = self.dims(*x)?;
                let xs = self.value(*x).data();
                let gs = self.value(*gain).data();
                let mut dx = vec![0.0; rows * cols];
                let mut dg = vec![0.0; cols];
                for r in 0..rows {
                    let inv = inv_rms[r];
                    let xr = &xs[r * cols..(r + 1) * cols];
                    let gr = &g[r * cols..(r + 1) * cols];
                    let mut dot = 0.0;
                    for c in 0..cols {
                        let xn = xr[c] * inv;
                        dg[c] += gr[c] * xn;
                        dot += gr[c] * gs[c] * xn;
                    }
                    dot /= cols as f64;
                    for c in 0..cols {
                        let xn = xr[c] * inv;
                        dx[r * cols + c] = inv * (gr[c] * gs[c] - xn * dot);
                    }
                }
                send(*x, dx);
                send(*gain, dg);
            }
            Op::Silu(a) => {
                let xs = self.value(*a).data();
                send(
                    *a,
                    g.iter()
                        .zip(xs)
                        .map(|(g, &x)| {
                            let s = sigmoid(x);
                            g * s * (1.0 + x * (1.0 - s))
                        })
                        .collect(),
                );
            }
            Op::SoftmaxRows(a) => {
                let (rows, cols) = node.value.dims2()?;
                let y = node.value.data();
                let mut dx = vec![0.0; rows * cols];
                for r in 0..rows {
                    let yr = &y[r * cols..(r + 1) * cols];
                    let gr = &g[r * cols..(r + 1) * cols];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for c in 0..cols {
                        dx[r * cols + c] = yr[c] * (gr[c] - dot);
                    }
                }
                send(*a, dx);
            }
            Op::Attention {
                q,
                k,
                v,
                n_heads,
                n_kv_heads,
                segments,
                probs,
            } => {
                let (rows, qc) = self.dims(*q)?;
                let kc = self.value(*k).cols();
                let hd = qc / n_heads;
                let group = n_heads / n_kv_heads;
                let scale = 1.0 / (hd as f64).sqrt();
                let qd = self.value(*q).data();
                let kd = self.value(*k).data();
                let vd = self.value(*v).data();
                let mut dq = vec![0.0; rows * qc];
                let mut dk = vec![0.0; rows * kc];
                let mut dv = vec![0.0; rows * kc];
                let mut offset = 0;
                for seg in segments {
                    let n = seg.len;
                    if n == 0 {
                        continue;
                    }
                    for h in 0..*n_heads {
                        let gk = h / group;
                        let p = &probs[offset..offset + n * n];
                        offset += n * n;
                        let d_out = View {
                            data: &g[seg.start * qc + h * hd..],
                            rs: qc,
                            cs: 1,
                        };
                        let mut dp = vec![0.0; n * n];
                        gemm(
                            n,
                            hd,
                            n,
                            d_out,
                            View {
                                data: &vd[seg.start * kc + gk * hd..],
                                rs: 1,
                                cs: kc,
                            },
                            &mut dp,
                            n,
                            false,
                        );
                        gemm(n, n, hd, View::t(p, n), d_out, &mut dv[seg.start * kc + gk * hd..], kc, true);
                        for r in 0..n {
                            let pr = &p[r * n..(r + 1) * n];
                            let dr = &mut dp[r * n..(r + 1) * n];
                            let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
                            for c in 0..n {
                                dr[c] = pr[c] * (dr[c] - dot) * scale;
                            }
                        }
                        gemm(
                            n,
                            n,
                            hd,
                            View::rm(&dp, n),
                            View {
                                data: &kd[seg.start * kc + gk * hd..],
                                rs: kc,
                                cs: 1,
                            },
                            &mut dq[seg.start * qc + h * hd..],
                            qc,
                            true,
                        );
                        gemm(
                            n,
                            n,
                            hd,
                            View::t(&dp, n),
                            View {
                                data: &qd[seg.start * qc + h * hd..],
                                rs: qc,
                                cs: 1,
                            },
                            &mut dk[seg.start * kc + gk * hd..],
                            kc,
                            true,
                        );
                    }
                }
                send(*q, dq);
                send(*k, dk);
                send(*v, dv);
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
                count,
            } => {
                let cols = self.value(*logits).cols();
                let mut dl = vec![0.0; probs.len()];
                if *count > 0 {
                    let k = g[0] / *count as f64;
                    for (r, t) in targets.iter().enumerate() {
                        if let Some(t) = *t {
                            for c in 0..cols {
                                dl[r * cols + c] = k * probs[r * cols + c];
                            }
                            dl[r * cols + t] -= k;
                        }
                    }
                }
                send(*logits, dl);
            }
            Op::Sum(a) => {
                let n = self.value(*a).numel();
                send(*a, vec![g[0]; n]);
            }
        }
        Ok(())
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, buf: Vec<f64>) {
    match slot {
        Some(existing) => existing.iter_mut().zip(&buf).for_each(|(a, b)| *a += b),
        None => *slot = Some(buf),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}
