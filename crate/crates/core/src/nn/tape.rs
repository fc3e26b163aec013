//! Reverse-mode autodiff over dense 2D tensors. A `Tape` records the forward
//! graph; `backward` walks it once in reverse and returns gradients for the
//! requested leaves. Tapes are single-use: a second backward call without
//! rebuilding the graph is rejected.

use super::tensor::Tensor;
use crate::{Error, Result};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

impl Var {
    /// Position in the gradient vector returned by [`Tape::backward`].
    pub fn index(self) -> usize {
        self.0
    }
}

struct BackCtx<'a> {
    out_grad: &'a Tensor,
    out_val: &'a Tensor,
    parents: &'a [Arc<Tensor>],
}

type BackFn = Box<dyn Fn(&BackCtx) -> Vec<Tensor>>;

struct Node {
    parents: Vec<usize>,
    back: Option<BackFn>,
}

#[derive(Default)]
pub struct Tape {
    values: Vec<Arc<Tensor>>,
    nodes: Vec<Node>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    fn push(&mut self, value: Tensor, parents: Vec<usize>, back: Option<BackFn>) -> Var {
        self.values.push(Arc::new(value));
        self.nodes.push(Node { parents, back });
        Var(self.values.len() - 1)
    }

    /// A differentiable leaf (parameter). The tensor is shared, not copied.
    pub fn leaf(&mut self, value: Arc<Tensor>) -> Var {
        self.values.push(value);
        self.nodes.push(Node { parents: Vec::new(), back: None });
        Var(self.values.len() - 1)
    }

    /// A constant input; gradients are not tracked through it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(Arc::new(value))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(|ctx| {
                let (a, b) = (&ctx.parents[0], &ctx.parents[1]);
                vec![
                    ctx.out_grad.matmul(&b.transpose()),
                    a.transpose().matmul(ctx.out_grad),
                ]
            })),
        )
    }

    /// Elementwise add; `b` may be a single row broadcast over `a`'s rows.
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let broadcast = vb.rows == 1 && va.rows > 1;
        assert!(
            va.shape() == vb.shape() || (broadcast && va.cols == vb.cols),
            "add shape mismatch {:?} vs {:?}",
            va.shape(),
            vb.shape()
        );
        let mut out = va.clone();
        for r in 0..out.rows {
            let br = if broadcast { 0 } else { r };
            for c in 0..out.cols {
                *out.at_mut(r, c) += vb.at(br, c);
            }
        }
        self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(move |ctx| {
                let ga = ctx.out_grad.clone();
                let gb = if broadcast {
                    let mut g = Tensor::zeros(1, ctx.out_grad.cols);
                    for r in 0..ctx.out_grad.rows {
                        for c in 0..ctx.out_grad.cols {
                            g.data[c] += ctx.out_grad.at(r, c);
                        }
                    }
                    g
                } else {
                    ctx.out_grad.clone()
                };
                vec![ga, gb]
            })),
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "sub shape mismatch");
        let mut out = va.clone();
        for (o, x) in out.data.iter_mut().zip(&vb.data) {
            *o -= x;
        }
        self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(|ctx| {
                let mut gb = ctx.out_grad.clone();
                gb.scale_assign(-1.0);
                vec![ctx.out_grad.clone(), gb]
            })),
        )
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "mul shape mismatch");
        let mut out = va.clone();
        for (o, x) in out.data.iter_mut().zip(&vb.data) {
            *o *= x;
        }
        self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(|ctx| {
                let (a, b) = (&ctx.parents[0], &ctx.parents[1]);
                let mut ga = ctx.out_grad.clone();
                let mut gb = ctx.out_grad.clone();
                for i in 0..ga.data.len() {
                    ga.data[i] *= b.data[i];
                    gb.data[i] *= a.data[i];
                }
                vec![ga, gb]
            })),
        )
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut out = self.value(a).clone();
        out.scale_assign(s);
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |ctx| {
                let mut g = ctx.out_grad.clone();
                g.scale_assign(s);
                vec![g]
            })),
        )
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let mut out = self.value(a).clone();
        for x in out.data.iter_mut() {
            *x += s;
        }
        self.push(out, vec![a.0], Some(Box::new(|ctx| vec![ctx.out_grad.clone()])))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for x in out.data.iter_mut() {
            *x = x.max(0.0);
        }
        self.push(
            out,
            vec![a.0],
            Some(Box::new(|ctx| {
                let mut g = ctx.out_grad.clone();
                for (gi, &vi) in g.data.iter_mut().zip(&ctx.parents[0].data) {
                    if vi <= 0.0 {
                        *gi = 0.0;
                    }
                }
                vec![g]
            })),
        )
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for x in out.data.iter_mut() {
            *x = x.exp();
        }
        self.push(
            out,
            vec![a.0],
            Some(Box::new(|ctx| {
                let mut g = ctx.out_grad.clone();
                for (gi, &oi) in g.data.iter_mut().zip(&ctx.out_val.data) {
                    *gi *= oi;
                }
                vec![g]
            })),
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total: f64 = self.value(a).data.iter().sum();
        let shape = self.value(a).shape();
        self.push(
            Tensor::scalar(total),
            vec![a.0],
            Some(Box::new(move |ctx| {
                let g = ctx.out_grad.item();
                vec![Tensor::from_vec(shape.0, shape.1, vec![g; shape.0 * shape.1])]
            })),
        )
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Row-wise layer normalization with learned gain and bias (single rows).
    pub fn layernorm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        const EPS: f64 = 1e-5;
        let vx = self.value(x);
        let (rows, cols) = vx.shape();
        assert_eq!(self.value(gain).shape(), (1, cols));
        assert_eq!(self.value(bias).shape(), (1, cols));
        let n = cols as f64;
        let mut out = Tensor::zeros(rows, cols);
        let (vg, vb) = (self.value(gain).clone(), self.value(bias).clone());
        for r in 0..rows {
            let row = &vx.data[r * cols..(r + 1) * cols];
            let mu: f64 = row.iter().sum::<f64>() / n;
            let var: f64 = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            let inv = 1.0 / (var + EPS).sqrt();
            for c in 0..cols {
                *out.at_mut(r, c) = (row[c] - mu) * inv * vg.data[c] + vb.data[c];
            }
        }
        self.push(
            out,
            vec![x.0, gain.0, bias.0],
            Some(Box::new(move |ctx| {
                let vx = &ctx.parents[0];
                let vg = &ctx.parents[1];
                let (rows, cols) = vx.shape();
                let n = cols as f64;
                let mut gx = Tensor::zeros(rows, cols);
                let mut gg = Tensor::zeros(1, cols);
                let mut gb = Tensor::zeros(1, cols);
                for r in 0..rows {
                    let row = &vx.data[r * cols..(r + 1) * cols];
                    let mu: f64 = row.iter().sum::<f64>() / n;
                    let var: f64 = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
                    let inv = 1.0 / (var + EPS).sqrt();
                    let xhat: Vec<f64> = row.iter().map(|v| (v - mu) * inv).collect();
                    let dy = &ctx.out_grad.data[r * cols..(r + 1) * cols];
                    // d gain / d bias accumulate over rows.
                    for c in 0..cols {
                        gg.data[c] += dy[c] * xhat[c];
                        gb.data[c] += dy[c];
                    }
                    let dxhat: Vec<f64> =
                        (0..cols).map(|c| dy[c] * vg.data[c]).collect();
                    let mean_dxhat: f64 = dxhat.iter().sum::<f64>() / n;
                    let mean_dxhat_xhat: f64 =
                        dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / n;
                    for c in 0..cols {
                        *gx.at_mut(r, c) =
                            (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat) * inv;
                    }
                }
                vec![gx, gg, gb]
            })),
        )
    }

    /// Row-wise softmax with masked columns receiving zero probability.
    /// Rejects rows where every column is masked.
    pub fn masked_softmax(&mut self, logits: Var, mask: &[bool]) -> Result<Var> {
        let v = self.value(logits);
        let (rows, cols) = v.shape();
        assert_eq!(mask.len(), cols, "mask length mismatch");
        if !mask.iter().any(|&m| m) {
            return Err(Error::invalid("masked_softmax: all slots masked"));
        }
        let mask: Vec<bool> = mask.to_vec();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let row = &v.data[r * cols..(r + 1) * cols];
            let m = row
                .iter()
                .zip(&mask)
                .filter(|(_, &keep)| keep)
                .map(|(&x, _)| x)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for c in 0..cols {
                if mask[c] {
                    let e = (row[c] - m).exp();
                    *out.at_mut(r, c) = e;
                    z += e;
                }
            }
            for c in 0..cols {
                *out.at_mut(r, c) /= z;
            }
        }
        Ok(self.push(
            out,
            vec![logits.0],
            Some(Box::new(move |ctx| {
                let s = ctx.out_val;
                let (rows, cols) = s.shape();
                let mut g = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    let srow = &s.data[r * cols..(r + 1) * cols];
                    let dy = &ctx.out_grad.data[r * cols..(r + 1) * cols];
                    let dot: f64 = srow.iter().zip(dy).map(|(a, b)| a * b).sum();
                    for c in 0..cols {
                        *g.at_mut(r, c) = srow[c] * (dy[c] - dot);
                    }
                }
                vec![g]
            })),
        ))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(
            out,
            vec![a.0],
            Some(Box::new(|ctx| vec![ctx.out_grad.transpose()])),
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut row_counts = Vec::new();
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols, cols, "concat_rows column mismatch");
            row_counts.push(v.rows);
            data.extend_from_slice(&v.data);
        }
        let rows: usize = row_counts.iter().sum();
        self.push(
            Tensor::from_vec(rows, cols, data),
            parts.iter().map(|p| p.0).collect(),
            Some(Box::new(move |ctx| {
                let mut grads = Vec::new();
                let mut offset = 0;
                for &rc in &row_counts {
                    let slice = &ctx.out_grad.data[offset * cols..(offset + rc) * cols];
                    grads.push(Tensor::from_vec(rc, cols, slice.to_vec()));
                    offset += rc;
                }
                grads
            })),
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows;
        let col_counts: Vec<usize> = parts.iter().map(|&p| self.value(p).cols).collect();
        let cols: usize = col_counts.iter().sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for (&p, &cc) in parts.iter().zip(&col_counts) {
            let v = self.value(p);
            assert_eq!(v.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                for c in 0..cc {
                    *out.at_mut(r, offset + c) = v.at(r, c);
                }
            }
            offset += cc;
        }
        self.push(
            out,
            parts.iter().map(|p| p.0).collect(),
            Some(Box::new(move |ctx| {
                let mut grads = Vec::new();
                let mut offset = 0;
                for &cc in &col_counts {
                    let mut g = Tensor::zeros(ctx.out_grad.rows, cc);
                    for r in 0..ctx.out_grad.rows {
                        for c in 0..cc {
                            *g.at_mut(r, c) = ctx.out_grad.at(r, offset + c);
                        }
                    }
                    grads.push(g);
                    offset += cc;
                }
                grads
            })),
        )
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a);
        let (rows, cols) = v.shape();
        assert!(start + len <= rows);
        let out = Tensor::from_vec(len, cols, v.data[start * cols..(start + len) * cols].to_vec());
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |ctx| {
                let mut g = Tensor::zeros(rows, cols);
                g.data[start * cols..(start + len) * cols].copy_from_slice(&ctx.out_grad.data);
                vec![g]
            })),
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a);
        let (rows, cols) = v.shape();
        assert!(start + len <= cols);
        let mut out = Tensor::zeros(rows, len);
        for r in 0..rows {
            for c in 0..len {
                *out.at_mut(r, c) = v.at(r, start + c);
            }
        }
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |ctx| {
                let mut g = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    for c in 0..len {
                        *g.at_mut(r, start + c) = ctx.out_grad.at(r, c);
                    }
                }
                vec![g]
            })),
        )
    }

    /// Elementwise minimum; the gradient flows to the smaller operand
    /// (ties go to the first).
    pub fn min2(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "min2 shape mismatch");
        let mut out = va.clone();
        for (o, &x) in out.data.iter_mut().zip(&vb.data) {
            *o = o.min(x);
        }
        self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(|ctx| {
                let (a, b) = (&ctx.parents[0], &ctx.parents[1]);
                let mut ga = ctx.out_grad.clone();
                let mut gb = ctx.out_grad.clone();
                for i in 0..ga.data.len() {
                    if a.data[i] <= b.data[i] {
                        gb.data[i] = 0.0;
                    } else {
                        ga.data[i] = 0.0;
                    }
                }
                vec![ga, gb]
            })),
        )
    }

    /// Clamp with zero gradient outside the open interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let mut out = self.value(a).clone();
        for x in out.data.iter_mut() {
            *x = x.clamp(lo, hi);
        }
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |ctx| {
                let mut g = ctx.out_grad.clone();
                for (gi, &vi) in g.data.iter_mut().zip(&ctx.parents[0].data) {
                    if vi <= lo || vi >= hi {
                        *gi = 0.0;
                    }
                }
                vec![g]
            })),
        )
    }

    /// Reverse pass from a scalar loss. Returns per-variable gradients
    /// (None for variables the loss does not depend on). Consumes the tape's
    /// single backward budget.
    pub fn backward(&mut self, loss: Var) -> Result<Vec<Option<Tensor>>> {
        if self.consumed {
            return Err(Error::invalid("backward called twice on the same tape"));
        }
        self.consumed = true;
        if self.value(loss).len() != 1 {
            return Err(Error::invalid("backward requires a scalar loss"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.values.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(out_grad) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if let Some(back) = &node.back {
                let parent_vals: Vec<Arc<Tensor>> =
                    node.parents.iter().map(|&p| Arc::clone(&self.values[p])).collect();
                let ctx = BackCtx {
                    out_grad: &out_grad,
                    out_val: &self.values[i],
                    parents: &parent_vals,
                };
                let parent_grads = back(&ctx);
                debug_assert_eq!(parent_grads.len(), node.parents.len());
                for (&p, g) in node.parents.iter().zip(parent_grads) {
                    match &mut grads[p] {
                        Some(acc) => acc.add_assign(&g),
                        slot => *slot = Some(g),
                    }
                }
            }
            grads[i] = Some(out_grad);
        }
        Ok(grads)
    }
}
