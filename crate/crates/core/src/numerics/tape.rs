//! Wengert tape: every op appends a node holding its value and enough saved
//! state to run its vector-Jacobian product. `backward` replays the list in
//! reverse.

use super::attention;
use super::tensor::{compensated_sum, gemm, gemm_nt, gemm_tn, Tensor};
use crate::error::{Error, Result};

/// Variance stabilizer for [`Tape::layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        p: usize,
        q: usize,
        r: usize,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
        rows: usize,
        inp: usize,
        out: usize,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Silu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        d: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        batch: usize,
        len: usize,
        heads: usize,
        probs: Vec<f64>,
    },
    ConcatCols {
        parts: Vec<(Var, usize)>,
        rows: usize,
    },
    Sum(Var),
    HalfSquaredNorm(Var),
    RowMse {
        pred: Var,
        target: Vec<f64>,
        rows: usize,
    },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

/// Recorder for one forward pass.
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
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `var`, or zeros of length `len` when it received none.
    pub fn get_or_zeros(&self, var: Var, len: usize) -> Vec<f64> {
        self.get(var).map_or_else(|| vec![0.0; len], <[f64]>::to_vec)
    }
}

fn check_same_shape(tape: &Tape, a: Var, b: Var, what: &str) -> Result<()> {
    if tape.nodes[a.0].shape != tape.nodes[b.0].shape {
        return Err(Error::Dimension(format!(
            "{what}: {:?} vs {:?}",
            tape.nodes[a.0].shape, tape.nodes[b.0].shape
        )));
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records an input. Gradients are only produced for leaves with `requires_grad`.
    pub fn leaf(&mut self, tensor: Tensor, requires_grad: bool) -> Var {
        let shape = tensor.shape().to_vec();
        self.push(shape, tensor.into_data(), requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, tensor: Tensor) -> Var {
        self.leaf(tensor, false)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.nodes[v.0].shape.clone(), self.nodes[v.0].value.clone())
            .expect("tape nodes keep shape and data consistent")
    }

    fn rows_cols(&self, v: Var) -> (usize, usize) {
        let shape = &self.nodes[v.0].shape;
        let cols = shape.last().copied().unwrap_or(1);
        let rows = if cols == 0 {
            0
        } else {
            self.nodes[v.0].value.len() / cols
        };
        (rows, cols)
    }

    /// Matrix product of 2-D `a[p×q]` and `b[q×r]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension(format!("matmul {sa:?} x {sb:?}")));
        }
        let (p, q, r) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; p * r];
        gemm(&self.nodes[a.0].value, &self.nodes[b.0].value, &mut out, p, q, r);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![p, r], out, rg, Op::MatMul { a, b, p, q, r }))
    }

    /// `x·W + b` over the last axis of `x`; `w` is `[in×out]`, `b` is `[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (rows, inp) = self.rows_cols(x);
        let sw = &self.nodes[w.0].shape;
        if sw.len() != 2 || sw[0] != inp {
            return Err(Error::Dimension(format!(
                "linear: input width {inp} vs weight {sw:?}"
            )));
        }
        let out_w = sw[1];
        if let Some(b) = b {
            if self.nodes[b.0].shape != [out_w] {
                return Err(Error::Dimension(format!(
                    "linear: bias {:?} vs width {out_w}",
                    self.nodes[b.0].shape
                )));
            }
        }
        let mut out = vec![0.0; rows * out_w];
        if let Some(b) = b {
            let bias = &self.nodes[b.0].value;
            for row in out.chunks_mut(out_w) {
                row.copy_from_slice(bias);
            }
        }
        gemm(
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            &mut out,
            rows,
            inp,
            out_w,
        );
        let mut shape = self.nodes[x.0].shape.clone();
        if shape.is_empty() {
            shape.push(out_w);
        } else {
            *shape.last_mut().unwrap() = out_w;
        }
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(
            shape,
            out,
            rg,
            Op::Linear {
                x,
                w,
                b,
                rows,
                inp,
                out: out_w,
            },
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same_shape(self, a, b, "add")?;
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x + y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.nodes[a.0].shape.clone(), out, rg, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same_shape(self, a, b, "sub")?;
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x - y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.nodes[a.0].shape.clone(), out, rg, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same_shape(self, a, b, "mul")?;
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x * y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.nodes[a.0].shape.clone(), out, rg, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.nodes[a.0].value.iter().map(|x| x * c).collect();
        let rg = self.rg(a);
        self.push(self.nodes[a.0].shape.clone(), out, rg, Op::Scale(a, c))
    }

    /// Elementwise `x·sigmoid(x)`.
    pub fn silu(&mut self, x: Var) -> Var {
        let out = self.nodes[x.0]
            .value
            .iter()
            .map(|&v| v * sigmoid(v))
            .collect();
        let rg = self.rg(x);
        self.push(self.nodes[x.0].shape.clone(), out, rg, Op::Silu(x))
    }

    /// Normalizes each row over the last axis, then applies `gain`/`bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (rows, d) = self.rows_cols(x);
        if d < 2 {
            return Err(Error::Dimension(format!(
                "layer_norm needs a last extent >= 2, got {d}"
            )));
        }
        if self.nodes[gain.0].shape != [d] || self.nodes[bias.0].shape != [d] {
            return Err(Error::Dimension(format!(
                "layer_norm gain/bias must be [{d}]"
            )));
        }
        let xv = &self.nodes[x.0].value;
        let g = &self.nodes[gain.0].value;
        let bb = &self.nodes[bias.0].value;
        let mut xhat = vec![0.0; rows * d];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; rows * d];
        for r in 0..rows {
            let row = &xv[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[r] = inv;
            for j in 0..d {
                let h = (row[j] - mean) * inv;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + bb[j];
            }
        }
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(
            self.nodes[x.0].shape.clone(),
            out,
            rg,
            Op::LayerNorm {
                x,
                gain,
                bias,
                d,
                xhat,
                inv_std,
            },
        ))
    }

    /// Multi-head scaled dot-product attention with a strictly causal mask.
    ///
    /// `q`, `k`, `v` are `[batch·len, width]` token matrices (already
    /// projected); sequence `b` occupies rows `b·len .. (b+1)·len`.
    pub fn causal_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        batch: usize,
        len: usize,
        heads: usize,
    ) -> Result<Var> {
        check_same_shape(self, q, k, "attention q/k")?;
        check_same_shape(self, q, v, "attention q/v")?;
        let (rows, width) = self.rows_cols(q);
        if rows != batch * len {
            return Err(Error::Dimension(format!(
                "attention: {rows} rows cannot be {batch} sequences of length {len}"
            )));
        }
        if heads == 0 || width % heads != 0 {
            return Err(Error::Config(format!(
                "model width {width} is not divisible by {heads} heads"
            )));
        }
        let (out, probs) = attention::forward(
            &self.nodes[q.0].value,
            &self.nodes[k.0].value,
            &self.nodes[v.0].value,
            batch,
            len,
            width,
            heads,
        );
        let rg = self.rg(q) || self.rg(k) || self.rg(v);
        Ok(self.push(
            self.nodes[q.0].shape.clone(),
            out,
            rg,
            Op::Attention {
                q,
                k,
                v,
                batch,
                len,
                heads,
                probs,
            },
        ))
    }

    /// Concatenates row-aligned 2-D inputs along the last axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|&p| self.rows_cols(p).0)
            .ok_or_else(|| Error::Dimension("concat of nothing".into()))?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.rows_cols(p);
            if r != rows {
                return Err(Error::Dimension(format!(
                    "concat: {r} rows vs {rows} rows"
                )));
            }
            widths.push((p, c));
        }
        let total: usize = widths.iter().map(|(_, c)| c).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &(p, c) in &widths {
                out.extend_from_slice(&self.nodes[p.0].value[r * c..(r + 1) * c]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            vec![rows, total],
            out,
            rg,
            Op::ConcatCols {
                parts: widths,
                rows,
            },
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = compensated_sum(self.nodes[a.0].value.iter().copied());
        let rg = self.rg(a);
        self.push(vec![], vec![s], rg, Op::Sum(a))
    }

    /// `‖a‖² / 2`
    pub fn half_squared_norm(&mut self, a: Var) -> Var {
        let s = 0.5 * compensated_sum(self.nodes[a.0].value.iter().map(|v| v * v));
        let rg = self.rg(a);
        self.push(vec![], vec![s], rg, Op::HalfSquaredNorm(a))
    }

    /// Mean over rows of the squared Euclidean distance between `pred` rows
    /// and the matching rows of a constant `target`.
    pub fn row_mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        if self.nodes[pred.0].shape != target.shape() {
            return Err(Error::Dimension(format!(
                "row_mse: {:?} vs {:?}",
                self.nodes[pred.0].shape,
                target.shape()
            )));
        }
        let (rows, _) = self.rows_cols(pred);
        if rows == 0 {
            return Err(Error::Dimension("row_mse over zero rows".into()));
        }
        let total = compensated_sum(
            self.nodes[pred.0]
                .value
                .iter()
                .zip(target.data())
                .map(|(p, t)| (p - t) * (p - t)),
        );
        let rg = self.rg(pred);
        Ok(self.push(
            vec![],
            vec![total / rows as f64],
            rg,
            Op::RowMse {
                pred,
                target: target.data().to_vec(),
                rows,
            },
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(gout);
                    continue;
                }
                Op::MatMul { a, b, p, q, r } => {
                    if self.rg(*a) {
                        let ga = accumulate(&mut grads[a.0], p * q);
                        gemm_nt(&gout, &self.nodes[b.0].value, ga, *p, *q, *r);
                    }
                    if self.rg(*b) {
                        let gb = accumulate(&mut grads[b.0], q * r);
                        gemm_tn(&self.nodes[a.0].value, &gout, gb, *p, *q, *r);
                    }
                }
                Op::Linear {
                    x,
                    w,
                    b,
                    rows,
                    inp,
                    out,
                } => {
                    if self.rg(*x) {
                        let gx = accumulate(&mut grads[x.0], rows * inp);
                        gemm_nt(&gout, &self.nodes[w.0].value, gx, *rows, *inp, *out);
                    }
                    if self.rg(*w) {
                        let gw = accumulate(&mut grads[w.0], inp * out);
                        gemm_tn(&self.nodes[x.0].value, &gout, gw, *rows, *inp, *out);
                    }
                    if let Some(b) = b {
                        if self.rg(*b) {
                            let gb = accumulate(&mut grads[b.0], *out);
                            for row in gout.chunks(*out) {
                                for (g, d) in gb.iter_mut().zip(row) {
                                    *g += d;
                                }
                            }
                        }
                    }
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    let n = gout.len();
                    if self.rg(*a) {
                        let ga = accumulate(&mut grads[a.0], n);
                        for (g, d) in ga.iter_mut().zip(&gout) {
                            *g += d;
                        }
                    }
                    if self.rg(*b) {
                        let gb = accumulate(&mut grads[b.0], n);
                        for (g, d) in gb.iter_mut().zip(&gout) {
                            *g += sign * d;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let n = gout.len();
                    if self.rg(*a) {
                        let bv = &self.nodes[b.0].value;
                        let ga = accumulate(&mut grads[a.0], n);
                        for i in 0..n {
                            ga[i] += gout[i] * bv[i];
                        }
                    }
                    if self.rg(*b) {
                        let av = &self.nodes[a.0].value;
                        let gb = accumulate(&mut grads[b.0], n);
                        for i in 0..n {
                            gb[i] += gout[i] * av[i];
                        }
                    }
                }
                Op::Scale(a, c) => {
                    let ga = accumulate(&mut grads[a.0], gout.len());
                    for (g, d) in ga.iter_mut().zip(&gout) {
                        *g += c * d;
                    }
                }
                Op::Silu(x) => {
                    let xv = &self.nodes[x.0].value;
                    let gx = accumulate(&mut grads[x.0], gout.len());
                    for i in 0..gout.len() {
                        let s = sigmoid(xv[i]);
                        gx[i] += gout[i] * s * (1.0 + xv[i] * (1.0 - s));
                    }
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    d,
                    xhat,
                    inv_std,
                } => {
                    let d = *d;
                    let rows = inv_std.len();
                    if self.rg(*gain) {
                        let gg = accumulate(&mut grads[gain.0], d);
                        for r in 0..rows {
                            for j in 0..d {
                                gg[j] += gout[r * d + j] * xhat[r * d + j];
                            }
                        }
                    }
                    if self.rg(*bias) {
                        let gb = accumulate(&mut grads[bias.0], d);
                        for r in 0..rows {
                            for j in 0..d {
                                gb[j] += gout[r * d + j];
                            }
                        }
                    }
                    if self.rg(*x) {
                        let g = &self.nodes[gain.0].value;
                        let gx = accumulate(&mut grads[x.0], rows * d);
                        let mut dxhat = vec![0.0; d];
                        for r in 0..rows {
                            let mut sum_d = 0.0;
                            let mut sum_dx = 0.0;
                            for j in 0..d {
                                let v = gout[r * d + j] * g[j];
                                dxhat[j] = v;
                                sum_d += v;
                                sum_dx += v * xhat[r * d + j];
                            }
                            let scale = inv_std[r] / d as f64;
                            for j in 0..d {
                                gx[r * d + j] += scale
                                    * (d as f64 * dxhat[j] - sum_d - xhat[r * d + j] * sum_dx);
                            }
                        }
                    }
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    batch,
                    len,
                    heads,
                    probs,
                } => {
                    let n = gout.len();
                    let width = n / (batch * len).max(1);
                    let (dq, dk, dv) = attention::backward(
                        &gout,
                        &self.nodes[q.0].value,
                        &self.nodes[k.0].value,
                        &self.nodes[v.0].value,
                        probs,
                        *batch,
                        *len,
                        width,
                        *heads,
                    );
                    for (var, g) in [(*q, dq), (*k, dk), (*v, dv)] {
                        if self.rg(var) {
                            let slot = accumulate(&mut grads[var.0], n);
                            for (s, d) in slot.iter_mut().zip(&g) {
                                *s += d;
                            }
                        }
                    }
                }
                Op::ConcatCols { parts, rows } => {
                    let total: usize = parts.iter().map(|(_, c)| c).sum();
                    let mut offset = 0;
                    for &(p, c) in parts {
                        if self.rg(p) {
                            let gp = accumulate(&mut grads[p.0], rows * c);
                            for r in 0..*rows {
                                for j in 0..c {
                                    gp[r * c + j] += gout[r * total + offset + j];
                                }
                            }
                        }
                        offset += c;
                    }
                }
                Op::Sum(a) => {
                    let n = self.nodes[a.0].value.len();
                    let ga = accumulate(&mut grads[a.0], n);
                    for g in ga.iter_mut() {
                        *g += gout[0];
                    }
                }
                Op::HalfSquaredNorm(a) => {
                    let av = &self.nodes[a.0].value;
                    let ga = accumulate(&mut grads[a.0], av.len());
                    for (g, x) in ga.iter_mut().zip(av) {
                        *g += gout[0] * x;
                    }
                }
                Op::RowMse { pred, target, rows } => {
                    let pv = &self.nodes[pred.0].value;
                    let c = 2.0 * gout[0] / *rows as f64;
                    let gp = accumulate(&mut grads[pred.0], pv.len());
                    for i in 0..pv.len() {
                        gp[i] += c * (pv[i] - target[i]);
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_values() {
        let mut tape = Tape::new();
        let id = tape.constant(t2(&[&[1.0, 0.0], &[0.0, 1.0]]));
        let b = tape.constant(t2(&[&[2.0, -3.0], &[0.5, 7.0]]));
        let out = tape.matmul(id, b).unwrap();
        assert_eq!(tape.value(out), tape.value(b));

        let a = tape.constant(t2(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let ones = tape.constant(t2(&[&[1.0], &[1.0]]));
        let out = tape.matmul(a, ones).unwrap();
        assert_eq!(tape.value(out), &[3.0, 7.0]);
        assert_eq!(tape.shape(out), &[2, 1]);

        let z = tape.constant(Tensor::zeros(&[3, 2]));
        let out = tape.matmul(z, b).unwrap();
        assert_eq!(tape.value(out), &[0.0; 6]);
    }

    #[test]
    fn matmul_rejects_mismatched_inner_extent() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(tape.matmul(a, b), Err(Error::Dimension(_))));
    }

    #[test]
    fn silu_values() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.0, 1.0, -50.0]));
        let y = tape.silu(x);
        let v = tape.value(y);
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
        assert!((v[1] - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!(v[2].abs() < 1e-20);
    }

    #[test]
    fn layer_norm_closed_forms() {
        let mut tape = Tape::new();
        let g = tape.constant(Tensor::ones(&[2]));
        let b = tape.constant(Tensor::zeros(&[2]));
        let x = tape.constant(t2(&[&[3.0, 3.0], &[1.0, -1.0]]));
        let y = tape.layer_norm(x, g, b).unwrap();
        let v = tape.value(y);
        assert_eq!(&v[..2], &[0.0, 0.0]);
        let expected = 1.0 / (1.0 + LAYER_NORM_EPS).sqrt();
        assert!((v[2] - expected).abs() < 1e-15);
        assert!((v[3] + expected).abs() < 1e-15);
        assert!((v[2] - 0.999_995).abs() < 1e-9);

        let g0 = tape.constant(Tensor::zeros(&[2]));
        let b7 = tape.constant(Tensor::vector(vec![0.7, -2.0]));
        let y = tape.layer_norm(x, g0, b7).unwrap();
        assert_eq!(tape.value(y), &[0.7, -2.0, 0.7, -2.0]);
    }

    #[test]
    fn layer_norm_rejects_width_one() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[3, 1]));
        let g = tape.constant(Tensor::ones(&[1]));
        let b = tape.constant(Tensor::zeros(&[1]));
        assert!(matches!(tape.layer_norm(x, g, b), Err(Error::Dimension(_))));
    }

    #[test]
    fn simple_gradients() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::vector(vec![0.3, -1.2, 4.0]), true);
        let s = tape.sum(w);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(w).unwrap(), &[1.0, 1.0, 1.0]);

        let h = tape.half_squared_norm(w);
        let g = tape.backward(h).unwrap();
        assert_eq!(g.get(w).unwrap(), &[0.3, -1.2, 4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        let y = tape.silu(w);
        assert!(matches!(tape.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        let c = tape.constant(Tensor::vector(vec![5.0, 6.0]));
        let p = tape.mul(w, c).unwrap();
        let s = tape.sum(p);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(w).unwrap(), &[5.0, 6.0]);
        assert!(g.get(c).is_none());
    }
}
