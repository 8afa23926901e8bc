//! Drift network `s_θ(t, y, c)` and path encoder `Φ_θ`.
//!
//! ```text
//! time  t ──FFN──┐
//! state y ──FFN──┼── concat ──FFN──▶ drift ∈ ℝ^d
//! history ─Φ_θ───┘
//! ```
//!
//! Each FFN is linear → layer norm → SiLU → linear. `Φ_θ` embeds tokens
//! linearly (plus fixed sinusoidal positions), runs one pre-norm causal
//! encoder block and a final layer norm; `c_i` is the output at position `i`.
//! The last linear layer of the output FFN starts at zero, so a fresh network
//! is the zero drift and the transport map starts as the identity.
//!
//! Two forward paths exist: a tape path for training and a plain path with a
//! key/value cache for inference. They compute the same function.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{SBBTSConfig, TokenFeatures};
use crate::error::{Error, Result};
use crate::numerics::{
    causal_self_attention, ffn, layer_norm, linear, AttentionIdx, FfnIdx, LinearIdx, NormIdx,
    ParamBuilder, ParamSet, Tape, Tensor, Var, LAYER_NORM_EPS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub dim: usize,
    pub d_model: usize,
    pub n_head: usize,
    pub ffn_mult: usize,
    pub token_features: TokenFeatures,
    pub positional_encoding: bool,
}

impl Architecture {
    pub fn from_config(config: &SBBTSConfig, dim: usize) -> Self {
        Architecture {
            dim,
            d_model: config.d_model,
            n_head: config.n_head,
            ffn_mult: config.ffn_mult,
            token_features: config.token_features,
            positional_encoding: config.positional_encoding,
        }
    }

    pub fn token_width(&self) -> usize {
        self.token_features.width(self.dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Dimension("drift network needs dim >= 1".into()));
        }
        if self.d_model < 2 || self.n_head == 0 || self.d_model % self.n_head != 0 {
            return Err(Error::Config(format!(
                "d_model {} must be >= 2 and divisible by n_head {}",
                self.d_model, self.n_head
            )));
        }
        if self.ffn_mult == 0 {
            return Err(Error::Config("ffn_mult must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct NetIdx {
    time: FfnIdx,
    state: FfnIdx,
    token: LinearIdx,
    pre_attn: NormIdx,
    attn: AttentionIdx,
    pre_ffn: NormIdx,
    ffn_in: LinearIdx,
    ffn_out: LinearIdx,
    enc_norm: NormIdx,
    head: FfnIdx,
}

#[derive(Debug, Clone)]
pub struct DriftNet {
    arch: Architecture,
    params: ParamSet,
    idx: NetIdx,
}

impl DriftNet {
    pub fn new<R: Rng>(arch: Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let dm = arch.d_model;
        let mut b = ParamBuilder::new(rng);
        let time = b.ffn("time", 1, dm, dm);
        let state = b.ffn("state", arch.dim, dm, dm);
        let token = b.linear("encoder.embed", arch.token_width(), dm);
        let pre_attn = b.layer_norm("encoder.norm1", dm);
        let attn = b.attention("encoder.attn", dm);
        let pre_ffn = b.layer_norm("encoder.norm2", dm);
        let ffn_in = b.linear("encoder.ffn.fc1", dm, arch.ffn_mult * dm);
        let ffn_out = b.linear("encoder.ffn.fc2", arch.ffn_mult * dm, dm);
        let enc_norm = b.layer_norm("encoder.norm_out", dm);
        let head = FfnIdx {
            fc1: b.linear("head.fc1", 3 * dm, dm),
            norm: b.layer_norm("head.norm", dm),
            fc2: b.zero_linear("head.fc2", dm, arch.dim),
        };
        Ok(DriftNet {
            arch,
            params: b.finish(),
            idx: NetIdx {
                time,
                state,
                token,
                pre_attn,
                attn,
                pre_ffn,
                ffn_in,
                ffn_out,
                enc_norm,
                head,
            },
        })
    }

    /// Network with the given architecture and parameter values, checked
    /// against the expected names and shapes.
    pub fn from_params(arch: Architecture, params: ParamSet) -> Result<Self> {
        let mut rng = crate::stochastic::RandomSource::new(0).rng();
        let mut net = DriftNet::new(arch, &mut rng)?;
        net.params.copy_from(&params).map_err(|_| {
            Error::Schema("stored parameters do not match the architecture".into())
        })?;
        Ok(net)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn dim(&self) -> usize {
        self.arch.dim
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Parameter indices of the output layer, `(weight [d_model×d], bias [d])`.
    pub fn output_layer(&self) -> (usize, usize) {
        (self.idx.head.fc2.w, self.idx.head.fc2.b)
    }

    // ---- tape path ----

    /// Contexts for `batch` token sequences of length `len`, as a
    /// `[batch·len, d_model]` variable.
    pub fn encode_tape(
        &self,
        tape: &mut Tape,
        p: &[Var],
        tokens: &Tensor,
        batch: usize,
        len: usize,
    ) -> Result<Var> {
        let tw = self.arch.token_width();
        if tokens.shape() != [batch * len, tw] {
            return Err(Error::Dimension(format!(
                "tokens {:?}, expected [{}, {tw}]",
                tokens.shape(),
                batch * len
            )));
        }
        let i = &self.idx;
        let t = tape.constant(tokens.clone());
        let mut x = linear(tape, p, i.token, t)?;
        if self.arch.positional_encoding {
            let dm = self.arch.d_model;
            let mut pe = vec![0.0; batch * len * dm];
            for (r, row) in pe.chunks_mut(dm).enumerate() {
                positional_encoding(r % len, row);
            }
            let pe = tape.constant(Tensor::new(vec![batch * len, dm], pe)?);
            x = tape.add(x, pe)?;
        }
        let h = layer_norm(tape, p, i.pre_attn, x)?;
        let a = causal_self_attention(tape, p, i.attn, h, batch, len, self.arch.n_head)?;
        let x = tape.add(x, a)?;
        let h = layer_norm(tape, p, i.pre_ffn, x)?;
        let h = linear(tape, p, i.ffn_in, h)?;
        let h = tape.silu(h);
        let f = linear(tape, p, i.ffn_out, h)?;
        let x = tape.add(x, f)?;
        layer_norm(tape, p, i.enc_norm, x)
    }

    /// `s_θ` on rows of `(t, y, c)`; `times` is `[rows, 1]`, `states` `[rows, d]`.
    pub fn drift_tape(
        &self,
        tape: &mut Tape,
        p: &[Var],
        times: Var,
        states: Var,
        ctx: Var,
    ) -> Result<Var> {
        let te = ffn(tape, p, self.idx.time, times)?;
        let se = ffn(tape, p, self.idx.state, states)?;
        let z = tape.concat_cols(&[te, se, ctx])?;
        ffn(tape, p, self.idx.head, z)
    }

    // ---- plain path ----

    /// `s_θ` on `rows = times.len()` rows; `states` is `rows×d`, `ctx` `rows×d_model`.
    pub fn drift_rows(&self, times: &[f64], states: &[f64], ctx: &[f64]) -> Vec<f64> {
        let rows = times.len();
        let dm = self.arch.d_model;
        debug_assert_eq!(states.len(), rows * self.arch.dim);
        debug_assert_eq!(ctx.len(), rows * dm);
        let te = self.ffn_rows(self.idx.time, times, rows, 1);
        let se = self.ffn_rows(self.idx.state, states, rows, self.arch.dim);
        let mut z = Vec::with_capacity(rows * 3 * dm);
        for r in 0..rows {
            z.extend_from_slice(&te[r * dm..(r + 1) * dm]);
            z.extend_from_slice(&se[r * dm..(r + 1) * dm]);
            z.extend_from_slice(&ctx[r * dm..(r + 1) * dm]);
        }
        self.ffn_rows(self.idx.head, &z, rows, 3 * dm)
    }

    /// Single-row convenience for `s_θ(t, y, c)`.
    pub fn drift_forward(&self, t: f64, y: &[f64], c: &[f64]) -> Vec<f64> {
        self.drift_rows(&[t], y, c)
    }

    /// `c_i` for the history `y_{t_0..t_i}` (row-major `(i+1)×d`) on `dates`.
    pub fn encode_path(&self, history: &[f64], dates: &[f64]) -> Result<Vec<f64>> {
        let d = self.arch.dim;
        if history.is_empty() || history.len() % d != 0 {
            return Err(Error::Dimension(format!(
                "history of {} values is not a nonempty multiple of {d}",
                history.len()
            )));
        }
        let len = history.len() / d;
        if dates.len() < len {
            return Err(Error::Dimension(format!(
                "{len} history points but only {} dates",
                dates.len()
            )));
        }
        let tokens = sequence_tokens(self.arch.token_features, history, 1, len, d, dates);
        let mut enc = EncoderCache::new(1);
        let mut c = Vec::new();
        let tw = self.arch.token_width();
        for i in 0..len {
            c = enc.push(self, &tokens[i * tw..(i + 1) * tw]);
        }
        Ok(c)
    }

    fn linear_rows(&self, idx: LinearIdx, x: &[f64], rows: usize, inp: usize) -> Vec<f64> {
        let w = &self.params.tensors()[idx.w];
        let b = self.params.tensors()[idx.b].data();
        let out_w = w.shape()[1];
        let mut out = vec![0.0; rows * out_w];
        crate::numerics::gemm_into(x, w.data(), &mut out, rows, inp, out_w);
        for row in out.chunks_mut(out_w) {
            for (o, bb) in row.iter_mut().zip(b) {
                *o += bb;
            }
        }
        out
    }

    fn norm_rows(&self, idx: NormIdx, x: &mut [f64], d: usize) {
        let g = self.params.tensors()[idx.gain].data();
        let b = self.params.tensors()[idx.bias].data();
        for row in x.chunks_mut(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for j in 0..d {
                row[j] = (row[j] - mean) * inv * g[j] + b[j];
            }
        }
    }

    fn ffn_rows(&self, idx: FfnIdx, x: &[f64], rows: usize, inp: usize) -> Vec<f64> {
        let hidden = self.params.tensors()[idx.fc1.w].shape()[1];
        let mut h = self.linear_rows(idx.fc1, x, rows, inp);
        self.norm_rows(idx.norm, &mut h, hidden);
        silu_in_place(&mut h);
        self.linear_rows(idx.fc2, &h, rows, hidden)
    }
}

fn silu_in_place(x: &mut [f64]) {
    for v in x {
        let s = if *v >= 0.0 {
            1.0 / (1.0 + (-*v).exp())
        } else {
            let e = v.exp();
            e / (1.0 + e)
        };
        *v *= s;
    }
}

/// Sinusoidal position code: `sin(pos/10000^{2k/d})` at even `2k`,
/// `cos` at odd `2k+1`.
pub fn positional_encoding(pos: usize, out: &mut [f64]) {
    let d = out.len() as f64;
    for (k, o) in out.iter_mut().enumerate() {
        let freq = 10000f64.powf(-((k / 2 * 2) as f64) / d);
        let a = pos as f64 * freq;
        *o = if k % 2 == 0 { a.sin() } else { a.cos() };
    }
}

/// Token row for date `j` given `y_j`, `y_{j−1}` (if any) and `Δt = t_j − t_{j−1}`.
pub fn token_row(features: TokenFeatures, y: &[f64], prev: Option<&[f64]>, dt: f64, out: &mut [f64]) {
    let d = y.len();
    out[..d].copy_from_slice(y);
    if features == TokenFeatures::Increments {
        for j in 0..d {
            let inc = prev.map_or(0.0, |p| y[j] - p[j]);
            out[d + j] = if prev.is_some() { inc / dt.sqrt() } else { 0.0 };
            out[2 * d + j] = if prev.is_some() { inc * inc / dt } else { 0.0 };
        }
    }
}

/// Tokens for `n_seq` sequences of `len` dates each (`seqs` is
/// `n_seq×len×d`, row-major), laid out as `[n_seq·len, width]`.
pub fn sequence_tokens(
    features: TokenFeatures,
    seqs: &[f64],
    n_seq: usize,
    len: usize,
    d: usize,
    dates: &[f64],
) -> Vec<f64> {
    let tw = features.width(d);
    let mut out = vec![0.0; n_seq * len * tw];
    for s in 0..n_seq {
        for i in 0..len {
            let y = &seqs[(s * len + i) * d..(s * len + i + 1) * d];
            let prev = (i > 0).then(|| &seqs[(s * len + i - 1) * d..(s * len + i) * d]);
            let dt = if i > 0 { dates[i] - dates[i - 1] } else { 1.0 };
            let r = s * len + i;
            token_row(features, y, prev, dt, &mut out[r * tw..(r + 1) * tw]);
        }
    }
    out
}

/// Incremental encoder over `n_seq` sequences: each [`EncoderCache::push`]
/// appends one token per sequence and returns the new contexts.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    n_seq: usize,
    len: usize,
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

impl EncoderCache {
    pub fn new(n_seq: usize) -> Self {
        EncoderCache {
            n_seq,
            len: 0,
            keys: vec![Vec::new(); n_seq],
            values: vec![Vec::new(); n_seq],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `tokens` is `n_seq × token_width`; returns `n_seq × d_model` contexts.
    pub fn push(&mut self, net: &DriftNet, tokens: &[f64]) -> Vec<f64> {
        let a = &net.arch;
        let dm = a.d_model;
        let n = self.n_seq;
        let i = &net.idx;
        let mut x = net.linear_rows(i.token, tokens, n, a.token_width());
        if a.positional_encoding {
            let mut pe = vec![0.0; dm];
            positional_encoding(self.len, &mut pe);
            for row in x.chunks_mut(dm) {
                for (v, p) in row.iter_mut().zip(&pe) {
                    *v += p;
                }
            }
        }
        let mut h = x.clone();
        net.norm_rows(i.pre_attn, &mut h, dm);
        let q = net.linear_rows(i.attn.q, &h, n, dm);
        let k = net.linear_rows(i.attn.k, &h, n, dm);
        let v = net.linear_rows(i.attn.v, &h, n, dm);
        let heads = a.n_head;
        let dh = dm / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let len = self.len + 1;
        let mut att = vec![0.0; n * dm];
        let mut scores = vec![0.0; len];
        for s in 0..n {
            self.keys[s].extend_from_slice(&k[s * dm..(s + 1) * dm]);
            self.values[s].extend_from_slice(&v[s * dm..(s + 1) * dm]);
            let ks = &self.keys[s];
            let vs = &self.values[s];
            for hh in 0..heads {
                let off = hh * dh;
                let qi = &q[s * dm + off..s * dm + off + dh];
                let mut max = f64::NEG_INFINITY;
                for j in 0..len {
                    let kj = &ks[j * dm + off..j * dm + off + dh];
                    let sc = qi.iter().zip(kj).map(|(x, y)| x * y).sum::<f64>() * scale;
                    scores[j] = sc;
                    max = max.max(sc);
                }
                let mut z = 0.0;
                for sc in scores.iter_mut() {
                    *sc = (*sc - max).exp();
                    z += *sc;
                }
                let o = &mut att[s * dm + off..s * dm + off + dh];
                for j in 0..len {
                    let p = scores[j] / z;
                    for (oo, vv) in o.iter_mut().zip(&vs[j * dm + off..j * dm + off + dh]) {
                        *oo += p * vv;
                    }
                }
            }
        }
        let proj = net.linear_rows(i.attn.o, &att, n, dm);
        for (xv, pv) in x.iter_mut().zip(&proj) {
            *xv += pv;
        }
        let mut h = x.clone();
        net.norm_rows(i.pre_ffn, &mut h, dm);
        let hidden = a.ffn_mult * dm;
        let mut f = net.linear_rows(i.ffn_in, &h, n, dm);
        silu_in_place(&mut f);
        let f = net.linear_rows(i.ffn_out, &f, n, hidden);
        for (xv, fv) in x.iter_mut().zip(&f) {
            *xv += fv;
        }
        net.norm_rows(i.enc_norm, &mut x, dm);
        self.len = len;
        x
    }
}

/// Contexts at every position of `n_seq` full sequences, `[n_seq·len, d_model]`.
pub fn encode_sequences(net: &DriftNet, tokens: &[f64], n_seq: usize, len: usize) -> Vec<f64> {
    let tw = net.arch.token_width();
    let dm = net.arch.d_model;
    let mut cache = EncoderCache::new(n_seq);
    let mut out = vec![0.0; n_seq * len * dm];
    let mut step = vec![0.0; n_seq * tw];
    for i in 0..len {
        for s in 0..n_seq {
            step[s * tw..(s + 1) * tw]
                .copy_from_slice(&tokens[(s * len + i) * tw..(s * len + i + 1) * tw]);
        }
        let c = cache.push(net, &step);
        for s in 0..n_seq {
            out[(s * len + i) * dm..(s * len + i + 1) * dm].copy_from_slice(&c[s * dm..(s + 1) * dm]);
        }
    }
    out
}

/// `y = x − s_θ(t, x, c)/β`; identity when `sb_mode`.
pub fn transport_map(net: &DriftNet, x: &[f64], t: f64, c: &[f64], beta: f64, sb_mode: bool) -> Vec<f64> {
    if sb_mode {
        return x.to_vec();
    }
    let s = net.drift_forward(t, x, c);
    x.iter().zip(&s).map(|(xi, si)| xi - si / beta).collect()
}

/// `x = y + s_θ(t, y, c)/β`; identity when `sb_mode`.
pub fn inverse_transport(net: &DriftNet, y: &[f64], t: f64, c: &[f64], beta: f64, sb_mode: bool) -> Vec<f64> {
    if sb_mode {
        return y.to_vec();
    }
    let s = net.drift_forward(t, y, c);
    y.iter().zip(&s).map(|(yi, si)| yi + si / beta).collect()
}
