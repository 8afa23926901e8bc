//! Causal multi-head attention kernels over projected `q`, `k`, `v` token
//! matrices. Position `i` attends to positions `0..=i` of its own sequence;
//! masked keys never enter the softmax, so outputs at `i` are exactly
//! independent of tokens after `i`.

/// Returns the attended values and the attention weights, laid out as
/// `[batch, heads, len, len]` (upper triangle left at zero).
pub(crate) fn forward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    batch: usize,
    len: usize,
    width: usize,
    heads: usize,
) -> (Vec<f64>, Vec<f64>) {
    let dh = width / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = vec![0.0; batch * len * width];
    let mut probs = vec![0.0; batch * heads * len * len];
    let mut scores = vec![0.0; len];
    for b in 0..batch {
        let base = b * len * width;
        for h in 0..heads {
            let off = h * dh;
            let pbase = (b * heads + h) * len * len;
            for i in 0..len {
                let qi = &q[base + i * width + off..base + i * width + off + dh];
                let mut max = f64::NEG_INFINITY;
                for j in 0..=i {
                    let kj = &k[base + j * width + off..base + j * width + off + dh];
                    let s = qi.iter().zip(kj).map(|(x, y)| x * y).sum::<f64>() * scale;
                    scores[j] = s;
                    if s > max {
                        max = s;
                    }
                }
                let mut z = 0.0;
                for s in scores.iter_mut().take(i + 1) {
                    *s = (*s - max).exp();
                    z += *s;
                }
                let prow = &mut probs[pbase + i * len..pbase + i * len + len];
                let orow = base + i * width + off;
                for j in 0..=i {
                    let p = scores[j] / z;
                    prow[j] = p;
                    let vj = &v[base + j * width + off..base + j * width + off + dh];
                    for (o, &vv) in out[orow..orow + dh].iter_mut().zip(vj) {
                        *o += p * vv;
                    }
                }
            }
        }
    }
    (out, probs)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward(
    gout: &[f64],
    q: &[f64],
    k: &[f64],
    v: &[f64],
    probs: &[f64],
    batch: usize,
    len: usize,
    width: usize,
    heads: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let dh = width / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let n = batch * len * width;
    let mut dq = vec![0.0; n];
    let mut dk = vec![0.0; n];
    let mut dv = vec![0.0; n];
    let mut dp = vec![0.0; len];
    for b in 0..batch {
        let base = b * len * width;
        for h in 0..heads {
            let off = h * dh;
            let pbase = (b * heads + h) * len * len;
            for i in 0..len {
                let go = &gout[base + i * width + off..base + i * width + off + dh];
                let prow = &probs[pbase + i * len..pbase + i * len + len];
                let mut dot = 0.0;
                for j in 0..=i {
                    let vrow = base + j * width + off;
                    let vj = &v[vrow..vrow + dh];
                    dp[j] = go.iter().zip(vj).map(|(x, y)| x * y).sum::<f64>();
                    dot += prow[j] * dp[j];
                    for (d, &g) in dv[vrow..vrow + dh].iter_mut().zip(go) {
                        *d += prow[j] * g;
                    }
                }
                let qrow = base + i * width + off;
                for j in 0..=i {
                    let ds = prow[j] * (dp[j] - dot) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let krow = base + j * width + off;
                    for t in 0..dh {
                        dq[qrow + t] += ds * k[krow + t];
                        dk[krow + t] += ds * q[qrow + t];
                    }
                }
            }
        }
    }
    (dq, dk, dv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_token_returns_its_value() {
        let q = [0.3, -0.2];
        let k = [1.0, 2.0];
        let v = [5.0, -7.0];
        let (out, probs) = forward(&q, &k, &v, 1, 1, 2, 1);
        assert_eq!(out, v.to_vec());
        assert_eq!(probs, vec![1.0]);
    }

    #[test]
    fn equal_scores_give_uniform_weights() {
        let len = 4;
        let q = vec![0.0; len * 2];
        let k: Vec<f64> = (0..len * 2).map(|i| i as f64).collect();
        let v: Vec<f64> = (0..len * 2).map(|i| (i * i) as f64).collect();
        let (_, probs) = forward(&q, &k, &v, 1, len, 2, 2);
        for h in 0..2 {
            for i in 0..len {
                for j in 0..len {
                    let p = probs[h * len * len + i * len + j];
                    let expected = if j <= i { 1.0 / (i + 1) as f64 } else { 0.0 };
                    assert!((p - expected).abs() < 1e-15);
                }
            }
        }
    }
}
