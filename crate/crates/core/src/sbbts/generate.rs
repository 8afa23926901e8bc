use rand::Rng;
use rayon::prelude::*;

use super::model::{token_row, EncoderCache};
use super::train::{mat_vec, TrainedModel, INFERENCE_CHUNK};
use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::stochastic::{GaussianNoise, RandomSource, TimeGrid};

/// Generates `n_paths` series on the training grid. Initial values are
/// resampled from the training data's first date.
pub fn generate(model: &TrainedModel, n_paths: usize, source: RandomSource) -> Result<TimeSeriesDataset> {
    let d = model.dim();
    let n_train = model.initial_values.len() / d;
    if n_train == 0 {
        return Err(Error::Contract("model carries no initial values".into()));
    }
    let init = source.named("initial");
    let mut x0 = Vec::with_capacity(n_paths * d);
    for m in 0..n_paths {
        let k = init.child(m as u64).rng().random_range(0..n_train);
        x0.extend_from_slice(&model.initial_values[k * d..(k + 1) * d]);
    }
    let noise = source.named("noise");
    generate_from(model, &model.grid, &x0, |m, i| {
        noise.child(m as u64).child(i as u64)
    })
}

/// Generates one path per row of `initial` (`M×d`, data units). The Gaussian
/// draws of path `m` on interval `i` come from `streams(m, i)` only, so a path
/// up to `t_{i+1}` depends on nothing drawn for later intervals.
pub fn generate_from<F>(
    model: &TrainedModel,
    grid: &TimeGrid,
    initial: &[f64],
    streams: F,
) -> Result<TimeSeriesDataset>
where
    F: Fn(usize, usize) -> RandomSource + Sync,
{
    if grid.fingerprint() != model.grid.fingerprint() {
        return Err(Error::Contract(
            "generation grid differs from the training grid".into(),
        ));
    }
    let d = model.dim();
    if initial.len() % d != 0 {
        return Err(Error::Dimension(format!(
            "{} initial values for dimension {d}",
            initial.len()
        )));
    }
    let m = initial.len() / d;
    let n = grid.n_intervals();
    let idx: Vec<usize> = (0..m).collect();
    let chunks: Vec<Result<Vec<f64>>> = idx
        .par_chunks(INFERENCE_CHUNK)
        .map(|paths| generate_chunk(model, grid, paths, initial, &streams))
        .collect();
    let mut scaled = Vec::with_capacity(m * (n + 1) * d);
    for c in chunks {
        scaled.extend(c?);
    }
    let ds = TimeSeriesDataset::new(m, n + 1, d, model.dim_names.clone(), scaled)
        .map_err(|e| Error::Numerical(format!("generated paths are invalid: {e}")))?;
    model.scaler.invert(&ds, grid)
}

fn generate_chunk<F>(
    model: &TrainedModel,
    grid: &TimeGrid,
    paths: &[usize],
    initial: &[f64],
    streams: &F,
) -> Result<Vec<f64>>
where
    F: Fn(usize, usize) -> RandomSource,
{
    let net = &model.net;
    let cfg = &model.config;
    let arch = net.architecture();
    let (d, k, n) = (arch.dim, paths.len(), grid.n_intervals());
    let tw = arch.token_width();
    let beta = model.beta;
    let t0 = grid.date(0);
    let mut out = vec![0.0; k * (n + 1) * d];

    let mut x = Vec::with_capacity(k * d);
    for &p in paths {
        for j in 0..d {
            x.push(model.scaler.apply_value(j, t0, initial[p * d + j]));
        }
    }
    for (r, _) in paths.iter().enumerate() {
        out[r * (n + 1) * d..r * (n + 1) * d + d].copy_from_slice(&x[r * d..(r + 1) * d]);
    }

    let mut tokens = vec![0.0; k * tw];
    let mut y = x.clone();
    if !cfg.sb_mode {
        for r in 0..k {
            token_row(arch.token_features, &x[r * d..(r + 1) * d], None, 1.0, &mut tokens[r * tw..(r + 1) * tw]);
        }
        let c = EncoderCache::new(k).push(net, &tokens);
        let s = net.drift_rows(&vec![t0; k], &x, &c);
        for (yv, sv) in y.iter_mut().zip(&s) {
            *yv -= sv / beta;
        }
    }

    let mut cache = EncoderCache::new(k);
    let mut prev: Option<Vec<f64>> = None;
    let mut z = vec![0.0; d];
    for i in 0..n {
        let dt_prev = if i > 0 { grid.dt(i - 1) } else { 1.0 };
        for r in 0..k {
            let p = prev.as_ref().map(|v| &v[r * d..(r + 1) * d]);
            token_row(arch.token_features, &y[r * d..(r + 1) * d], p, dt_prev, &mut tokens[r * tw..(r + 1) * tw]);
        }
        let c = cache.push(net, &tokens);
        prev = Some(y.clone());

        let mut rngs: Vec<_> = paths.iter().map(|&p| streams(p, i).rng()).collect();
        let (tl, dt) = (grid.date(i), grid.dt(i));
        let h = dt / cfg.n_pi as f64;
        let sq = h.sqrt();
        let factor = model.noise_factors.as_ref().map(|f| &f[i]);
        for s in 0..cfg.n_pi {
            let t = tl + s as f64 * h;
            let drift = net.drift_rows(&vec![t; k], &y, &c);
            for r in 0..k {
                rngs[r].fill_standard_normal(&mut z);
                let dz = match factor {
                    Some(f) => mat_vec(f, &z, d),
                    None => z.clone(),
                };
                for j in 0..d {
                    y[r * d + j] += drift[r * d + j] * h + sq * dz[j];
                }
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "generated state became non-finite on interval {i}"
            )));
        }
        let xn = if cfg.sb_mode {
            y.clone()
        } else {
            let tt = grid.date(i + 1) - cfg.xi_frac * dt;
            let s = net.drift_rows(&vec![tt; k], &y, &c);
            y.iter().zip(&s).map(|(yv, sv)| yv + sv / beta).collect()
        };
        for r in 0..k {
            let off = (r * (n + 1) + i + 1) * d;
            out[off..off + d].copy_from_slice(&xn[r * d..(r + 1) * d]);
        }
    }
    Ok(out)
}
