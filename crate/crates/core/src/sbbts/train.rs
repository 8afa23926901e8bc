use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::SBBTSConfig;
use super::model::{encode_sequences, sequence_tokens, Architecture, DriftNet};
use super::scaler::{reference_volatility, ScalerState};
use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::numerics::{AdamState, Tape, Tensor};
use crate::stochastic::{GaussianNoise, RandomSource, TimeGrid};

/// Paths processed together by the plain forward pass.
pub(crate) const INFERENCE_CHUNK: usize = 32;

/// Everything needed to generate: network, transport strength, grid, data
/// scaling and the empirical initial law.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub config: SBBTSConfig,
    pub beta: f64,
    pub grid: TimeGrid,
    pub scaler: ScalerState,
    pub net: DriftNet,
    pub dim_names: Vec<String>,
    /// Training values at `t_0` in data units, `n×d` row-major.
    pub initial_values: Vec<f64>,
    /// Per-interval noise factor `σ̄_i/√Δt_i` (row-major `d×d`, scaled units)
    /// when reference noise is on.
    pub noise_factors: Option<Vec<Vec<f64>>>,
}

impl TrainedModel {
    pub fn dim(&self) -> usize {
        self.net.dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub outer: usize,
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub losses: Vec<EpochLoss>,
}

/// Frozen-map images of the grid points, scaled units, indexed `(m·n + i)·d`:
/// `left` is `Y_{t_i}` and `right` is `Y_{t_{i+1}}` as seen from interval `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Endpoints {
    pub n_paths: usize,
    pub n_intervals: usize,
    pub dim: usize,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl Endpoints {
    /// `Y = X` (the β → ∞ map).
    pub fn identity(x: &TimeSeriesDataset) -> Self {
        let (m, n, d) = (x.n_paths(), x.n_dates() - 1, x.dim());
        let mut left = Vec::with_capacity(m * n * d);
        let mut right = Vec::with_capacity(m * n * d);
        for p in 0..m {
            let path = x.path(p);
            left.extend_from_slice(&path[..n * d]);
            right.extend_from_slice(&path[d..]);
        }
        Endpoints {
            n_paths: m,
            n_intervals: n,
            dim: d,
            left,
            right,
        }
    }

    fn at<'a>(v: &'a [f64], n: usize, d: usize, m: usize, i: usize) -> &'a [f64] {
        &v[(m * n + i) * d..(m * n + i + 1) * d]
    }

    pub fn left(&self, m: usize, i: usize) -> &[f64] {
        Self::at(&self.left, self.n_intervals, self.dim, m, i)
    }

    pub fn right(&self, m: usize, i: usize) -> &[f64] {
        Self::at(&self.right, self.n_intervals, self.dim, m, i)
    }
}

/// Applies the frozen map to every grid point:
/// `Y_{t_i} = X_{t_i} − s(t_i, X_{t_i}, Φ(X_{t_0:t_i}))/β` and
/// `Y_{t_{i+1}} = X_{t_{i+1}} − s(t̃_{i+1}, X_{t_{i+1}}, Φ(X_{t_0:t_i}))/β`.
pub fn frozen_endpoints(
    frozen: &DriftNet,
    x: &TimeSeriesDataset,
    grid: &TimeGrid,
    beta: f64,
    config: &SBBTSConfig,
) -> Result<Endpoints> {
    check_grid(x, grid)?;
    if x.dim() != frozen.dim() {
        return Err(Error::Dimension(format!(
            "network dimension {} vs data dimension {}",
            frozen.dim(),
            x.dim()
        )));
    }
    let mut ep = Endpoints::identity(x);
    if config.sb_mode {
        return Ok(ep);
    }
    let (n, d) = (grid.n_intervals(), x.dim());
    let arch = *frozen.architecture();
    let dates = grid.dates();
    let chunks: Vec<(Vec<f64>, Vec<f64>)> = (0..x.n_paths())
        .collect::<Vec<_>>()
        .par_chunks(INFERENCE_CHUNK)
        .map(|paths| {
            let k = paths.len();
            let mut seqs = Vec::with_capacity(k * n * d);
            for &p in paths {
                seqs.extend_from_slice(&x.path(p)[..n * d]);
            }
            let tokens = sequence_tokens(arch.token_features, &seqs, k, n, d, dates);
            let ctx = encode_sequences(frozen, &tokens, k, n);
            let mut tl = Vec::with_capacity(k * n);
            let mut tr = Vec::with_capacity(k * n);
            let mut sr = Vec::with_capacity(k * n * d);
            for &p in paths {
                for i in 0..n {
                    tl.push(grid.date(i));
                    tr.push(grid.date(i + 1) - config.xi_frac * grid.dt(i));
                    sr.extend_from_slice(x.value(p, i + 1));
                }
            }
            let sl = frozen.drift_rows(&tl, &seqs, &ctx);
            let srd = frozen.drift_rows(&tr, &sr, &ctx);
            (sl, srd)
        })
        .collect();
    let mut off = 0;
    for (sl, sr) in chunks {
        for (j, (a, b)) in sl.iter().zip(&sr).enumerate() {
            ep.left[off + j] -= a / beta;
            ep.right[off + j] -= b / beta;
        }
        off += sl.len();
    }
    Ok(ep)
}

/// One regression mini-batch: one bridge draw per (path, interval).
#[derive(Debug, Clone)]
pub struct BridgeBatch {
    pub batch: usize,
    pub len: usize,
    /// `[batch·len, token_width]` tokens of the left-endpoint sequences.
    pub tokens: Tensor,
    /// `[batch·len, 1]`
    pub times: Tensor,
    /// `[batch·len, d]` bridge draws `Y_t`.
    pub states: Tensor,
    /// `[batch·len, d]` targets `(Y_{t_{i+1}} − Y_t)/(t_{i+1} − t)`.
    pub targets: Tensor,
}

/// Draws `t` on `[t_i, upper)` per interval, with `upper = t_{i+1}` or
/// `t̃_{i+1}` when clamped, then `Y_t` from the Brownian bridge.
#[allow(clippy::too_many_arguments)]
pub fn sample_bridge_batch<R: Rng>(
    ep: &Endpoints,
    tokens: &[f64],
    token_width: usize,
    paths: &[usize],
    grid: &TimeGrid,
    config: &SBBTSConfig,
    noise_factors: Option<&[Vec<f64>]>,
    rng: &mut R,
) -> Result<BridgeBatch> {
    let (n, d) = (ep.n_intervals, ep.dim);
    let b = paths.len();
    let mut tok = Vec::with_capacity(b * n * token_width);
    let mut times = Vec::with_capacity(b * n);
    let mut states = Vec::with_capacity(b * n * d);
    let mut targets = Vec::with_capacity(b * n * d);
    let mut z = vec![0.0; d];
    for &m in paths {
        tok.extend_from_slice(&tokens[m * n * token_width..(m + 1) * n * token_width]);
        for i in 0..n {
            let (tl, tr) = (grid.date(i), grid.date(i + 1));
            let dt = tr - tl;
            let upper = if config.clamp_training_times {
                tr - config.xi_frac * dt
            } else {
                tr
            };
            let t = tl + rng.random::<f64>() * (upper - tl);
            let (yl, yr) = (ep.left(m, i), ep.right(m, i));
            let (wl, wr) = ((tr - t) / dt, (t - tl) / dt);
            let sd = ((t - tl) * (tr - t) / dt).max(0.0).sqrt();
            rng.fill_standard_normal(&mut z);
            if let Some(f) = noise_factors {
                z = mat_vec(&f[i], &z, d);
            }
            times.push(t);
            for j in 0..d {
                let y = wl * yl[j] + wr * yr[j] + sd * z[j];
                states.push(y);
                targets.push((yr[j] - y) / (tr - t));
            }
        }
    }
    Ok(BridgeBatch {
        batch: b,
        len: n,
        tokens: Tensor::new(vec![b * n, token_width], tok)?,
        times: Tensor::new(vec![b * n, 1], times)?,
        states: Tensor::new(vec![b * n, d], states)?,
        targets: Tensor::new(vec![b * n, d], targets)?,
    })
}

pub(crate) fn mat_vec(m: &[f64], z: &[f64], d: usize) -> Vec<f64> {
    (0..d)
        .map(|r| (0..d).map(|c| m[r * d + c] * z[c]).sum())
        .collect()
}

/// Loss of `net` on `batch`, and parameter gradients when `with_grad`.
pub fn batch_loss(
    net: &DriftNet,
    batch: &BridgeBatch,
    with_grad: bool,
) -> Result<(f64, Option<Vec<Vec<f64>>>)> {
    let mut tape = Tape::new();
    let p = net.params().bind(&mut tape, with_grad);
    let ctx = net.encode_tape(&mut tape, &p, &batch.tokens, batch.batch, batch.len)?;
    let tv = tape.constant(batch.times.clone());
    let sv = tape.constant(batch.states.clone());
    let pred = net.drift_tape(&mut tape, &p, tv, sv, ctx)?;
    let loss = tape.row_mse(pred, &batch.targets)?;
    let value = tape.value(loss)[0];
    if !with_grad {
        return Ok((value, None));
    }
    let g = tape.backward(loss)?;
    let grads = p
        .iter()
        .zip(net.params().tensors())
        .map(|(&v, t)| g.get_or_zeros(v, t.len()))
        .collect();
    Ok((value, Some(grads)))
}

/// Regression loss on the paths `paths` of the scaled dataset `x`, with the
/// transport frozen at `frozen`.
pub fn compute_loss_batch<R: Rng>(
    net: &DriftNet,
    frozen: &DriftNet,
    x: &TimeSeriesDataset,
    paths: &[usize],
    grid: &TimeGrid,
    config: &SBBTSConfig,
    rng: &mut R,
) -> Result<f64> {
    config.validate(grid)?;
    let sub = x.select(paths);
    let beta = config.beta_for(grid);
    let ep = frozen_endpoints(frozen, &sub, grid, beta, config)?;
    let arch = net.architecture();
    let tokens = sequence_tokens(
        arch.token_features,
        &ep.left,
        ep.n_paths,
        ep.n_intervals,
        ep.dim,
        grid.dates(),
    );
    let idx: Vec<usize> = (0..sub.n_paths()).collect();
    let batch = sample_bridge_batch(&ep, &tokens, arch.token_width(), &idx, grid, config, None, rng)?;
    Ok(batch_loss(net, &batch, false)?.0)
}

fn check_grid(x: &TimeSeriesDataset, grid: &TimeGrid) -> Result<()> {
    if x.n_dates() != grid.n_dates() {
        return Err(Error::Contract(format!(
            "dataset has {} dates but the grid has {}",
            x.n_dates(),
            grid.n_dates()
        )));
    }
    Ok(())
}

/// Runs the outer/inner training loop on `data` with the config's grid.
pub fn train(data: &TimeSeriesDataset, config: &SBBTSConfig, source: RandomSource) -> Result<TrainOutcome> {
    let grid = config.grid(data.n_dates())?;
    train_on_grid(data, &grid, config, source, None)
}

/// As [`train`] on an explicit grid, optionally starting from the parameters
/// of `warm` (whose grid must match).
pub fn train_on_grid(
    data: &TimeSeriesDataset,
    grid: &TimeGrid,
    config: &SBBTSConfig,
    source: RandomSource,
    warm: Option<&TrainedModel>,
) -> Result<TrainOutcome> {
    config.validate(grid)?;
    check_grid(data, grid)?;
    if data.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    let beta = config.beta_for(grid);
    let mut log = vec![false; data.dim()];
    for name in &config.log_transform {
        let j = data.dim_names().iter().position(|n| n == name).ok_or_else(|| {
            Error::Config(format!("log_transform names unknown dimension {name:?}"))
        })?;
        log[j] = true;
    }
    let scaler = if config.scale_data {
        ScalerState::fit_with_log(data, grid, &log)?
    } else {
        let mut s = ScalerState::identity(data.dim());
        s.log = log;
        s
    };
    let x = scaler.apply(data, grid)?;
    let noise_factors = if config.reference_noise {
        Some(noise_factors(&x, grid)?)
    } else {
        None
    };
    let arch = Architecture::from_config(config, data.dim());
    let mut net = match warm {
        Some(w) => {
            if w.grid.fingerprint() != grid.fingerprint() {
                return Err(Error::Contract(format!(
                    "cannot resume: checkpoint grid {} differs from training grid {}",
                    &w.grid.fingerprint()[..12],
                    &grid.fingerprint()[..12]
                )));
            }
            if *w.net.architecture() != arch {
                return Err(Error::Contract(
                    "cannot resume: checkpoint architecture differs from the config".into(),
                ));
            }
            w.net.clone()
        }
        None => DriftNet::new(arch, &mut source.named("init").rng())?,
    };
    let mut adam = AdamState::new(config.adam(), net.params())?;
    let m = x.n_paths();
    let tw = arch.token_width();
    let mut order: Vec<usize> = (0..m).collect();
    let mut losses = Vec::with_capacity(config.outer_iterations * config.n_epoch);
    let epochs = source.named("epochs");
    for k in 0..config.outer_iterations {
        let frozen = net.clone();
        let ep = frozen_endpoints(&frozen, &x, grid, beta, config)?;
        let tokens = sequence_tokens(
            arch.token_features,
            &ep.left,
            ep.n_paths,
            ep.n_intervals,
            ep.dim,
            grid.dates(),
        );
        for e in 0..config.n_epoch {
            let global = k * config.n_epoch + e;
            let mut rng = epochs.child(global as u64).rng();
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(config.batch_size) {
                let batch = sample_bridge_batch(
                    &ep,
                    &tokens,
                    tw,
                    chunk,
                    grid,
                    config,
                    noise_factors.as_deref(),
                    &mut rng,
                )?;
                let (loss, grads) = batch_loss(&net, &batch, true)?;
                if !loss.is_finite() {
                    return Err(Error::Training {
                        epoch: global,
                        reason: format!("loss is {loss}"),
                    });
                }
                let grads = grads.expect("requested");
                if grads.iter().flatten().any(|g| !g.is_finite()) {
                    return Err(Error::Training {
                        epoch: global,
                        reason: "non-finite gradient".into(),
                    });
                }
                adam.step(net.params_mut(), &grads)?;
                total += loss * chunk.len() as f64;
            }
            let loss = total / m as f64;
            log::debug!("outer {k} epoch {e}: loss {loss:.6}");
            losses.push(EpochLoss {
                outer: k,
                epoch: e,
                loss,
            });
        }
        if let Some(last) = losses.last() {
            log::info!("outer iteration {k} done, last epoch loss {:.6}", last.loss);
        }
    }
    let initial_values = (0..data.n_paths())
        .flat_map(|p| data.value(p, 0).to_vec())
        .collect();
    Ok(TrainOutcome {
        model: TrainedModel {
            config: config.clone(),
            beta,
            grid: grid.clone(),
            scaler,
            net,
            dim_names: data.dim_names().to_vec(),
            initial_values,
            noise_factors,
        },
        losses,
    })
}

/// `σ̄_i / √Δt_i` per interval.
pub fn noise_factors(x: &TimeSeriesDataset, grid: &TimeGrid) -> Result<Vec<Vec<f64>>> {
    check_grid(x, grid)?;
    Ok(reference_volatility(x)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let c = 1.0 / grid.dt(i).sqrt();
            r.sqrt.into_iter().map(|v| v * c).collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pinned(m: usize) -> TimeSeriesDataset {
        TimeSeriesDataset::new(m, 2, 1, vec!["x".into()], vec![0.0; 2 * m]).unwrap()
    }

    fn small_config() -> SBBTSConfig {
        SBBTSConfig {
            d_model: 8,
            n_head: 2,
            ffn_mult: 2,
            batch_size: 16,
            n_epoch: 2,
            outer_iterations: 2,
            scale_data: false,
            ..Default::default()
        }
    }

    #[test]
    fn zero_drift_loss_on_pinned_bridge() {
        // d = 1 on [0, 1], Y_0 = Y_1 = 0, s ≡ 0: the loss integrand is
        // Y_t²/(1−t)² with Y_t ~ N(0, t(1−t)), i.e. t/(1−t) in expectation.
        let config = SBBTSConfig {
            clamp_training_times: true,
            ..small_config()
        };
        let grid = TimeGrid::uniform(1, 1.0).unwrap();
        let net = DriftNet::new(Architecture::from_config(&config, 1), &mut RandomSource::new(1).rng()).unwrap();
        let x = pinned(20_000);
        let paths: Vec<usize> = (0..x.n_paths()).collect();
        let mut rng = RandomSource::new(2).rng();
        let loss = compute_loss_batch(&net, &net, &x, &paths, &grid, &config, &mut rng).unwrap();

        // Direct Monte Carlo of the same integrand on [0, 0.99).
        let mut rng = RandomSource::new(3).rng();
        let n = 200_000;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..n {
            let t = 0.99 * rng.random::<f64>();
            let y = (t * (1.0 - t)).sqrt() * rng.standard_normal();
            let v = (y / (1.0 - t)).powi(2);
            acc += v;
            acc2 += v * v;
        }
        let mean = acc / n as f64;
        let sd = (acc2 / n as f64 - mean * mean).sqrt();
        // Closed form: E[t/(1−t)] for t ~ U[0, 0.99) = (−ln 0.01)/0.99 − 1.
        let exact = -(0.01f64).ln() / 0.99 - 1.0;
        assert!((mean - exact).abs() < 4.0 * sd / (n as f64).sqrt(), "oracle {mean} vs {exact}");
        let tol = 4.0 * sd / (20_000f64).sqrt();
        assert!((loss - exact).abs() < tol, "loss {loss} vs {exact} ± {tol}");
    }

    #[test]
    fn exact_target_gives_zero_loss() {
        let config = small_config();
        let grid = TimeGrid::uniform(1, 1.0).unwrap();
        let mut net = DriftNet::new(Architecture::from_config(&config, 1), &mut RandomSource::new(1).rng()).unwrap();
        let x = TimeSeriesDataset::new(1, 2, 1, vec!["x".into()], vec![0.0, 0.0]).unwrap();
        let ep = Endpoints::identity(&x);
        let tokens = sequence_tokens(config.token_features, &ep.left, 1, 1, 1, grid.dates());
        let mut rng = RandomSource::new(5).rng();
        let batch = sample_bridge_batch(&ep, &tokens, 3, &[0], &grid, &config, None, &mut rng).unwrap();
        let (_, b) = net.output_layer();
        net.params_mut().tensors_mut()[b].data_mut()[0] = batch.targets.data()[0];
        let (loss, _) = batch_loss(&net, &batch, false).unwrap();
        assert!(loss < 1e-24);
    }

    #[test]
    fn training_times_stay_inside_interval() {
        let config = SBBTSConfig {
            clamp_training_times: false,
            ..small_config()
        };
        let grid = TimeGrid::uniform(4, 1.0).unwrap();
        let x = TimeSeriesDataset::new(50, 5, 1, vec!["x".into()], vec![0.0; 250]).unwrap();
        let ep = Endpoints::identity(&x);
        let tokens = sequence_tokens(config.token_features, &ep.left, 50, 4, 1, grid.dates());
        let paths: Vec<usize> = (0..50).collect();
        let mut rng = RandomSource::new(5).rng();
        let b = sample_bridge_batch(&ep, &tokens, 3, &paths, &grid, &config, None, &mut rng).unwrap();
        for (r, &t) in b.times.data().iter().enumerate() {
            let i = r % 4;
            assert!(t >= grid.date(i) && t < grid.date(i + 1));
        }
    }

    #[test]
    fn small_beta_is_config_error() {
        let config = SBBTSConfig {
            beta: Some(0.5),
            ..small_config()
        };
        let x = pinned(4);
        let r = train(&x, &config, RandomSource::new(1));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn training_is_deterministic() {
        let config = small_config();
        let mut rng = RandomSource::new(9).rng();
        let vals: Vec<f64> = (0..30 * 4).map(|_| rng.standard_normal()).collect();
        let x = TimeSeriesDataset::new(30, 4, 1, vec!["x".into()], vals).unwrap();
        let a = train(&x, &config, RandomSource::new(3)).unwrap();
        let b = train(&x, &config, RandomSource::new(3)).unwrap();
        assert_eq!(a.model.net.params(), b.model.net.params());
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.losses.len(), 4);
    }

    #[test]
    fn loss_is_permutation_invariant() {
        let config = small_config();
        let grid = TimeGrid::uniform(3, 1.0).unwrap();
        let mut rng = RandomSource::new(9).rng();
        let vals: Vec<f64> = (0..6 * 4).map(|_| rng.standard_normal()).collect();
        let x = TimeSeriesDataset::new(6, 4, 1, vec!["x".into()], vals).unwrap();
        let mut net = DriftNet::new(Architecture::from_config(&config, 1), &mut rng).unwrap();
        let (w, b) = net.output_layer();
        for idx in [w, b] {
            for v in net.params_mut().tensors_mut()[idx].data_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        let ep = Endpoints::identity(&x);
        let tokens = sequence_tokens(config.token_features, &ep.left, 6, 3, 1, grid.dates());
        let fwd: Vec<usize> = (0..6).collect();
        let b1 = sample_bridge_batch(&ep, &tokens, 3, &fwd, &grid, &config, None, &mut RandomSource::new(1).rng()).unwrap();
        // Same rows in reverse path order.
        let rows = |t: &Tensor, w: usize| -> Vec<f64> {
            let mut out = Vec::new();
            for p in (0..6).rev() {
                out.extend_from_slice(&t.data()[p * 3 * w..(p + 1) * 3 * w]);
            }
            out
        };
        let b2 = BridgeBatch {
            batch: 6,
            len: 3,
            tokens: Tensor::new(vec![18, 3], rows(&b1.tokens, 3)).unwrap(),
            times: Tensor::new(vec![18, 1], rows(&b1.times, 1)).unwrap(),
            states: Tensor::new(vec![18, 1], rows(&b1.states, 1)).unwrap(),
            targets: Tensor::new(vec![18, 1], rows(&b1.targets, 1)).unwrap(),
        };
        let (l1, _) = batch_loss(&net, &b1, false).unwrap();
        let (l2, _) = batch_loss(&net, &b2, false).unwrap();
        assert!((l1 - l2).abs() < 1e-10 * l1.abs().max(1.0));
    }
}
