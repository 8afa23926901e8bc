//! Comparison metrics for real and synthetic series: autocorrelations,
//! correlation matrices, tail risk, forecast classification scores, PnL and
//! Sharpe ratios with bootstrap intervals, and quadratic-variation dispersion.
//!
//! Annualization uses 252 periods throughout. Quantiles use linear
//! interpolation between order statistics at `h = (n − 1)·p`.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::stochastic::{RandomSource, TimeGrid};

pub const PERIODS_PER_YEAR: f64 = 252.0;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation with `n − 1` denominator (0 for `n < 2`).
fn sample_std(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acf {
    /// Values at lags `0..=max_lag`; `NaN` where undefined.
    pub values: Vec<f64>,
    /// Set when the series has zero variance.
    pub degenerate: bool,
}

/// Sample autocorrelation `Σ (x_t − x̄)(x_{t+ℓ} − x̄) / Σ (x_t − x̄)²` of the
/// series, or of its squares when `squared`.
pub fn acf(series: &[f64], max_lag: usize, squared: bool) -> Result<Acf> {
    if series.len() <= max_lag {
        return Err(Error::Data(format!(
            "ACF up to lag {max_lag} needs more than {} observations",
            series.len()
        )));
    }
    let x: Vec<f64> = if squared {
        series.iter().map(|v| v * v).collect()
    } else {
        series.to_vec()
    };
    let m = mean(&x);
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    let denom: f64 = c.iter().map(|v| v * v).sum();
    if !(denom > 0.0) || x.iter().all(|&v| v == x[0]) {
        let mut values = vec![f64::NAN; max_lag + 1];
        values[0] = 1.0;
        return Ok(Acf {
            values,
            degenerate: true,
        });
    }
    let values = (0..=max_lag)
        .map(|l| c[..c.len() - l].iter().zip(&c[l..]).map(|(a, b)| a * b).sum::<f64>() / denom)
        .collect();
    Ok(Acf {
        values,
        degenerate: false,
    })
}

/// Lag-wise average of per-path ACFs of one dimension of a dataset.
pub fn mean_acf(paths: &[Vec<f64>], max_lag: usize, squared: bool) -> Result<Acf> {
    let mut sum = vec![0.0; max_lag + 1];
    let mut count = 0usize;
    for p in paths {
        let a = acf(p, max_lag, squared)?;
        if a.degenerate {
            continue;
        }
        for (s, v) in sum.iter_mut().zip(&a.values) {
            *s += v;
        }
        count += 1;
    }
    if count == 0 {
        let mut values = vec![f64::NAN; max_lag + 1];
        values[0] = 1.0;
        return Ok(Acf {
            values,
            degenerate: true,
        });
    }
    Ok(Acf {
        values: sum.into_iter().map(|s| s / count as f64).collect(),
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    /// `d×d`, row-major.
    pub values: Vec<Vec<f64>>,
    /// Columns with zero variance (their off-diagonal entries are 0).
    pub degenerate_columns: Vec<usize>,
}

/// Pearson correlations of the columns of `rows` (`N` rows of length `d`).
pub fn correlation_matrix(rows: &[Vec<f64>]) -> Result<CorrelationMatrix> {
    if rows.len() < 2 {
        return Err(Error::Data("correlations need at least two rows".into()));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Dimension("rows have different lengths".into()));
    }
    let n = rows.len() as f64;
    let means: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for a in 0..d {
            let ca = r[a] - means[a];
            for b in 0..=a {
                cov[a][b] += ca * (r[b] - means[b]);
            }
        }
    }
    let degenerate_columns: Vec<usize> = (0..d)
        .filter(|&j| !(cov[j][j] > 0.0) || rows.iter().all(|r| r[j] == rows[0][j]))
        .collect();
    let mut values = vec![vec![0.0; d]; d];
    for a in 0..d {
        values[a][a] = 1.0;
        for b in 0..a {
            let v = if degenerate_columns.contains(&a) || degenerate_columns.contains(&b) {
                0.0
            } else {
                (cov[a][b] / (cov[a][a] * cov[b][b]).sqrt()).clamp(-1.0, 1.0)
            };
            values[a][b] = v;
            values[b][a] = v;
        }
    }
    Ok(CorrelationMatrix {
        values,
        degenerate_columns,
    })
}

/// Empirical quantile with linear interpolation at `h = (n − 1)·p`.
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Data("quantile of an empty sample".into()));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(sorted_quantile(&s, p))
}

fn sorted_quantile(s: &[f64], p: f64) -> f64 {
    let h = (s.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Value at risk and expected shortfall at `level` as positive loss
/// magnitudes: `VaR = −q_{1−level}`, `ES = −mean{r : r ≤ q_{1−level}}`.
pub fn var_es(returns: &[f64], level: f64) -> Result<(f64, f64)> {
    if returns.is_empty() {
        return Err(Error::Data("VaR of an empty sample".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let recommended = if level >= 0.99 { 500 } else { 100 };
    if returns.len() < recommended {
        log::warn!(
            "VaR at {level} from only {} observations (at least {recommended} recommended)",
            returns.len()
        );
    }
    let mut s = returns.to_vec();
    s.sort_by(f64::total_cmp);
    let q = sorted_quantile(&s, 1.0 - level);
    let tail: Vec<f64> = s.iter().copied().take_while(|&r| r <= q).collect();
    Ok((-q, -mean(&tail)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub log_loss: f64,
    pub roc_auc: f64,
}

pub const LOG_LOSS_CLIP: f64 = 1e-12;

/// Accuracy (predict 1 when `p ≥ 0.5`), binary cross-entropy and ROC AUC by
/// the Mann–Whitney statistic with midranks. AUC is `NaN` when only one class
/// is present.
pub fn classification_metrics(p: &[f64], labels: &[u8]) -> Result<ClassificationMetrics> {
    if p.is_empty() || p.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} probabilities for {} labels",
            p.len(),
            labels.len()
        )));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::Data("labels must be 0 or 1".into()));
    }
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Domain("probabilities must lie in [0, 1]".into()));
    }
    let m = p.len() as f64;
    let accuracy = p
        .iter()
        .zip(labels)
        .filter(|(&q, &y)| u8::from(q >= 0.5) == y)
        .count() as f64
        / m;
    let log_loss = -p
        .iter()
        .zip(labels)
        .map(|(&q, &y)| {
            let q = q.clamp(LOG_LOSS_CLIP, 1.0 - LOG_LOSS_CLIP);
            if y == 1 {
                q.ln()
            } else {
                (1.0 - q).ln()
            }
        })
        .sum::<f64>()
        / m;
    Ok(ClassificationMetrics {
        accuracy,
        log_loss,
        roc_auc: roc_auc(p, labels),
    })
}

fn roc_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return f64::NAN;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(r, _)| r).sum();
    (rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos * n_neg) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnlMetrics {
    pub pnl: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub sharpe: f64,
    /// Set when `std = 0`; the Sharpe ratio is then `±∞` (or 0 for zero mean).
    pub degenerate: bool,
}

/// `(mean/std)·√252`, with the degenerate convention of [`PnlMetrics`].
pub fn sharpe(pnl: &[f64]) -> (f64, bool) {
    let (m, s) = (mean(pnl), sample_std(pnl));
    if s > 0.0 {
        (m / s * PERIODS_PER_YEAR.sqrt(), false)
    } else if m == 0.0 {
        (0.0, true)
    } else {
        (m.signum() * f64::INFINITY, true)
    }
}

/// Daily PnL of positions `w = 2p̂ − 1`: `PnL_t = (1/d)·Σ_j w_tj R_tj`.
/// `p` and `r` are `M` rows of `d` values.
pub fn pnl_metrics(p: &[Vec<f64>], r: &[Vec<f64>]) -> Result<PnlMetrics> {
    if p.len() != r.len() || p.is_empty() {
        return Err(Error::Dimension(format!(
            "{} probability rows for {} return rows",
            p.len(),
            r.len()
        )));
    }
    let mut pnl = Vec::with_capacity(p.len());
    for (pt, rt) in p.iter().zip(r) {
        if pt.len() != rt.len() || pt.is_empty() {
            return Err(Error::Dimension("probability and return rows differ in width".into()));
        }
        let d = pt.len() as f64;
        pnl.push(pt.iter().zip(rt).map(|(q, x)| (2.0 * q - 1.0) * x).sum::<f64>() / d);
    }
    let (s, degenerate) = sharpe(&pnl);
    Ok(PnlMetrics {
        mean: mean(&pnl),
        std: sample_std(&pnl),
        sharpe: s,
        degenerate,
        pnl,
    })
}

/// Percentile interval of the Sharpe ratio over `b` i.i.d. bootstrap
/// resamples of `pnl`. Resample `k` draws from `source.child(k)`.
pub fn bootstrap_sharpe_ci(pnl: &[f64], level: f64, b: usize, source: &RandomSource) -> Result<(f64, f64)> {
    if pnl.len() < 30 {
        return Err(Error::Data(format!(
            "bootstrap needs at least 30 observations, got {}",
            pnl.len()
        )));
    }
    if sample_std(pnl) == 0.0 || pnl.iter().all(|&v| v == pnl[0]) {
        return Err(Error::Data("PnL series is constant; Sharpe ratio is degenerate".into()));
    }
    if b == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::Config("bootstrap needs b ≥ 1 and a level in (0, 1)".into()));
    }
    let n = pnl.len();
    let mut stats: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|k| {
            let mut rng = source.child(k as u64).rng();
            let sample: Vec<f64> = (0..n).map(|_| pnl[rng.random_range(0..n)]).collect();
            sharpe(&sample).0
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let a = (1.0 - level) / 2.0;
    Ok((sorted_quantile(&stats, a), sorted_quantile(&stats, 1.0 - a)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvDispersion {
    /// Realized quadratic variation per unit time, `per_path[m][j]`.
    pub per_path: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Cross-path sample standard deviation per dimension.
    pub std: Vec<f64>,
}

pub fn qv_dispersion(data: &TimeSeriesDataset, grid: &TimeGrid) -> Result<QvDispersion> {
    if data.n_dates() < 2 {
        return Err(Error::Data("quadratic variation needs at least one interval".into()));
    }
    if grid.n_dates() != data.n_dates() {
        return Err(Error::Dimension(format!(
            "grid has {} dates, data has {}",
            grid.n_dates(),
            data.n_dates()
        )));
    }
    let d = data.dim();
    let total = grid.date(grid.n_intervals()) - grid.date(0);
    let per_path: Vec<Vec<f64>> = (0..data.n_paths())
        .map(|m| {
            (0..d)
                .map(|j| {
                    let s = data.series(m, j);
                    s.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / total
                })
                .collect()
        })
        .collect();
    let mean_v = (0..d)
        .map(|j| per_path.iter().map(|p| p[j]).sum::<f64>() / per_path.len().max(1) as f64)
        .collect();
    let std_v = (0..d)
        .map(|j| sample_std(&per_path.iter().map(|p| p[j]).collect::<Vec<_>>()))
        .collect();
    Ok(QvDispersion {
        per_path,
        mean: mean_v,
        std: std_v,
    })
}

/// `(252·mean, √252·std)` of daily returns, in percent.
pub fn annualized_stats(returns: &[f64]) -> (f64, f64) {
    if returns.is_empty() {
        return (0.0, 0.0);
    }
    (
        100.0 * PERIODS_PER_YEAR * mean(returns),
        100.0 * PERIODS_PER_YEAR.sqrt() * sample_std(returns),
    )
}

/// Simple returns `x_{i+1}/x_i − 1` of dimension `j`, pooled over paths.
pub fn simple_returns(data: &TimeSeriesDataset, j: usize) -> Vec<f64> {
    (0..data.n_paths())
        .flat_map(|m| {
            let s = data.series(m, j);
            s.windows(2).map(|w| w[1] / w[0] - 1.0).collect::<Vec<_>>()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Counts of `values` in `bins` equal-width bins over `[lo, hi]`; values
/// outside are clamped into the end bins.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Histogram> {
    if bins == 0 || !(hi > lo) {
        return Err(Error::Config("histogram needs bins ≥ 1 and hi > lo".into()));
    }
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0; bins];
    for &v in values.iter().filter(|v| v.is_finite()) {
        let k = ((v - lo) / w).floor().clamp(0.0, (bins - 1) as f64) as usize;
        counts[k] += 1;
    }
    Ok(Histogram {
        edges: (0..=bins).map(|k| lo + k as f64 * w).collect(),
        counts,
    })
}

/// Named collection of evaluation results.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: BTreeMap<String, f64>,
    pub acfs: BTreeMap<String, Vec<f64>>,
    pub correlations: BTreeMap<String, Vec<Vec<f64>>>,
    pub histograms: BTreeMap<String, Histogram>,
    pub intervals: BTreeMap<String, (f64, f64)>,
    pub flags: Vec<String>,
}

/// Compares a synthetic dataset with a reference one, dimension by
/// dimension: tail risk and annualized statistics of simple returns, mean
/// ACFs of returns and squared returns, return correlations and
/// quadratic-variation dispersion.
pub fn compare_datasets(
    real: &TimeSeriesDataset,
    synthetic: &TimeSeriesDataset,
    grid: &TimeGrid,
    max_lag: usize,
) -> Result<EvalReport> {
    if real.dim() != synthetic.dim() || real.n_dates() != synthetic.n_dates() {
        return Err(Error::Dimension("datasets differ in shape".into()));
    }
    let mut rep = EvalReport::default();
    let names = real.dim_names().to_vec();
    for (label, ds) in [("real", real), ("synthetic", synthetic)] {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (j, name) in names.iter().enumerate() {
            let r = simple_returns(ds, j);
            for level in [0.95, 0.99] {
                let (v, e) = var_es(&r, level)?;
                let pct = (level * 100.0) as u32;
                rep.metrics.insert(format!("{label}.{name}.var{pct}"), v);
                rep.metrics.insert(format!("{label}.{name}.es{pct}"), e);
            }
            let (ar, asd) = annualized_stats(&r);
            rep.metrics.insert(format!("{label}.{name}.ann_return_pct"), ar);
            rep.metrics.insert(format!("{label}.{name}.ann_std_pct"), asd);
            let per_path: Vec<Vec<f64>> = (0..ds.n_paths())
                .map(|m| {
                    let s = ds.series(m, j);
                    s.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
                })
                .collect();
            if ds.n_dates() > max_lag + 1 {
                for (sq, tag) in [(false, "acf"), (true, "acf_sq")] {
                    let a = mean_acf(&per_path, max_lag, sq)?;
                    if a.degenerate {
                        rep.flags.push(format!("{label}.{name}.{tag} degenerate"));
                    }
                    rep.acfs.insert(format!("{label}.{name}.{tag}"), a.values);
                }
            }
            if rows.is_empty() {
                rows = r.iter().map(|&v| vec![v]).collect();
            } else {
                for (row, v) in rows.iter_mut().zip(&r) {
                    row.push(*v);
                }
            }
        }
        if rows.len() >= 2 {
            let c = correlation_matrix(&rows)?;
            for j in c.degenerate_columns {
                rep.flags.push(format!("{label}.{} constant returns", names[j]));
            }
            rep.correlations.insert(format!("{label}.returns"), c.values);
        }
        let qv = qv_dispersion(ds, grid)?;
        for (j, name) in names.iter().enumerate() {
            rep.metrics.insert(format!("{label}.{name}.qv_mean"), qv.mean[j]);
            rep.metrics.insert(format!("{label}.{name}.qv_std"), qv.std[j]);
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn acf_lag_zero_and_constant() {
        let a = acf(&[1.0, 2.0, 0.5, 3.0], 2, false).unwrap();
        assert_eq!(a.values[0], 1.0);
        let c = acf(&[2.0; 10], 3, false).unwrap();
        assert!(c.degenerate && c.values[0] == 1.0 && c.values[1].is_nan());
        assert!(acf(&[1.0, 2.0], 2, false).is_err());
    }

    #[test]
    fn correlation_edge_cases() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64, 3.0]).collect();
        let c = correlation_matrix(&rows).unwrap();
        assert!((c.values[0][1] - 1.0).abs() < 1e-12);
        assert_eq!(c.values[2][2], 1.0);
        assert_eq!(c.values[0][2], 0.0);
        assert_eq!(c.degenerate_columns, vec![2]);
        let one = correlation_matrix(&[vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(one.values, vec![vec![1.0]]);
    }

    #[test]
    fn constant_losses_and_quantile_interpolation() {
        let (v, e) = var_es(&[-0.03; 50], 0.99).unwrap();
        assert!((v - 0.03).abs() < 1e-15 && (e - 0.03).abs() < 1e-15);
        assert!((quantile(&[0.0, 1.0, 2.0, 3.0], 0.5).unwrap() - 1.5).abs() < 1e-15);
        assert!(var_es(&[], 0.95).is_err());
    }

    #[test]
    fn classification_trivia() {
        let labels = [1, 0, 1, 1];
        let m = classification_metrics(&[0.5; 4], &labels).unwrap();
        assert!((m.accuracy - 0.75).abs() < 1e-15);
        assert!((m.log_loss - 2f64.ln()).abs() < 1e-12);
        let s = classification_metrics(&[0.9, 0.1, 0.8, 0.7], &labels).unwrap();
        assert_eq!(s.roc_auc, 1.0);
        assert!(classification_metrics(&[0.5], &[2]).is_err());
    }

    #[test]
    fn pnl_trivia() {
        let r = vec![vec![0.01, -0.03], vec![0.02, 0.04]];
        let full = pnl_metrics(&vec![vec![1.0; 2]; 2], &r).unwrap();
        assert!((full.pnl[0] + 0.01).abs() < 1e-15 && (full.pnl[1] - 0.03).abs() < 1e-15);
        let flat = pnl_metrics(&vec![vec![0.5; 2]; 2], &r).unwrap();
        assert!(flat.pnl.iter().all(|&v| v == 0.0) && flat.degenerate);
    }

    #[test]
    fn annualized_trivia() {
        let (ar, asd) = annualized_stats(&[0.0004; 20]);
        assert!((ar - 10.08).abs() < 1e-9 && asd.abs() < 1e-12);
        assert_eq!(annualized_stats(&[0.0; 5]), (0.0, 0.0));
    }

    #[test]
    fn bootstrap_rejects_point_mass() {
        assert!(bootstrap_sharpe_ci(&[0.01; 50], 0.95, 100, &RandomSource::new(1)).is_err());
    }
}
