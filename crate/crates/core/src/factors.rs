//! Factor pipeline for high-dimensional return panels: PCA factors, k-means
//! grouping of factors, per-dimension two-component Gaussian mixtures for
//! residuals, sliding windows, reconstruction, tabular features and the
//! Gaussian-noise augmentation baseline.
//!
//! Panels are `nalgebra::DMatrix<f64>` with one row per date and one column
//! per instrument.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::stochastic::{GaussianNoise, RandomSource};

fn check_finite(x: &DMatrix<f64>, what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Data(format!("{what} contains non-finite values")))
    }
}

/// Principal components of centered (optionally standardized) returns.
///
/// The covariance is normalized by `N`, so the mean squared row
/// reconstruction error of a rank-`m` fit equals the sum of the discarded
/// eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Column scales applied after centering (all ones unless standardized).
    pub scale: Vec<f64>,
    /// `d×m` projection with orthonormal columns.
    pub components: DMatrix<f64>,
    /// All `d` covariance eigenvalues, non-increasing.
    pub eigenvalues: Vec<f64>,
}

impl Pca {
    pub fn n_components(&self) -> usize {
        self.components.ncols()
    }

    pub fn dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.eigenvalues[..self.n_components()]
    }

    fn normalize(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::Dimension(format!(
                "expected {} columns, got {}",
                self.dim(),
                x.ncols()
            )));
        }
        let mut z = x.clone();
        for j in 0..z.ncols() {
            for v in z.column_mut(j).iter_mut() {
                *v = (*v - self.mean[j]) / self.scale[j];
            }
        }
        Ok(z)
    }

    /// `N×d` returns to `N×m` factors.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.normalize(x)? * &self.components)
    }

    /// `N×m` factors to `N×d` returns: `F·Pᵀ`, unscaled, plus the mean.
    pub fn inverse(&self, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if f.ncols() != self.n_components() {
            return Err(Error::Dimension(format!(
                "expected {} factor columns, got {}",
                self.n_components(),
                f.ncols()
            )));
        }
        let mut x = f * self.components.transpose();
        for j in 0..x.ncols() {
            for v in x.column_mut(j).iter_mut() {
                *v = *v * self.scale[j] + self.mean[j];
            }
        }
        Ok(x)
    }
}

pub fn pca_fit(x: &DMatrix<f64>, m: usize, standardize: bool) -> Result<Pca> {
    let (n, d) = x.shape();
    check_finite(x, "returns")?;
    if m == 0 || n < 2 || m > (n - 1).min(d) {
        return Err(Error::Config(format!(
            "cannot keep {m} components from {n} rows of dimension {d}"
        )));
    }
    let mean: Vec<f64> = (0..d).map(|j| x.column(j).mean()).collect();
    let mut z = x.clone();
    for j in 0..d {
        for v in z.column_mut(j).iter_mut() {
            *v -= mean[j];
        }
    }
    let mut scale = vec![1.0; d];
    if standardize {
        for j in 0..d {
            let s = (z.column(j).norm_squared() / n as f64).sqrt();
            if s > 0.0 {
                scale[j] = s;
                z.column_mut(j).scale_mut(1.0 / s);
            }
        }
    }
    let cov = z.transpose() * &z / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let mut components = DMatrix::zeros(d, m);
    for (c, &k) in order.iter().take(m).enumerate() {
        let mut col = eig.eigenvectors.column(k).into_owned();
        // sign convention: largest-magnitude loading positive
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        components.set_column(c, &col);
    }
    Ok(Pca {
        mean,
        scale,
        components,
        eigenvalues,
    })
}

/// Mean over rows of the squared Euclidean reconstruction error, in the
/// normalized (centered, scaled) space.
pub fn reconstruction_error(pca: &Pca, x: &DMatrix<f64>) -> Result<f64> {
    let z = pca.normalize(x)?;
    let r = &z - (&z * &pca.components) * pca.components.transpose();
    Ok(r.norm_squared() / x.nrows() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

fn kmeans_once<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> KMeansResult {
    let m = points.len();
    let mut centroids = vec![points[rng.random_range(0..m)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = m - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..m)
        };
        centroids.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    let mut assignments = vec![usize::MAX; m];
    for _ in 0..300 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(p, &centroids[a]).total_cmp(&sq_dist(p, &centroids[b])))
                .expect("k ≥ 1");
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(&assignments)
                .filter(|(_, &a)| a == c)
                .map(|(p, _)| p)
                .collect();
            if members.is_empty() {
                continue;
            }
            for (j, v) in centroid.iter_mut().enumerate() {
                *v = members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64;
            }
        }
    }
    let inertia = points
        .iter()
        .zip(&assignments)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum();
    KMeansResult {
        assignments,
        centroids,
        inertia,
    }
}

/// Lloyd's algorithm with k-means++ seeding; the best of `restarts` runs by
/// inertia is kept.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, source: &RandomSource) -> Result<KMeansResult> {
    if k == 0 || k > points.len() {
        return Err(Error::Config(format!(
            "cannot form {k} clusters from {} points",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Dimension("points have different lengths".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite clustering feature".into()));
    }
    let runs: Vec<KMeansResult> = (0..restarts.max(1))
        .map(|r| kmeans_once(points, k, &mut source.child(r as u64).rng()))
        .collect();
    Ok(runs
        .into_iter()
        .min_by(|a, b| a.inertia.total_cmp(&b.inertia))
        .expect("at least one restart"))
}

/// Clustering features of each factor column: standard deviation, excess
/// kurtosis and lag-1 autocorrelation.
pub fn factor_stats(f: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..f.ncols())
        .map(|j| {
            let x: Vec<f64> = f.column(j).iter().copied().collect();
            let n = x.len() as f64;
            let mean = x.iter().sum::<f64>() / n;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let kurt = if var > 0.0 {
                x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n / (var * var) - 3.0
            } else {
                0.0
            };
            let ac1 = if var > 0.0 && x.len() > 1 {
                x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / n / var
            } else {
                0.0
            };
            vec![var.sqrt(), kurt, ac1]
        })
        .collect()
}

/// Groups factor columns into `k` clusters by k-means on their
/// column-standardized [`factor_stats`].
pub fn cluster_factors(f: &DMatrix<f64>, k: usize, source: &RandomSource) -> Result<KMeansResult> {
    let mut stats = factor_stats(f);
    if let Some(first) = stats.first() {
        for j in 0..first.len() {
            let n = stats.len() as f64;
            let mean = stats.iter().map(|s| s[j]).sum::<f64>() / n;
            let sd = (stats.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
            for s in stats.iter_mut() {
                s[j] = if sd > 0.0 { (s[j] - mean) / sd } else { 0.0 };
            }
        }
    }
    kmeans(&stats, k, 10, source)
}

pub const GMM_VARIANCE_FLOOR: f64 = 1e-10;

/// Univariate two-component Gaussian mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gmm2 {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub variances: [f64; 2],
}

fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean) * (x - mean) / var)
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl Gmm2 {
    fn component_logs(&self, x: f64) -> [f64; 2] {
        [0, 1].map(|c| self.weights[c].ln() + log_normal_pdf(x, self.means[c], self.variances[c]))
    }

    pub fn log_likelihood(&self, xs: &[f64]) -> f64 {
        xs.iter()
            .map(|&x| {
                let l = self.component_logs(x);
                log_sum_exp(l[0], l[1])
            })
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.weights[0] * self.means[0] + self.weights[1] * self.means[1]
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        (0..2)
            .map(|c| self.weights[c] * (self.variances[c] + (self.means[c] - mu).powi(2)))
            .sum()
    }

    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let c = if rng.random::<f64>() < self.weights[0] { 0 } else { 1 };
                self.means[c] + self.variances[c].sqrt() * rng.standard_normal()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gmm2Fit {
    pub model: Gmm2,
    /// Total log-likelihood after each EM iteration, starting with the
    /// initial parameters.
    pub log_likelihoods: Vec<f64>,
}

/// EM fit: at most 100 iterations, stopping when the mean log-likelihood
/// improves by less than `1e-8`. Fails if the log-likelihood ever decreases.
pub fn gmm2_fit(xs: &[f64]) -> Result<Gmm2Fit> {
    if xs.len() < 10 {
        return Err(Error::Data(format!(
            "mixture fit needs at least 10 values, got {}",
            xs.len()
        )));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite residual".into()));
    }
    let n = xs.len() as f64;
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((p * (sorted.len() - 1) as f64).round()) as usize];
    let mean = xs.iter().sum::<f64>() / n;
    let var = (xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).max(GMM_VARIANCE_FLOOR);
    let mut g = Gmm2 {
        weights: [0.5, 0.5],
        means: [q(0.25), q(0.75)],
        variances: [var, var],
    };
    let mut lls = vec![g.log_likelihood(xs)];
    let mut resp = vec![0.0; xs.len()];
    for _ in 0..100 {
        for (r, &x) in resp.iter_mut().zip(xs) {
            let l = g.component_logs(x);
            *r = (l[0] - log_sum_exp(l[0], l[1])).exp();
        }
        let n0: f64 = resp.iter().sum();
        let n1 = n - n0;
        let mut next = g;
        for (c, nc) in [(0usize, n0), (1, n1)] {
            if nc <= 0.0 {
                continue;
            }
            let w = |r: f64| if c == 0 { r } else { 1.0 - r };
            let mu = resp.iter().zip(xs).map(|(&r, &x)| w(r) * x).sum::<f64>() / nc;
            let v = resp.iter().zip(xs).map(|(&r, &x)| w(r) * (x - mu).powi(2)).sum::<f64>() / nc;
            next.means[c] = mu;
            next.variances[c] = v.max(GMM_VARIANCE_FLOOR);
            next.weights[c] = nc / n;
        }
        let (w0, w1) = (next.weights[0].max(f64::MIN_POSITIVE), next.weights[1].max(f64::MIN_POSITIVE));
        next.weights = [w0 / (w0 + w1), w1 / (w0 + w1)];
        let ll = next.log_likelihood(xs);
        let prev = *lls.last().expect("non-empty");
        if ll < prev - 1e-9 * prev.abs().max(1.0) {
            return Err(Error::Numerical(format!(
                "EM log-likelihood decreased from {prev} to {ll}"
            )));
        }
        g = next;
        lls.push(ll);
        if (ll - prev).abs() / n < 1e-8 {
            break;
        }
    }
    Ok(Gmm2Fit {
        model: g,
        log_likelihoods: lls,
    })
}

/// PCA factors, factor clusters and per-dimension residual mixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    pub pca: Pca,
    /// Cluster index of each factor.
    pub clusters: Vec<usize>,
    pub residual_models: Vec<Gmm2>,
}

#[derive(Debug, Clone)]
pub struct FactorFit {
    pub model: FactorModel,
    pub factors: DMatrix<f64>,
    pub residuals: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorOptions {
    pub n_factors: usize,
    pub n_clusters: usize,
    pub standardize: bool,
}

impl Default for FactorOptions {
    fn default() -> Self {
        FactorOptions {
            n_factors: 16,
            n_clusters: 3,
            standardize: false,
        }
    }
}

pub fn fit_factor_model(x: &DMatrix<f64>, opts: &FactorOptions, source: &RandomSource) -> Result<FactorFit> {
    let pca = pca_fit(x, opts.n_factors, opts.standardize)?;
    let factors = pca.transform(x)?;
    let residuals = x - pca.inverse(&factors)?;
    let clusters = cluster_factors(&factors, opts.n_clusters, source)?.assignments;
    let residual_models = (0..residuals.ncols())
        .into_par_iter()
        .map(|j| gmm2_fit(residuals.column(j).as_slice()).map(|f| f.model))
        .collect::<Result<Vec<_>>>()?;
    Ok(FactorFit {
        model: FactorModel {
            pca,
            clusters,
            residual_models,
        },
        factors,
        residuals,
    })
}

impl FactorModel {
    /// Indices of the factors in each cluster.
    pub fn cluster_members(&self) -> Vec<Vec<usize>> {
        let k = self.clusters.iter().copied().max().map_or(0, |c| c + 1);
        let mut out = vec![Vec::new(); k];
        for (f, &c) in self.clusters.iter().enumerate() {
            out[c].push(f);
        }
        out
    }

    /// `n×d` residuals drawn i.i.d. over rows from the per-dimension mixtures.
    pub fn sample_residuals(&self, n: usize, source: &RandomSource) -> DMatrix<f64> {
        let cols: Vec<Vec<f64>> = self
            .residual_models
            .par_iter()
            .enumerate()
            .map(|(j, g)| g.sample(n, &mut source.child(j as u64).rng()))
            .collect();
        DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
    }
}

/// `X̂ = F̂·Pᵀ (+ mean) + R̂`.
pub fn reconstruct(f: &DMatrix<f64>, model: &FactorModel, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let base = model.pca.inverse(f)?;
    if r.shape() != base.shape() {
        return Err(Error::Dimension(format!(
            "residuals are {:?}, factor part is {:?}",
            r.shape(),
            base.shape()
        )));
    }
    Ok(base + r)
}

/// Windows of `length` consecutive rows taken every `stride` rows.
pub fn sliding_windows(x: &DMatrix<f64>, length: usize, stride: usize) -> Result<TimeSeriesDataset> {
    let (n, d) = x.shape();
    if length == 0 || stride == 0 {
        return Err(Error::Config("window length and stride must be positive".into()));
    }
    if n < length {
        return Err(Error::Data(format!(
            "series of {n} rows is shorter than the window length {length}"
        )));
    }
    let starts: Vec<usize> = (0..=n - length).step_by(stride).collect();
    let mut values = Vec::with_capacity(starts.len() * length * d);
    for &s in &starts {
        for i in s..s + length {
            values.extend(x.row(i).iter());
        }
    }
    TimeSeriesDataset::new(starts.len(), length, d, TimeSeriesDataset::default_names(d), values)
}

/// Splits a `length×d` window (row-major) into its first `length − 1` rows
/// and the sign labels of the last row (`1` when strictly positive).
pub fn split_target(window: &[f64], d: usize) -> Result<(Vec<f64>, Vec<u8>)> {
    if d == 0 || window.len() % d != 0 || window.len() < 2 * d {
        return Err(Error::Dimension(format!(
            "window of {} values cannot be split with dimension {d}",
            window.len()
        )));
    }
    let cut = window.len() - d;
    let labels = window[cut..].iter().map(|&v| u8::from(v > 0.0)).collect();
    Ok((window[..cut].to_vec(), labels))
}

pub const CUM_HORIZONS: [usize; 6] = [5, 10, 21, 63, 126, 252];
pub const MKT_HORIZONS: [usize; 4] = [3, 5, 10, 21];

/// Engineered features for every instrument at one date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    /// One row per instrument.
    pub rows: Vec<Vec<f64>>,
    /// `(instrument, horizon)` pairs whose z-score had zero dispersion and
    /// was emitted as 0.
    pub degenerate: Vec<(usize, usize)>,
}

pub fn feature_columns() -> Vec<String> {
    let mut c = vec!["feature.return_t-1_market".to_string()];
    for h in CUM_HORIZONS {
        c.push(format!("feature.cum_ret_{h}"));
    }
    for h in CUM_HORIZONS {
        c.push(format!("feature.vol_{h}"));
    }
    for h in MKT_HORIZONS {
        c.push(format!("feature.ret_t-1_zscore_{h}"));
    }
    for h in MKT_HORIZONS {
        c.push(format!("feature.mkt_cumret_{h}"));
    }
    for h in MKT_HORIZONS {
        c.push(format!("feature.mkt_vol_{h}"));
    }
    for h in MKT_HORIZONS {
        c.push(format!("feature.mkt_mean_{h}"));
    }
    c
}

fn window_mean_sd(series: &[f64], t: usize, h: usize) -> (f64, f64) {
    let w = &series[t + 1 - h..=t];
    if w.iter().all(|&v| v == w[0]) {
        return (w[0], 0.0);
    }
    let mean = w.iter().sum::<f64>() / h as f64;
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (h - 1) as f64;
    (mean, var.sqrt())
}

/// Features at row `t` (0-based) of an `N×d` return panel, using rows
/// `t − 251 ..= t` only. Requires `t ≥ 251`, i.e. 252 observations.
pub fn engineer_features(r: &DMatrix<f64>, t: usize) -> Result<FeatureTable> {
    let (n, d) = r.shape();
    let need = CUM_HORIZONS[CUM_HORIZONS.len() - 1];
    if t + 1 < need || t >= n {
        return Err(Error::Domain(format!(
            "features at row {t} need {need} observations up to that row in a series of {n}"
        )));
    }
    check_finite(r, "returns")?;
    let market: Vec<f64> = (0..n).map(|i| r.row(i).mean()).collect();
    let mut rows = Vec::with_capacity(d);
    let mut degenerate = Vec::new();
    for j in 0..d {
        let own: Vec<f64> = r.column(j).iter().copied().collect();
        let mut row = vec![market[t - 1]];
        for h in CUM_HORIZONS {
            row.push(own[t + 1 - h..=t].iter().sum());
        }
        for h in CUM_HORIZONS {
            row.push(window_mean_sd(&own, t, h).1);
        }
        for h in MKT_HORIZONS {
            let (mu, sd) = window_mean_sd(&own, t, h);
            if sd > 0.0 {
                row.push((own[t - 1] - mu) / sd);
            } else {
                row.push(0.0);
                degenerate.push((j, h));
            }
        }
        for h in MKT_HORIZONS {
            row.push(market[t + 1 - h..=t].iter().sum());
        }
        for h in MKT_HORIZONS {
            row.push(window_mean_sd(&market, t, h).1);
        }
        for h in MKT_HORIZONS {
            row.push(window_mean_sd(&market, t, h).0);
        }
        rows.push(row);
    }
    Ok(FeatureTable {
        columns: feature_columns(),
        rows,
        degenerate,
    })
}

/// `p` copies of `window` with i.i.d. `N(0, (λ·σ)²)` noise added, where `σ`
/// is the population standard deviation of all entries of the window.
pub fn noise_augment(window: &[f64], p: usize, lambda: f64, source: &RandomSource) -> Result<Vec<Vec<f64>>> {
    if p == 0 {
        return Err(Error::Config("noise augmentation needs at least one copy".into()));
    }
    if window.is_empty() {
        return Ok(vec![Vec::new(); p]);
    }
    let n = window.len() as f64;
    let mean = window.iter().sum::<f64>() / n;
    let sd = (window.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok((0..p)
        .map(|c| {
            let mut rng = source.child(c as u64).rng();
            window
                .iter()
                .map(|&v| v + lambda * sd * rng.standard_normal())
                .collect()
        })
        .collect())
}

/// Column-wise covariance (normalized by `N`) of a panel.
pub fn column_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mean = DVector::from_iterator(x.ncols(), (0..x.ncols()).map(|j| x.column(j).mean()));
    let mut z = x.clone();
    for j in 0..z.ncols() {
        z.column_mut(j).add_scalar_mut(-mean[j]);
    }
    z.transpose() * z / n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = RandomSource::new(seed).rng();
        let mix = DMatrix::from_fn(d, d, |_, _| rng.standard_normal());
        DMatrix::from_fn(n, d, |_, _| rng.standard_normal()) * mix
    }

    #[test]
    fn pca_components_orthonormal_and_sorted() {
        let x = panel(200, 6, 1);
        let p = pca_fit(&x, 4, false).unwrap();
        let g = p.components.transpose() * &p.components;
        assert!((g - DMatrix::identity(4, 4)).amax() < 1e-10);
        assert!(p.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn too_many_components_is_config_error() {
        let x = panel(5, 8, 2);
        assert!(matches!(pca_fit(&x, 5, false), Err(Error::Config(_))));
    }

    #[test]
    fn kmeans_singletons_and_duplicates() {
        let pts = vec![vec![0.0], vec![1.0], vec![5.0]];
        let r = kmeans(&pts, 3, 10, &RandomSource::new(3)).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut a = r.assignments.clone();
        a.sort();
        a.dedup();
        assert_eq!(a.len(), 3);
        let dup = vec![vec![1.0, 1.0]; 4];
        let r = kmeans(&dup, 2, 10, &RandomSource::new(3)).unwrap();
        assert_eq!(r.inertia, 0.0);
        assert!(matches!(kmeans(&dup, 5, 10, &RandomSource::new(3)), Err(Error::Config(_))));
    }

    #[test]
    fn gmm_point_masses() {
        let xs: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { -5.0 } else { 5.0 }).collect();
        let g = gmm2_fit(&xs).unwrap().model;
        let (lo, hi) = if g.means[0] < g.means[1] { (0, 1) } else { (1, 0) };
        assert!((g.means[lo] + 5.0).abs() < 1e-8);
        assert!((g.means[hi] - 5.0).abs() < 1e-8);
        assert!(g.variances.iter().all(|&v| v <= 1e-9));
        assert!((g.weights[0] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn window_counts_and_labels() {
        let x = DMatrix::from_fn(260, 2, |i, j| (i + j) as f64);
        assert_eq!(sliding_windows(&x, 253, 1).unwrap().n_paths(), 8);
        assert_eq!(sliding_windows(&x, 260, 1).unwrap().n_paths(), 1);
        assert!(matches!(sliding_windows(&x, 261, 1), Err(Error::Data(_))));
        let w = [0.1, 0.2, 0.3, 1.0, -1.0, 2.0];
        let (input, labels) = split_target(&w, 3).unwrap();
        assert_eq!(input, vec![0.1, 0.2, 0.3]);
        assert_eq!(labels, vec![1, 0, 1]);
    }

    #[test]
    fn constant_returns_features() {
        let c = 0.01;
        let r = DMatrix::from_element(300, 1, c);
        let f = engineer_features(&r, 299).unwrap();
        let col = |name: &str| f.columns.iter().position(|c| c == name).unwrap();
        let row = &f.rows[0];
        for h in CUM_HORIZONS {
            assert!((row[col(&format!("feature.cum_ret_{h}"))] - h as f64 * c).abs() < 1e-12);
            assert!(row[col(&format!("feature.vol_{h}"))].abs() < 1e-12);
        }
        assert_eq!(f.degenerate.len(), MKT_HORIZONS.len());
        assert!(matches!(engineer_features(&r, 250), Err(Error::Domain(_))));
    }

    #[test]
    fn noise_augment_edge_cases() {
        let w = [1.0, 2.0, 3.0];
        let copies = noise_augment(&w, 3, 0.0, &RandomSource::new(4)).unwrap();
        assert!(copies.iter().all(|c| c == &w));
        let flat = [2.0; 5];
        let copies = noise_augment(&flat, 2, 0.5, &RandomSource::new(4)).unwrap();
        assert!(copies.iter().all(|c| c == &flat));
    }
}
