use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::stochastic::TimeGrid;

/// Per-dimension map `x̃ = (g(x) − shift − drift·t) / scale`, where `g` is
/// `ln` for dimensions flagged in `log` and the identity otherwise.
///
/// Fitted so that scaled increments have zero mean and variance `Δt`, i.e.
/// the same first two moments as the Brownian reference on the model grid.
/// A dimension whose increments are deterministic is left unscaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub shift: Vec<f64>,
    pub drift: Vec<f64>,
    pub scale: Vec<f64>,
    #[serde(default)]
    pub log: Vec<bool>,
}

impl ScalerState {
    pub fn identity(dim: usize) -> Self {
        ScalerState {
            shift: vec![0.0; dim],
            drift: vec![0.0; dim],
            scale: vec![1.0; dim],
            log: vec![false; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    fn is_log(&self, j: usize) -> bool {
        self.log.get(j).copied().unwrap_or(false)
    }

    pub fn fit(data: &TimeSeriesDataset, grid: &TimeGrid) -> Result<Self> {
        Self::fit_with_log(data, grid, &vec![false; data.dim()])
    }

    /// Like [`ScalerState::fit`], taking logarithms of the flagged
    /// dimensions first. Flagged dimensions must be strictly positive.
    pub fn fit_with_log(data: &TimeSeriesDataset, grid: &TimeGrid, log: &[bool]) -> Result<Self> {
        check_grid(data, grid)?;
        if data.is_empty() {
            return Err(Error::Data("cannot fit a scaler on an empty dataset".into()));
        }
        if log.len() != data.dim() {
            return Err(Error::Dimension(format!(
                "{} log flags for {} dimensions",
                log.len(),
                data.dim()
            )));
        }
        let d = data.dim();
        let mut pre = ScalerState::identity(d);
        pre.log = log.to_vec();
        let data = &pre.apply(data, grid)?;
        let n = grid.n_intervals();
        let m = data.n_paths() as f64;
        let mut out = pre.clone();
        for j in 0..d {
            let shift = (0..data.n_paths()).map(|p| data.get(p, 0, j)).sum::<f64>() / m;
            let total: f64 = (0..data.n_paths())
                .map(|p| data.get(p, n, j) - data.get(p, 0, j))
                .sum();
            let drift = total / (m * grid.horizon());
            let mut ss = 0.0;
            for p in 0..data.n_paths() {
                for i in 0..n {
                    let dt = grid.dt(i);
                    let e = data.get(p, i + 1, j) - data.get(p, i, j) - drift * dt;
                    ss += e * e / dt;
                }
            }
            let scale = (ss / (m * n as f64)).sqrt();
            if scale > 1e-12 * (1.0 + shift.abs()) && scale.is_finite() {
                out.shift[j] = shift;
                out.drift[j] = drift;
                out.scale[j] = scale;
            } else {
                log::warn!(
                    "dimension {} has deterministic increments; leaving it unscaled",
                    data.dim_names()[j]
                );
            }
        }
        Ok(out)
    }

    /// Scaled value; `NaN` or `−∞` for a non-positive input on a log dimension.
    pub fn apply_value(&self, j: usize, t: f64, x: f64) -> f64 {
        let x = if self.is_log(j) { x.ln() } else { x };
        (x - self.shift[j] - self.drift[j] * t) / self.scale[j]
    }

    pub fn invert_value(&self, j: usize, t: f64, y: f64) -> f64 {
        let x = y * self.scale[j] + self.shift[j] + self.drift[j] * t;
        if self.is_log(j) {
            x.exp()
        } else {
            x
        }
    }

    pub fn apply(&self, data: &TimeSeriesDataset, grid: &TimeGrid) -> Result<TimeSeriesDataset> {
        for j in (0..self.dim()).filter(|&j| self.is_log(j)) {
            if (0..data.n_paths()).any(|m| (0..data.n_dates()).any(|i| data.get(m, i, j) <= 0.0)) {
                return Err(Error::Data(format!(
                    "dimension {} has non-positive values and cannot be log-transformed",
                    data.dim_names()[j]
                )));
            }
        }
        self.map(data, grid, |j, t, x| self.apply_value(j, t, x))
    }

    pub fn invert(&self, data: &TimeSeriesDataset, grid: &TimeGrid) -> Result<TimeSeriesDataset> {
        self.map(data, grid, |j, t, y| self.invert_value(j, t, y))
    }

    fn map<F: Fn(usize, f64, f64) -> f64>(
        &self,
        data: &TimeSeriesDataset,
        grid: &TimeGrid,
        f: F,
    ) -> Result<TimeSeriesDataset> {
        check_grid(data, grid)?;
        if data.dim() != self.dim() {
            return Err(Error::Dimension(format!(
                "scaler fitted on {} dimensions applied to {}",
                self.dim(),
                data.dim()
            )));
        }
        let mut out = data.clone();
        out.map_dates(|i, row| {
            let t = grid.date(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = f(j, t, *v);
            }
        });
        Ok(out)
    }
}

fn check_grid(data: &TimeSeriesDataset, grid: &TimeGrid) -> Result<()> {
    if data.n_dates() != grid.n_dates() {
        return Err(Error::Contract(format!(
            "dataset has {} dates but the grid has {}",
            data.n_dates(),
            grid.n_dates()
        )));
    }
    Ok(())
}

/// Empirical increment covariance on one interval and its symmetric square root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceVolatility {
    /// Row-major `d×d` covariance of `X_{t_{i+1}} − X_{t_i}`.
    pub covariance: Vec<f64>,
    /// Row-major `d×d` principal square root.
    pub sqrt: Vec<f64>,
}

/// Principal square root of a symmetric PSD matrix. Eigenvalues below a
/// relative tolerance are treated as zero.
pub fn psd_sqrt(cov: &[f64], d: usize) -> Result<Vec<f64>> {
    if cov.len() != d * d {
        return Err(Error::Dimension(format!(
            "{} entries for a {d}×{d} matrix",
            cov.len()
        )));
    }
    let m = DMatrix::from_row_slice(d, d, cov);
    let eig = SymmetricEigen::new(m);
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let tol = 1e-12 * top.max(f64::MIN_POSITIVE);
    let mut singular = false;
    let roots: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| {
            if l <= tol {
                singular |= top > 0.0;
                0.0
            } else {
                l.sqrt()
            }
        })
        .collect();
    if singular {
        log::warn!("increment covariance is singular; null directions get zero volatility");
    }
    let q = &eig.eigenvectors;
    let mut out = vec![0.0; d * d];
    for r in 0..d {
        for c in 0..d {
            out[r * d + c] = (0..d).map(|k| q[(r, k)] * roots[k] * q[(c, k)]).sum();
        }
    }
    Ok(out)
}

/// Per-interval increment covariances `Var_{μ,i}` (population normalization)
/// and their roots `σ̄_i`.
pub fn reference_volatility(data: &TimeSeriesDataset) -> Result<Vec<ReferenceVolatility>> {
    let m = data.n_paths();
    if m < 2 {
        return Err(Error::Data(format!(
            "reference volatility needs at least 2 samples, got {m}"
        )));
    }
    let d = data.dim();
    let mut out = Vec::with_capacity(data.n_dates().saturating_sub(1));
    for i in 0..data.n_dates().saturating_sub(1) {
        let inc: Vec<f64> = (0..m)
            .flat_map(|p| (0..d).map(move |j| (p, j)))
            .map(|(p, j)| data.get(p, i + 1, j) - data.get(p, i, j))
            .collect();
        let mut mean = vec![0.0; d];
        for p in 0..m {
            for j in 0..d {
                mean[j] += inc[p * d + j] / m as f64;
            }
        }
        let mut cov = vec![0.0; d * d];
        for p in 0..m {
            for a in 0..d {
                for b in 0..d {
                    cov[a * d + b] += (inc[p * d + a] - mean[a]) * (inc[p * d + b] - mean[b]);
                }
            }
        }
        for c in &mut cov {
            *c /= m as f64;
        }
        let sqrt = psd_sqrt(&cov, d)?;
        out.push(ReferenceVolatility {
            covariance: cov,
            sqrt,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::RandomSource;
    use rand::Rng;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::uniform(n, 1.0).unwrap()
    }

    #[test]
    fn round_trip() {
        let mut rng = RandomSource::new(1).rng();
        let vals: Vec<f64> = (0..4 * 6 * 2).map(|_| rng.random_range(-3.0..5.0)).collect();
        let ds = TimeSeriesDataset::new(4, 6, 2, TimeSeriesDataset::default_names(2), vals).unwrap();
        let g = grid(5);
        let s = ScalerState::fit(&ds, &g).unwrap();
        let back = s.invert(&s.apply(&ds, &g).unwrap(), &g).unwrap();
        for (a, b) in back.values().iter().zip(ds.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_dimension_passes_through() {
        let ds = TimeSeriesDataset::new(
            2,
            3,
            2,
            TimeSeriesDataset::default_names(2),
            vec![7.0, 0.0, 7.0, 1.0, 7.0, 0.5, 7.0, 0.2, 7.0, -1.0, 7.0, 0.3],
        )
        .unwrap();
        let g = grid(2);
        let s = ScalerState::fit(&ds, &g).unwrap();
        assert_eq!((s.shift[0], s.drift[0], s.scale[0]), (0.0, 0.0, 1.0));
        let scaled = s.apply(&ds, &g).unwrap();
        assert_eq!(scaled.series(1, 0), ds.series(1, 0));
    }

    #[test]
    fn scaled_increments_have_unit_rate() {
        let mut rng = RandomSource::new(2).rng();
        let g = grid(20);
        let paths: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let mut x = 3.0;
                let mut p = vec![x];
                for _ in 0..20 {
                    x += 0.1 + 0.5 * rng.random_range(-1.0..1.0);
                    p.push(x);
                }
                p
            })
            .collect();
        let ds = TimeSeriesDataset::from_paths(vec!["a".into()], 21, paths).unwrap();
        let s = ScalerState::fit(&ds, &g).unwrap();
        let sc = s.apply(&ds, &g).unwrap();
        let mut sum = 0.0;
        let mut ss = 0.0;
        for p in 0..200 {
            for i in 0..20 {
                let inc = sc.get(p, i + 1, 0) - sc.get(p, i, 0);
                sum += inc;
                ss += inc * inc / g.dt(i);
            }
        }
        assert!(sum.abs() < 1e-9);
        assert!((ss / 4000.0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn reference_volatility_of_symmetric_steps() {
        let ds = TimeSeriesDataset::new(2, 2, 1, vec!["a".into()], vec![0.0, 1.0, 0.0, -1.0]).unwrap();
        let rv = reference_volatility(&ds).unwrap();
        assert!((rv[0].covariance[0] - 1.0).abs() < 1e-15);
        assert!((rv[0].sqrt[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identical_paths_have_zero_volatility() {
        let ds = TimeSeriesDataset::new(3, 2, 1, vec!["a".into()], vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        let rv = reference_volatility(&ds).unwrap();
        assert_eq!(rv[0].covariance, vec![0.0]);
        assert_eq!(rv[0].sqrt, vec![0.0]);
    }

    #[test]
    fn one_sample_is_a_data_error() {
        let ds = TimeSeriesDataset::new(1, 2, 1, vec!["a".into()], vec![0.0, 1.0]).unwrap();
        assert!(matches!(reference_volatility(&ds), Err(Error::Data(_))));
    }
}
