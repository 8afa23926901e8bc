//! Heston model
//!
//! ```text
//! dX = r X dt + √v X dW^X
//! dv = κ(θ − v) dt + ξ √v dW^v,   d⟨W^X, W^v⟩ = ρ dt
//! ```
//!
//! simulated with full-truncation Euler: the variance state may dip below
//! zero, but every diffusion and drift evaluation uses `max(v, 0)`. The
//! recorded variance series is the truncated one.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::{GaussianNoise, RandomSource};
use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonParams {
    pub kappa: f64,
    pub theta: f64,
    pub xi_vol: f64,
    pub rho: f64,
    pub r: f64,
    pub v0: f64,
}

impl HestonParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.kappa, self.theta, self.xi_vol, self.rho, self.r, self.v0]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Domain(format!("non-finite Heston parameters {self:?}")));
        }
        if self.kappa <= 0.0 || self.theta <= 0.0 || self.v0 <= 0.0 {
            return Err(Error::Domain(format!(
                "Heston needs kappa, theta, v0 > 0 (got {self:?})"
            )));
        }
        if self.xi_vol < 0.0 {
            return Err(Error::Domain(format!("negative vol-of-vol {}", self.xi_vol)));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::Domain(format!("rho {} outside [-1, 1]", self.rho)));
        }
        Ok(())
    }
}

/// `(X, v)` observations at `n_steps + 1` dates.
#[derive(Debug, Clone, PartialEq)]
pub struct HestonPath {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

/// Standard normal pair with correlation `rho` (Cholesky of the 2×2 matrix).
pub fn correlated_pair<N: GaussianNoise + ?Sized>(rho: f64, noise: &mut N) -> (f64, f64) {
    let z1 = noise.standard_normal();
    let z2 = noise.standard_normal();
    (z1, rho * z1 + (1.0 - rho * rho).max(0.0).sqrt() * z2)
}

/// Full-truncation Euler path with `n_steps` steps of size `dt`.
pub fn simulate_heston<N: GaussianNoise + ?Sized>(
    params: &HestonParams,
    n_steps: usize,
    dt: f64,
    x0: f64,
    noise: &mut N,
) -> Result<HestonPath> {
    simulate_heston_substepped(params, n_steps, dt, 1, x0, noise)
}

/// As [`simulate_heston`], but each recorded step is integrated with
/// `substeps` finer Euler steps.
pub fn simulate_heston_substepped<N: GaussianNoise + ?Sized>(
    params: &HestonParams,
    n_steps: usize,
    dt: f64,
    substeps: usize,
    x0: f64,
    noise: &mut N,
) -> Result<HestonPath> {
    params.validate()?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!("Heston step needs dt > 0, got {dt}")));
    }
    if !(x0 > 0.0) {
        return Err(Error::Domain(format!("Heston needs x0 > 0, got {x0}")));
    }
    if substeps == 0 {
        return Err(Error::Config("substeps must be >= 1".into()));
    }
    let h = dt / substeps as f64;
    let sq = h.sqrt();
    let mut x = x0;
    let mut v = params.v0;
    let mut xs = Vec::with_capacity(n_steps + 1);
    let mut vs = Vec::with_capacity(n_steps + 1);
    xs.push(x);
    vs.push(v.max(0.0));
    for _ in 0..n_steps {
        for _ in 0..substeps {
            let vp = v.max(0.0);
            let vol = vp.sqrt();
            let (zx, zv) = correlated_pair(params.rho, noise);
            x += params.r * x * h + vol * x * sq * zx;
            v += params.kappa * (params.theta - vp) * h + params.xi_vol * vol * sq * zv;
        }
        xs.push(x);
        vs.push(v.max(0.0));
    }
    Ok(HestonPath { x: xs, v: vs })
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !self.lo.is_finite() || !self.hi.is_finite() || self.lo > self.hi {
            return Err(Error::Config(format!(
                "range for {name} is empty or invalid: [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Sampling boxes for heterogeneous Heston datasets: `κ ∈ [0.5, 4]`,
/// `θ ∈ [0.5, 1.5]`, `ξ ∈ [0.1, 0.9]`, `ρ ∈ [−0.9, 0.9]`, `r ∈ [0.01, 0.1]`.
/// `v0 = None` starts each path at its `θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HestonRanges {
    pub kappa: Range,
    pub theta: Range,
    pub xi_vol: Range,
    pub rho: Range,
    pub r: Range,
    #[serde(default)]
    pub v0: Option<Range>,
}

impl Default for HestonRanges {
    fn default() -> Self {
        HestonRanges {
            kappa: Range::new(0.5, 4.0),
            theta: Range::new(0.5, 1.5),
            xi_vol: Range::new(0.1, 0.9),
            rho: Range::new(-0.9, 0.9),
            r: Range::new(0.01, 0.1),
            v0: None,
        }
    }
}

impl HestonRanges {
    pub fn validate(&self) -> Result<()> {
        self.kappa.validate("kappa")?;
        self.theta.validate("theta")?;
        self.xi_vol.validate("xi_vol")?;
        self.rho.validate("rho")?;
        self.r.validate("r")?;
        if let Some(v0) = &self.v0 {
            v0.validate("v0")?;
            if v0.lo <= 0.0 {
                return Err(Error::Config("v0 range must be positive".into()));
            }
        }
        if self.kappa.lo <= 0.0 || self.theta.lo <= 0.0 || self.xi_vol.lo < 0.0 {
            return Err(Error::Config(
                "kappa and theta ranges must be positive, xi_vol non-negative".into(),
            ));
        }
        if self.rho.lo < -1.0 || self.rho.hi > 1.0 {
            return Err(Error::Config("rho range must lie in [-1, 1]".into()));
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> HestonParams {
        let kappa = self.kappa.sample(rng);
        let theta = self.theta.sample(rng);
        let xi_vol = self.xi_vol.sample(rng);
        let rho = self.rho.sample(rng);
        let r = self.r.sample(rng);
        let v0 = self.v0.map_or(theta, |v| v.sample(rng));
        HestonParams {
            kappa,
            theta,
            xi_vol,
            rho,
            r,
            v0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HestonSampling {
    pub n_paths: usize,
    /// Number of observation dates per path.
    pub length: usize,
    pub dt: f64,
    pub x0: f64,
    pub substeps: usize,
}

impl Default for HestonSampling {
    fn default() -> Self {
        HestonSampling {
            n_paths: 500,
            length: 50,
            dt: 1.0 / 252.0,
            x0: 1.0,
            substeps: 1,
        }
    }
}

/// Simulates `n_paths` Heston paths, each with its own parameters drawn
/// uniformly from `ranges`. Path `m` uses only `source.child(m)`, so the
/// result does not depend on how the work is scheduled.
pub fn sample_heston_dataset(
    ranges: &HestonRanges,
    sampling: &HestonSampling,
    source: RandomSource,
) -> Result<(TimeSeriesDataset, Vec<HestonParams>)> {
    ranges.validate()?;
    if sampling.n_paths == 0 {
        return Err(Error::Config("at least one Heston path is required".into()));
    }
    if sampling.length < 2 {
        return Err(Error::Config("Heston paths need at least two dates".into()));
    }
    let results: Vec<Result<(HestonParams, HestonPath)>> = (0..sampling.n_paths)
        .into_par_iter()
        .map(|m| {
            let mut rng = source.child(m as u64).rng();
            let params = ranges.sample(&mut rng);
            let path = simulate_heston_substepped(
                &params,
                sampling.length - 1,
                sampling.dt,
                sampling.substeps,
                sampling.x0,
                &mut rng,
            )?;
            Ok((params, path))
        })
        .collect();
    let mut params = Vec::with_capacity(sampling.n_paths);
    let mut flat = Vec::with_capacity(sampling.n_paths);
    for r in results {
        let (p, path) = r?;
        params.push(p);
        flat.push(path.x.iter().zip(&path.v).flat_map(|(&x, &v)| [x, v]).collect());
    }
    let ds = TimeSeriesDataset::from_paths(vec!["X".into(), "v".into()], sampling.length, flat)?;
    Ok((ds, params))
}
