//! Heston parameter recovery from observed `(X, v)` paths.
//!
//! The estimator maximizes the Gaussian quasi-likelihood of the Euler
//! transitions
//!
//! ```text
//! y_k = ΔX_k / (X_k √(v_k Δt)) = r a_k + ε^x_k,            a_k = √(Δt / v_k)
//! z_k = Δv_k / √(v_k Δt)       = κθ a_k − κ b_k + ξ ε^v_k,   b_k = √(v_k Δt)
//! ```
//!
//! with `(ε^x, ε^v)` standard normal with correlation `ρ`. Factoring the
//! joint density as `p(y) · p(z | y)` gives the maximizer in closed form:
//! `r̂` is least squares of `y` on `a`; regressing `z` on `(a, b, ε̂^x)`
//! yields `κ̂θ̂`, `κ̂` and `δ̂ = ρξ`; with `σ̂²_w` the residual variance of that
//! regression, `ξ̂² = σ̂²_w + δ̂²` and `ρ̂ = δ̂ / ξ̂`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::stochastic::HestonParams;

/// Floor applied to non-positive variance observations.
pub const VARIANCE_FLOOR: f64 = 1e-8;

pub const PARAM_NAMES: [&str; 6] = ["kappa", "theta", "xi_vol", "rho", "r", "v0"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QmleFit {
    pub params: HestonParams,
    /// Parameters that were clipped into their valid range.
    pub clipped: Vec<String>,
    /// Number of variance observations raised to the floor.
    pub floored: usize,
    pub log_likelihood: f64,
}

struct Transitions {
    y: Vec<f64>,
    z: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

fn transitions(x: &[f64], v: &[f64], dt: f64) -> Result<(Transitions, usize)> {
    if x.len() != v.len() {
        return Err(Error::Dimension(format!(
            "X has {} observations, v has {}",
            x.len(),
            v.len()
        )));
    }
    if x.len() < 10 {
        return Err(Error::Data(format!(
            "Heston calibration needs at least 10 observations, got {}",
            x.len()
        )));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    if x.iter().chain(v).any(|u| !u.is_finite()) {
        return Err(Error::Data("non-finite observation".into()));
    }
    if x.iter().any(|&u| u <= 0.0) {
        return Err(Error::Estimation {
            param: "r",
            reason: "price path is not strictly positive".into(),
        });
    }
    let floored = v.iter().filter(|&&u| u <= 0.0).count();
    if floored > 0 {
        log::warn!("{floored} variance observations at or below zero floored to {VARIANCE_FLOOR}");
    }
    let n = x.len() - 1;
    let mut t = Transitions {
        y: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
        a: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
    };
    for k in 0..n {
        let vk = v[k].max(VARIANCE_FLOOR);
        let vn = v[k + 1].max(VARIANCE_FLOOR);
        let s = (vk * dt).sqrt();
        t.y.push((x[k + 1] - x[k]) / (x[k] * s));
        t.z.push((vn - vk) / s);
        t.a.push((dt / vk).sqrt());
        t.b.push(s);
    }
    Ok((t, floored))
}

/// Solves the symmetric positive definite system `m·β = rhs` by Cholesky.
fn spd_solve(m: &[f64], rhs: &[f64], p: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; p * p];
    let scale = (0..p).map(|i| m[i * p + i]).fold(0.0f64, f64::max);
    for i in 0..p {
        for j in 0..=i {
            let mut s = m[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if s <= 1e-12 * scale {
                    return None;
                }
                l[i * p + i] = s.sqrt();
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    let mut w = vec![0.0; p];
    for i in 0..p {
        let s = rhs[i] - (0..i).map(|k| l[i * p + k] * w[k]).sum::<f64>();
        w[i] = s / l[i * p + i];
    }
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let s = w[i] - (i + 1..p).map(|k| l[k * p + i] * beta[k]).sum::<f64>();
        beta[i] = s / l[i * p + i];
    }
    Some(beta)
}

/// Least squares of `target` on the columns `cols`; returns coefficients.
fn least_squares(cols: &[&[f64]], target: &[f64]) -> Option<Vec<f64>> {
    let p = cols.len();
    let mut m = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    for i in 0..p {
        for j in 0..=i {
            let s: f64 = cols[i].iter().zip(cols[j]).map(|(u, w)| u * w).sum();
            m[i * p + j] = s;
            m[j * p + i] = s;
        }
        rhs[i] = cols[i].iter().zip(target).map(|(u, w)| u * w).sum();
    }
    spd_solve(&m, &rhs, p)
}

/// Unconstrained quasi-likelihood maximizer as `(r, κθ, κ, ξ, ρ)`.
fn raw_estimates(t: &Transitions) -> Result<[f64; 5]> {
    let n = t.y.len() as f64;
    let r = least_squares(&[&t.a], &t.y).ok_or(Error::Estimation {
        param: "r",
        reason: "variance regressor is identically zero".into(),
    })?[0];
    let ex: Vec<f64> = t.y.iter().zip(&t.a).map(|(y, a)| y - r * a).collect();
    let neg_b: Vec<f64> = t.b.iter().map(|b| -b).collect();
    let coef = least_squares(&[&t.a, &neg_b, &ex], &t.z).ok_or(Error::Estimation {
        param: "kappa",
        reason: "variance regression is degenerate (constant or collinear variance path)".into(),
    })?;
    let (alpha, kappa, delta) = (coef[0], coef[1], coef[2]);
    let sw2 = (0..t.z.len())
        .map(|k| {
            let e = t.z[k] - alpha * t.a[k] - kappa * neg_b[k] - delta * ex[k];
            e * e
        })
        .sum::<f64>()
        / n;
    let xi = (sw2 + delta * delta).sqrt();
    if !xi.is_finite() {
        return Err(Error::Estimation {
            param: "xi_vol",
            reason: "residual variance is not finite".into(),
        });
    }
    // a noiseless variance path leaves ρ unidentified; report 0
    let rho = if xi > 0.0 { delta / xi } else { 0.0 };
    Ok([r, alpha, kappa, xi, rho])
}

/// Gaussian quasi-log-likelihood of the Euler transitions (up to the
/// parameter-free Jacobian terms).
pub fn quasi_log_likelihood(x: &[f64], v: &[f64], dt: f64, r: f64, kappa_theta: f64, kappa: f64, xi: f64, rho: f64) -> Result<f64> {
    let (t, _) = transitions(x, v, dt)?;
    Ok(qll(&t, [r, kappa_theta, kappa, xi, rho]))
}

fn qll(t: &Transitions, p: [f64; 5]) -> f64 {
    let [r, alpha, kappa, xi, rho] = p;
    let one_m = 1.0 - rho * rho;
    if !(xi > 0.0) || !(one_m > 0.0) {
        return f64::NEG_INFINITY;
    }
    let n = t.y.len() as f64;
    let mut q = 0.0;
    for k in 0..t.y.len() {
        let ex = t.y[k] - r * t.a[k];
        let ev = (t.z[k] - alpha * t.a[k] + kappa * t.b[k]) / xi;
        q += ex * ex - 2.0 * rho * ex * ev + ev * ev;
    }
    -n * xi.ln() - 0.5 * n * one_m.ln() - q / (2.0 * one_m)
}

/// Quasi-MLE of the Heston parameters from one `(X, v)` path sampled every `dt`.
pub fn heston_qmle(x: &[f64], v: &[f64], dt: f64) -> Result<QmleFit> {
    let (t, floored) = transitions(x, v, dt)?;
    let raw = raw_estimates(&t)?;
    let log_likelihood = qll(&t, raw);
    let [r, alpha, kappa_raw, xi, rho_raw] = raw;
    let mut clipped = Vec::new();
    let kappa = if kappa_raw < 0.0 {
        clipped.push("kappa".to_string());
        0.0
    } else {
        kappa_raw
    };
    let theta = if kappa > 1e-12 {
        let th = alpha / kappa;
        if th < 0.0 {
            clipped.push("theta".to_string());
            0.0
        } else {
            th
        }
    } else {
        clipped.push("theta".to_string());
        v.iter().map(|u| u.max(0.0)).sum::<f64>() / v.len() as f64
    };
    let rho = rho_raw.clamp(-1.0, 1.0);
    if rho != rho_raw {
        clipped.push("rho".to_string());
    }
    Ok(QmleFit {
        params: HestonParams {
            kappa,
            theta,
            xi_vol: xi,
            rho,
            r,
            v0: v[0].max(VARIANCE_FLOOR),
        },
        clipped,
        floored,
        log_likelihood,
    })
}

fn param_value(p: &HestonParams, name: &str) -> f64 {
    match name {
        "kappa" => p.kappa,
        "theta" => p.theta,
        "xi_vol" => p.xi_vol,
        "rho" => p.rho,
        "r" => p.r,
        _ => p.v0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

fn summarize(values: &[f64]) -> ParamSummary {
    let n = values.len();
    if n == 0 {
        return ParamSummary {
            mean: f64::NAN,
            std: f64::NAN,
            median: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|u| (u - mean) * (u - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    };
    ParamSummary { mean, std, median }
}

/// Per-path estimates for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceCalibration {
    pub name: String,
    /// `(path index, fit)` for every path that could be estimated.
    pub fits: Vec<(usize, QmleFit)>,
    /// `(path index, reason)` for skipped paths.
    pub skipped: Vec<(usize, String)>,
}

impl SourceCalibration {
    pub fn n_paths(&self) -> usize {
        self.fits.len() + self.skipped.len()
    }

    pub fn values(&self, param: &str) -> Vec<f64> {
        self.fits.iter().map(|(_, f)| param_value(&f.params, param)).collect()
    }

    pub fn summary(&self, param: &str) -> ParamSummary {
        summarize(&self.values(param))
    }

    pub fn clip_count(&self, param: &str) -> usize {
        self.fits
            .iter()
            .filter(|(_, f)| f.clipped.iter().any(|c| c == param))
            .count()
    }
}

/// Estimates every path of `data`; dimension `x_col` is the price and
/// `v_col` the variance. Paths that cannot be estimated are skipped.
pub fn calibrate_dataset(
    name: &str,
    data: &TimeSeriesDataset,
    dt: f64,
    x_col: usize,
    v_col: usize,
) -> Result<SourceCalibration> {
    if x_col >= data.dim() || v_col >= data.dim() {
        return Err(Error::Schema(format!(
            "columns {x_col}/{v_col} out of range for {} dimensions",
            data.dim()
        )));
    }
    let results: Vec<(usize, Result<QmleFit>)> = (0..data.n_paths())
        .into_par_iter()
        .map(|m| (m, heston_qmle(&data.series(m, x_col), &data.series(m, v_col), dt)))
        .collect();
    let mut out = SourceCalibration {
        name: name.to_string(),
        fits: Vec::new(),
        skipped: Vec::new(),
    };
    for (m, r) in results {
        match r {
            Ok(f) => out.fits.push((m, f)),
            Err(e) => out.skipped.push((m, e.to_string())),
        }
    }
    if !out.skipped.is_empty() {
        log::warn!("{}: skipped {} of {} paths", name, out.skipped.len(), data.n_paths());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub param: String,
    /// `bins + 1` edges shared by every source.
    pub edges: Vec<f64>,
    /// Counts per source, in source order.
    pub counts: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSummary {
    pub name: String,
    pub n_paths: usize,
    pub n_estimated: usize,
    pub n_skipped: usize,
    pub params: Vec<(String, ParamSummary)>,
    pub clip_counts: Vec<(String, usize)>,
}

/// Cross-path dispersion of ξ̂ and ρ̂ in a candidate source relative to a
/// reference source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionComparison {
    pub reference: String,
    pub candidate: String,
    pub xi_std_ratio: f64,
    pub rho_std_ratio: f64,
    /// `true` when the candidate's ξ̂ dispersion is below half the reference's.
    pub underdispersed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub dt: f64,
    pub sources: Vec<SourceSummary>,
    pub histograms: Vec<Histogram>,
    pub comparisons: Vec<DispersionComparison>,
}

pub fn compare_dispersion(reference: &SourceCalibration, candidate: &SourceCalibration) -> DispersionComparison {
    let xi = candidate.summary("xi_vol").std / reference.summary("xi_vol").std;
    let rho = candidate.summary("rho").std / reference.summary("rho").std;
    DispersionComparison {
        reference: reference.name.clone(),
        candidate: candidate.name.clone(),
        xi_std_ratio: xi,
        rho_std_ratio: rho,
        underdispersed: xi < 0.5,
    }
}

/// Summaries and shared-bin histograms for several sources. When a source
/// named `sbbts` and one named `sb_mode` are both present, their dispersion
/// comparison is included.
pub fn build_report(dt: f64, sources: &[SourceCalibration], bins: usize) -> Result<CalibrationReport> {
    if bins == 0 {
        return Err(Error::Config("histograms need at least one bin".into()));
    }
    let summaries = sources
        .iter()
        .map(|s| SourceSummary {
            name: s.name.clone(),
            n_paths: s.n_paths(),
            n_estimated: s.fits.len(),
            n_skipped: s.skipped.len(),
            params: PARAM_NAMES
                .iter()
                .map(|p| (p.to_string(), s.summary(p)))
                .collect(),
            clip_counts: PARAM_NAMES
                .iter()
                .map(|p| (p.to_string(), s.clip_count(p)))
                .collect(),
        })
        .collect();
    let mut histograms = Vec::new();
    for p in PARAM_NAMES {
        let all: Vec<Vec<f64>> = sources.iter().map(|s| s.values(p)).collect();
        let (lo, hi) = all
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &u| (a.min(u), b.max(u)));
        let (lo, hi) = if lo.is_finite() {
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, lo + 0.5)
            }
        } else {
            (0.0, 1.0)
        };
        let w = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|k| lo + k as f64 * w).collect();
        let counts = all
            .iter()
            .map(|vals| {
                let mut c = vec![0; bins];
                for &u in vals {
                    let k = (((u - lo) / w) as usize).min(bins - 1);
                    c[k] += 1;
                }
                c
            })
            .collect();
        histograms.push(Histogram {
            param: p.to_string(),
            edges,
            counts,
        });
    }
    let mut comparisons = Vec::new();
    let find = |n: &str| sources.iter().find(|s| s.name == n);
    if let (Some(a), Some(b)) = (find("sbbts"), find("sb_mode")) {
        comparisons.push(compare_dispersion(a, b));
    }
    Ok(CalibrationReport {
        dt,
        sources: summaries,
        histograms,
        comparisons,
    })
}

/// Per-path estimates as CSV rows:
/// `source,path_id,kappa,theta,xi_vol,rho,r,v0,clipped`.
pub fn estimates_csv(sources: &[SourceCalibration]) -> String {
    let mut s = String::from("source,path_id,kappa,theta,xi_vol,rho,r,v0,clipped\n");
    for src in sources {
        for (m, f) in &src.fits {
            let p = &f.params;
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                src.name,
                m,
                p.kappa,
                p.theta,
                p.xi_vol,
                p.rho,
                p.r,
                p.v0,
                f.clipped.join(";")
            ));
        }
    }
    s
}

/// Histogram bins as CSV rows: `param,bin,lo,hi,<source counts...>`.
pub fn histograms_csv(report: &CalibrationReport) -> String {
    let mut s = String::from("param,bin,lo,hi");
    for src in &report.sources {
        s.push(',');
        s.push_str(&src.name);
    }
    s.push('\n');
    for h in &report.histograms {
        for k in 0..h.edges.len() - 1 {
            s.push_str(&format!("{},{},{},{}", h.param, k, h.edges[k], h.edges[k + 1]));
            for c in &h.counts {
                s.push_str(&format!(",{}", c[k]));
            }
            s.push('\n');
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::{simulate_heston, RandomSource};

    fn truth() -> HestonParams {
        HestonParams {
            kappa: 2.0,
            theta: 1.0,
            xi_vol: 0.3,
            rho: -0.5,
            r: 0.05,
            v0: 1.0,
        }
    }

    /// Damped Newton ascent with finite-difference derivatives.
    fn numeric_max(t: &Transitions, mut p: [f64; 5]) -> [f64; 5] {
        let f = |q: &[f64; 5]| qll(t, *q);
        for _ in 0..100 {
            let h = 1e-5;
            let mut g = nalgebra::DVector::zeros(5);
            let mut hess = nalgebra::DMatrix::zeros(5, 5);
            let f0 = f(&p);
            for i in 0..5 {
                let mut a = p;
                a[i] += h;
                let mut b = p;
                b[i] -= h;
                let (fa, fb) = (f(&a), f(&b));
                g[i] = (fa - fb) / (2.0 * h);
                hess[(i, i)] = (fa - 2.0 * f0 + fb) / (h * h);
                for j in 0..i {
                    let mut c = [p; 4];
                    c[0][i] += h;
                    c[0][j] += h;
                    c[1][i] += h;
                    c[1][j] -= h;
                    c[2][i] -= h;
                    c[2][j] += h;
                    c[3][i] -= h;
                    c[3][j] -= h;
                    let v = (f(&c[0]) - f(&c[1]) - f(&c[2]) + f(&c[3])) / (4.0 * h * h);
                    hess[(i, j)] = v;
                    hess[(j, i)] = v;
                }
            }
            let step = match (-hess.clone()).cholesky() {
                Some(ch) => ch.solve(&g),
                None => g.clone() * 1e-4,
            };
            let mut lam = 1.0;
            loop {
                let mut q = p;
                for i in 0..5 {
                    q[i] += lam * step[i];
                }
                if f(&q) >= f0 || lam < 1e-8 {
                    p = q;
                    break;
                }
                lam *= 0.5;
            }
            if step.norm() < 1e-10 {
                break;
            }
        }
        p
    }

    #[test]
    fn closed_form_matches_numeric_maximizer() {
        let dt = 1.0 / 252.0;
        for seed in [31, 32, 33] {
            let mut rng = RandomSource::new(seed).rng();
            let path = simulate_heston(&truth(), 99, dt, 1.0, &mut rng).unwrap();
            let (t, _) = transitions(&path.x, &path.v, dt).unwrap();
            let closed = raw_estimates(&t).unwrap();
            let tr = truth();
            let start = [tr.r, tr.kappa * tr.theta, tr.kappa, tr.xi_vol, tr.rho];
            let num = numeric_max(&t, start);
            for i in 0..5 {
                let tol = 1e-3 * closed[i].abs().max(1.0);
                assert!(
                    (closed[i] - num[i]).abs() < tol,
                    "seed {seed} coordinate {i}: closed {} numeric {}",
                    closed[i],
                    num[i]
                );
            }
        }
    }

    #[test]
    fn noiseless_variance_recovers_drift_parameters() {
        let (dt, n) = (0.01, 80);
        let p = truth();
        let mut v = vec![0.4];
        for k in 0..n {
            let vk = v[k];
            v.push(vk + p.kappa * (p.theta - vk) * dt);
        }
        // price noise orthogonal to the regressor √(dt/v)
        let a: Vec<f64> = v[..n].iter().map(|u| (dt / u).sqrt()).collect();
        let mut e: Vec<f64> = (0..n).map(|k| ((k * 7919 % 13) as f64 - 6.0) / 6.0).collect();
        let proj = e.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>() / a.iter().map(|y| y * y).sum::<f64>();
        for (x, y) in e.iter_mut().zip(&a) {
            *x -= proj * y;
        }
        let mut x = vec![1.0];
        for k in 0..n {
            let xk = x[k];
            x.push(xk + p.r * xk * dt + xk * (v[k] * dt).sqrt() * e[k]);
        }
        let fit = heston_qmle(&x, &v, dt).unwrap();
        assert!((fit.params.r - p.r).abs() < 1e-8, "r {}", fit.params.r);
        assert!((fit.params.kappa - p.kappa).abs() < 1e-8, "kappa {}", fit.params.kappa);
        assert!((fit.params.theta - p.theta).abs() < 1e-8, "theta {}", fit.params.theta);
        assert!(fit.params.xi_vol < 1e-8);
    }

    #[test]
    fn long_path_estimates_within_three_standard_errors() {
        let dt = 1.0 / 252.0;
        let p = truth();
        let mut rng = RandomSource::new(23).rng();
        let path = simulate_heston(&p, 252 * 4 - 1, dt, 1.0, &mut rng).unwrap();
        let fit = heston_qmle(&path.x, &path.v, dt).unwrap().params;
        let (t, _) = transitions(&path.x, &path.v, dt).unwrap();
        let n = t.y.len() as f64;
        // asymptotic standard errors from the regression information matrices
        let se_r = 1.0 / t.a.iter().map(|a| a * a).sum::<f64>().sqrt();
        let info = nalgebra::Matrix2::new(
            t.a.iter().map(|a| a * a).sum::<f64>(),
            -t.a.iter().zip(&t.b).map(|(a, b)| a * b).sum::<f64>(),
            -t.a.iter().zip(&t.b).map(|(a, b)| a * b).sum::<f64>(),
            t.b.iter().map(|b| b * b).sum::<f64>(),
        );
        let cov = info.try_inverse().unwrap() * (p.xi_vol * p.xi_vol * (1.0 - p.rho * p.rho));
        let se_kappa = cov[(1, 1)].sqrt();
        let g = nalgebra::Vector2::new(1.0 / p.kappa, -p.theta / p.kappa);
        let se_theta = (g.transpose() * cov * g)[(0, 0)].sqrt();
        let se_xi = p.xi_vol / (2.0 * n).sqrt();
        let se_rho = (1.0 - p.rho * p.rho) / n.sqrt();
        for (name, est, tru, se) in [
            ("r", fit.r, p.r, se_r),
            ("kappa", fit.kappa, p.kappa, se_kappa),
            ("theta", fit.theta, p.theta, se_theta),
            ("xi", fit.xi_vol, p.xi_vol, se_xi),
            ("rho", fit.rho, p.rho, se_rho),
        ] {
            assert!((est - tru).abs() < 3.0 * se, "{name}: {est} vs {tru} (se {se})");
        }
    }

    #[test]
    fn closed_form_is_a_stationary_point() {
        let mut rng = RandomSource::new(21).rng();
        let path = simulate_heston(&truth(), 99, 1.0 / 252.0, 1.0, &mut rng).unwrap();
        let (t, _) = transitions(&path.x, &path.v, 1.0 / 252.0).unwrap();
        let best = raw_estimates(&t).unwrap();
        let l0 = qll(&t, best);
        for i in 0..5 {
            for h in [1e-4, -1e-4] {
                let mut p = best;
                p[i] += h * p[i].abs().max(0.1);
                assert!(qll(&t, p) < l0, "coordinate {i} step {h}");
            }
        }
    }

    #[test]
    fn constant_variance_is_an_estimation_error() {
        let x: Vec<f64> = (0..20).map(|k| 1.0 + 0.01 * (k as f64).sin()).collect();
        let v = vec![0.5; 20];
        assert!(matches!(
            heston_qmle(&x, &v, 0.01),
            Err(Error::Estimation { param: "kappa", .. })
        ));
    }

    #[test]
    fn short_path_rejected() {
        assert!(matches!(heston_qmle(&[1.0; 5], &[1.0; 5], 0.1), Err(Error::Data(_))));
    }

    #[test]
    fn rho_invariant_to_price_scaling() {
        let mut rng = RandomSource::new(22).rng();
        let path = simulate_heston(&truth(), 200, 1.0 / 252.0, 1.0, &mut rng).unwrap();
        let a = heston_qmle(&path.x, &path.v, 1.0 / 252.0).unwrap();
        let scaled: Vec<f64> = path.x.iter().map(|u| 37.5 * u).collect();
        let b = heston_qmle(&scaled, &path.v, 1.0 / 252.0).unwrap();
        assert!((a.params.rho - b.params.rho).abs() < 1e-12);
    }

    #[test]
    fn shared_bins_and_empty_sources() {
        let empty = TimeSeriesDataset::new(0, 12, 2, vec!["X".into(), "v".into()], vec![]).unwrap();
        let src = calibrate_dataset("data", &empty, 0.01, 0, 1).unwrap();
        assert_eq!(src.n_paths(), 0);
        let rep = build_report(0.01, &[src.clone(), src], 10).unwrap();
        assert_eq!(rep.histograms.len(), 6);
        assert!(rep.histograms.iter().all(|h| h.counts.iter().all(|c| c.iter().sum::<usize>() == 0)));
    }
}
