use super::rng::GaussianNoise;
use crate::error::{Error, Result};

/// Draws `y_t` from the Brownian bridge pinned at `y_left` (time `t_left`)
/// and `y_right` (time `t_right`), for `t ∈ [t_left, t_right)`.
pub fn sample_brownian_bridge<N: GaussianNoise + ?Sized>(
    y_left: &[f64],
    y_right: &[f64],
    t_left: f64,
    t_right: f64,
    t: f64,
    noise: &mut N,
) -> Result<Vec<f64>> {
    if y_left.len() != y_right.len() {
        return Err(Error::Dimension(format!(
            "bridge endpoints have {} and {} components",
            y_left.len(),
            y_right.len()
        )));
    }
    if !(t_left..t_right).contains(&t) {
        return Err(Error::Domain(format!(
            "bridge time {t} outside [{t_left}, {t_right})"
        )));
    }
    let mut out = vec![0.0; y_left.len()];
    bridge_into(y_left, y_right, t_left, t_right, t, noise, &mut out);
    Ok(out)
}

/// Unchecked bridge draw used on hot paths; `t` must lie in `[t_left, t_right)`.
fn bridge_into<N: GaussianNoise + ?Sized>(
    y_left: &[f64],
    y_right: &[f64],
    t_left: f64,
    t_right: f64,
    t: f64,
    noise: &mut N,
    out: &mut [f64],
) {
    let dt = t_right - t_left;
    let wl = (t_right - t) / dt;
    let wr = (t - t_left) / dt;
    let sd = ((t - t_left) * (t_right - t) / dt).max(0.0).sqrt();
    for j in 0..out.len() {
        let z = noise.standard_normal();
        out[j] = wl * y_left[j] + wr * y_right[j] + sd * z;
    }
}

/// One Euler–Maruyama step of `dY = drift(t, Y) dt + dW`.
pub fn euler_maruyama_bridge_step<F, N>(
    y: &[f64],
    t: f64,
    dt: f64,
    mut drift: F,
    noise: &mut N,
) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Vec<f64>,
    N: GaussianNoise + ?Sized,
{
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("Euler step needs dt > 0, got {dt}")));
    }
    let b = drift(t, y);
    if b.len() != y.len() {
        return Err(Error::Dimension(format!(
            "drift returned {} components for a {}-dimensional state",
            b.len(),
            y.len()
        )));
    }
    let sq = dt.sqrt();
    Ok(y.iter()
        .zip(&b)
        .map(|(yi, bi)| yi + bi * dt + sq * noise.standard_normal())
        .collect())
}

/// Integrates `dY = drift(t, Y) dt + dW` from `t0` to `t1` with `n_steps`
/// equal Euler steps and returns `Y_{t1}`.
pub fn integrate_sde<F, N>(
    y0: &[f64],
    t0: f64,
    t1: f64,
    n_steps: usize,
    mut drift: F,
    noise: &mut N,
) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Vec<f64>,
    N: GaussianNoise + ?Sized,
{
    if n_steps == 0 {
        return Err(Error::Config("integration needs at least one step".into()));
    }
    let h = (t1 - t0) / n_steps as f64;
    let mut y = y0.to_vec();
    for s in 0..n_steps {
        let t = t0 + s as f64 * h;
        y = euler_maruyama_bridge_step(&y, t, h, &mut drift, noise)?;
    }
    Ok(y)
}
