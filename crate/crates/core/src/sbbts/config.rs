use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::AdamConfig;
use crate::stochastic::TimeGrid;

/// What each encoder token carries about date `j` of the history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TokenFeatures {
    /// `Y_j` only.
    Levels,
    /// `Y_j`, `ΔY_j/√Δt` and `ΔY_j²/Δt` (zero increments at `j = 0`).
    #[default]
    Increments,
}

impl TokenFeatures {
    pub fn width(self, dim: usize) -> usize {
        match self {
            TokenFeatures::Levels => dim,
            TokenFeatures::Increments => 3 * dim,
        }
    }
}

/// Training and generation hyperparameters. Defaults: `K = 5`, 1000 epochs,
/// batch 128, `lr = 1e-3`, `d_model = 128`, 16 heads, 50 Euler steps,
/// `T̃ = 0.99 T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SBBTSConfig {
    /// Transport regularization. `None` means `10 / min Δt`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Outer iterations `K`; the transport map is frozen within each.
    pub outer_iterations: usize,
    /// Epochs per outer iteration.
    pub n_epoch: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub d_model: usize,
    pub n_head: usize,
    /// Hidden width of the encoder feed-forward block, as a multiple of `d_model`.
    pub ffn_mult: usize,
    /// Euler–Maruyama steps per interval at generation.
    pub n_pi: usize,
    /// Score evaluation offset: `t̃_{i+1} = t_{i+1} − xi_frac·Δt_i`.
    pub xi_frac: f64,
    /// `β → ∞`: the transport map is the identity.
    pub sb_mode: bool,
    /// Sample training times on `[t_i, t̃_{i+1}]` instead of `[t_i, t_{i+1})`.
    pub clamp_training_times: bool,
    /// Standardize data before training (see [`super::ScalerState`]).
    pub scale_data: bool,
    /// Use the per-interval reference volatility as the noise scale.
    pub reference_noise: bool,
    pub token_features: TokenFeatures,
    pub positional_encoding: bool,
    /// Model-time horizon `T`; dates are `t_i = i·T/n`.
    pub horizon: f64,
    /// Names of strictly positive dimensions modeled in logarithms.
    pub log_transform: Vec<String>,
}

impl Default for SBBTSConfig {
    fn default() -> Self {
        SBBTSConfig {
            beta: None,
            outer_iterations: 5,
            n_epoch: 1000,
            batch_size: 128,
            lr: 1e-3,
            d_model: 128,
            n_head: 16,
            ffn_mult: 4,
            n_pi: 50,
            xi_frac: 0.01,
            sb_mode: false,
            clamp_training_times: true,
            scale_data: true,
            reference_noise: false,
            token_features: TokenFeatures::Increments,
            positional_encoding: true,
            horizon: 1.0,
            log_transform: Vec::new(),
        }
    }
}

impl SBBTSConfig {
    /// Effective `β` on `grid`.
    pub fn beta_for(&self, grid: &TimeGrid) -> f64 {
        self.beta.unwrap_or(10.0 / grid.min_dt())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    /// Model-time grid for series with `n_dates` observations.
    pub fn grid(&self, n_dates: usize) -> Result<TimeGrid> {
        if n_dates < 2 {
            return Err(Error::Data(format!(
                "series need at least two dates, got {n_dates}"
            )));
        }
        TimeGrid::uniform(n_dates - 1, self.horizon)
    }

    /// Checks the hyperparameters, and `β·Δt_i > 1` on `grid` unless in SB mode.
    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.outer_iterations == 0 {
            return fail("outer_iterations (K) must be >= 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if self.n_pi == 0 {
            return fail("n_pi must be >= 1".into());
        }
        if !(self.xi_frac > 0.0 && self.xi_frac < 1.0) {
            return fail(format!("xi_frac must lie in (0, 1), got {}", self.xi_frac));
        }
        if self.d_model < 2 || self.n_head == 0 || self.d_model % self.n_head != 0 {
            return fail(format!(
                "d_model {} must be >= 2 and divisible by n_head {}",
                self.d_model, self.n_head
            ));
        }
        if self.ffn_mult == 0 {
            return fail("ffn_mult must be >= 1".into());
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return fail(format!("horizon must be positive, got {}", self.horizon));
        }
        self.adam().validate()?;
        if !self.sb_mode {
            let beta = self.beta_for(grid);
            if !beta.is_finite() || beta <= 0.0 {
                return fail(format!("beta must be positive, got {beta}"));
            }
            let worst = beta * grid.min_dt();
            if worst <= 1.0 {
                return fail(format!(
                    "beta·Δt must exceed 1 on every interval (beta = {beta}, min Δt = {}, product {worst})",
                    grid.min_dt()
                ));
            }
        }
        Ok(())
    }
}
