//! Random streams and stochastic-process kernels: Brownian bridge draws,
//! Euler–Maruyama integration and the Heston simulator.

mod diffusion;
mod grid;
mod heston;
mod rng;

pub use diffusion::{euler_maruyama_bridge_step, integrate_sde, sample_brownian_bridge};
pub use grid::TimeGrid;
pub use heston::{
    correlated_pair, sample_heston_dataset, simulate_heston, simulate_heston_substepped,
    HestonParams, HestonPath, HestonRanges, HestonSampling, Range,
};
pub use rng::{GaussianNoise, RandomSource, ZeroNoise};
