pub mod calib;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod factors;
pub mod io;
pub mod numerics;
pub mod sbbts;
pub mod stochastic;

pub use dataset::TimeSeriesDataset;
pub use error::{Error, Result};
