use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Observation dates `t_0 < t_1 < … < t_n` in model time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid {
    dates: Vec<f64>,
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;

    fn try_from(dates: Vec<f64>) -> Result<Self> {
        TimeGrid::new(dates)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(g: TimeGrid) -> Self {
        g.dates
    }
}

impl TimeGrid {
    pub fn new(dates: Vec<f64>) -> Result<Self> {
        if dates.len() < 2 {
            return Err(Error::Config(format!(
                "a time grid needs at least two dates, got {}",
                dates.len()
            )));
        }
        if dates.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("time grid contains non-finite dates".into()));
        }
        if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "time grid must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(TimeGrid { dates })
    }

    /// `n` equal intervals on `[0, horizon]`.
    pub fn uniform(n_intervals: usize, horizon: f64) -> Result<Self> {
        if n_intervals == 0 || horizon <= 0.0 || !horizon.is_finite() {
            return Err(Error::Config(format!(
                "uniform grid needs n >= 1 and horizon > 0 (got n={n_intervals}, T={horizon})"
            )));
        }
        let dt = horizon / n_intervals as f64;
        let mut dates: Vec<f64> = (0..=n_intervals).map(|i| i as f64 * dt).collect();
        dates[n_intervals] = horizon;
        TimeGrid::new(dates)
    }

    pub fn dates(&self) -> &[f64] {
        &self.dates
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_intervals(&self) -> usize {
        self.dates.len() - 1
    }

    pub fn date(&self, i: usize) -> f64 {
        self.dates[i]
    }

    pub fn dt(&self, i: usize) -> f64 {
        self.dates[i + 1] - self.dates[i]
    }

    pub fn min_dt(&self) -> f64 {
        (0..self.n_intervals())
            .map(|i| self.dt(i))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn horizon(&self) -> f64 {
        self.dates[self.dates.len() - 1] - self.dates[0]
    }

    /// Hex SHA-256 of the little-endian date bytes.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.dates {
            h.update(t.to_le_bytes());
        }
        h.finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid() {
        let g = TimeGrid::uniform(4, 1.0).unwrap();
        assert_eq!(g.dates(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.n_intervals(), 4);
        assert!((g.min_dt() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TimeGrid::new(vec![0.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::new(vec![0.0, f64::NAN]).is_err());
        assert!(TimeGrid::uniform(0, 1.0).is_err());
    }

    #[test]
    fn fingerprint_tracks_dates() {
        let a = TimeGrid::uniform(3, 1.0).unwrap();
        let b = TimeGrid::uniform(3, 1.0).unwrap();
        let c = TimeGrid::uniform(4, 1.0).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn serde_validates() {
        let g: TimeGrid = serde_json::from_str("[0.0, 0.5, 1.0]").unwrap();
        assert_eq!(g.n_intervals(), 2);
        assert!(serde_json::from_str::<TimeGrid>("[1.0, 0.5]").is_err());
    }
}
