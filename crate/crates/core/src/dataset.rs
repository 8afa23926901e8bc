//! `M` sample paths observed at `n + 1` dates in `d` dimensions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesDataset {
    n_paths: usize,
    n_dates: usize,
    dim: usize,
    dim_names: Vec<String>,
    /// Path-major: `values[(m·n_dates + i)·dim + j]`.
    values: Vec<f64>,
}

impl TimeSeriesDataset {
    pub fn new(
        n_paths: usize,
        n_dates: usize,
        dim: usize,
        dim_names: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 || n_dates == 0 {
            return Err(Error::Data(format!(
                "dataset needs dim >= 1 and at least one date (dim={dim}, dates={n_dates})"
            )));
        }
        if dim_names.len() != dim {
            return Err(Error::Data(format!(
                "{} dimension names for {dim} dimensions",
                dim_names.len()
            )));
        }
        if values.len() != n_paths * n_dates * dim {
            return Err(Error::Dimension(format!(
                "{n_paths}×{n_dates}×{dim} dataset given {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        Ok(TimeSeriesDataset {
            n_paths,
            n_dates,
            dim,
            dim_names,
            values,
        })
    }

    /// Builds a dataset from per-path flat arrays of `n_dates·dim` values.
    pub fn from_paths(dim_names: Vec<String>, n_dates: usize, paths: Vec<Vec<f64>>) -> Result<Self> {
        let dim = dim_names.len();
        let n_paths = paths.len();
        let mut values = Vec::with_capacity(n_paths * n_dates * dim);
        for (m, p) in paths.into_iter().enumerate() {
            if p.len() != n_dates * dim {
                return Err(Error::Dimension(format!(
                    "path {m} has {} values, expected {}",
                    p.len(),
                    n_dates * dim
                )));
            }
            values.extend(p);
        }
        TimeSeriesDataset::new(n_paths, n_dates, dim, dim_names, values)
    }

    pub fn default_names(dim: usize) -> Vec<String> {
        (0..dim).map(|j| format!("x{j}")).collect()
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_dates(&self) -> usize {
        self.n_dates
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dim_names(&self) -> &[String] {
        &self.dim_names
    }

    pub fn is_empty(&self) -> bool {
        self.n_paths == 0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn path(&self, m: usize) -> &[f64] {
        let w = self.n_dates * self.dim;
        &self.values[m * w..(m + 1) * w]
    }

    pub fn value(&self, m: usize, i: usize) -> &[f64] {
        let off = (m * self.n_dates + i) * self.dim;
        &self.values[off..off + self.dim]
    }

    pub fn get(&self, m: usize, i: usize, j: usize) -> f64 {
        self.values[(m * self.n_dates + i) * self.dim + j]
    }

    /// The series of dimension `j` along path `m`.
    pub fn series(&self, m: usize, j: usize) -> Vec<f64> {
        (0..self.n_dates).map(|i| self.get(m, i, j)).collect()
    }

    /// Keeps the paths with the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.n_dates * self.dim);
        for &m in indices {
            values.extend_from_slice(self.path(m));
        }
        TimeSeriesDataset {
            n_paths: indices.len(),
            n_dates: self.n_dates,
            dim: self.dim,
            dim_names: self.dim_names.clone(),
            values,
        }
    }

    /// Applies `f(date_index, values_at_date)` in place across all paths.
    pub fn map_dates<F: FnMut(usize, &mut [f64])>(&mut self, mut f: F) {
        for (k, chunk) in self.values.chunks_mut(self.dim).enumerate() {
            f(k % self.n_dates, chunk);
        }
    }
}
