use serde::{Deserialize, Serialize};

use super::{NoiseStream, TimeGrid};
use crate::error::{Error, Result};

/// A sampled `d`-dimensional Brownian path on a uniform grid.
///
/// `increments[i*d..(i+1)*d]` is `W(t_{i+1}) - W(t_i)`; `values` holds the running
/// left-to-right sums with `W(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrownianPath {
    grid: TimeGrid,
    dim: usize,
    increments: Vec<f64>,
    values: Vec<f64>,
}

pub fn sample_brownian(grid: TimeGrid, dim: usize, stream: &mut NoiseStream) -> Result<BrownianPath> {
    if dim == 0 {
        return Err(Error::invalid("Brownian dimension must be at least 1"));
    }
    let mut increments = vec![0.0; grid.steps() * dim];
    stream.fill_normal(grid.dt().sqrt(), &mut increments);
    BrownianPath::from_increments(grid, dim, increments)
}

impl BrownianPath {
    pub fn from_increments(grid: TimeGrid, dim: usize, increments: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("Brownian dimension must be at least 1"));
        }
        if increments.len() != grid.steps() * dim {
            return Err(Error::invalid(format!(
                "expected {} increments, got {}",
                grid.steps() * dim,
                increments.len()
            )));
        }
        let mut values = vec![0.0; (grid.steps() + 1) * dim];
        for i in 0..grid.steps() {
            for a in 0..dim {
                values[(i + 1) * dim + a] = values[i * dim + a] + increments[i * dim + a];
            }
        }
        Ok(Self {
            grid,
            dim,
            increments,
            values,
        })
    }

    /// The identically zero path.
    pub fn zero(grid: TimeGrid, dim: usize) -> Result<Self> {
        Self::from_increments(grid, dim, vec![0.0; grid.steps() * dim])
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn increment(&self, i: usize) -> &[f64] {
        &self.increments[i * self.dim..(i + 1) * self.dim]
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn terminal(&self) -> &[f64] {
        self.value(self.grid.steps())
    }

    pub(crate) fn same_grid(&self, grid: &TimeGrid) -> bool {
        self.grid == *grid
    }
}
