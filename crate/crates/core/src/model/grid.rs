use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform partition `0 = t_0 < t_1 < ... < t_M = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

pub fn make_time_grid(horizon: f64, steps: usize) -> Result<TimeGrid> {
    TimeGrid::new(horizon, steps)
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::invalid("grid needs at least one step"));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node `t_i`; the last node is the horizon itself, bit for bit.
    pub fn node(&self, i: usize) -> f64 {
        assert!(i <= self.steps, "node index {i} beyond {} steps", self.steps);
        if i == self.steps {
            self.horizon
        } else {
            self.horizon * (i as f64 / self.steps as f64)
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.node(i)).collect()
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i > self.steps {
            return Err(Error::invalid(format!(
                "time index {i} is off the grid (M = {})",
                self.steps
            )));
        }
        Ok(())
    }
}
