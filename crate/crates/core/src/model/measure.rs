use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CompensatedSum;

/// Uniform empirical measure `(1/N) sum_l delta_{x^l}` over `N` points in `R^d`.
/// Points are stored row-major, `points[l*d..(l+1)*d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
}

/// Borrowed view of a uniform empirical measure; the form every functional
/// evaluator works on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureView<'a> {
    pub dim: usize,
    pub points: &'a [f64],
}

impl<'a> MeasureView<'a> {
    pub fn new(dim: usize, points: &'a [f64]) -> Self {
        debug_assert!(dim > 0 && !points.is_empty() && points.len() % dim == 0);
        Self { dim, points }
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, l: usize) -> &'a [f64] {
        &self.points[l * self.dim..(l + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'a, f64> {
        self.points.chunks_exact(self.dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Moment {
    /// `(1/N) sum x^l`
    Mean(Vec<f64>),
    /// `(1/N) sum x^l (x^l)^T`, row-major `d x d`.
    Second(Vec<f64>),
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if points.is_empty() || points.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "{} coordinates do not form a non-empty cloud in dimension {dim}",
                points.len()
            )));
        }
        Ok(Self { dim, points })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::invalid("points of mixed dimension"));
        }
        Self::new(dim, points.iter().flatten().copied().collect())
    }

    /// One-dimensional cloud from scalars.
    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        Self::new(1, xs.to_vec())
    }

    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::new(point.len(), point.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, l: usize) -> &[f64] {
        &self.points[l * self.dim..(l + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut [f64] {
        &mut self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn view(&self) -> MeasureView<'_> {
        MeasureView {
            dim: self.dim,
            points: &self.points,
        }
    }
}

pub fn measure_moments(mu: &EmpiricalMeasure, order: u32) -> Result<Moment> {
    let d = mu.dim();
    let n = mu.len() as f64;
    match order {
        1 => {
            let mut acc = vec![CompensatedSum::new(); d];
            for p in mu.iter() {
                for a in 0..d {
                    acc[a].add(p[a]);
                }
            }
            Ok(Moment::Mean(acc.iter().map(|s| s.value() / n).collect()))
        }
        2 => {
            let mut acc = vec![CompensatedSum::new(); d * d];
            for p in mu.iter() {
                for a in 0..d {
                    for b in 0..d {
                        acc[a * d + b].add(p[a] * p[b]);
                    }
                }
            }
            Ok(Moment::Second(acc.iter().map(|s| s.value() / n).collect()))
        }
        k => Err(Error::invalid(format!("moment order must be 1 or 2, got {k}"))),
    }
}
