use serde::{Deserialize, Serialize};

use super::coefficient::Tensor;
use crate::error::{Error, Result};
use crate::model::NoiseStream;

/// Square-integrable initial laws. Coordinates are independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialLaw {
    Point { value: Tensor },
    Gaussian { mean: Tensor, std: Tensor },
    Uniform { low: Tensor, high: Tensor },
}

impl InitialLaw {
    pub fn point(value: impl Into<Tensor>) -> Self {
        InitialLaw::Point { value: value.into() }
    }

    pub fn gaussian(mean: impl Into<Tensor>, std: impl Into<Tensor>) -> Self {
        InitialLaw::Gaussian {
            mean: mean.into(),
            std: std.into(),
        }
    }

    pub fn resolve(&self, d: usize) -> Result<Sampler> {
        Ok(match self {
            InitialLaw::Point { value } => Sampler::Point(value.resolve_vector(d)?),
            InitialLaw::Gaussian { mean, std } => {
                let std = std.resolve_vector(d)?;
                if std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                    return Err(Error::invalid("gaussian std must be finite and nonnegative"));
                }
                Sampler::Gaussian {
                    mean: mean.resolve_vector(d)?,
                    std,
                }
            }
            InitialLaw::Uniform { low, high } => {
                let low = low.resolve_vector(d)?;
                let high = high.resolve_vector(d)?;
                if low.iter().zip(&high).any(|(l, h)| !(l <= h)) {
                    return Err(Error::invalid("uniform law needs low <= high"));
                }
                Sampler::Uniform { low, high }
            }
        })
    }
}

#[derive(Debug, Clone)]
pub enum Sampler {
    Point(Vec<f64>),
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
    Uniform { low: Vec<f64>, high: Vec<f64> },
}

impl Sampler {
    /// Draw one point. Point masses consume no randomness.
    pub fn sample(&self, stream: &mut NoiseStream, out: &mut [f64]) {
        match self {
            Sampler::Point(v) => out.copy_from_slice(v),
            Sampler::Gaussian { mean, std } => {
                for a in 0..out.len() {
                    out[a] = mean[a] + std[a] * stream.normal();
                }
            }
            Sampler::Uniform { low, high } => {
                for a in 0..out.len() {
                    out[a] = low[a] + (high[a] - low[a]) * stream.uniform();
                }
            }
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Sampler::Point(_))
    }
}
