//! Closed vocabulary of coefficient processes.
//!
//! A coefficient is evaluated at the left node `t_i` from the current state and
//! the driving-path values at `t_i`, so every evaluation is adapted by
//! construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real scalar, vector or matrix as written in a config file.
///
/// Scalars broadcast: `c` means `c * (1,...,1)` for a drift and `c * I` for a
/// diffusion. A vector given for a diffusion is read as a diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Tensor {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

impl From<f64> for Tensor {
    fn from(x: f64) -> Self {
        Tensor::Scalar(x)
    }
}

impl From<Vec<f64>> for Tensor {
    fn from(v: Vec<f64>) -> Self {
        Tensor::Vector(v)
    }
}

impl From<Vec<Vec<f64>>> for Tensor {
    fn from(m: Vec<Vec<f64>>) -> Self {
        Tensor::Matrix(m)
    }
}

/// Output shape of a coefficient in dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// `d`-vector.
    Drift,
    /// Row-major `d x d` matrix, multiplied against a `d`-dimensional noise.
    Diffusion,
}

impl Shape {
    pub fn len(self, d: usize) -> usize {
        match self {
            Shape::Drift => d,
            Shape::Diffusion => d * d,
        }
    }
}

impl Tensor {
    /// Flatten into the buffer layout of `shape` in dimension `d`.
    pub fn resolve(&self, shape: Shape, d: usize) -> Result<Vec<f64>> {
        match (self, shape) {
            (Tensor::Scalar(c), Shape::Drift) => Ok(vec![*c; d]),
            (Tensor::Scalar(c), Shape::Diffusion) => {
                let mut m = vec![0.0; d * d];
                for a in 0..d {
                    m[a * d + a] = *c;
                }
                Ok(m)
            }
            (Tensor::Vector(v), Shape::Drift) if v.len() == d => Ok(v.clone()),
            (Tensor::Vector(v), Shape::Diffusion) if v.len() == d => {
                let mut m = vec![0.0; d * d];
                for a in 0..d {
                    m[a * d + a] = v[a];
                }
                Ok(m)
            }
            (Tensor::Matrix(rows), Shape::Diffusion)
                if rows.len() == d && rows.iter().all(|r| r.len() == d) =>
            {
                Ok(rows.iter().flatten().copied().collect())
            }
            (t, s) => Err(Error::invalid(format!(
                "tensor {t:?} does not fit a {s:?} coefficient in dimension {d}"
            ))),
        }
    }

    /// Flatten as a plain `d`-vector (initial laws, loadings).
    pub fn resolve_vector(&self, d: usize) -> Result<Vec<f64>> {
        self.resolve(Shape::Drift, d)
    }
}

/// Driving noise channel. For the process `X`, `w0` is `W` (or `W^0`) and `w1`
/// is `W^1`. For a particle, `w0` is the shared common path and `w1` the
/// particle's own idiosyncratic path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    #[default]
    W0,
    W1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoefficientSpec {
    /// Time- and state-independent value.
    Constant { value: Tensor },
    /// `sum_k coefficients[k] * t^k`.
    TimePolynomial { coefficients: Vec<Tensor> },
    /// `offset + sum_c state_c * slopes[c]`.
    LinearInState { offset: Tensor, slopes: Vec<Tensor> },
    /// `offset + sum_c W_c(t) * slopes[c]` for the chosen channel's path value.
    NoisePath {
        offset: Tensor,
        slopes: Vec<Tensor>,
        #[serde(default)]
        channel: Channel,
    },
}

impl CoefficientSpec {
    pub fn constant(value: impl Into<Tensor>) -> Self {
        CoefficientSpec::Constant { value: value.into() }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn resolve(&self, shape: Shape, d: usize) -> Result<Coefficient> {
        let slopes_of = |slopes: &[Tensor]| -> Result<Vec<Vec<f64>>> {
            if slopes.len() != d {
                return Err(Error::invalid(format!(
                    "expected {d} slope tensors, got {}",
                    slopes.len()
                )));
            }
            slopes.iter().map(|s| s.resolve(shape, d)).collect()
        };
        let kind = match self {
            CoefficientSpec::Constant { value } => Kind::Constant(value.resolve(shape, d)?),
            CoefficientSpec::TimePolynomial { coefficients } => {
                if coefficients.is_empty() {
                    return Err(Error::invalid("time polynomial needs at least one coefficient"));
                }
                Kind::TimePolynomial(
                    coefficients
                        .iter()
                        .map(|c| c.resolve(shape, d))
                        .collect::<Result<_>>()?,
                )
            }
            CoefficientSpec::LinearInState { offset, slopes } => Kind::LinearInState {
                offset: offset.resolve(shape, d)?,
                slopes: slopes_of(slopes)?,
            },
            CoefficientSpec::NoisePath {
                offset,
                slopes,
                channel,
            } => Kind::NoisePath {
                offset: offset.resolve(shape, d)?,
                slopes: slopes_of(slopes)?,
                channel: *channel,
            },
        };
        Ok(Coefficient {
            shape,
            len: shape.len(d),
            kind,
        })
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Constant(Vec<f64>),
    TimePolynomial(Vec<Vec<f64>>),
    LinearInState {
        offset: Vec<f64>,
        slopes: Vec<Vec<f64>>,
    },
    NoisePath {
        offset: Vec<f64>,
        slopes: Vec<Vec<f64>>,
        channel: Channel,
    },
}

/// A resolved coefficient with a fixed output layout.
#[derive(Debug, Clone)]
pub struct Coefficient {
    shape: Shape,
    len: usize,
    kind: Kind,
}

impl Coefficient {
    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn channel(&self) -> Option<Channel> {
        match &self.kind {
            Kind::NoisePath { channel, .. } => Some(*channel),
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, Kind::Constant(_))
    }

    /// True when the coefficient is identically zero.
    pub fn is_zero(&self) -> bool {
        match &self.kind {
            Kind::Constant(v) => v.iter().all(|&x| x == 0.0),
            Kind::TimePolynomial(cs) => cs.iter().flatten().all(|&x| x == 0.0),
            Kind::LinearInState { offset, slopes } | Kind::NoisePath { offset, slopes, .. } => {
                offset.iter().chain(slopes.iter().flatten()).all(|&x| x == 0.0)
            }
        }
    }

    /// Evaluate at node time `t`. `w0`/`w1` are path values at `t` and must be
    /// present when the coefficient reads that channel; callers check this once
    /// via [`Coefficient::channel`].
    #[inline]
    pub fn eval(&self, t: f64, state: &[f64], w0: Option<&[f64]>, w1: Option<&[f64]>, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len);
        match &self.kind {
            Kind::Constant(v) => out.copy_from_slice(v),
            Kind::TimePolynomial(cs) => {
                // Horner from the highest power.
                out.copy_from_slice(&cs[cs.len() - 1]);
                for c in cs[..cs.len() - 1].iter().rev() {
                    for (o, ci) in out.iter_mut().zip(c) {
                        *o = *o * t + ci;
                    }
                }
            }
            Kind::LinearInState { offset, slopes } => affine(offset, slopes, state, out),
            Kind::NoisePath {
                offset,
                slopes,
                channel,
            } => {
                let w = match channel {
                    Channel::W0 => w0,
                    Channel::W1 => w1,
                }
                .expect("noise-path coefficient evaluated without its channel");
                affine(offset, slopes, w, out)
            }
        }
    }
}

#[inline]
fn affine(offset: &[f64], slopes: &[Vec<f64>], z: &[f64], out: &mut [f64]) {
    out.copy_from_slice(offset);
    for (zc, s) in z.iter().zip(slopes) {
        if *zc == 0.0 {
            continue;
        }
        for (o, si) in out.iter_mut().zip(s) {
            *o += zc * si;
        }
    }
}
