use serde::Serialize;
use statrs::function::gamma::gamma;

use super::wasserstein::wasserstein2_squared;
use crate::error::{Error, Result};
use crate::functional::MeasureFunctional;
use crate::model::{EmpiricalMeasure, MeasureView, NoiseStream};

/// Bump kernel `rho(z) = c exp(-1 / (1 - |z|^2))` on the open unit ball, used at
/// level `n` as `rho_n(z) = n^d rho(n z)` (support radius `1/n`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierKernel {
    dim: usize,
    level: u32,
    draws: usize,
    normalizer: f64,
}

const SIMPSON_INTERVALS: usize = 20_000;

impl MollifierKernel {
    pub fn new(dim: usize, level: u32, draws: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("kernel dimension must be at least 1"));
        }
        if level == 0 {
            return Err(Error::invalid("mollifier level must be at least 1"));
        }
        if draws == 0 {
            return Err(Error::invalid("mollifier needs at least one smoothing draw"));
        }
        Ok(Self {
            dim,
            level,
            draws,
            normalizer: 1.0 / unnormalized_mass(dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn draws(&self) -> usize {
        self.draws
    }

    /// Support radius of the base kernel.
    pub fn base_radius(&self) -> f64 {
        1.0
    }

    /// Support radius of `rho_n`.
    pub fn support_radius(&self) -> f64 {
        1.0 / self.level as f64
    }

    pub fn base_density(&self, z: &[f64]) -> f64 {
        let r2: f64 = z.iter().map(|x| x * x).sum();
        if r2 >= 1.0 {
            0.0
        } else {
            self.normalizer * (-1.0 / (1.0 - r2)).exp()
        }
    }

    pub fn density(&self, z: &[f64]) -> f64 {
        let n = self.level as f64;
        let scaled: Vec<f64> = z.iter().map(|x| n * x).collect();
        n.powi(self.dim as i32) * self.base_density(&scaled)
    }

    /// Draw `Z ~ rho` (unit scale) by rejection from the uniform ball.
    pub fn sample(&self, stream: &mut NoiseStream, out: &mut [f64]) {
        loop {
            let r2 = loop {
                for o in out.iter_mut() {
                    *o = 2.0 * stream.uniform() - 1.0;
                }
                let r2: f64 = out.iter().map(|x| x * x).sum();
                if r2 < 1.0 {
                    break r2;
                }
            };
            // exp(-1/(1-r^2)) / exp(-1) <= 1.
            let accept = (1.0 - 1.0 / (1.0 - r2)).exp();
            if stream.uniform() < accept {
                return;
            }
        }
    }
}

/// `int_{|z|<1} exp(-1/(1-|z|^2)) dz` in polar form with composite Simpson.
fn unnormalized_mass(d: usize) -> f64 {
    let sphere = 2.0 * std::f64::consts::PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0);
    let g = |r: f64| {
        if r >= 1.0 {
            0.0
        } else {
            r.powi(d as i32 - 1) * (-1.0 / (1.0 - r * r)).exp()
        }
    };
    let m = SIMPSON_INTERVALS;
    let h = 1.0 / m as f64;
    let mut s = g(0.0) + g(1.0);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * g(i as f64 * h);
    }
    sphere * s * h / 3.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MollifiedProjection {
    /// Mean of `u` over the shifted clouds.
    pub value: f64,
    /// Standard error of that mean.
    pub se: f64,
    pub draws: usize,
    /// Largest `W_2^2(original, shifted)` over the draws, when tracked.
    pub max_w2_sq: Option<f64>,
}

/// `u^{N,n}`: Monte Carlo average of `u` on `{y^i - Z^i / n}` over the kernel's
/// draws, with `Z^i ~ rho` from `stream`.
pub fn mollified_projection(
    f: &MeasureFunctional,
    x: &[f64],
    mu: &EmpiricalMeasure,
    kernel: &MollifierKernel,
    stream: &mut NoiseStream,
) -> Result<MollifiedProjection> {
    run(f, x, mu, kernel, stream, false)
}

/// As [`mollified_projection`], also computing the exact `W_2^2` between the
/// original and every shifted cloud.
pub fn mollified_projection_tracked(
    f: &MeasureFunctional,
    x: &[f64],
    mu: &EmpiricalMeasure,
    kernel: &MollifierKernel,
    stream: &mut NoiseStream,
) -> Result<MollifiedProjection> {
    run(f, x, mu, kernel, stream, true)
}

fn run(
    f: &MeasureFunctional,
    x: &[f64],
    mu: &EmpiricalMeasure,
    kernel: &MollifierKernel,
    stream: &mut NoiseStream,
    track: bool,
) -> Result<MollifiedProjection> {
    let d = mu.dim();
    if kernel.dim() != d {
        return Err(Error::invalid("kernel and cloud dimensions differ"));
    }
    let scale = 1.0 / kernel.level() as f64;
    let mut shifted = mu.points().to_vec();
    let mut z = vec![0.0; d];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut max_w2: Option<f64> = track.then_some(0.0);
    for _ in 0..kernel.draws() {
        for (l, p) in shifted.chunks_exact_mut(d).enumerate() {
            kernel.sample(stream, &mut z);
            for a in 0..d {
                p[a] = mu.points()[l * d + a] - z[a] * scale;
            }
        }
        let u = f.prepare(x, MeasureView::new(d, &shifted)).value;
        sum += u;
        sum_sq += u * u;
        if let Some(m) = max_w2.as_mut() {
            let nu = EmpiricalMeasure::new(d, shifted.clone())?;
            *m = m.max(wasserstein2_squared(mu, &nu)?);
        }
    }
    let q = kernel.draws() as f64;
    let value = sum / q;
    let se = if kernel.draws() > 1 {
        ((sum_sq / q - value * value).max(0.0) * q / (q - 1.0) / q).sqrt()
    } else {
        0.0
    };
    Ok(MollifiedProjection {
        value,
        se,
        draws: kernel.draws(),
        max_w2_sq: max_w2,
    })
}
