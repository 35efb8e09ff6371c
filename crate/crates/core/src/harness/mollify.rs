use serde::Serialize;

use crate::error::{Error, Result};
use crate::functional::MeasureFunctional;
use crate::linalg::CompensatedSum;
use crate::lions::{wasserstein2_squared, MollifierKernel};
use super::config::MollificationSpec;
use crate::model::{EmpiricalMeasure, MeasureView, SeedPolicy, StreamRole};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MollificationRow {
    pub level: u32,
    /// Kernel support radius `1/n`.
    pub radius: f64,
    /// `u^{N,n}`.
    pub value: f64,
    pub se: f64,
    /// `|u^{N,n} - u^N|`.
    pub error: f64,
    /// Largest `||d_mu u||_{L^2}` seen along the draws' straight-line couplings.
    pub lipschitz: f64,
    /// `lipschitz * radius`.
    pub error_bound: f64,
    pub max_w2_sq: f64,
    /// `radius^2`.
    pub w2_bound: f64,
    pub draws: usize,
    pub draws_within: usize,
}

impl MollificationRow {
    pub fn error_within_bound(&self) -> bool {
        self.error <= self.error_bound
    }

    pub fn all_draws_within(&self) -> bool {
        self.draws_within == self.draws
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MollificationTable {
    pub functional: String,
    pub particles: usize,
    /// `u^N` on the unperturbed cloud.
    pub base_value: f64,
    pub rows: Vec<MollificationRow>,
}

impl MollificationTable {
    pub fn errors_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].error < w[0].error)
    }
}

/// `sqrt((1/N) sum_l |d_mu u(x, nu, y^l)|^2)` on the cloud `nu`.
fn lions_norm(f: &MeasureFunctional, x: &[f64], nu: MeasureView<'_>) -> f64 {
    let d = nu.dim;
    let p = f.prepare(x, nu);
    let mut g = vec![0.0; d];
    let mut s = CompensatedSum::new();
    for y in nu.iter() {
        g.fill(0.0);
        f.dmu_add(&p, x, nu, y, 1.0, &mut g);
        s.add(g.iter().map(|v| v * v).sum());
    }
    (s.value() / nu.len() as f64).sqrt()
}

/// Mollified projections `u^{N,n}` of `f` on `cloud` across `levels`, each with
/// `draws` smoothing draws. Every level reuses the same kernel draws (common
/// random numbers), so rows differ only through the scale `1/n`.
///
/// The Lipschitz constant is a brute-force estimate: the largest
/// `L^2(nu)`-norm of `d_mu u` over `nu` at the start, midpoint and end of every
/// draw's coupling `y -> y - Z/n`.
pub fn mollification_study(
    f: &MeasureFunctional,
    x: &[f64],
    cloud: &EmpiricalMeasure,
    levels: &[u32],
    draws: usize,
    seeds: &SeedPolicy,
) -> Result<MollificationTable> {
    let d = cloud.dim();
    f.validate(d)?;
    if x.len() != d {
        return Err(Error::invalid("x dimension differs from the cloud's"));
    }
    let base_value = f.prepare(x, cloud.view()).value;
    let base_norm = lions_norm(f, x, cloud.view());
    let mut rows = Vec::with_capacity(levels.len());
    let mut shifted = cloud.points().to_vec();
    let mut mid = cloud.points().to_vec();
    let mut z = vec![0.0; d];
    for &level in levels {
        let kernel = MollifierKernel::new(d, level, draws)?;
        let radius = kernel.support_radius();
        let w2_bound = radius * radius;
        let mut stream = seeds.stream(StreamRole::Smoothing, 0, 0);
        let (mut sum, mut sum_sq) = (CompensatedSum::new(), CompensatedSum::new());
        let mut lip = base_norm;
        let mut max_w2 = 0.0f64;
        let mut within = 0;
        for _ in 0..draws {
            for (l, (p, q)) in shifted.chunks_exact_mut(d).zip(mid.chunks_exact_mut(d)).enumerate() {
                kernel.sample(&mut stream, &mut z);
                for a in 0..d {
                    let y = cloud.points()[l * d + a];
                    p[a] = y - z[a] * radius;
                    q[a] = y - 0.5 * z[a] * radius;
                }
            }
            let nu = MeasureView::new(d, &shifted);
            let u = f.prepare(x, nu).value;
            sum.add(u);
            sum_sq.add(u * u);
            lip = lip.max(lions_norm(f, x, nu)).max(lions_norm(f, x, MeasureView::new(d, &mid)));
            let w2 = wasserstein2_squared(cloud, &EmpiricalMeasure::new(d, shifted.clone())?)?;
            max_w2 = max_w2.max(w2);
            if w2 <= w2_bound {
                within += 1;
            }
        }
        let q = draws as f64;
        let value = sum.value() / q;
        let se = if draws > 1 {
            ((sum_sq.value() / q - value * value).max(0.0) / (q - 1.0)).sqrt()
        } else {
            0.0
        };
        rows.push(MollificationRow {
            level,
            radius,
            value,
            se,
            error: (value - base_value).abs(),
            lipschitz: lip,
            error_bound: lip * radius,
            max_w2_sq: max_w2,
            w2_bound,
            draws,
            draws_within: within,
        });
    }
    Ok(MollificationTable {
        functional: f.name().to_string(),
        particles: cloud.len(),
        base_value,
        rows,
    })
}

impl MollificationSpec {
    /// Draw the cloud from `y0` (particle-initial streams of replication 0)
    /// and run the study.
    pub fn run(&self, dim: usize, seed: u64) -> Result<MollificationTable> {
        let seeds = SeedPolicy::new(seed);
        let sampler = self.y0.resolve(dim)?;
        let mut points = vec![0.0; self.particles * dim];
        for (l, p) in points.chunks_exact_mut(dim).enumerate() {
            sampler.sample(&mut seeds.stream(StreamRole::ParticleInitial, 0, l as u64), p);
        }
        let x = match &self.x {
            Some(x) => x.resolve_vector(dim)?,
            None => vec![0.0; dim],
        };
        mollification_study(&self.functional, &x, &EmpiricalMeasure::new(dim, points)?, &self.levels, self.draws, &seeds)
    }
}
