use serde::Serialize;

use super::cloud::{CloudSpec, CloudStepper};
use super::process::{Driving, ProcessSpec};
use crate::error::{Error, Result};
use crate::linalg::norm_sq;
use crate::model::{sample_brownian, BrownianPath, SeedPolicy, StreamRole, TimeGrid};

/// Monte Carlo mean of a pathwise integral with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrabilityReport {
    pub replications: usize,
    /// Replications dropped because a state or coefficient left the finite reals.
    pub non_finite: usize,
    /// `int |b|^2 ds` along one particle.
    pub drift_sq: Estimate,
    /// `int |sigma|^4 ds` along one particle, `|sigma|^2 = |sigma0|^2 + |sigma1|^2`.
    pub diffusion_quartic: Estimate,
    /// `int |beta| ds` along `X`.
    pub beta_abs: Estimate,
    /// `int |gamma|^2 ds` along `X`, `|gamma|^2 = |gamma0|^2 + |gamma1|^2`.
    pub gamma_sq: Estimate,
}

/// Estimate the integrability functionals of the coefficient assumptions along
/// simulated paths of `X` and of a single particle `Y`.
pub fn coefficient_integrability_report(
    process: Option<&ProcessSpec>,
    cloud: Option<&CloudSpec>,
    grid: TimeGrid,
    dim: usize,
    replications: usize,
    seeds: &SeedPolicy,
) -> Result<IntegrabilityReport> {
    if replications == 0 {
        return Err(Error::invalid("need at least one replication"));
    }
    let dt = grid.dt();
    let mut samples: Vec<[f64; 4]> = Vec::with_capacity(replications);
    let mut non_finite = 0;
    for rep in 0..replications as u64 {
        match one_path(process, cloud, grid, dim, seeds, rep, dt) {
            Ok(s) if s.iter().all(|x| x.is_finite()) => samples.push(s),
            Ok(_) | Err(Error::NonFinite { .. }) => non_finite += 1,
            Err(e) => return Err(e),
        }
    }
    let est = |k: usize| {
        let n = samples.len() as f64;
        if samples.is_empty() {
            return Estimate { mean: f64::NAN, se: f64::NAN };
        }
        let mean = samples.iter().map(|s| s[k]).sum::<f64>() / n;
        let se = if samples.len() > 1 {
            let var = samples.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Estimate { mean, se }
    };
    Ok(IntegrabilityReport {
        replications,
        non_finite,
        drift_sq: est(0),
        diffusion_quartic: est(1),
        beta_abs: est(2),
        gamma_sq: est(3),
    })
}

fn one_path(
    process: Option<&ProcessSpec>,
    cloud: Option<&CloudSpec>,
    grid: TimeGrid,
    dim: usize,
    seeds: &SeedPolicy,
    rep: u64,
    dt: f64,
) -> Result<[f64; 4]> {
    let two_noise = process.is_some_and(|p| p.gamma1.is_some());
    let w0 = sample_brownian(grid, dim, &mut seeds.stream(StreamRole::PrimaryNoise, rep, 0))?;
    let w1: Option<BrownianPath> = if two_noise {
        Some(sample_brownian(grid, dim, &mut seeds.stream(StreamRole::SecondaryNoise, rep, 0))?)
    } else {
        None
    };
    let mut out = [0.0; 4];
    if let Some(p) = process {
        let driving = match &w1 {
            Some(w1) => Driving::Pair { w0: &w0, w1 },
            None => Driving::Single(&w0),
        };
        let x = p.simulate(driving, seeds, rep)?;
        for i in 0..grid.steps() {
            out[2] += norm_sq(x.beta(i)).sqrt() * dt;
            out[3] += (norm_sq(x.gamma0(i)) + x.gamma1(i).map_or(0.0, norm_sq)) * dt;
        }
    }
    if let Some(c) = cloud {
        let mut y = CloudStepper::new(c, 1, dim, grid, seeds, rep)?;
        let common = c.is_conditional();
        for i in 0..grid.steps() {
            y.evaluate(common.then(|| w0.value(i)));
            let v = y.view();
            out[0] += norm_sq(v.drift) * dt;
            let s2 = norm_sq(v.sigma_own) + v.sigma_common.map_or(0.0, norm_sq);
            out[1] += s2 * s2 * dt;
            y.advance(common.then(|| w0.increment(i)))?;
        }
    }
    Ok(out)
}
