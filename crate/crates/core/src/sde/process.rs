use serde::{Deserialize, Serialize};

use super::coefficient::{Channel, Coefficient, CoefficientSpec, Shape};
use super::law::InitialLaw;
use super::{check_finite, diffuse};
use crate::error::{Error, Result};
use crate::model::{BrownianPath, SeedPolicy, StreamRole, TimeGrid};

/// Driving noise of the process `X`.
#[derive(Debug, Clone, Copy)]
pub enum Driving<'a> {
    /// `dX = beta dt + gamma dW`.
    Single(&'a BrownianPath),
    /// `dX = beta dt + gamma0 dW^0 + gamma1 dW^1`.
    Pair {
        w0: &'a BrownianPath,
        w1: &'a BrownianPath,
    },
}

impl<'a> Driving<'a> {
    pub fn w0(&self) -> &'a BrownianPath {
        match *self {
            Driving::Single(w) => w,
            Driving::Pair { w0, .. } => w0,
        }
    }

    pub fn w1(&self) -> Option<&'a BrownianPath> {
        match *self {
            Driving::Single(_) => None,
            Driving::Pair { w1, .. } => Some(w1),
        }
    }
}

/// Serializable description of `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSpec {
    pub x0: InitialLaw,
    pub beta: CoefficientSpec,
    /// `gamma` (single noise) or `gamma^0` (two noises).
    pub gamma: CoefficientSpec,
    /// `gamma^1`; absent means zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma1: Option<CoefficientSpec>,
}

impl ProcessSpec {
    /// The frozen process `X = 0`.
    pub fn frozen() -> Self {
        Self {
            x0: InitialLaw::point(0.0),
            beta: CoefficientSpec::zero(),
            gamma: CoefficientSpec::zero(),
            gamma1: None,
        }
    }

    /// Simulate with `X_0` drawn from the process-initial stream of `replication`.
    pub fn simulate(&self, driving: Driving<'_>, seeds: &SeedPolicy, replication: u64) -> Result<StatePath> {
        let d = driving.w0().dim();
        let sampler = self.x0.resolve(d)?;
        let mut x0 = vec![0.0; d];
        sampler.sample(&mut seeds.stream(StreamRole::ProcessInitial, replication, 0), &mut x0);
        simulate_ito_process(&self.beta, &self.gamma, self.gamma1.as_ref(), &x0, driving)
    }
}

/// Euler path of `X` with the coefficients used at every left node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePath {
    grid: TimeGrid,
    dim: usize,
    two_noise: bool,
    values: Vec<f64>,
    beta: Vec<f64>,
    gamma0: Vec<f64>,
    gamma1: Vec<f64>,
}

pub fn simulate_ito_process(
    beta: &CoefficientSpec,
    gamma: &CoefficientSpec,
    gamma1: Option<&CoefficientSpec>,
    x0: &[f64],
    driving: Driving<'_>,
) -> Result<StatePath> {
    let w0 = driving.w0();
    let w1 = driving.w1();
    let d = w0.dim();
    let grid = *w0.grid();
    if x0.len() != d {
        return Err(Error::invalid(format!("X0 has length {}, expected {d}", x0.len())));
    }
    if let Some(w1) = w1 {
        if !w1.same_grid(&grid) || w1.dim() != d {
            return Err(Error::invalid("W^1 does not match the grid or dimension of W^0"));
        }
    } else if gamma1.is_some() {
        return Err(Error::invalid("gamma1 given for a single-noise process"));
    }
    let beta = beta.resolve(Shape::Drift, d)?;
    let gamma0 = gamma.resolve(Shape::Diffusion, d)?;
    let gamma1 = match gamma1 {
        Some(g) => Some(g.resolve(Shape::Diffusion, d)?),
        None => None,
    };
    for c in [Some(&beta), Some(&gamma0), gamma1.as_ref()].into_iter().flatten() {
        if c.channel() == Some(Channel::W1) && w1.is_none() {
            return Err(Error::invalid("coefficient reads W^1 but the process has a single noise"));
        }
    }

    let m = grid.steps();
    let dt = grid.dt();
    let mut path = StatePath {
        grid,
        dim: d,
        two_noise: w1.is_some(),
        values: vec![0.0; (m + 1) * d],
        beta: vec![0.0; m * d],
        gamma0: vec![0.0; m * d * d],
        gamma1: if w1.is_some() { vec![0.0; m * d * d] } else { Vec::new() },
    };
    path.values[..d].copy_from_slice(x0);
    check_finite(x0, 0, "X")?;
    let eval = |c: &Coefficient, i: usize, x: &[f64], out: &mut [f64]| {
        c.eval(grid.node(i), x, Some(w0.value(i)), w1.map(|w| w.value(i)), out)
    };
    for i in 0..m {
        let (head, tail) = path.values.split_at_mut((i + 1) * d);
        let x = &head[i * d..];
        let next = &mut tail[..d];
        let b = &mut path.beta[i * d..(i + 1) * d];
        eval(&beta, i, x, b);
        let g0 = &mut path.gamma0[i * d * d..(i + 1) * d * d];
        eval(&gamma0, i, x, g0);
        for a in 0..d {
            next[a] = x[a] + b[a] * dt;
        }
        diffuse(next, g0, w0.increment(i));
        if let (Some(g1c), Some(w1)) = (&gamma1, w1) {
            let g1 = &mut path.gamma1[i * d * d..(i + 1) * d * d];
            eval(g1c, i, x, g1);
            diffuse(next, g1, w1.increment(i));
        }
        check_finite(next, i + 1, "X")?;
    }
    Ok(path)
}

impl StatePath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_two_noise(&self) -> bool {
        self.two_noise
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.value(self.grid.steps())
    }

    pub fn beta(&self, i: usize) -> &[f64] {
        &self.beta[i * self.dim..(i + 1) * self.dim]
    }

    pub fn gamma0(&self, i: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.gamma0[i * dd..(i + 1) * dd]
    }

    pub fn gamma1(&self, i: usize) -> Option<&[f64]> {
        let dd = self.dim * self.dim;
        self.two_noise.then(|| &self.gamma1[i * dd..(i + 1) * dd])
    }

    /// Rebuild the values from the recorded coefficients and the given
    /// increments using the same update as the simulation.
    pub fn replay(&self, driving: Driving<'_>) -> Result<Vec<f64>> {
        let d = self.dim;
        if driving.w0().dim() != d || !driving.w0().same_grid(&self.grid) {
            return Err(Error::invalid("replay path does not match the recorded grid"));
        }
        if driving.w1().is_some() != self.two_noise {
            return Err(Error::invalid("replay driving mode differs from the recorded one"));
        }
        let dt = self.grid.dt();
        let mut values = self.values[..d].to_vec();
        let mut x = values.clone();
        let mut next = vec![0.0; d];
        for i in 0..self.grid.steps() {
            let b = self.beta(i);
            for a in 0..d {
                next[a] = x[a] + b[a] * dt;
            }
            diffuse(&mut next, self.gamma0(i), driving.w0().increment(i));
            if let (Some(g1), Some(w1)) = (self.gamma1(i), driving.w1()) {
                diffuse(&mut next, g1, w1.increment(i));
            }
            values.extend_from_slice(&next);
            std::mem::swap(&mut x, &mut next);
        }
        Ok(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_time_grid, sample_brownian};

    fn brownian(m: usize, d: usize, seed: u64) -> BrownianPath {
        let grid = make_time_grid(1.0, m).unwrap();
        sample_brownian(grid, d, &mut SeedPolicy::new(seed).stream(StreamRole::PrimaryNoise, 0, 0)).unwrap()
    }

    #[test]
    fn frozen_process_stays_put() {
        let w = brownian(8, 1, 1);
        let p = simulate_ito_process(&CoefficientSpec::zero(), &CoefficientSpec::zero(), None, &[5.0], Driving::Single(&w)).unwrap();
        assert!(p.values().iter().all(|&x| x == 5.0));
    }

    #[test]
    fn pure_drift_reaches_horizon() {
        let w = brownian(64, 1, 1);
        let p = simulate_ito_process(&CoefficientSpec::constant(1.0), &CoefficientSpec::zero(), None, &[0.0], Driving::Single(&w)).unwrap();
        assert_eq!(p.terminal()[0], 1.0);
    }

    #[test]
    fn unit_diffusion_reproduces_brownian_path() {
        let w = brownian(128, 2, 4);
        let p = simulate_ito_process(&CoefficientSpec::zero(), &CoefficientSpec::constant(1.0), None, &[0.0, 0.0], Driving::Single(&w)).unwrap();
        for i in 0..=128 {
            assert_eq!(p.value(i), w.value(i));
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let w0 = brownian(50, 2, 7);
        let grid = *w0.grid();
        let w1 = sample_brownian(grid, 2, &mut SeedPolicy::new(7).stream(StreamRole::SecondaryNoise, 0, 0)).unwrap();
        let beta = CoefficientSpec::LinearInState {
            offset: vec![0.1, -0.2].into(),
            slopes: vec![(-0.5).into(), 0.3.into()],
        };
        let gamma = CoefficientSpec::NoisePath {
            offset: vec![vec![1.0, 0.2], vec![0.0, 0.7]].into(),
            slopes: vec![0.1.into(), (-0.1).into()],
            channel: Channel::W1,
        };
        let gamma1 = CoefficientSpec::TimePolynomial {
            coefficients: vec![0.5.into(), 0.25.into()],
        };
        let p = simulate_ito_process(&beta, &gamma, Some(&gamma1), &[0.3, -1.0], Driving::Pair { w0: &w0, w1: &w1 }).unwrap();
        assert_eq!(p.replay(Driving::Pair { w0: &w0, w1: &w1 }).unwrap(), p.values());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let w = brownian(4, 1, 1);
        assert!(simulate_ito_process(&CoefficientSpec::zero(), &CoefficientSpec::zero(), None, &[0.0, 1.0], Driving::Single(&w)).is_err());
        let bad = CoefficientSpec::constant(vec![1.0, 2.0]);
        assert!(simulate_ito_process(&bad, &CoefficientSpec::zero(), None, &[0.0], Driving::Single(&w)).is_err());
        let reads_w1 = CoefficientSpec::NoisePath {
            offset: 0.0.into(),
            slopes: vec![1.0.into()],
            channel: Channel::W1,
        };
        assert!(simulate_ito_process(&reads_w1, &CoefficientSpec::zero(), None, &[0.0], Driving::Single(&w)).is_err());
    }

    #[test]
    fn divergence_reported_as_non_finite() {
        let w = brownian(2000, 1, 1);
        let beta = CoefficientSpec::LinearInState {
            offset: 0.0.into(),
            slopes: vec![1e6.into()],
        };
        let err = simulate_ito_process(&beta, &CoefficientSpec::zero(), None, &[1.0], Driving::Single(&w)).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }
}
