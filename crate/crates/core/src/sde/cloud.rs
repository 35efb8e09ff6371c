use serde::{Deserialize, Serialize};

use super::coefficient::{Channel, Coefficient, CoefficientSpec, Shape};
use super::law::InitialLaw;
use super::{check_finite, diffuse};
use crate::error::{Error, Result};
use crate::model::{BrownianPath, EmpiricalMeasure, NoiseStream, SeedPolicy, StreamRole, TimeGrid};

/// Serializable description of the measure-generating particles.
///
/// Without `sigma0` the particles are independent copies driven by their own
/// noises (full flow). With `sigma0` they also share the common path `W^0`:
/// `dY^l = b dt + sigma0 dW^0 + sigma dW^{1,l}` (conditional flow).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudSpec {
    pub y0: InitialLaw,
    pub drift: CoefficientSpec,
    pub sigma: CoefficientSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<CoefficientSpec>,
}

impl CloudSpec {
    pub fn full(y0: InitialLaw, drift: CoefficientSpec, sigma: CoefficientSpec) -> Self {
        Self {
            y0,
            drift,
            sigma,
            sigma0: None,
        }
    }

    pub fn conditional(y0: InitialLaw, drift: CoefficientSpec, sigma0: CoefficientSpec, sigma1: CoefficientSpec) -> Self {
        Self {
            y0,
            drift,
            sigma: sigma1,
            sigma0: Some(sigma0),
        }
    }

    pub fn is_conditional(&self) -> bool {
        self.sigma0.is_some()
    }
}

/// Borrowed cloud state at one node: points and the coefficients evaluated there.
#[derive(Debug, Clone, Copy)]
pub struct CloudView<'a> {
    pub dim: usize,
    pub points: &'a [f64],
    pub drift: &'a [f64],
    pub sigma_own: &'a [f64],
    pub sigma_common: Option<&'a [f64]>,
}

impl<'a> CloudView<'a> {
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Streaming Euler stepper holding only the current cloud, `O(N d^2)` memory.
///
/// Particle `l` draws its initial point from `(ParticleInitial, replication, l)`
/// and its noise from `(ParticleNoise, replication, l)`, so the first `N`
/// particles of a larger cloud coincide with a smaller one.
pub struct CloudStepper {
    grid: TimeGrid,
    dim: usize,
    n: usize,
    step: usize,
    drift: Coefficient,
    own: Coefficient,
    common: Option<Coefficient>,
    reads_own_path: bool,
    y: Vec<f64>,
    w_own: Vec<f64>,
    streams: Vec<NoiseStream>,
    b: Vec<f64>,
    s_own: Vec<f64>,
    s_common: Vec<f64>,
    dw: Vec<f64>,
    /// Constant coefficients are written once, on the first evaluation.
    constants_written: bool,
}

impl CloudStepper {
    pub fn new(spec: &CloudSpec, n: usize, dim: usize, grid: TimeGrid, seeds: &SeedPolicy, replication: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("a cloud needs at least one particle"));
        }
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        let drift = spec.drift.resolve(Shape::Drift, dim)?;
        let own = spec.sigma.resolve(Shape::Diffusion, dim)?;
        let common = match &spec.sigma0 {
            Some(s) => Some(s.resolve(Shape::Diffusion, dim)?),
            None => None,
        };
        let coeffs = [Some(&drift), Some(&own), common.as_ref()];
        let channels: Vec<Channel> = coeffs.into_iter().flatten().filter_map(|c| c.channel()).collect();
        if common.is_none() && channels.contains(&Channel::W0) {
            return Err(Error::invalid("particle coefficient reads the common path, but the cloud has none"));
        }
        let reads_own_path = channels.contains(&Channel::W1);

        let sampler = spec.y0.resolve(dim)?;
        let mut y = vec![0.0; n * dim];
        for (l, p) in y.chunks_exact_mut(dim).enumerate() {
            sampler.sample(&mut seeds.stream(StreamRole::ParticleInitial, replication, l as u64), p);
        }
        check_finite(&y, 0, "Y")?;
        let streams = (0..n)
            .map(|l| seeds.stream(StreamRole::ParticleNoise, replication, l as u64))
            .collect();
        let dd = dim * dim;
        Ok(Self {
            grid,
            dim,
            n,
            step: 0,
            drift,
            own,
            reads_own_path,
            s_common: if common.is_some() { vec![0.0; n * dd] } else { Vec::new() },
            common,
            y,
            w_own: if reads_own_path { vec![0.0; n * dim] } else { Vec::new() },
            streams,
            b: vec![0.0; n * dim],
            s_own: vec![0.0; n * dd],
            dw: vec![0.0; dim],
            constants_written: false,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn is_conditional(&self) -> bool {
        self.common.is_some()
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn points(&self) -> &[f64] {
        &self.y
    }

    /// Evaluate all coefficients at the current node. `w0` is the common path
    /// value there (conditional mode).
    pub fn evaluate(&mut self, w0: Option<&[f64]>) {
        let t = self.grid.node(self.step);
        let d = self.dim;
        let dd = d * d;
        let skip = self.constants_written;
        let (eval_drift, eval_own) = (!(skip && self.drift.is_constant()), !(skip && self.own.is_constant()));
        let eval_common = self.common.as_ref().is_some_and(|c| !(skip && c.is_constant()));
        self.constants_written = true;
        if !(eval_drift || eval_own || eval_common) {
            return;
        }
        for l in 0..self.n {
            let y = &self.y[l * d..(l + 1) * d];
            let w1 = self.reads_own_path.then(|| &self.w_own[l * d..(l + 1) * d]);
            if eval_drift {
                self.drift.eval(t, y, w0, w1, &mut self.b[l * d..(l + 1) * d]);
            }
            if eval_own {
                self.own.eval(t, y, w0, w1, &mut self.s_own[l * dd..(l + 1) * dd]);
            }
            if let (true, Some(c)) = (eval_common, &self.common) {
                c.eval(t, y, w0, w1, &mut self.s_common[l * dd..(l + 1) * dd]);
            }
        }
    }

    /// The current points with the coefficients from the last [`evaluate`](Self::evaluate).
    pub fn view(&self) -> CloudView<'_> {
        CloudView {
            dim: self.dim,
            points: &self.y,
            drift: &self.b,
            sigma_own: &self.s_own,
            sigma_common: self.common.as_ref().map(|_| self.s_common.as_slice()),
        }
    }

    /// One Euler step: `(y + b dt) + sigma0 dW^0 + sigma dW^{1,l}`.
    pub fn advance(&mut self, dw0: Option<&[f64]>) -> Result<()> {
        if self.step >= self.grid.steps() {
            return Err(Error::invalid("cloud already at the horizon"));
        }
        if self.common.is_some() && dw0.is_none() {
            return Err(Error::invalid("conditional cloud advanced without a common increment"));
        }
        let d = self.dim;
        let dd = d * d;
        let dt = self.grid.dt();
        let sq = dt.sqrt();
        for l in 0..self.n {
            self.streams[l].fill_normal(sq, &mut self.dw);
            if d == 1 {
                // Same operation order as the general branch.
                let mut y = self.y[l] + self.b[l] * dt;
                if let (Some(dw0), true) = (dw0, self.common.is_some()) {
                    y += self.s_common[l] * dw0[0];
                }
                self.y[l] = y + self.s_own[l] * self.dw[0];
                if self.reads_own_path {
                    self.w_own[l] += self.dw[0];
                }
                continue;
            }
            let y = &mut self.y[l * d..(l + 1) * d];
            let b = &self.b[l * d..(l + 1) * d];
            for a in 0..d {
                y[a] += b[a] * dt;
            }
            if let (Some(dw0), true) = (dw0, self.common.is_some()) {
                diffuse(y, &self.s_common[l * dd..(l + 1) * dd], dw0);
            }
            diffuse(y, &self.s_own[l * dd..(l + 1) * dd], &self.dw);
            if self.reads_own_path {
                for a in 0..d {
                    self.w_own[l * d + a] += self.dw[a];
                }
            }
        }
        self.step += 1;
        check_finite(&self.y, self.step, "Y")
    }
}

/// Stored trajectories of a cloud with per-step coefficient records.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloudPath {
    grid: TimeGrid,
    dim: usize,
    n: usize,
    values: Vec<f64>,
    drift: Vec<f64>,
    sigma_own: Vec<f64>,
    sigma_common: Option<Vec<f64>>,
    common: Option<BrownianPath>,
}

/// `N` independent particles, each with its own Brownian driver.
pub fn simulate_particle_system(
    b: &CoefficientSpec,
    sigma: &CoefficientSpec,
    n: usize,
    y0: &InitialLaw,
    grid: TimeGrid,
    dim: usize,
    seeds: &SeedPolicy,
    replication: u64,
) -> Result<ParticleCloudPath> {
    let spec = CloudSpec::full(y0.clone(), b.clone(), sigma.clone());
    record(&spec, n, dim, grid, None, seeds, replication)
}

/// `N` particles sharing the common path `W^0`, each with its own `W^{1,l}`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_conditional_particle_system(
    b: &CoefficientSpec,
    sigma0: &CoefficientSpec,
    sigma1: &CoefficientSpec,
    n: usize,
    y0: &InitialLaw,
    common: &BrownianPath,
    seeds: &SeedPolicy,
    replication: u64,
) -> Result<ParticleCloudPath> {
    let spec = CloudSpec::conditional(y0.clone(), b.clone(), sigma0.clone(), sigma1.clone());
    record(&spec, n, common.dim(), *common.grid(), Some(common), seeds, replication)
}

impl CloudSpec {
    /// Simulate and store the whole path. Conditional specs need `common`.
    pub fn simulate(
        &self,
        n: usize,
        dim: usize,
        grid: TimeGrid,
        common: Option<&BrownianPath>,
        seeds: &SeedPolicy,
        replication: u64,
    ) -> Result<ParticleCloudPath> {
        record(self, n, dim, grid, common, seeds, replication)
    }
}

fn record(
    spec: &CloudSpec,
    n: usize,
    dim: usize,
    grid: TimeGrid,
    common: Option<&BrownianPath>,
    seeds: &SeedPolicy,
    replication: u64,
) -> Result<ParticleCloudPath> {
    match (spec.is_conditional(), common) {
        (true, None) => return Err(Error::invalid("conditional cloud needs a common path")),
        (true, Some(w)) if !w.same_grid(&grid) || w.dim() != dim => {
            return Err(Error::invalid("common path does not match the requested grid or dimension"))
        }
        _ => {}
    }
    let common = if spec.is_conditional() { common } else { None };
    let mut stepper = CloudStepper::new(spec, n, dim, grid, seeds, replication)?;
    let m = grid.steps();
    let nd = n * dim;
    let ndd = nd * dim;
    let mut out = ParticleCloudPath {
        grid,
        dim,
        n,
        values: Vec::with_capacity((m + 1) * nd),
        drift: Vec::with_capacity(m * nd),
        sigma_own: Vec::with_capacity(m * ndd),
        sigma_common: common.map(|_| Vec::with_capacity(m * ndd)),
        common: common.cloned(),
    };
    out.values.extend_from_slice(stepper.points());
    for i in 0..m {
        stepper.evaluate(common.map(|w| w.value(i)));
        let v = stepper.view();
        out.drift.extend_from_slice(v.drift);
        out.sigma_own.extend_from_slice(v.sigma_own);
        if let (Some(rec), Some(s)) = (out.sigma_common.as_mut(), v.sigma_common) {
            rec.extend_from_slice(s);
        }
        stepper.advance(common.map(|w| w.increment(i)))?;
        out.values.extend_from_slice(stepper.points());
    }
    Ok(out)
}

impl ParticleCloudPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn is_conditional(&self) -> bool {
        self.sigma_common.is_some()
    }

    pub fn common_path(&self) -> Option<&BrownianPath> {
        self.common.as_ref()
    }

    /// All particle positions at node `i`, row-major.
    pub fn points(&self, i: usize) -> &[f64] {
        let nd = self.n * self.dim;
        &self.values[i * nd..(i + 1) * nd]
    }

    pub fn particle(&self, i: usize, l: usize) -> &[f64] {
        &self.points(i)[l * self.dim..(l + 1) * self.dim]
    }

    pub fn measure(&self, i: usize) -> EmpiricalMeasure {
        EmpiricalMeasure::new(self.dim, self.points(i).to_vec()).expect("cloud is non-empty")
    }

    /// Points and coefficients at a left node `i < M`.
    pub fn view(&self, i: usize) -> CloudView<'_> {
        assert!(i < self.grid.steps(), "no coefficients recorded at the terminal node");
        let nd = self.n * self.dim;
        let ndd = nd * self.dim;
        CloudView {
            dim: self.dim,
            points: self.points(i),
            drift: &self.drift[i * nd..(i + 1) * nd],
            sigma_own: &self.sigma_own[i * ndd..(i + 1) * ndd],
            sigma_common: self.sigma_common.as_ref().map(|s| &s[i * ndd..(i + 1) * ndd]),
        }
    }
}
