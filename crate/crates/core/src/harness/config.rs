use serde::{Deserialize, Serialize};

use crate::chain::{ChainEngine, CloudMode, InputShape, NoiseCount, TermId, TheoremId};
use crate::error::{Error, Result};
use crate::functional::{make_ito_field, FieldKind, ItoRandomField, MeasureFunctional, MAX_DIM};
use crate::model::TimeGrid;

use super::run::LadderPoint;
use crate::sde::{CloudSpec, CoefficientSpec, InitialLaw, ProcessSpec, Shape, Tensor};

pub const SCHEMA_VERSION: u32 = 1;

/// A complete, reproducible experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub theorem: TheoremId,
    #[serde(default = "unit_horizon")]
    pub horizon: f64,
    #[serde(default = "scalar_dim")]
    pub dim: usize,
    pub replications: usize,
    pub seed: u64,
    pub ladder: Ladder,
    pub field: FieldKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<ProcessSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud: Option<CloudSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mollification: Option<MollificationSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Test hook: perturbs one term after evaluation. Never read from files.
    #[serde(skip)]
    #[doc(hidden)]
    pub fault: Option<Fault>,
}

fn unit_horizon() -> f64 {
    1.0
}

fn scalar_dim() -> usize {
    1
}

fn single_particle() -> Vec<usize> {
    vec![1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ladder {
    /// Time steps `M`.
    pub steps: Vec<usize>,
    /// Cloud sizes `N`.
    #[serde(default = "single_particle")]
    pub particles: Vec<usize>,
    #[serde(default, skip_serializing_if = "LadderShape::is_grid")]
    pub shape: LadderShape,
}

/// Which `(M, N)` pairs a study visits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LadderShape {
    /// Every combination.
    #[default]
    Grid,
    /// The `M` ladder at the largest `N` and the `N` ladder at the largest `M`;
    /// exactly the rows the two slope fits read.
    Cross,
}

impl LadderShape {
    fn is_grid(&self) -> bool {
        *self == LadderShape::Grid
    }
}

impl Ladder {
    /// Ladder points in study order, `M` outer.
    pub fn points(&self) -> Vec<LadderPoint> {
        let max_m = self.steps.iter().copied().max().unwrap_or(0);
        let max_n = self.particles.iter().copied().max().unwrap_or(0);
        let mut out = Vec::new();
        for &steps in &self.steps {
            for &particles in &self.particles {
                if self.shape == LadderShape::Grid || steps == max_m || particles == max_n {
                    out.push(LadderPoint { steps, particles });
                }
            }
        }
        out
    }
}

/// Mollified-projection study of a single functional on a random cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollificationSpec {
    pub functional: MeasureFunctional,
    pub particles: usize,
    /// Kernel levels `n`.
    pub levels: Vec<u32>,
    pub draws: usize,
    #[serde(default = "standard_gaussian")]
    pub y0: InitialLaw,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Tensor>,
}

fn standard_gaussian() -> InitialLaw {
    InitialLaw::gaussian(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedSum {
    pub value: f64,
    pub se_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationCheck {
    pub term: TermId,
    pub expected: f64,
    pub tolerance: f64,
    /// Compare the shift of the mean residual instead of the ablated mean.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub shift: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactTerm {
    pub term: TermId,
    pub value: f64,
    pub tolerance: f64,
}

/// Pass/fail criteria; every absent entry is skipped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rms_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rms_range: Option<[f64; 2]>,
    /// Every replication's `|residual|` bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_abs_residual: Option<f64>,
    /// `|mean residual| <= k * SE`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_residual_se: Option<f64>,
    /// Window for the RMS convergence rate in `M` (at the largest `N`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_m: Option<[f64; 2]>,
    /// Window for the RMS convergence rate in `N` (at the largest `M`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_n: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub monotone_in_n: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_term_sum: Option<ExpectedSum>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ablation: Vec<AblationCheck>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exact_terms: Vec<ExactTerm>,
    /// Mollification errors must strictly decrease along the level ladder.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub mollification_decreasing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[doc(hidden)]
pub enum Fault {
    ScaleTerm { term: TermId, factor: f64 },
}

fn config_error(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

/// 1-based line and column of a byte offset.
fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, col)
}

impl ExperimentConfig {
    /// Parse and validate a TOML document. Errors name the offending key path.
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let de = toml::de::Deserializer::parse(src).map_err(|e| {
            let message = match e.span() {
                Some(s) => {
                    let (l, c) = line_col(src, s.start);
                    format!("line {l}, column {c}: {}", e.message())
                }
                None => e.message().to_string(),
            };
            config_error("", message)
        })?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let message = match inner.span() {
                Some(s) => {
                    let (l, c) = line_col(src, s.start);
                    format!("line {l}, column {c}: {}", inner.message())
                }
                None => inner.message().to_string(),
            };
            config_error(&path, message)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("config does not serialize: {e}")))
    }

    pub fn grid(&self, steps: usize) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, steps)
    }

    pub fn build_field(&self) -> Result<ItoRandomField> {
        make_ito_field(&self.field, self.dim)
    }

    pub fn input_shape(&self) -> InputShape {
        InputShape {
            process: self.theorem.has_process().then(|| {
                if self.theorem.is_conditional() {
                    NoiseCount::Two
                } else {
                    NoiseCount::One
                }
            }),
            cloud: self.theorem.has_cloud().then(|| {
                if self.theorem.is_conditional() {
                    CloudMode::Conditional
                } else {
                    CloudMode::Full
                }
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_error(
                "schema_version",
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if self.replications == 0 {
            return Err(config_error("replications", "need at least one replication"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(config_error("horizon", "must be positive and finite"));
        }
        if self.dim == 0 || self.dim > MAX_DIM {
            return Err(config_error("dim", format!("must lie in 1..={MAX_DIM}")));
        }
        check_ladder("ladder.steps", &self.ladder.steps)?;
        check_ladder("ladder.particles", &self.ladder.particles)?;
        let d = self.dim;
        let field = self.build_field().map_err(|e| config_error("field", e.to_string()))?;
        match (&self.process, self.theorem.has_process()) {
            (None, true) => return Err(config_error("process", format!("{} needs a process", self.theorem))),
            (Some(_), false) => return Err(config_error("process", format!("{} takes no process", self.theorem))),
            (Some(p), true) => {
                p.x0.resolve(d).map_err(|e| config_error("process.x0", e.to_string()))?;
                resolve(&p.beta, Shape::Drift, d, "process.beta")?;
                resolve(&p.gamma, Shape::Diffusion, d, "process.gamma")?;
                if let Some(g1) = &p.gamma1 {
                    if !self.theorem.is_conditional() {
                        return Err(config_error("process.gamma1", "only two-noise expansions take gamma1"));
                    }
                    resolve(g1, Shape::Diffusion, d, "process.gamma1")?;
                }
            }
            (None, false) => {}
        }
        match (&self.cloud, self.theorem.has_cloud()) {
            (None, true) => return Err(config_error("cloud", format!("{} needs a cloud", self.theorem))),
            (Some(_), false) => return Err(config_error("cloud", format!("{} takes no cloud", self.theorem))),
            (Some(c), true) => {
                if c.is_conditional() != self.theorem.is_conditional() {
                    return Err(config_error(
                        "cloud.sigma0",
                        if self.theorem.is_conditional() {
                            "conditional expansions need a common diffusion sigma0"
                        } else {
                            "sigma0 given for a full-flow expansion"
                        },
                    ));
                }
                c.y0.resolve(d).map_err(|e| config_error("cloud.y0", e.to_string()))?;
                resolve(&c.drift, Shape::Drift, d, "cloud.drift")?;
                resolve(&c.sigma, Shape::Diffusion, d, "cloud.sigma")?;
                if let Some(s0) = &c.sigma0 {
                    resolve(s0, Shape::Diffusion, d, "cloud.sigma0")?;
                }
            }
            (None, false) => {}
        }
        if !self.theorem.has_cloud() && self.ladder.particles != [1] {
            return Err(config_error("ladder.particles", "expansions without a cloud take no particle ladder"));
        }
        let grid = self.grid(self.ladder.steps[0]).map_err(|e| config_error("horizon", e.to_string()))?;
        ChainEngine::new(self.theorem, &field, grid, self.input_shape()).map_err(|e| config_error("field", e.to_string()))?;

        let schema = self.theorem.schema();
        let t = &self.tolerances;
        let listed = t
            .ablation
            .iter()
            .enumerate()
            .map(|(i, a)| (format!("tolerances.ablation[{i}].term"), a.term))
            .chain(t.exact_terms.iter().enumerate().map(|(i, e)| (format!("tolerances.exact_terms[{i}].term"), e.term)));
        for (path, term) in listed {
            if !schema.contains(&term) {
                return Err(config_error(&path, format!("{term} is not a term of {}", self.theorem)));
            }
        }
        for (name, w) in [("tolerances.slope_m", t.slope_m), ("tolerances.slope_n", t.slope_n), ("tolerances.rms_range", t.rms_range)] {
            if let Some([lo, hi]) = w {
                if !(lo <= hi) {
                    return Err(config_error(name, "window lower bound exceeds upper bound"));
                }
            }
        }
        if let Some(m) = &self.mollification {
            m.functional
                .validate(d)
                .map_err(|e| config_error("mollification.functional", e.to_string()))?;
            if m.particles == 0 || m.draws == 0 {
                return Err(config_error("mollification", "particles and draws must be positive"));
            }
            if m.levels.is_empty() || m.levels.contains(&0) || m.levels.windows(2).any(|w| w[0] >= w[1]) {
                return Err(config_error("mollification.levels", "levels must be positive and strictly increasing"));
            }
            m.y0.resolve(d).map_err(|e| config_error("mollification.y0", e.to_string()))?;
            if let Some(x) = &m.x {
                x.resolve_vector(d).map_err(|e| config_error("mollification.x", e.to_string()))?;
            }
        }
        Ok(())
    }
}

fn resolve(c: &CoefficientSpec, shape: Shape, d: usize, path: &str) -> Result<()> {
    c.resolve(shape, d).map(|_| ()).map_err(|e| config_error(path, e.to_string()))
}

fn check_ladder(path: &str, values: &[usize]) -> Result<()> {
    if values.is_empty() {
        return Err(config_error(path, "ladder must not be empty"));
    }
    if values.contains(&0) {
        return Err(config_error(path, "ladder entries must be positive"));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(config_error(path, "ladder must be strictly increasing"));
    }
    Ok(())
}
