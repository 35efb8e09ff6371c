//! Evaluators over fully stored paths.

use super::engine::{ChainEngine, CloudMode, InputShape, NoiseCount, ProcessStep, StepInput};
use super::report::{Discretization, ExpansionReport, TheoremId};
use crate::error::{Error, Result};
use crate::functional::ItoRandomField;
use crate::model::{BrownianPath, MeasureView};
use crate::sde::{ParticleCloudPath, StatePath};

/// Stored inputs for one expansion.
#[derive(Debug, Clone, Copy)]
pub struct PathInputs<'a> {
    pub process: Option<&'a StatePath>,
    pub cloud: Option<&'a ParticleCloudPath>,
    pub w0: &'a BrownianPath,
    pub w1: Option<&'a BrownianPath>,
}

/// Run `theorem` over stored paths. All paths must share `w0`'s grid.
pub fn expand(theorem: TheoremId, field: &ItoRandomField, inputs: PathInputs<'_>) -> Result<ExpansionReport> {
    let PathInputs {
        process,
        cloud,
        w0,
        w1,
    } = inputs;
    let grid = *w0.grid();
    let d = field.dim();
    if w0.dim() != d || w1.is_some_and(|w| w.dim() != d || w.grid() != &grid) {
        return Err(Error::invalid("driving paths do not match the field dimension or grid"));
    }
    if let Some(x) = process {
        if x.grid() != &grid || x.dim() != d {
            return Err(Error::invalid("process grid or dimension differs from the driving path"));
        }
        if x.is_two_noise() && w1.is_none() {
            return Err(Error::invalid("two-noise process needs W^1"));
        }
    }
    if let Some(c) = cloud {
        if c.grid() != &grid || c.dim() != d {
            return Err(Error::invalid("cloud grid or dimension differs from the driving path"));
        }
        if let Some(common) = c.common_path() {
            if common.increments() != w0.increments() {
                return Err(Error::invalid("conditional cloud was driven by a different W^0"));
            }
        }
    }
    let shape = InputShape {
        process: process.map(|x| if x.is_two_noise() { NoiseCount::Two } else { NoiseCount::One }),
        cloud: cloud.map(|c| {
            if c.is_conditional() {
                CloudMode::Conditional
            } else {
                CloudMode::Full
            }
        }),
    };
    let mut engine = ChainEngine::new(theorem, field, grid, shape)?;
    engine.begin(process.map(|x| x.value(0)), cloud.map(|c| MeasureView::new(d, c.points(0))))?;
    for i in 0..grid.steps() {
        let step = StepInput {
            process: process.map(|x| ProcessStep {
                x: x.value(i),
                beta: x.beta(i),
                gamma0: x.gamma0(i),
                gamma1: x.gamma1(i),
            }),
            cloud: cloud.map(|c| c.view(i)),
            dw0: w0.increment(i),
            dw1: w1.map(|w| w.increment(i)),
        };
        engine.step(&step)?;
    }
    let m = grid.steps();
    engine.finish(
        process.map(|x| x.terminal()),
        cloud.map(|c| MeasureView::new(d, c.points(m))),
        Discretization::default(),
    )
}

fn single(
    theorem: TheoremId,
    field: &ItoRandomField,
    x: Option<&StatePath>,
    cloud: Option<&ParticleCloudPath>,
    w: &BrownianPath,
) -> Result<ExpansionReport> {
    expand(
        theorem,
        field,
        PathInputs {
            process: x,
            cloud,
            w0: w,
            w1: None,
        },
    )
}

/// Classical expansion of `V_t(X_t)` for a field without measure dependence.
/// `X` and the field share `w`.
pub fn expand_ito_wentzell_classic(field: &ItoRandomField, x: &StatePath, w: &BrownianPath) -> Result<ExpansionReport> {
    single(TheoremId::IwClassic, field, Some(x), None, w)
}

/// Same expansion under the weaker regularity hypotheses; numerically identical.
pub fn expand_ito_wentzell_reduced(field: &ItoRandomField, x: &StatePath, w: &BrownianPath) -> Result<ExpansionReport> {
    single(TheoremId::IwReduced, field, Some(x), None, w)
}

/// `u_t(X_t, mu_t)` for a deterministic functional along a full-flow cloud.
/// `w` is the noise driving `X`.
pub fn expand_ito_lions(
    u: &ItoRandomField,
    x: &StatePath,
    cloud: &ParticleCloudPath,
    w: &BrownianPath,
) -> Result<ExpansionReport> {
    single(TheoremId::IlFull, u, Some(x), Some(cloud), w)
}

/// `u_t(mu_t)` for an x-free field driven by `w`, independent of the cloud.
pub fn expand_full_flow_measure(
    field: &ItoRandomField,
    cloud: &ParticleCloudPath,
    w: &BrownianPath,
) -> Result<ExpansionReport> {
    single(TheoremId::IwlFullMeasure, field, None, Some(cloud), w)
}

/// `u_t(X_t, mu_t)` with `X` and the field sharing `w`.
pub fn expand_full_flow_joint(
    field: &ItoRandomField,
    x: &StatePath,
    cloud: &ParticleCloudPath,
    w: &BrownianPath,
) -> Result<ExpansionReport> {
    single(TheoremId::IwlFullJoint, field, Some(x), Some(cloud), w)
}

fn conditional(
    theorem: TheoremId,
    field: &ItoRandomField,
    x: Option<&StatePath>,
    cloud: &ParticleCloudPath,
    w0: &BrownianPath,
    w1: &BrownianPath,
) -> Result<ExpansionReport> {
    expand(
        theorem,
        field,
        PathInputs {
            process: x,
            cloud: Some(cloud),
            w0,
            w1: Some(w1),
        },
    )
}

/// Deterministic functional along a conditional cloud, `X` driven by `(W^0, W^1)`.
pub fn expand_conditional_ito_lions(
    u: &ItoRandomField,
    x: &StatePath,
    cloud: &ParticleCloudPath,
    w0: &BrownianPath,
    w1: &BrownianPath,
) -> Result<ExpansionReport> {
    conditional(TheoremId::IlConditional, u, Some(x), cloud, w0, w1)
}

/// x-free two-noise field along a conditional cloud sharing `w0`.
pub fn expand_conditional_measure(
    field: &ItoRandomField,
    cloud: &ParticleCloudPath,
    w0: &BrownianPath,
    w1: &BrownianPath,
) -> Result<ExpansionReport> {
    conditional(TheoremId::IwlConditionalMeasure, field, None, cloud, w0, w1)
}

/// Two-noise field, `X` on `(w0, w1)`, conditional cloud sharing `w0`.
pub fn expand_conditional_joint(
    field: &ItoRandomField,
    x: &StatePath,
    cloud: &ParticleCloudPath,
    w0: &BrownianPath,
    w1: &BrownianPath,
) -> Result<ExpansionReport> {
    conditional(TheoremId::IwlConditionalJoint, field, Some(x), cloud, w0, w1)
}
