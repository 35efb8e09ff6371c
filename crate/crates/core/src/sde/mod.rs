//! Euler–Maruyama simulation of the driving process `X` and of particle clouds
//! in the full-flow and conditional (common-noise) settings.
//!
//! Every update is the left-point recursion
//! `next = (y + b dt) + sigma0 dW^0 + sigma dW^1`, evaluated in that order so
//! that a zero common diffusion reproduces the full-flow cloud bit for bit.

mod cloud;
mod coefficient;
mod integrability;
mod law;
mod process;

pub use cloud::{
    simulate_conditional_particle_system, simulate_particle_system, CloudSpec, CloudStepper, CloudView,
    ParticleCloudPath,
};
pub use coefficient::{Channel, Coefficient, CoefficientSpec, Shape, Tensor};
pub use integrability::{coefficient_integrability_report, Estimate, IntegrabilityReport};
pub use law::{InitialLaw, Sampler};
pub use process::{simulate_ito_process, Driving, ProcessSpec, StatePath};

use crate::error::{Error, Result};

/// `next += s * dw` for a row-major `d x d` matrix `s`.
#[inline]
pub(crate) fn diffuse(next: &mut [f64], s: &[f64], dw: &[f64]) {
    let d = next.len();
    for a in 0..d {
        let row = &s[a * d..(a + 1) * d];
        let mut acc = 0.0;
        for c in 0..d {
            acc += row[c] * dw[c];
        }
        next[a] += acc;
    }
}

pub(crate) fn check_finite(v: &[f64], step: usize, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            step,
            what: what.to_string(),
        })
    }
}
