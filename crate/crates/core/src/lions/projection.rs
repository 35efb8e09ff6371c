//! Empirical projection `u^N(x^1..x^N) = u(mu^N)` and finite-difference Lions
//! derivatives through `d_{x^j} u^N = (1/N) d_mu u(mu^N, x^j)` and
//! `d_{x^k} d_{x^j} u^N = (1/N) d_v d_mu u(x^j) 1_{j=k} + (1/N^2) d^2_mu u(x^j, x^k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::MeasureFunctional;
use crate::model::{EmpiricalMeasure, MeasureView};

/// Central differences with step `base * (1 + |anchor|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteDifferenceScheme {
    pub base_step: f64,
}

impl Default for FiniteDifferenceScheme {
    fn default() -> Self {
        Self { base_step: 1e-4 }
    }
}

impl FiniteDifferenceScheme {
    pub fn new(base_step: f64) -> Result<Self> {
        if !(base_step.is_finite() && base_step > 0.0) {
            return Err(Error::invalid(format!("finite-difference step must be positive, got {base_step}")));
        }
        Ok(Self { base_step })
    }

    pub fn step(&self, anchor: f64) -> f64 {
        self.base_step * (1.0 + anchor.abs())
    }

    fn check(&self) -> Result<()> {
        Self::new(self.base_step).map(|_| ())
    }
}

/// `u(x, mu^N)` for the uniform measure on `points`.
pub fn empirical_projection(f: &MeasureFunctional, points: &EmpiricalMeasure, x: Option<&[f64]>) -> f64 {
    let zeros = vec![0.0; points.dim()];
    f.prepare(x.unwrap_or(&zeros), points.view()).value
}

fn projection(f: &MeasureFunctional, x: &[f64], dim: usize, pts: &[f64]) -> f64 {
    f.prepare(x, MeasureView::new(dim, pts)).value
}

/// `N` times the central-difference gradient of `u^N` in `x^j`, an estimate of
/// `d_mu u(mu^N, x^j)`.
pub fn numeric_lions_derivative(
    f: &MeasureFunctional,
    x: &[f64],
    mu: &EmpiricalMeasure,
    j: usize,
    scheme: &FiniteDifferenceScheme,
) -> Result<Vec<f64>> {
    scheme.check()?;
    let (n, d) = (mu.len(), mu.dim());
    if j >= n {
        return Err(Error::invalid(format!("particle index {j} out of range for N = {n}")));
    }
    let mut pts = mu.points().to_vec();
    let mut out = vec![0.0; d];
    for a in 0..d {
        let idx = j * d + a;
        let anchor = pts[idx];
        let h = scheme.step(anchor);
        pts[idx] = anchor + h;
        let up = projection(f, x, d, &pts);
        pts[idx] = anchor - h;
        let down = projection(f, x, d, &pts);
        pts[idx] = anchor;
        out[a] = n as f64 * (up - down) / (2.0 * h);
    }
    Ok(out)
}

/// Second-order estimates at particles `(j, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondLionsEstimate {
    /// `d^2_mu u(mu^N, x^j, x^k)`, row-major `d x d`.
    pub dmu2: Vec<f64>,
    /// `d_v d_mu u(mu^N, x^j)` when `j == k`.
    pub dv_dmu: Option<Vec<f64>>,
}

/// Mixed partial `d_{p_b} d_{p_a} u^N` at flat coordinates `p_a`, `p_b`.
fn mixed(f: &MeasureFunctional, x: &[f64], d: usize, pts: &mut [f64], ia: usize, ib: usize, scheme: &FiniteDifferenceScheme) -> f64 {
    let (xa, xb) = (pts[ia], pts[ib]);
    let (ha, hb) = (scheme.step(xa), scheme.step(xb));
    if ia == ib {
        let mid = projection(f, x, d, pts);
        pts[ia] = xa + ha;
        let up = projection(f, x, d, pts);
        pts[ia] = xa - ha;
        let down = projection(f, x, d, pts);
        pts[ia] = xa;
        return (up - 2.0 * mid + down) / (ha * ha);
    }
    let mut eval = |sa: f64, sb: f64| {
        pts[ia] = xa + sa * ha;
        pts[ib] = xb + sb * hb;
        let v = projection(f, x, d, pts);
        pts[ia] = xa;
        pts[ib] = xb;
        v
    };
    (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * ha * hb)
}

/// Finite-difference second Lions derivatives through the projection identity.
///
/// Off the diagonal (`j != k`) this is `N^2 d_{x^k} d_{x^j} u^N`. On the diagonal
/// the `O(1/N)` contamination `(1/N) d^2_mu u(x^j, x^j)` is removed using a
/// cross derivative between `x^j` and an identical twin point appended to a
/// doubled cloud (the doubled cloud has the same empirical measure). Functionals
/// whose closed-form `d^2_mu` vanishes skip the correction.
pub fn numeric_lions_second(
    f: &MeasureFunctional,
    x: &[f64],
    mu: &EmpiricalMeasure,
    j: usize,
    k: usize,
    scheme: &FiniteDifferenceScheme,
) -> Result<SecondLionsEstimate> {
    scheme.check()?;
    let (n, d) = (mu.len(), mu.dim());
    if j >= n || k >= n {
        return Err(Error::invalid(format!("particle indices ({j}, {k}) out of range for N = {n}")));
    }
    let nf = n as f64;
    if j != k {
        let mut pts = mu.points().to_vec();
        let mut dmu2 = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..d {
                dmu2[a * d + b] = nf * nf * mixed(f, x, d, &mut pts, j * d + a, k * d + b, scheme);
            }
        }
        return Ok(SecondLionsEstimate { dmu2, dv_dmu: None });
    }

    let mut dmu2 = vec![0.0; d * d];
    if f.has_second_lions() {
        let mut doubled = mu.points().to_vec();
        doubled.extend_from_slice(mu.points());
        let twin = j + n;
        let n2 = 2.0 * nf;
        for a in 0..d {
            for b in 0..d {
                dmu2[a * d + b] = n2 * n2 * mixed(f, x, d, &mut doubled, j * d + a, twin * d + b, scheme);
            }
        }
    }
    let mut pts = mu.points().to_vec();
    let mut dv = vec![0.0; d * d];
    for a in 0..d {
        for b in 0..d {
            let raw = nf * mixed(f, x, d, &mut pts, j * d + a, j * d + b, scheme);
            dv[a * d + b] = raw - dmu2[a * d + b] / nf;
        }
    }
    Ok(SecondLionsEstimate { dmu2, dv_dmu: Some(dv) })
}
