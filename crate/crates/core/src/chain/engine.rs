//! Streaming term accumulator shared by the stored-path evaluators and the
//! Monte Carlo harness. Each call to [`ChainEngine::step`] consumes the state
//! at a left node and adds every term's left-point contribution.

use super::report::{Discretization, ExpansionReport, TermId, TheoremId, ALL_TERMS};
use crate::error::{Error, Result};
use crate::functional::{FieldTrajectory, ItoRandomField, Prepared, Univariate, MAX_DIM};
use crate::linalg::{dot, mat_vec, trace_h_sst, trace_m_g_st, zero, CompensatedSum};
use crate::model::{MeasureView, TimeGrid};
use crate::sde::{Channel, CloudView};

/// What the caller will feed: whether there is a process `X` (and whether it
/// has a second noise), and whether there is a cloud (and whether it is conditional).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputShape {
    pub process: Option<NoiseCount>,
    pub cloud: Option<CloudMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseCount {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudMode {
    Full,
    Conditional,
}

/// `X` at a left node with the coefficients used on the following step.
#[derive(Debug, Clone, Copy)]
pub struct ProcessStep<'a> {
    pub x: &'a [f64],
    pub beta: &'a [f64],
    pub gamma0: &'a [f64],
    pub gamma1: Option<&'a [f64]>,
}

/// Everything needed for one left-point step. `dw0` drives `X`, the field's
/// `w0` channel and (in conditional mode) the common cloud noise; `dw1` drives
/// `X`'s second noise and the field's `w1` channel.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub process: Option<ProcessStep<'a>>,
    pub cloud: Option<CloudView<'a>>,
    pub dw0: &'a [f64],
    pub dw1: Option<&'a [f64]>,
}

fn slot(t: TermId) -> usize {
    ALL_TERMS.iter().position(|&s| s == t).expect("term listed")
}

pub struct ChainEngine<'f> {
    theorem: TheoremId,
    field: &'f ItoRandomField,
    shape: InputShape,
    trajectory: FieldTrajectory,
    dim: usize,
    dt: f64,
    want: [bool; ALL_TERMS.len()],
    acc: [CompensatedSum; ALL_TERMS.len()],
    u0: Option<f64>,
    particles: usize,
    origin: Vec<f64>,
    prepared: Vec<Prepared>,
}

impl<'f> ChainEngine<'f> {
    pub fn new(theorem: TheoremId, field: &'f ItoRandomField, grid: TimeGrid, shape: InputShape) -> Result<Self> {
        check_preconditions(theorem, field, shape)?;
        let mut want = [false; ALL_TERMS.len()];
        for &t in theorem.schema() {
            want[slot(t)] = true;
        }
        let dim = field.dim();
        Ok(Self {
            theorem,
            field,
            shape,
            trajectory: field.start(grid),
            dim,
            dt: grid.dt(),
            want,
            acc: [CompensatedSum::new(); ALL_TERMS.len()],
            u0: None,
            particles: 0,
            origin: vec![0.0; dim],
            prepared: Vec::with_capacity(field.len()),
        })
    }

    pub fn theorem(&self) -> TheoremId {
        self.theorem
    }

    pub fn trajectory(&self) -> &FieldTrajectory {
        &self.trajectory
    }

    fn wants(&self, t: TermId) -> bool {
        self.want[slot(t)]
    }

    fn add(&mut self, t: TermId, v: f64) {
        self.acc[slot(t)].add(v);
    }

    fn frozen_value(&self, x: Option<&[f64]>, mu: Option<MeasureView<'_>>, i: usize) -> Result<f64> {
        let x = self.argument(x)?;
        let origin = MeasureView::new(self.dim, &self.origin);
        let mu = self.measure(mu, origin)?;
        let values: Vec<f64> = self
            .field
            .components()
            .iter()
            .map(|c| c.functional.prepare(x, mu).value)
            .collect();
        Ok(self.trajectory.value_at(&values, i))
    }

    fn argument<'a>(&'a self, x: Option<&'a [f64]>) -> Result<&'a [f64]> {
        match (self.shape.process, x) {
            (Some(_), Some(x)) if x.len() == self.dim => Ok(x),
            (Some(_), Some(_)) => Err(Error::invalid("process dimension differs from the field's")),
            (Some(_), None) => Err(Error::invalid("process state missing")),
            (None, _) => Ok(&self.origin),
        }
    }

    fn measure<'a>(&self, mu: Option<MeasureView<'a>>, origin: MeasureView<'a>) -> Result<MeasureView<'a>> {
        match (self.shape.cloud, mu) {
            (Some(_), Some(mu)) if mu.dim == self.dim && !mu.is_empty() => Ok(mu),
            (Some(_), Some(_)) => Err(Error::invalid("cloud dimension differs from the field's")),
            (Some(_), None) => Err(Error::invalid("cloud state missing")),
            (None, _) => Ok(origin),
        }
    }

    /// Record `u_0(X_0, mu_0)`.
    pub fn begin(&mut self, x0: Option<&[f64]>, mu0: Option<MeasureView<'_>>) -> Result<()> {
        if self.u0.is_some() {
            return Err(Error::invalid("engine already started"));
        }
        self.particles = mu0.map_or(0, |m| m.len());
        self.u0 = Some(self.frozen_value(x0, mu0, 0)?);
        Ok(())
    }

    pub fn step(&mut self, input: &StepInput<'_>) -> Result<()> {
        if self.u0.is_none() {
            return Err(Error::invalid("engine not started"));
        }
        let i = self.trajectory.steps_taken();
        if i >= self.trajectory.grid().steps() {
            return Err(Error::invalid("engine already at the horizon"));
        }
        let d = self.dim;
        if input.dw0.len() != d || input.dw1.is_some_and(|w| w.len() != d) {
            return Err(Error::invalid("increment dimension differs from the field's"));
        }
        if self.field.is_two_noise() && input.dw1.is_none() {
            return Err(Error::invalid("two-noise field stepped without a W^1 increment"));
        }
        if let (Some(NoiseCount::Two), Some(p)) = (self.shape.process, input.process) {
            if p.gamma1.is_none() || input.dw1.is_none() {
                return Err(Error::invalid("two-noise process stepped without gamma1 or dW^1"));
            }
        }
        if let Some(c) = input.cloud {
            if c.len() != self.particles {
                return Err(Error::invalid("cloud size changed between steps"));
            }
            if (self.shape.cloud == Some(CloudMode::Conditional)) != c.sigma_common.is_some() {
                return Err(Error::invalid("cloud mode differs from the declared shape"));
            }
        }
        self.trajectory.advance(self.field, input.dw0, input.dw1);

        let origin = std::mem::take(&mut self.origin);
        let result = self.accumulate(i, input, &origin);
        self.origin = origin;
        result
    }

    fn accumulate(&mut self, i: usize, input: &StepInput<'_>, origin: &[f64]) -> Result<()> {
        let d = self.dim;
        let dd = d * d;
        let dt = self.dt;
        let field = self.field;
        let x = match (self.shape.process, input.process) {
            (Some(_), Some(p)) if p.x.len() == d => p.x,
            (Some(_), _) => return Err(Error::invalid("process state missing or of the wrong dimension")),
            (None, _) => origin,
        };
        let mu = self.measure(
            input.cloud.map(|c| MeasureView::new(c.dim, c.points)),
            MeasureView::new(d, origin),
        )?;
        let tr = &self.trajectory;
        let a: Vec<f64> = tr.a(i).to_vec();
        let alpha: Vec<f64> = tr.alpha(i).to_vec();
        let k_len = field.len();

        let mut prepared = std::mem::take(&mut self.prepared);
        prepared.clear();
        prepared.extend(field.components().iter().map(|c| c.functional.prepare(x, mu)));

        // Field drift and noise at the frozen argument.
        let mut phi = 0.0;
        let mut psi0 = 0.0;
        let mut psi1 = 0.0;
        for k in 0..k_len {
            let f = prepared[k].value;
            phi += alpha[k] * f;
            match self.trajectory.channel(k) {
                Some(Channel::W0) => psi0 += f * dot(self.trajectory.eta(i, k), input.dw0),
                Some(Channel::W1) => {
                    if let Some(dw1) = input.dw1 {
                        psi1 += f * dot(self.trajectory.eta(i, k), dw1);
                    }
                }
                None => {}
            }
        }
        self.add(TermId::PhiDt, phi * dt);
        self.add(TermId::DtuDt, phi * dt);
        self.add(TermId::PsiDW, psi0);
        self.add(TermId::Psi0DW0, psi0);
        self.add(TermId::Psi1DW1, psi1);

        if let Some(p) = input.process {
            let mut gx = vec![0.0; d];
            let mut hx = vec![0.0; dd];
            for (k, c) in field.components().iter().enumerate() {
                c.functional.dx_add(&prepared[k], x, a[k], &mut gx);
                c.functional.dxx_add(&prepared[k], x, a[k], &mut hx);
            }
            let mut tmp = vec![0.0; d];
            self.add(TermId::DxuBetaDt, dot(&gx, p.beta) * dt);
            mat_vec(p.gamma0, input.dw0, &mut tmp);
            let g0 = dot(&gx, &tmp);
            self.add(TermId::DxuGammaDW, g0);
            self.add(TermId::DxuGamma0DW0, g0);
            let mut hess = trace_h_sst(&hx, p.gamma0, d);
            if let (Some(g1), Some(dw1)) = (p.gamma1, input.dw1) {
                mat_vec(g1, dw1, &mut tmp);
                self.add(TermId::DxuGamma1DW1, dot(&gx, &tmp));
                hess += trace_h_sst(&hx, g1, d);
            }
            self.add(TermId::HessXDt, 0.5 * hess * dt);

            // Cross-variation of the field noise with X.
            let mut cross0 = 0.0;
            let mut cross1 = 0.0;
            for (k, c) in field.components().iter().enumerate() {
                let (gamma, slot1) = match self.trajectory.channel(k) {
                    Some(Channel::W0) => (p.gamma0, false),
                    Some(Channel::W1) => match p.gamma1 {
                        Some(g1) => (g1, true),
                        None => continue,
                    },
                    None => continue,
                };
                let mut gk = vec![0.0; d];
                c.functional.dx_add(&prepared[k], x, 1.0, &mut gk);
                mat_vec(gamma, self.trajectory.eta(i, k), &mut tmp);
                let v = dot(&gk, &tmp);
                if slot1 {
                    cross1 += v;
                } else {
                    cross0 += v;
                }
            }
            self.add(TermId::DxpsiGammaDt, cross0 * dt);
            self.add(TermId::Dxpsi0Gamma0Dt, cross0 * dt);
            self.add(TermId::Dxpsi1Gamma1Dt, cross1 * dt);
        }

        if let Some(cloud) = input.cloud {
            self.measure_terms(i, input, &prepared, x, mu, cloud, &a);
        }
        self.prepared = prepared;
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn measure_terms(
        &mut self,
        i: usize,
        input: &StepInput<'_>,
        prepared: &[Prepared],
        x: &[f64],
        mu: MeasureView<'_>,
        cloud: CloudView<'_>,
        a: &[f64],
    ) {
        let d = self.dim;
        let dd = d * d;
        let dt = self.dt;
        let n = cloud.len();
        let inv_n = 1.0 / n as f64;
        let field = self.field;
        let need_dmu = self.wants(TermId::DmuBDt) || self.wants(TermId::Sigma0DmuDW0);
        let need_dv = self.wants(TermId::DvDmuSigmaDt);
        let need_dx_dmu = self.wants(TermId::DxDmuGamma0Dt) && input.process.is_some();
        let need_psi = self.wants(TermId::DmuPsi0Sigma0Dt)
            && (0..field.len()).any(|k| self.trajectory.channel(k) == Some(Channel::W0));
        let common = cloud.sigma_common;

        let mut drift = CompensatedSum::new();
        let mut common_noise = CompensatedSum::new();
        let mut second = CompensatedSum::new();
        let mut cross = CompensatedSum::new();
        let mut field_cross = CompensatedSum::new();
        let scalar: Option<Vec<(Univariate, f64)>> = if d == 1 && !need_dx_dmu && !need_psi && !general_loop_only() {
            field
                .components()
                .iter()
                .zip(prepared)
                .zip(a)
                .map(|((c, p), &ak)| c.functional.scalar_sensitivity(p, ak))
                .collect()
        } else {
            None
        };
        if let Some(kernels) = scalar {
            // Same operation order as the general loop below.
            let dw0 = input.dw0.first().copied().unwrap_or(0.0);
            for l in 0..n {
                let y = cloud.points[l];
                let mut g = 0.0;
                let mut h = 0.0;
                for (u, w) in &kernels {
                    g += w * u.d1(y);
                    h += w * u.d2(y);
                }
                let s0 = common.map(|s| s[l]);
                if need_dmu {
                    drift.add(g * cloud.drift[l]);
                    if let Some(s0) = s0 {
                        common_noise.add(g * (s0 * dw0));
                    }
                }
                if need_dv {
                    let sq = |s: f64| if h == 0.0 { 0.0 } else { h * (s * s) };
                    let mut t = sq(cloud.sigma_own[l]);
                    if let Some(s0) = s0 {
                        t += sq(s0);
                    }
                    second.add(t);
                }
            }
        } else {
            let mut g = [0.0; MAX_DIM];
            let mut h = [0.0; MAX_DIM * MAX_DIM];
            let mut m = vec![0.0; dd];
            let mut gk = vec![0.0; d];
            let mut tmp = vec![0.0; d];
            let mut s0dw = [0.0; MAX_DIM];
            for l in 0..n {
                let y = &cloud.points[l * d..(l + 1) * d];
                let s_own = &cloud.sigma_own[l * dd..(l + 1) * dd];
                let s_common = common.map(|s| &s[l * dd..(l + 1) * dd]);
                if need_dmu || need_dv {
                    zero(&mut g[..d]);
                    zero(&mut h[..dd]);
                    for (k, c) in field.components().iter().enumerate() {
                        match (need_dmu, need_dv) {
                            (true, true) => c.functional.dmu_dv_add(&prepared[k], x, mu, y, a[k], &mut g[..d], &mut h[..dd]),
                            (true, false) => c.functional.dmu_add(&prepared[k], x, mu, y, a[k], &mut g[..d]),
                            _ => c.functional.dv_dmu_add(&prepared[k], mu, y, a[k], &mut h[..dd]),
                        }
                    }
                }
                if need_dmu {
                    drift.add(dot(&g[..d], &cloud.drift[l * d..(l + 1) * d]));
                    if let Some(s0) = s_common {
                        mat_vec(s0, input.dw0, &mut s0dw[..d]);
                        common_noise.add(dot(&g[..d], &s0dw[..d]));
                    }
                }
                if need_dv {
                    let mut t = trace_h_sst(&h[..dd], s_own, d);
                    if let Some(s0) = s_common {
                        t += trace_h_sst(&h[..dd], s0, d);
                    }
                    second.add(t);
                }
                if let (true, Some(s0), Some(p)) = (need_dx_dmu, s_common, input.process) {
                    m.fill(0.0);
                    for (k, c) in field.components().iter().enumerate() {
                        c.functional.dx_dmu_add(&prepared[k], x, y, a[k], &mut m);
                    }
                    cross.add(trace_m_g_st(&m, p.gamma0, s0, d));
                }
                if let (true, Some(s0)) = (need_psi, s_common) {
                    for (k, c) in field.components().iter().enumerate() {
                        if self.trajectory.channel(k) != Some(Channel::W0) {
                            continue;
                        }
                        gk.fill(0.0);
                        c.functional.dmu_add(&prepared[k], x, mu, y, 1.0, &mut gk);
                        mat_vec(s0, self.trajectory.eta(i, k), &mut tmp);
                        field_cross.add(dot(&gk, &tmp));
                    }
                }
            }
        }
        self.add(TermId::DmuBDt, drift.value() * inv_n * dt);
        self.add(TermId::Sigma0DmuDW0, common_noise.value() * inv_n);
        self.add(TermId::DvDmuSigmaDt, 0.5 * second.value() * inv_n * dt);
        self.add(TermId::DxDmuGamma0Dt, cross.value() * inv_n * dt);
        self.add(TermId::DmuPsi0Sigma0Dt, field_cross.value() * inv_n * dt);

        if self.wants(TermId::Dmu2Sigma0Dt) && n > 1 {
            if let Some(s0) = common {
                let mut pairs = 0.0;
                for (k, c) in field.components().iter().enumerate() {
                    if a[k] != 0.0 {
                        pairs += a[k] * c.functional.pair_trace_sum(mu, s0);
                    }
                }
                let norm = (n * (n - 1)) as f64;
                self.add(TermId::Dmu2Sigma0Dt, 0.5 * pairs / norm * dt);
            }
        }
    }

    /// Close the expansion at the horizon.
    pub fn finish(
        self,
        x_terminal: Option<&[f64]>,
        mu_terminal: Option<MeasureView<'_>>,
        meta: Discretization,
    ) -> Result<ExpansionReport> {
        let u0 = self.u0.ok_or_else(|| Error::invalid("engine not started"))?;
        let m = self.trajectory.grid().steps();
        if self.trajectory.steps_taken() != m {
            return Err(Error::invalid(format!(
                "engine stopped after {} of {m} steps",
                self.trajectory.steps_taken()
            )));
        }
        let u_t = self.frozen_value(x_terminal, mu_terminal, m)?;
        let terms = self
            .theorem
            .schema()
            .iter()
            .map(|&t| (t, self.acc[slot(t)].value()))
            .collect();
        let meta = Discretization {
            steps: m,
            particles: self.particles,
            dt: self.dt,
            ..meta
        };
        ExpansionReport::new(self.theorem, u_t - u0, terms, meta)
    }
}

#[cfg(test)]
thread_local! {
    pub(crate) static GENERAL_LOOP_ONLY: std::cell::Cell<bool> = const { std::cell::Cell::new(false) };
}

#[inline]
fn general_loop_only() -> bool {
    #[cfg(test)]
    return GENERAL_LOOP_ONLY.with(|c| c.get());
    #[cfg(not(test))]
    false
}

fn check_preconditions(theorem: TheoremId, field: &ItoRandomField, shape: InputShape) -> Result<()> {
    let fail = |msg: &str| Err(Error::invalid(format!("{theorem}: {msg}")));
    if theorem.has_process() != shape.process.is_some() {
        return fail(if theorem.has_process() {
            "needs a process X"
        } else {
            "takes no process X"
        });
    }
    if theorem.has_cloud() != shape.cloud.is_some() {
        return fail(if theorem.has_cloud() { "needs a particle cloud" } else { "takes no cloud" });
    }
    match (theorem.is_conditional(), shape.cloud) {
        (true, Some(CloudMode::Full)) => return fail("needs a conditional cloud"),
        (false, Some(CloudMode::Conditional)) => {
            return fail("conditional cloud supplied; use the conditional evaluators")
        }
        _ => {}
    }
    let two_noise_process = shape.process == Some(NoiseCount::Two);
    match theorem {
        TheoremId::IwClassic | TheoremId::IwReduced => {
            if !field.is_measure_free() {
                return fail("the field must not depend on the measure");
            }
        }
        TheoremId::IlFull | TheoremId::IlConditional => {
            if !field.is_deterministic() {
                return fail("the functional must carry no field noise");
            }
        }
        TheoremId::IwlFullMeasure | TheoremId::IwlConditionalMeasure => {
            if field.depends_on_x() {
                return fail("the field must not depend on x");
            }
        }
        TheoremId::IwlFullJoint | TheoremId::IwlConditionalJoint => {}
    }
    let needs_two = theorem.is_conditional();
    if !theorem.is_ito_lions() && field.is_two_noise() != needs_two {
        return fail(if needs_two {
            "needs a two-noise field"
        } else {
            "two-noise field supplied to a single-noise expansion"
        });
    }
    if shape.process.is_some() && two_noise_process != needs_two {
        return fail(if needs_two {
            "needs X driven by (W^0, W^1)"
        } else {
            "needs X driven by a single noise"
        });
    }
    Ok(())
}
