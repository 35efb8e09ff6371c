//! The functional catalogue `u(x, mu)` with closed-form derivatives.
//!
//! Index conventions (row-major `d x d`):
//! - `dv_dmu[a][b] = d/dv_b (d_mu u(v))_a`
//! - `dx_dmu[b][a] = d/dx_a (d_mu u(v))_b`
//! - `dmu2(v, v')[a][b] = d/dv'_b (d_mu u(v))_a`, the derivative of `d_mu u(v)`
//!   in the measure direction at `v'`.
//!
//! Evaluators add `scale * value` into caller buffers so linear combinations of
//! functionals need no temporaries.

use serde::{Deserialize, Serialize};

use super::inner::{InnerFunction, Univariate, MAX_DIM};
use crate::error::{Error, Result};
use crate::linalg::CompensatedSum;
use crate::model::{EmpiricalMeasure, MeasureView};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureFunctional {
    /// `int f dmu`
    Linear { f: InnerFunction },
    /// `(int f dmu)^2`
    QuadraticMean { f: InnerFunction },
    /// `int int k(v - v') mu(dv) mu(dv')`
    DoubleIntegral { kernel: InnerFunction },
    /// `int |v|^2 dmu - |int v dmu|^2`
    Variance,
    /// `a(x) * int f dmu`
    Product { a: InnerFunction, f: InnerFunction },
    /// `scale * int |v - x|^2 dmu`
    ScaledSecondMoment { scale: f64 },
}

/// Per-measure statistics computed once and shared by all derivative evaluations
/// at the same `(x, mu)`.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub value: f64,
    /// `int f dmu` where the kind has an inner `f`.
    mf: f64,
    /// `int v dmu`.
    mean: [f64; MAX_DIM],
    /// `a(x)` for products.
    ax: f64,
    /// Dense form of the inner `f` on the real line.
    uni: Option<Univariate>,
}

#[inline]
fn f_grad_add(p: &Prepared, f: &InnerFunction, v: &[f64], scale: f64, out: &mut [f64]) {
    match &p.uni {
        Some(u) => out[0] += scale * u.d1(v[0]),
        None => f.grad_add(v, scale, out),
    }
}

#[inline]
fn f_hess_add(p: &Prepared, f: &InnerFunction, v: &[f64], scale: f64, out: &mut [f64]) {
    match &p.uni {
        Some(u) => out[0] += scale * u.d2(v[0]),
        None => f.hess_add(v, scale, out),
    }
}

#[inline]
fn f_grad_hess_add(p: &Prepared, f: &InnerFunction, v: &[f64], scale: f64, g: &mut [f64], h: &mut [f64]) {
    match &p.uni {
        Some(u) => {
            g[0] += scale * u.d1(v[0]);
            h[0] += scale * u.d2(v[0]);
        }
        None => f.grad_hess_add(v, scale, g, scale, h),
    }
}

impl MeasureFunctional {
    pub fn linear(f: InnerFunction) -> Self {
        MeasureFunctional::Linear { f }
    }

    pub fn quadratic_mean(f: InnerFunction) -> Self {
        MeasureFunctional::QuadraticMean { f }
    }

    pub fn product(a: InnerFunction, f: InnerFunction) -> Self {
        MeasureFunctional::Product { a, f }
    }

    /// The constant functional `1`.
    pub fn one() -> Self {
        MeasureFunctional::Linear {
            f: InnerFunction::constant(1.0),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MeasureFunctional::Linear { .. } => "linear",
            MeasureFunctional::QuadraticMean { .. } => "quadratic-mean",
            MeasureFunctional::DoubleIntegral { .. } => "double-integral",
            MeasureFunctional::Variance => "variance",
            MeasureFunctional::Product { .. } => "product",
            MeasureFunctional::ScaledSecondMoment { .. } => "scaled-second-moment",
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if d == 0 || d > MAX_DIM {
            return Err(Error::invalid(format!("dimension {d} outside 1..={MAX_DIM}")));
        }
        match self {
            MeasureFunctional::Linear { f } | MeasureFunctional::QuadraticMean { f } => f.validate(d),
            MeasureFunctional::DoubleIntegral { kernel } => kernel.validate(d),
            MeasureFunctional::Variance => Ok(()),
            MeasureFunctional::Product { a, f } => {
                a.validate(d)?;
                f.validate(d)
            }
            MeasureFunctional::ScaledSecondMoment { scale } => {
                if scale.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid("non-finite scale"))
                }
            }
        }
    }

    /// Whether `u` depends on the space argument `x`.
    pub fn depends_on_x(&self) -> bool {
        match self {
            MeasureFunctional::Product { a, .. } => !a.is_constant(),
            MeasureFunctional::ScaledSecondMoment { scale } => *scale != 0.0,
            _ => false,
        }
    }

    /// Whether `u` ignores the measure argument.
    pub fn is_measure_free(&self) -> bool {
        match self {
            MeasureFunctional::Linear { f } | MeasureFunctional::QuadraticMean { f } => f.is_constant(),
            MeasureFunctional::DoubleIntegral { kernel } => kernel.is_constant(),
            MeasureFunctional::Variance => false,
            MeasureFunctional::Product { a, f } => f.is_constant() || (a.is_constant() && a.value(&[0.0; MAX_DIM]) == 0.0),
            MeasureFunctional::ScaledSecondMoment { scale } => *scale == 0.0,
        }
    }

    /// Whether the closed-form second Lions derivative can be nonzero.
    pub fn has_second_lions(&self) -> bool {
        match self {
            MeasureFunctional::QuadraticMean { f } => !f.is_constant(),
            MeasureFunctional::DoubleIntegral { kernel } => !kernel.is_affine(),
            MeasureFunctional::Variance => true,
            _ => false,
        }
    }

    /// Value and per-measure statistics at `(x, mu)`.
    pub fn prepare(&self, x: &[f64], mu: MeasureView<'_>) -> Prepared {
        let d = mu.dim;
        let n = mu.len() as f64;
        let mut p = Prepared {
            value: 0.0,
            mf: 0.0,
            mean: [0.0; MAX_DIM],
            ax: 0.0,
            uni: None,
        };
        if let (1, MeasureFunctional::Linear { f } | MeasureFunctional::QuadraticMean { f } | MeasureFunctional::Product { f, .. }) =
            (d, self)
        {
            p.uni = f.univariate();
        }
        let uni = p.uni;
        let mean_of = |g: &InnerFunction| {
            let mut s = CompensatedSum::new();
            match &uni {
                Some(u) => {
                    for &v in mu.points {
                        s.add(u.value(v));
                    }
                }
                None => {
                    for v in mu.iter() {
                        s.add(g.value(v));
                    }
                }
            }
            s.value() / n
        };
        let vector_mean = |out: &mut [f64; MAX_DIM]| {
            let mut acc = [CompensatedSum::new(); MAX_DIM];
            for v in mu.iter() {
                for a in 0..d {
                    acc[a].add(v[a]);
                }
            }
            for a in 0..d {
                out[a] = acc[a].value() / n;
            }
        };
        match self {
            MeasureFunctional::Linear { f } => {
                p.mf = mean_of(f);
                p.value = p.mf;
            }
            MeasureFunctional::QuadraticMean { f } => {
                p.mf = mean_of(f);
                p.value = p.mf * p.mf;
            }
            MeasureFunctional::DoubleIntegral { kernel } => {
                let mut s = CompensatedSum::new();
                let mut diff = [0.0; MAX_DIM];
                for v in mu.iter() {
                    for w in mu.iter() {
                        for a in 0..d {
                            diff[a] = v[a] - w[a];
                        }
                        s.add(kernel.value(&diff[..d]));
                    }
                }
                p.value = s.value() / (n * n);
            }
            MeasureFunctional::Variance => {
                vector_mean(&mut p.mean);
                let mut s = CompensatedSum::new();
                for v in mu.iter() {
                    for a in 0..d {
                        s.add((v[a] - p.mean[a]).powi(2));
                    }
                }
                p.value = s.value() / n;
            }
            MeasureFunctional::Product { a, f } => {
                p.mf = mean_of(f);
                p.ax = a.value(x);
                p.value = p.ax * p.mf;
            }
            MeasureFunctional::ScaledSecondMoment { scale } => {
                vector_mean(&mut p.mean);
                let mut s = CompensatedSum::new();
                for v in mu.iter() {
                    for a in 0..d {
                        s.add((v[a] - x[a]).powi(2));
                    }
                }
                p.value = scale * s.value() / n;
            }
        }
        p
    }

    /// `out += scale * d_x u`.
    pub fn dx_add(&self, p: &Prepared, x: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            MeasureFunctional::Product { a, .. } => a.grad_add(x, scale * p.mf, out),
            MeasureFunctional::ScaledSecondMoment { scale: c } => {
                for k in 0..x.len() {
                    out[k] += scale * 2.0 * c * (x[k] - p.mean[k]);
                }
            }
            _ => {}
        }
    }

    /// `out += scale * d_xx u`.
    pub fn dxx_add(&self, p: &Prepared, x: &[f64], scale: f64, out: &mut [f64]) {
        let d = x.len();
        match self {
            MeasureFunctional::Product { a, .. } => a.hess_add(x, scale * p.mf, out),
            MeasureFunctional::ScaledSecondMoment { scale: c } => {
                for k in 0..d {
                    out[k * d + k] += scale * 2.0 * c;
                }
            }
            _ => {}
        }
    }

    /// `out += scale * d_mu u(x, mu, v)`.
    pub fn dmu_add(&self, p: &Prepared, x: &[f64], mu: MeasureView<'_>, v: &[f64], scale: f64, out: &mut [f64]) {
        let d = v.len();
        match self {
            MeasureFunctional::Linear { f } => f_grad_add(p, f, v, scale, out),
            MeasureFunctional::QuadraticMean { f } => f_grad_add(p, f, v, scale * 2.0 * p.mf, out),
            MeasureFunctional::DoubleIntegral { kernel } => {
                let s = scale / mu.len() as f64;
                let mut diff = [0.0; MAX_DIM];
                for y in mu.iter() {
                    for a in 0..d {
                        diff[a] = v[a] - y[a];
                    }
                    kernel.grad_add(&diff[..d], s, out);
                    for a in 0..d {
                        diff[a] = -diff[a];
                    }
                    kernel.grad_add(&diff[..d], -s, out);
                }
            }
            MeasureFunctional::Variance => {
                for a in 0..d {
                    out[a] += scale * 2.0 * (v[a] - p.mean[a]);
                }
            }
            MeasureFunctional::Product { f, .. } => f_grad_add(p, f, v, scale * p.ax, out),
            MeasureFunctional::ScaledSecondMoment { scale: c } => {
                for a in 0..d {
                    out[a] += scale * 2.0 * c * (v[a] - x[a]);
                }
            }
        }
    }

    /// `out += scale * d_v d_mu u(x, mu, v)`.
    pub fn dv_dmu_add(&self, p: &Prepared, mu: MeasureView<'_>, v: &[f64], scale: f64, out: &mut [f64]) {
        let d = v.len();
        match self {
            MeasureFunctional::Linear { f } => f_hess_add(p, f, v, scale, out),
            MeasureFunctional::QuadraticMean { f } => f_hess_add(p, f, v, scale * 2.0 * p.mf, out),
            MeasureFunctional::DoubleIntegral { kernel } => {
                let s = scale / mu.len() as f64;
                let mut diff = [0.0; MAX_DIM];
                for y in mu.iter() {
                    for a in 0..d {
                        diff[a] = v[a] - y[a];
                    }
                    kernel.hess_add(&diff[..d], s, out);
                    for a in 0..d {
                        diff[a] = -diff[a];
                    }
                    kernel.hess_add(&diff[..d], s, out);
                }
            }
            MeasureFunctional::Variance => {
                for a in 0..d {
                    out[a * d + a] += scale * 2.0;
                }
            }
            MeasureFunctional::Product { f, .. } => f_hess_add(p, f, v, scale * p.ax, out),
            MeasureFunctional::ScaledSecondMoment { scale: c } => {
                for a in 0..d {
                    out[a * d + a] += scale * 2.0 * c;
                }
            }
        }
    }

    /// [`dmu_add`](Self::dmu_add) and [`dv_dmu_add`](Self::dv_dmu_add) at the same `v`.
    #[allow(clippy::too_many_arguments)]
    pub fn dmu_dv_add(&self, p: &Prepared, x: &[f64], mu: MeasureView<'_>, v: &[f64], scale: f64, g: &mut [f64], h: &mut [f64]) {
        match self {
            MeasureFunctional::Linear { f } => f_grad_hess_add(p, f, v, scale, g, h),
            MeasureFunctional::QuadraticMean { f } => f_grad_hess_add(p, f, v, scale * 2.0 * p.mf, g, h),
            MeasureFunctional::Product { f, .. } => f_grad_hess_add(p, f, v, scale * p.ax, g, h),
            _ => {
                self.dmu_add(p, x, mu, v, scale, g);
                self.dv_dmu_add(p, mu, v, scale, h);
            }
        }
    }

    /// Scalar form of [`Self::dmu_dv_add`] on the real line: a polynomial
    /// `f` and weight `w` with `d_mu u = w f'(v)` and `d_v d_mu u = w f''(v)`.
    pub(crate) fn scalar_sensitivity(&self, p: &Prepared, scale: f64) -> Option<(Univariate, f64)> {
        let u = p.uni?;
        match self {
            MeasureFunctional::Linear { .. } => Some((u, scale)),
            MeasureFunctional::QuadraticMean { .. } => Some((u, scale * 2.0 * p.mf)),
            MeasureFunctional::Product { .. } => Some((u, scale * p.ax)),
            _ => None,
        }
    }

    /// `out += scale * d_x d_mu u(x, mu, v)`.
    pub fn dx_dmu_add(&self, p: &Prepared, x: &[f64], v: &[f64], scale: f64, out: &mut [f64]) {
        let _ = p;
        let d = v.len();
        match self {
            MeasureFunctional::Product { a, f } => {
                let mut ga = [0.0; MAX_DIM];
                let mut gf = [0.0; MAX_DIM];
                a.grad_add(x, 1.0, &mut ga[..d]);
                f.grad_add(v, 1.0, &mut gf[..d]);
                for b in 0..d {
                    for k in 0..d {
                        out[b * d + k] += scale * gf[b] * ga[k];
                    }
                }
            }
            MeasureFunctional::ScaledSecondMoment { scale: c } => {
                for b in 0..d {
                    out[b * d + b] -= scale * 2.0 * c;
                }
            }
            _ => {}
        }
    }

    /// `out += scale * d^2_mu u(x, mu, v, v2)`.
    pub fn dmu2_add(&self, v: &[f64], v2: &[f64], scale: f64, out: &mut [f64]) {
        let d = v.len();
        match self {
            MeasureFunctional::QuadraticMean { f } => {
                let mut g = [0.0; MAX_DIM];
                let mut g2 = [0.0; MAX_DIM];
                f.grad_add(v, 1.0, &mut g[..d]);
                f.grad_add(v2, 1.0, &mut g2[..d]);
                for a in 0..d {
                    for b in 0..d {
                        out[a * d + b] += scale * 2.0 * g[a] * g2[b];
                    }
                }
            }
            MeasureFunctional::DoubleIntegral { kernel } => {
                let mut diff = [0.0; MAX_DIM];
                for a in 0..d {
                    diff[a] = v[a] - v2[a];
                }
                kernel.hess_add(&diff[..d], -scale, out);
                for a in 0..d {
                    diff[a] = -diff[a];
                }
                kernel.hess_add(&diff[..d], -scale, out);
            }
            MeasureFunctional::Variance => {
                for a in 0..d {
                    out[a * d + a] -= scale * 2.0;
                }
            }
            _ => {}
        }
    }

    /// Ordered-pair sum
    /// `sum_{l != l'} sum_{a,b,c} d^2_mu u(y^l, y^l')[a][b] s^l[a][c] s^l'[b][c]`
    /// over the cloud `mu` with per-particle matrices `s` (row-major, `N d^2`).
    ///
    /// Separable kinds are evaluated in `O(N)` as `|sum|^2 - sum |.|^2`.
    pub fn pair_trace_sum(&self, mu: MeasureView<'_>, s: &[f64]) -> f64 {
        let d = mu.dim;
        let dd = d * d;
        match self {
            MeasureFunctional::QuadraticMean { f } => {
                // K = 2 g(v) g(v')^T, contribution 2 p^l . p^l' with p = s^T g.
                let mut total = [CompensatedSum::new(); MAX_DIM];
                let mut diag = CompensatedSum::new();
                if let (1, Some(u)) = (d, f.univariate()) {
                    for (&y, &sl) in mu.points.iter().zip(s) {
                        let pc = sl * u.d1(y);
                        total[0].add(pc);
                        diag.add(pc * pc);
                    }
                    return 2.0 * (total[0].value().powi(2) - diag.value());
                }
                for (l, y) in mu.iter().enumerate() {
                    let mut g = [0.0; MAX_DIM];
                    f.grad_add(y, 1.0, &mut g[..d]);
                    let sl = &s[l * dd..(l + 1) * dd];
                    for c in 0..d {
                        let mut pc = 0.0;
                        for a in 0..d {
                            pc += sl[a * d + c] * g[a];
                        }
                        total[c].add(pc);
                        diag.add(pc * pc);
                    }
                }
                let sq: f64 = total[..d].iter().map(|t| t.value().powi(2)).sum();
                2.0 * (sq - diag.value())
            }
            MeasureFunctional::Variance => {
                // K = -2 I, contribution -2 <s^l, s^l'>_F.
                let mut total = [CompensatedSum::new(); MAX_DIM * MAX_DIM];
                let mut diag = CompensatedSum::new();
                for sl in s.chunks_exact(dd) {
                    for (t, x) in total.iter_mut().zip(sl) {
                        t.add(*x);
                        diag.add(x * x);
                    }
                }
                let sq: f64 = total[..dd].iter().map(|t| t.value().powi(2)).sum();
                -2.0 * (sq - diag.value())
            }
            MeasureFunctional::DoubleIntegral { .. } if self.has_second_lions() => {
                let mut acc = CompensatedSum::new();
                let mut k = [0.0; MAX_DIM * MAX_DIM];
                for (l, y) in mu.iter().enumerate() {
                    let sl = &s[l * dd..(l + 1) * dd];
                    for (m, y2) in mu.iter().enumerate() {
                        if l == m {
                            continue;
                        }
                        k[..dd].fill(0.0);
                        self.dmu2_add(y, y2, 1.0, &mut k[..dd]);
                        let sm = &s[m * dd..(m + 1) * dd];
                        let mut t = 0.0;
                        for a in 0..d {
                            for b in 0..d {
                                let kab = k[a * d + b];
                                for c in 0..d {
                                    t += kab * sl[a * d + c] * sm[b * d + c];
                                }
                            }
                        }
                        acc.add(t);
                    }
                }
                acc.value()
            }
            _ => 0.0,
        }
    }

    // Convenience forms returning owned values.

    pub fn eval(&self, x: &[f64], mu: &EmpiricalMeasure) -> f64 {
        self.prepare(x, mu.view()).value
    }
}

/// `u(x, mu)` on the uniform empirical measure.
pub fn eval_functional(f: &MeasureFunctional, x: &[f64], mu: &EmpiricalMeasure) -> f64 {
    f.prepare(x, mu.view()).value
}

/// `d_mu u(x, mu, v)`.
pub fn lions_derivative(f: &MeasureFunctional, x: &[f64], mu: &EmpiricalMeasure, v: &[f64]) -> Vec<f64> {
    let p = f.prepare(x, mu.view());
    let mut out = vec![0.0; v.len()];
    f.dmu_add(&p, x, mu.view(), v, 1.0, &mut out);
    out
}

/// `d_v d_mu u(x, mu, v)`.
pub fn lions_hessian_v(f: &MeasureFunctional, x: &[f64], mu: &EmpiricalMeasure, v: &[f64]) -> Vec<f64> {
    let p = f.prepare(x, mu.view());
    let mut out = vec![0.0; v.len() * v.len()];
    f.dv_dmu_add(&p, mu.view(), v, 1.0, &mut out);
    out
}

/// `d^2_mu u(x, mu, v, v2)`.
pub fn lions_second(f: &MeasureFunctional, v: &[f64], v2: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len() * v.len()];
    f.dmu2_add(v, v2, 1.0, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceDerivatives {
    pub dx: Vec<f64>,
    pub dxx: Vec<f64>,
    /// `d_x d_mu u(x, mu, v)`.
    pub dx_dmu: Vec<f64>,
}

pub fn space_derivatives(f: &MeasureFunctional, x: &[f64], mu: &EmpiricalMeasure, v: &[f64]) -> SpaceDerivatives {
    let d = x.len();
    let p = f.prepare(x, mu.view());
    let mut out = SpaceDerivatives {
        dx: vec![0.0; d],
        dxx: vec![0.0; d * d],
        dx_dmu: vec![0.0; d * d],
    };
    f.dx_add(&p, x, 1.0, &mut out.dx);
    f.dxx_add(&p, x, 1.0, &mut out.dxx);
    f.dx_dmu_add(&p, x, v, 1.0, &mut out.dx_dmu);
    out
}
