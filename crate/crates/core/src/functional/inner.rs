use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported space dimension; evaluators use fixed-size scratch.
pub const MAX_DIM: usize = 8;
const MAX_DEGREE: u32 = 4;

/// `coef * prod_a v_a^{powers[a]}`; missing trailing powers are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coef: f64,
    #[serde(default)]
    pub powers: Vec<u32>,
}

/// Smooth scalar functions on `R^d` with closed-form gradient and Hessian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InnerFunction {
    /// Sum of monomials of total degree at most 4.
    Polynomial { terms: Vec<Monomial> },
    /// `amplitude * sin(frequency . v + phase)`.
    Trigonometric {
        amplitude: f64,
        frequency: Vec<f64>,
        #[serde(default)]
        phase: f64,
    },
}

impl InnerFunction {
    pub fn polynomial(terms: &[(f64, &[u32])]) -> Self {
        InnerFunction::Polynomial {
            terms: terms
                .iter()
                .map(|(c, p)| Monomial {
                    coef: *c,
                    powers: p.to_vec(),
                })
                .collect(),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::polynomial(&[(c, &[])])
    }

    /// `v_a`.
    pub fn coordinate(a: usize) -> Self {
        let mut powers = vec![0; a + 1];
        powers[a] = 1;
        InnerFunction::Polynomial {
            terms: vec![Monomial { coef: 1.0, powers }],
        }
    }

    /// `|v|^2` in dimension `d`.
    pub fn square_norm(d: usize) -> Self {
        InnerFunction::Polynomial {
            terms: (0..d)
                .map(|a| {
                    let mut powers = vec![0; d];
                    powers[a] = 2;
                    Monomial { coef: 1.0, powers }
                })
                .collect(),
        }
    }

    pub fn trigonometric(amplitude: f64, frequency: Vec<f64>, phase: f64) -> Self {
        InnerFunction::Trigonometric {
            amplitude,
            frequency,
            phase,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if d == 0 || d > MAX_DIM {
            return Err(Error::invalid(format!("dimension {d} outside 1..={MAX_DIM}")));
        }
        match self {
            InnerFunction::Polynomial { terms } => {
                for t in terms {
                    if t.powers.len() > d {
                        return Err(Error::invalid(format!(
                            "monomial has {} powers in dimension {d}",
                            t.powers.len()
                        )));
                    }
                    let deg: u32 = t.powers.iter().sum();
                    if deg > MAX_DEGREE {
                        return Err(Error::invalid(format!("monomial degree {deg} exceeds {MAX_DEGREE}")));
                    }
                    if !t.coef.is_finite() {
                        return Err(Error::invalid("non-finite polynomial coefficient"));
                    }
                }
                Ok(())
            }
            InnerFunction::Trigonometric {
                amplitude,
                frequency,
                phase,
            } => {
                if frequency.len() != d {
                    return Err(Error::invalid(format!(
                        "frequency has length {}, expected {d}",
                        frequency.len()
                    )));
                }
                if !(amplitude.is_finite() && phase.is_finite() && frequency.iter().all(|w| w.is_finite())) {
                    return Err(Error::invalid("non-finite trigonometric parameter"));
                }
                Ok(())
            }
        }
    }

    /// Constant functions (gradient identically zero).
    pub fn is_constant(&self) -> bool {
        match self {
            InnerFunction::Polynomial { terms } => terms
                .iter()
                .all(|t| t.coef == 0.0 || t.powers.iter().all(|&p| p == 0)),
            InnerFunction::Trigonometric {
                amplitude,
                frequency,
                ..
            } => *amplitude == 0.0 || frequency.iter().all(|&w| w == 0.0),
        }
    }

    /// Affine functions (Hessian identically zero).
    pub fn is_affine(&self) -> bool {
        match self {
            InnerFunction::Polynomial { terms } => terms
                .iter()
                .all(|t| t.coef == 0.0 || t.powers.iter().sum::<u32>() <= 1),
            InnerFunction::Trigonometric { .. } => self.is_constant(),
        }
    }

    pub fn value(&self, v: &[f64]) -> f64 {
        match self {
            InnerFunction::Polynomial { terms } => {
                let pw = PowerTable::new(v);
                terms.iter().map(|t| t.coef * pw.monomial(&t.powers, None)).sum()
            }
            InnerFunction::Trigonometric {
                amplitude,
                frequency,
                phase,
            } => amplitude * (phase_of(frequency, v) + phase).sin(),
        }
    }

    /// `out += scale * grad f(v)`.
    pub fn grad_add(&self, v: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            InnerFunction::Polynomial { terms } => poly_grad(terms, &PowerTable::new(v), scale, out),
            InnerFunction::Trigonometric {
                amplitude,
                frequency,
                phase,
            } => {
                let c = scale * amplitude * (phase_of(frequency, v) + phase).cos();
                for (o, w) in out.iter_mut().zip(frequency) {
                    *o += c * w;
                }
            }
        }
    }

    /// `grad_add` and `hess_add` sharing one evaluation of the powers or phase.
    pub fn grad_hess_add(&self, v: &[f64], gscale: f64, grad: &mut [f64], hscale: f64, hess: &mut [f64]) {
        match self {
            InnerFunction::Polynomial { terms } => {
                let pw = PowerTable::new(v);
                poly_grad(terms, &pw, gscale, grad);
                poly_hess(terms, &pw, v.len(), hscale, hess);
            }
            InnerFunction::Trigonometric {
                amplitude,
                frequency,
                phase,
            } => {
                let d = v.len();
                let (sin, cos) = (phase_of(frequency, v) + phase).sin_cos();
                let c = gscale * amplitude * cos;
                for (o, w) in grad.iter_mut().zip(frequency) {
                    *o += c * w;
                }
                let s = -hscale * amplitude * sin;
                for a in 0..d {
                    for b in 0..d {
                        hess[a * d + b] += s * frequency[a] * frequency[b];
                    }
                }
            }
        }
    }

    /// `out += scale * Hess f(v)`, row-major `d x d`.
    pub fn hess_add(&self, v: &[f64], scale: f64, out: &mut [f64]) {
        let d = v.len();
        match self {
            InnerFunction::Polynomial { terms } => poly_hess(terms, &PowerTable::new(v), d, scale, out),
            InnerFunction::Trigonometric {
                amplitude,
                frequency,
                phase,
            } => {
                let s = -scale * amplitude * (phase_of(frequency, v) + phase).sin();
                for a in 0..d {
                    for b in 0..d {
                        out[a * d + b] += s * frequency[a] * frequency[b];
                    }
                }
            }
        }
    }

    pub fn grad(&self, v: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; v.len()];
        self.grad_add(v, 1.0, &mut g);
        g
    }

    pub fn hess(&self, v: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; v.len() * v.len()];
        self.hess_add(v, 1.0, &mut h);
        h
    }
}

/// A polynomial in one variable as dense coefficient arrays for the value
/// and its first two derivatives, evaluated by Horner's rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Univariate {
    c: [f64; DENSE],
    c1: [f64; DENSE - 1],
    c2: [f64; DENSE - 2],
}

const DENSE: usize = MAX_DEGREE as usize + 1;

impl Univariate {
    #[inline]
    pub(crate) fn value(&self, v: f64) -> f64 {
        horner(&self.c, v)
    }

    #[inline]
    pub(crate) fn d1(&self, v: f64) -> f64 {
        horner(&self.c1, v)
    }

    #[inline]
    pub(crate) fn d2(&self, v: f64) -> f64 {
        horner(&self.c2, v)
    }
}

#[inline(always)]
fn horner(c: &[f64], v: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * v + k)
}

impl InnerFunction {
    /// Dense form of a polynomial on the real line; `None` for other kinds.
    pub(crate) fn univariate(&self) -> Option<Univariate> {
        let InnerFunction::Polynomial { terms } = self else {
            return None;
        };
        let mut c = [0.0; DENSE];
        for t in terms {
            let (first, rest) = t.powers.split_first().map_or((0, &[][..]), |(f, r)| (*f, r));
            if rest.iter().any(|&p| p != 0) {
                return None;
            }
            c[first as usize] += t.coef;
        }
        let mut c1 = [0.0; DENSE - 1];
        let mut c2 = [0.0; DENSE - 2];
        for k in 1..DENSE {
            c1[k - 1] = k as f64 * c[k];
        }
        for k in 2..DENSE {
            c2[k - 2] = (k * (k - 1)) as f64 * c[k];
        }
        Some(Univariate { c, c1, c2 })
    }
}

fn phase_of(freq: &[f64], v: &[f64]) -> f64 {
    freq.iter().zip(v).map(|(w, x)| w * x).sum()
}

/// `v_a^k` for `k <= MAX_DEGREE`.
struct PowerTable {
    p: [[f64; MAX_DEGREE as usize + 1]; MAX_DIM],
}

impl PowerTable {
    #[inline(always)]
    fn new(v: &[f64]) -> Self {
        let mut p = [[1.0; MAX_DEGREE as usize + 1]; MAX_DIM];
        for (row, &x) in p.iter_mut().zip(v) {
            for k in 1..row.len() {
                row[k] = row[k - 1] * x;
            }
        }
        Self { p }
    }

    /// `prod_a v_a^{powers[a] - lowered[a]}`; `lowered` holds up to two
    /// coordinates whose power drops by one each.
    #[inline]
    fn monomial(&self, powers: &[u32], lowered: Option<(usize, usize)>) -> f64 {
        let mut r = 1.0;
        for (a, &p) in powers.iter().enumerate() {
            let drop = match lowered {
                Some((i, j)) => (a == i) as u32 + (a == j) as u32,
                None => 0,
            };
            let k = p - drop;
            if k > 0 {
                r *= self.p[a][k as usize];
            }
        }
        r
    }
}

/// Sentinel for "no second lowered coordinate".
const NONE: usize = usize::MAX;

#[inline]
fn poly_grad(terms: &[Monomial], pw: &PowerTable, scale: f64, out: &mut [f64]) {
    if out.len() == 1 {
        let mut g = 0.0;
        for t in terms {
            if let Some(&p) = t.powers.first().filter(|&&p| p > 0) {
                g += t.coef * p as f64 * pw.p[0][p as usize - 1];
            }
        }
        out[0] += scale * g;
        return;
    }
    for t in terms {
        for (a, &p) in t.powers.iter().enumerate() {
            if p == 0 {
                continue;
            }
            out[a] += scale * t.coef * p as f64 * pw.monomial(&t.powers, Some((a, NONE)));
        }
    }
}

#[inline]
fn poly_hess(terms: &[Monomial], pw: &PowerTable, d: usize, scale: f64, out: &mut [f64]) {
    if d == 1 {
        let mut h = 0.0;
        for t in terms {
            if let Some(&p) = t.powers.first().filter(|&&p| p > 1) {
                h += t.coef * (p * (p - 1)) as f64 * pw.p[0][p as usize - 2];
            }
        }
        out[0] += scale * h;
        return;
    }
    for t in terms {
        for (a, &pa) in t.powers.iter().enumerate() {
            if pa == 0 {
                continue;
            }
            for (b, &pb) in t.powers.iter().enumerate() {
                let factor = if a == b {
                    if pa < 2 {
                        continue;
                    }
                    (pa * (pa - 1)) as f64
                } else {
                    if pb == 0 {
                        continue;
                    }
                    (pa * pb) as f64
                };
                out[a * d + b] += scale * t.coef * factor * pw.monomial(&t.powers, Some((a, b)));
            }
        }
    }
}
