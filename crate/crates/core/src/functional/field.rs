//! Itô random fields `u_t(x, mu) = sum_k a^k_t F_k(x, mu)`.
//!
//! Each component pairs a catalogue functional `F_k` with a scalar multiplier
//! process `a^k` solving `da = alpha(a, t) dt + eta(a) . dW_channel`. The field
//! coefficients are then `phi_t = sum_k alpha^k_t F_k` and
//! `psi_t = sum_k eta^k_t F_k` (per channel), so every derivative of `phi`,
//! `psi` is a combination of catalogue derivatives.

use serde::{Deserialize, Serialize};

use super::catalogue::MeasureFunctional;
use super::inner::InnerFunction;
use crate::error::{Error, Result};
use crate::model::{BrownianPath, EmpiricalMeasure, TimeGrid};
use crate::sde::{Channel, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Multiplier {
    /// `a = 1`.
    Unit,
    /// `a_t = 1 + int_0^t s ds`, `alpha_t = t`.
    Ramp,
    /// `a_0 = 1`, `da = a lambda . dW`.
    ExponentialMartingale {
        lambda: Tensor,
        #[serde(default)]
        channel: Channel,
    },
    /// `a_0 = 0`, `da = loading . dW`.
    Noise {
        loading: Tensor,
        #[serde(default)]
        channel: Channel,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldComponent {
    pub functional: MeasureFunctional,
    pub multiplier: Multiplier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// Driven by one Brownian motion `W` (channel `w0`).
    Single,
    /// Driven by `W^0` (channel `w0`) and `W^1` (channel `w1`).
    Two,
}

/// Named field kinds addressable from configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldKind {
    /// `u_t = F`.
    Static {
        functional: MeasureFunctional,
        #[serde(default)]
        two_noise: bool,
    },
    /// `u_t = F (1 + int_0^t s ds)`.
    DriftRamp {
        functional: MeasureFunctional,
        #[serde(default)]
        two_noise: bool,
    },
    /// `u_t = F E_t`, `E_t = exp(lambda . W_t - |lambda|^2 t / 2)`.
    ExponentialMartingale {
        functional: MeasureFunctional,
        lambda: Tensor,
        #[serde(default)]
        channel: Channel,
        #[serde(default)]
        two_noise: bool,
    },
    /// `u_t = F + c . W_t`.
    LinearNoise {
        functional: MeasureFunctional,
        loading: Tensor,
        #[serde(default)]
        channel: Channel,
        #[serde(default)]
        two_noise: bool,
    },
    /// Two noises: `u_t(mu) = m(mu) (e . W^0_t)` with `m(mu) = int f dmu`,
    /// `f` defaulting to the first coordinate.
    MeanTimesCommonNoise {
        loading: Tensor,
        #[serde(default)]
        f: Option<InnerFunction>,
    },
    /// Arbitrary list of components.
    Composite {
        #[serde(default)]
        two_noise: bool,
        components: Vec<FieldComponent>,
    },
}

#[derive(Debug, Clone)]
enum Law {
    Unit,
    Ramp,
    Exponential,
    Noise,
}

#[derive(Debug, Clone)]
struct ResolvedMultiplier {
    law: Law,
    load: Vec<f64>,
    channel: Channel,
}

#[derive(Debug, Clone)]
pub struct ItoRandomField {
    mode: NoiseMode,
    dim: usize,
    components: Vec<FieldComponent>,
    multipliers: Vec<ResolvedMultiplier>,
}

pub fn make_ito_field(kind: &FieldKind, dim: usize) -> Result<ItoRandomField> {
    let mode = |two: bool| if two { NoiseMode::Two } else { NoiseMode::Single };
    let comp = |functional: &MeasureFunctional, multiplier: Multiplier| FieldComponent {
        functional: functional.clone(),
        multiplier,
    };
    match kind {
        FieldKind::Static { functional, two_noise } => {
            ItoRandomField::new(mode(*two_noise), dim, vec![comp(functional, Multiplier::Unit)])
        }
        FieldKind::DriftRamp { functional, two_noise } => {
            ItoRandomField::new(mode(*two_noise), dim, vec![comp(functional, Multiplier::Ramp)])
        }
        FieldKind::ExponentialMartingale {
            functional,
            lambda,
            channel,
            two_noise,
        } => ItoRandomField::new(
            mode(*two_noise),
            dim,
            vec![comp(
                functional,
                Multiplier::ExponentialMartingale {
                    lambda: lambda.clone(),
                    channel: *channel,
                },
            )],
        ),
        FieldKind::LinearNoise {
            functional,
            loading,
            channel,
            two_noise,
        } => ItoRandomField::new(
            mode(*two_noise),
            dim,
            vec![
                comp(functional, Multiplier::Unit),
                comp(
                    &MeasureFunctional::one(),
                    Multiplier::Noise {
                        loading: loading.clone(),
                        channel: *channel,
                    },
                ),
            ],
        ),
        FieldKind::MeanTimesCommonNoise { loading, f } => {
            let f = f.clone().unwrap_or_else(|| InnerFunction::coordinate(0));
            ItoRandomField::new(
                NoiseMode::Two,
                dim,
                vec![FieldComponent {
                    functional: MeasureFunctional::Linear { f },
                    multiplier: Multiplier::Noise {
                        loading: loading.clone(),
                        channel: Channel::W0,
                    },
                }],
            )
        }
        FieldKind::Composite { two_noise, components } => {
            ItoRandomField::new(mode(*two_noise), dim, components.clone())
        }
    }
}

impl ItoRandomField {
    pub fn new(mode: NoiseMode, dim: usize, components: Vec<FieldComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("a field needs at least one component"));
        }
        let mut multipliers = Vec::with_capacity(components.len());
        for c in &components {
            c.functional.validate(dim)?;
            let r = match &c.multiplier {
                Multiplier::Unit => ResolvedMultiplier {
                    law: Law::Unit,
                    load: vec![0.0; dim],
                    channel: Channel::W0,
                },
                Multiplier::Ramp => ResolvedMultiplier {
                    law: Law::Ramp,
                    load: vec![0.0; dim],
                    channel: Channel::W0,
                },
                Multiplier::ExponentialMartingale { lambda, channel } => ResolvedMultiplier {
                    law: Law::Exponential,
                    load: lambda.resolve_vector(dim)?,
                    channel: *channel,
                },
                Multiplier::Noise { loading, channel } => ResolvedMultiplier {
                    law: Law::Noise,
                    load: loading.resolve_vector(dim)?,
                    channel: *channel,
                },
            };
            if mode == NoiseMode::Single && r.channel == Channel::W1 {
                return Err(Error::invalid("single-noise field component reads channel w1"));
            }
            multipliers.push(r);
        }
        Ok(Self {
            mode,
            dim,
            components,
            multipliers,
        })
    }

    /// A deterministic field with one static functional.
    pub fn constant(functional: MeasureFunctional, dim: usize) -> Result<Self> {
        Self::new(
            NoiseMode::Single,
            dim,
            vec![FieldComponent {
                functional,
                multiplier: Multiplier::Unit,
            }],
        )
    }

    pub fn mode(&self) -> NoiseMode {
        self.mode
    }

    pub fn is_two_noise(&self) -> bool {
        self.mode == NoiseMode::Two
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[FieldComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn functional(&self, k: usize) -> &MeasureFunctional {
        &self.components[k].functional
    }

    /// Channel of component `k`'s noise, `None` for deterministic multipliers.
    pub fn channel(&self, k: usize) -> Option<Channel> {
        let m = &self.multipliers[k];
        match m.law {
            Law::Unit | Law::Ramp => None,
            _ if m.load.iter().all(|&x| x == 0.0) => None,
            _ => Some(m.channel),
        }
    }

    /// No multiplier carries noise: `psi = 0`.
    pub fn is_deterministic(&self) -> bool {
        (0..self.len()).all(|k| self.channel(k).is_none())
    }

    pub fn depends_on_x(&self) -> bool {
        self.components.iter().any(|c| c.functional.depends_on_x())
    }

    pub fn is_measure_free(&self) -> bool {
        self.components.iter().all(|c| c.functional.is_measure_free())
    }

    fn initial(&self, k: usize) -> f64 {
        match self.multipliers[k].law {
            Law::Unit | Law::Ramp | Law::Exponential => 1.0,
            Law::Noise => 0.0,
        }
    }

    fn alpha(&self, k: usize, t: f64) -> f64 {
        match self.multipliers[k].law {
            Law::Ramp => t,
            _ => 0.0,
        }
    }

    fn eta(&self, k: usize, a: f64, out: &mut [f64]) {
        let m = &self.multipliers[k];
        match m.law {
            Law::Unit | Law::Ramp => out.fill(0.0),
            Law::Exponential => {
                for (o, l) in out.iter_mut().zip(&m.load) {
                    *o = a * l;
                }
            }
            Law::Noise => out.copy_from_slice(&m.load),
        }
    }

    /// Start a recorded multiplier trajectory on `grid`.
    pub fn start(&self, grid: TimeGrid) -> FieldTrajectory {
        let k = self.len();
        let m = grid.steps();
        let mut a = Vec::with_capacity((m + 1) * k);
        a.extend((0..k).map(|j| self.initial(j)));
        FieldTrajectory {
            grid,
            dim: self.dim,
            k,
            step: 0,
            a,
            alpha: Vec::with_capacity(m * k),
            eta: Vec::with_capacity(m * k * self.dim),
            dw0: Vec::with_capacity(m * self.dim),
            dw1: Vec::new(),
            channels: (0..k).map(|j| self.channel(j)).collect(),
        }
    }

    /// Run the multiplier recursion along the given driving path(s).
    pub fn trajectory(&self, w0: &BrownianPath, w1: Option<&BrownianPath>) -> Result<FieldTrajectory> {
        self.check_driving(w0, w1)?;
        let mut tr = self.start(*w0.grid());
        for i in 0..w0.grid().steps() {
            tr.advance(self, w0.increment(i), w1.map(|w| w.increment(i)));
        }
        Ok(tr)
    }

    pub(crate) fn check_driving(&self, w0: &BrownianPath, w1: Option<&BrownianPath>) -> Result<()> {
        if w0.dim() != self.dim {
            return Err(Error::invalid("driving path dimension differs from the field's"));
        }
        match (self.mode, w1) {
            (NoiseMode::Two, None) => Err(Error::invalid("two-noise field needs both W^0 and W^1")),
            (NoiseMode::Two, Some(w1)) if !w1.same_grid(w0.grid()) || w1.dim() != self.dim => {
                Err(Error::invalid("W^1 does not match W^0"))
            }
            _ => Ok(()),
        }
    }
}

/// Recorded multiplier values `a^k_i`, their coefficients `alpha^k_i`,
/// `eta^k_i`, and the increments that drove them.
#[derive(Debug, Clone)]
pub struct FieldTrajectory {
    grid: TimeGrid,
    dim: usize,
    k: usize,
    step: usize,
    a: Vec<f64>,
    alpha: Vec<f64>,
    eta: Vec<f64>,
    dw0: Vec<f64>,
    dw1: Vec<f64>,
    channels: Vec<Option<Channel>>,
}

impl FieldTrajectory {
    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `a^k` at node `i` for all components.
    pub fn a(&self, i: usize) -> &[f64] {
        &self.a[i * self.k..(i + 1) * self.k]
    }

    pub fn alpha(&self, i: usize) -> &[f64] {
        &self.alpha[i * self.k..(i + 1) * self.k]
    }

    /// `eta^k` at node `i`.
    pub fn eta(&self, i: usize, k: usize) -> &[f64] {
        let d = self.dim;
        let o = (i * self.k + k) * d;
        &self.eta[o..o + d]
    }

    pub fn channel(&self, k: usize) -> Option<Channel> {
        self.channels[k]
    }

    /// Record `alpha_i`, `eta_i` at the current node and step the multipliers:
    /// `a_{i+1} = a_i + alpha_i dt + eta_i . dW_i`.
    pub fn advance(&mut self, field: &ItoRandomField, dw0: &[f64], dw1: Option<&[f64]>) {
        let i = self.step;
        assert!(i < self.grid.steps(), "field trajectory already at the horizon");
        let d = self.dim;
        let t = self.grid.node(i);
        let dt = self.grid.dt();
        self.dw0.extend_from_slice(dw0);
        if let Some(dw1) = dw1 {
            self.dw1.extend_from_slice(dw1);
        }
        let base = self.eta.len();
        self.eta.resize(base + self.k * d, 0.0);
        for k in 0..self.k {
            let a = self.a[i * self.k + k];
            let alpha = field.alpha(k, t);
            self.alpha.push(alpha);
            let eta = &mut self.eta[base + k * d..base + (k + 1) * d];
            field.eta(k, a, eta);
            let dw = match self.channels[k] {
                Some(Channel::W0) => Some(dw0),
                Some(Channel::W1) => dw1,
                None => None,
            };
            let noise: f64 = dw.map_or(0.0, |dw| eta.iter().zip(dw).map(|(e, w)| e * w).sum());
            self.a.push(a + alpha * dt + noise);
        }
        self.step += 1;
    }

    /// `u_{t_i}` at a frozen argument whose component values are `values[k] = F_k(x, mu)`:
    /// `f + sum_{j<i} phi_j dt + sum_{j<i} psi_j . dW_j`, summed literally.
    pub fn value_at(&self, values: &[f64], i: usize) -> f64 {
        let d = self.dim;
        let dt = self.grid.dt();
        let mut u: f64 = self.a(0).iter().zip(values).map(|(a, f)| a * f).sum();
        for j in 0..i {
            let phi: f64 = self.alpha(j).iter().zip(values).map(|(a, f)| a * f).sum();
            u += phi * dt;
            for (channel, inc) in [(Channel::W0, &self.dw0), (Channel::W1, &self.dw1)] {
                let mut noise = 0.0;
                let mut any = false;
                for k in 0..self.k {
                    if self.channels[k] != Some(channel) {
                        continue;
                    }
                    any = true;
                    let dw = &inc[j * d..(j + 1) * d];
                    let psi_dw: f64 = self.eta(j, k).iter().zip(dw).map(|(e, w)| e * w).sum();
                    noise += values[k] * psi_dw;
                }
                if any {
                    u += noise;
                }
            }
        }
        u
    }
}

/// `u_{t_i}(x, mu)` reconstructed from the field dynamics at the frozen
/// argument `(x, mu)`.
pub fn field_value(
    field: &ItoRandomField,
    trajectory: &FieldTrajectory,
    i: usize,
    x: &[f64],
    mu: &EmpiricalMeasure,
) -> Result<f64> {
    trajectory.grid.check_index(i)?;
    if i > trajectory.step {
        return Err(Error::invalid(format!(
            "field trajectory only reaches node {}",
            trajectory.step
        )));
    }
    if x.len() != field.dim || mu.dim() != field.dim {
        return Err(Error::invalid("argument dimension differs from the field's"));
    }
    let values: Vec<f64> = field
        .components
        .iter()
        .map(|c| c.functional.prepare(x, mu.view()).value)
        .collect();
    Ok(trajectory.value_at(&values, i))
}

impl ItoRandomField {
    /// `phi_{t_i}(x, mu)`.
    pub fn phi(&self, tr: &FieldTrajectory, i: usize, x: &[f64], mu: &EmpiricalMeasure) -> f64 {
        self.components
            .iter()
            .zip(tr.alpha(i))
            .map(|(c, al)| al * c.functional.eval(x, mu))
            .sum()
    }

    /// `psi_{t_i}(x, mu)` on `channel`.
    pub fn psi(&self, tr: &FieldTrajectory, i: usize, channel: Channel, x: &[f64], mu: &EmpiricalMeasure) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for k in 0..self.len() {
            if tr.channel(k) != Some(channel) {
                continue;
            }
            let f = self.functional(k).eval(x, mu);
            for (o, e) in out.iter_mut().zip(tr.eta(i, k)) {
                *o += f * e;
            }
        }
        out
    }

    /// `d_x psi_{t_i}(x, mu)` on `channel`, `D[j][c] = d/dx_j psi_c`.
    pub fn dx_psi(&self, tr: &FieldTrajectory, i: usize, channel: Channel, x: &[f64], mu: &EmpiricalMeasure) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        let mut g = vec![0.0; d];
        for k in 0..self.len() {
            if tr.channel(k) != Some(channel) {
                continue;
            }
            let f = self.functional(k);
            let p = f.prepare(x, mu.view());
            g.fill(0.0);
            f.dx_add(&p, x, 1.0, &mut g);
            for j in 0..d {
                for (c, e) in tr.eta(i, k).iter().enumerate() {
                    out[j * d + c] += g[j] * e;
                }
            }
        }
        out
    }

    /// `d_mu psi^0_{t_i}(x, mu, v)`, `D[j][c] = (d_mu psi_c(v))_j`.
    pub fn dmu_psi(&self, tr: &FieldTrajectory, i: usize, x: &[f64], mu: &EmpiricalMeasure, v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        let mut g = vec![0.0; d];
        for k in 0..self.len() {
            if tr.channel(k) != Some(Channel::W0) {
                continue;
            }
            let f = self.functional(k);
            let p = f.prepare(x, mu.view());
            g.fill(0.0);
            f.dmu_add(&p, x, mu.view(), v, 1.0, &mut g);
            for j in 0..d {
                for (c, e) in tr.eta(i, k).iter().enumerate() {
                    out[j * d + c] += g[j] * e;
                }
            }
        }
        out
    }
}
