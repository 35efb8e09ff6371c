//! Built-in oracle suites with pinned configs, seeds and tolerances.

use std::fmt;
use std::str::FromStr;

use crate::chain::{
    expand_conditional_joint, expand_full_flow_joint, expand_full_flow_measure, expand_ito_wentzell_classic,
    ExpansionReport, TermId,
};
use crate::error::{Error, Result};
use crate::functional::{
    lions_derivative, lions_hessian_v, lions_second, make_ito_field, FieldComponent, FieldKind, InnerFunction,
    ItoRandomField, MeasureFunctional, Multiplier, NoiseMode,
};
use crate::harness::{run_experiment, CheckOutcome, ExperimentConfig, Fault, LadderPoint, PointResult};
use crate::lions::{numeric_lions_derivative, numeric_lions_second, FiniteDifferenceScheme};
use crate::model::{make_time_grid, sample_brownian, EmpiricalMeasure, SeedPolicy, StreamRole};
use crate::sde::{
    simulate_conditional_particle_system, simulate_ito_process, simulate_particle_system, Channel, CoefficientSpec,
    Driving, InitialLaw, Tensor,
};

/// Oracle configs shipped with the crate.
pub mod configs {
    pub const CLASSIC: &str = include_str!("../configs/classic.toml");
    pub const CLASSIC_LADDER: &str = include_str!("../configs/classic-ladder.toml");
    pub const FULL_MEASURE: &str = include_str!("../configs/full-measure.toml");
    pub const FULL_MEASURE_LADDER: &str = include_str!("../configs/full-measure-ladder.toml");
    pub const CONDITIONAL_SQUARE: &str = include_str!("../configs/conditional-square.toml");
    pub const MEAN_COMMON_NOISE: &str = include_str!("../configs/mean-common-noise.toml");
    pub const CROSS_LIONS: &str = include_str!("../configs/cross-lions.toml");
    pub const FROZEN: &str = include_str!("../configs/frozen.toml");
    pub const MOLLIFICATION_VARIANCE: &str = include_str!("../configs/mollification-variance.toml");

    /// `(file stem, contents)` for every shipped config.
    pub const ALL: [(&str, &str); 9] = [
        ("classic", CLASSIC),
        ("classic-ladder", CLASSIC_LADDER),
        ("full-measure", FULL_MEASURE),
        ("full-measure-ladder", FULL_MEASURE_LADDER),
        ("conditional-square", CONDITIONAL_SQUARE),
        ("mean-common-noise", MEAN_COMMON_NOISE),
        ("cross-lions", CROSS_LIONS),
        ("frozen", FROZEN),
        ("mollification-variance", MOLLIFICATION_VARIANCE),
    ];
}

/// Parse a shipped config; they are validated by tests.
pub fn builtin(src: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(src).expect("shipped config parses")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Projection,
    Classic,
    Full,
    Conditional,
    Ablation,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Projection, Suite::Classic, Suite::Full, Suite::Conditional, Suite::Ablation];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Projection => "projection",
            Suite::Classic => "classic",
            Suite::Full => "full",
            Suite::Conditional => "conditional",
            Suite::Ablation => "ablation",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| Error::Config {
            path: "suite".into(),
            message: format!(
                "unknown suite `{s}`; expected one of {}",
                Suite::ALL.map(Suite::name).join(", ")
            ),
        })
    }
}

/// Run a suite. `fault` is applied to every Monte Carlo config of the suite.
pub fn run_suite(suite: Suite, fault: Option<Fault>) -> Result<Vec<CheckOutcome>> {
    let configs: &[&str] = match suite {
        Suite::Projection => return Ok(projection_checks(&projection_suite(PROJECTION_SEED)?)),
        Suite::Classic => &[configs::CLASSIC, configs::CLASSIC_LADDER],
        Suite::Full => &[configs::FULL_MEASURE, configs::FULL_MEASURE_LADDER],
        Suite::Conditional => &[configs::CONDITIONAL_SQUARE],
        Suite::Ablation => &[configs::CLASSIC, ABLATION_CONDITIONAL, configs::MEAN_COMMON_NOISE, configs::CROSS_LIONS],
    };
    let mut out = Vec::new();
    for src in configs {
        let mut cfg = builtin(src);
        cfg.fault = fault;
        let run = run_experiment(&cfg)?;
        let tag = cfg.theorem.to_string();
        out.extend(run.checks.into_iter().map(|c| CheckOutcome {
            name: format!("{tag} {}", c.name),
            ..c
        }));
        if suite == Suite::Conditional {
            let last = run.study.points.last().expect("ladder is nonempty");
            out.push(common_noise_tracking(&cfg, last, LHS_TRACKING_RMS)?);
        }
    }
    Ok(out)
}

/// The squared-mean oracle at a single, smaller point, keeping only the
/// exactness and ablation checks.
const ABLATION_CONDITIONAL: &str = r#"
schema_version = 1
theorem = "IWL-conditional-measure"
replications = 64
seed = 20240103

[ladder]
steps = [1024]
particles = [1024]

[field]
kind = "static"
two_noise = true
functional = { kind = "quadratic-mean", f = { kind = "polynomial", terms = [{ coef = 1.0, powers = [1] }] } }

[cloud]
y0 = { kind = "point", value = 0.0 }
drift = { kind = "constant", value = 0.0 }
sigma = { kind = "constant", value = 1.0 }
sigma0 = { kind = "constant", value = 1.0 }

[tolerances]
exact_terms = [{ term = "dmu2_sigma0_dt", value = 1.0, tolerance = 1e-12 }]
ablation = [{ term = "dmu2_sigma0_dt", expected = 1.0, tolerance = 0.1, shift = true }]
"#;

/// Bound on the RMS over replications of `lhs - (W^0_T)^2` for the
/// squared-mean oracle with `Y_0 = 0`, `sigma0 = sigma1 = 1`.
pub const LHS_TRACKING_RMS: f64 = 0.05;

/// `W^0_T` of every replication at `point`, regenerated from the seed policy.
pub fn terminal_common_noise(config: &ExperimentConfig, point: LadderPoint) -> Result<Vec<f64>> {
    let grid = config.grid(point.steps)?;
    let seeds = SeedPolicy::new(config.seed);
    (0..config.replications as u64)
        .map(|rep| {
            let w0 = sample_brownian(grid, config.dim, &mut seeds.stream(StreamRole::PrimaryNoise, rep, 0))?;
            Ok(w0.terminal()[0])
        })
        .collect()
}

/// With `m(mu_t) = W^0_t + mean of the idiosyncratic paths`, the left side
/// `m(mu_T)^2 - m(mu_0)^2` follows `(W^0_T)^2` up to an `O(N^{-1/2})` spread.
pub fn common_noise_tracking(config: &ExperimentConfig, point: &PointResult, bound: f64) -> Result<CheckOutcome> {
    let w = terminal_common_noise(config, point.point)?;
    let diffs: Vec<f64> = point
        .records
        .iter()
        .filter(|r| r.is_finite())
        .map(|r| r.lhs - w[r.replication as usize] * w[r.replication as usize])
        .collect();
    let rms = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len().max(1) as f64).sqrt();
    Ok(CheckOutcome::new(
        format!("lhs tracks (W0_T)^2 [M={} N={}]", point.point.steps, point.point.particles),
        !diffs.is_empty() && rms <= bound,
        format!("rms {rms:e} <= {bound:e}"),
    ))
}

pub const PROJECTION_SEED: u64 = 20240107;
pub const PROJECTION_CLOUDS: usize = 20;
pub const PROJECTION_SIZES: [usize; 2] = [8, 64];
pub const PROJECTION_FIRST_TOL: f64 = 1e-5;
pub const PROJECTION_SECOND_TOL: f64 = 1e-3;
pub const PROJECTION_STEP: f64 = 1e-4;

/// One representative of each catalogue kind in dimension `d`.
pub fn projection_catalogue(d: usize) -> Vec<MeasureFunctional> {
    let poly = if d == 1 {
        InnerFunction::polynomial(&[(0.5, &[2]), (-0.2, &[3]), (0.1, &[1])])
    } else {
        InnerFunction::polynomial(&[(0.5, &[2, 0]), (-0.2, &[1, 2]), (0.2, &[0, 1])])
    };
    let trig = InnerFunction::trigonometric(0.6, (0..d).map(|a| 0.8 - 0.3 * a as f64).collect(), 0.4);
    vec![
        MeasureFunctional::linear(poly.clone()),
        MeasureFunctional::quadratic_mean(trig.clone()),
        MeasureFunctional::DoubleIntegral { kernel: poly.clone() },
        MeasureFunctional::Variance,
        MeasureFunctional::product(trig, poly),
        MeasureFunctional::ScaledSecondMoment { scale: 0.5 },
    ]
}

/// Worst finite-difference errors for one functional in one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionRow {
    pub functional: &'static str,
    pub dim: usize,
    pub clouds: usize,
    pub max_first_error: f64,
    pub max_second_error: f64,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Finite-difference Lions derivatives against closed forms on random clouds.
///
/// First derivatives are checked at every particle; second derivatives on two
/// diagonal and two off-diagonal particle pairs per cloud.
pub fn projection_suite(seed: u64) -> Result<Vec<ProjectionRow>> {
    let scheme = FiniteDifferenceScheme::new(PROJECTION_STEP)?;
    let seeds = SeedPolicy::new(seed);
    let mut rows = Vec::new();
    for d in [1, 2] {
        for (which, f) in projection_catalogue(d).into_iter().enumerate() {
            let mut row = ProjectionRow {
                functional: f.name(),
                dim: d,
                clouds: 0,
                max_first_error: 0.0,
                max_second_error: 0.0,
            };
            for n in PROJECTION_SIZES {
                for c in 0..PROJECTION_CLOUDS as u64 {
                    let index = (which * 1000 + n * 10 + d) as u64;
                    let mut s = seeds.stream(StreamRole::TestCloud, c, index);
                    let mu = EmpiricalMeasure::new(d, (0..n * d).map(|_| 0.7 * s.normal()).collect())?;
                    let x: Vec<f64> = (0..d).map(|_| s.normal()).collect();
                    for j in 0..n {
                        let num = numeric_lions_derivative(&f, &x, &mu, j, &scheme)?;
                        let exact = lions_derivative(&f, &x, &mu, mu.point(j));
                        row.max_first_error = row.max_first_error.max(max_abs_diff(&num, &exact));
                    }
                    for j in [0, n - 1] {
                        let est = numeric_lions_second(&f, &x, &mu, j, j, &scheme)?;
                        let hv = lions_hessian_v(&f, &x, &mu, mu.point(j));
                        let dv = est.dv_dmu.expect("diagonal estimate carries d_v d_mu");
                        row.max_second_error = row.max_second_error.max(max_abs_diff(&dv, &hv));
                    }
                    for (j, k) in [(0, n - 1), (n / 2, 1)] {
                        let est = numeric_lions_second(&f, &x, &mu, j, k, &scheme)?;
                        let exact = lions_second(&f, mu.point(j), mu.point(k));
                        row.max_second_error = row.max_second_error.max(max_abs_diff(&est.dmu2, &exact));
                    }
                    row.clouds += 1;
                }
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Two checks per row: first- and second-derivative error bounds.
pub fn projection_checks(rows: &[ProjectionRow]) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    for r in rows {
        let tag = format!("projection {} d={}", r.functional, r.dim);
        out.push(CheckOutcome::new(
            format!("{tag} first"),
            r.max_first_error <= PROJECTION_FIRST_TOL,
            format!("max error {:e} <= {PROJECTION_FIRST_TOL:e} over {} clouds", r.max_first_error, r.clouds),
        ));
        out.push(CheckOutcome::new(
            format!("{tag} second"),
            r.max_second_error <= PROJECTION_SECOND_TOL,
            format!("max error {:e} <= {PROJECTION_SECOND_TOL:e} over {} clouds", r.max_second_error, r.clouds),
        ));
    }
    out
}

pub const LATTICE_TOL: f64 = 1e-12;

/// Largest gap between two expansions of the same path, pairing each term of
/// `wide` with `narrow`'s term `pair(id)`. Terms without a partner must vanish.
pub fn expansion_gap(wide: &ExpansionReport, narrow: &ExpansionReport, pair: fn(TermId) -> TermId) -> f64 {
    let mut gap = (wide.lhs - narrow.lhs).abs();
    for &(id, v) in &wide.terms {
        gap = gap.max((v - narrow.term(pair(id)).unwrap_or(0.0)).abs());
    }
    for &(id, v) in &narrow.terms {
        if !wide.terms.iter().any(|&(w, _)| pair(w) == id) {
            gap = gap.max(v.abs());
        }
    }
    gap
}

fn same(id: TermId) -> TermId {
    id
}

/// Conditional schema terms on the full-flow schema once `W^1` plays `W`.
fn conditional_to_full(id: TermId) -> TermId {
    match id {
        TermId::Psi0DW0 => TermId::PsiDW,
        TermId::DxuGamma0DW0 => TermId::DxuGammaDW,
        TermId::Dxpsi0Gamma0Dt => TermId::DxpsiGammaDt,
        other => other,
    }
}

/// Worst gaps along the three reductions between expansions, over `trials`
/// shared-seed paths with `M = 64`, `N = 32`:
/// conditional joint (`sigma0 = 0`, x-free field) vs full-flow measure,
/// full-flow joint (x-free) vs full-flow measure, and full-flow joint
/// (measure-free) vs classical.
pub fn reduction_lattice(seed: u64, trials: u64) -> Result<[f64; 3]> {
    let (m, n) = (64, 32);
    let grid = make_time_grid(1.0, m)?;
    let seeds = SeedPolicy::new(seed);
    let c = CoefficientSpec::constant;
    let trig = InnerFunction::trigonometric(1.0, vec![0.7], 0.2);
    let measure_fields = |two: bool| -> Result<Vec<ItoRandomField>> {
        [MeasureFunctional::quadratic_mean(trig.clone()), MeasureFunctional::Variance]
            .into_iter()
            .map(|functional| {
                make_ito_field(
                    &FieldKind::ExponentialMartingale {
                        functional,
                        lambda: Tensor::Scalar(0.5),
                        channel: Channel::W0,
                        two_noise: two,
                    },
                    1,
                )
            })
            .collect()
    };
    let (single, double) = (measure_fields(false)?, measure_fields(true)?);
    let comp = |functional, multiplier| FieldComponent { functional, multiplier };
    let measure_free = ItoRandomField::new(
        NoiseMode::Single,
        1,
        vec![
            comp(
                MeasureFunctional::product(InnerFunction::trigonometric(1.0, vec![1.3], 0.0), InnerFunction::constant(1.0)),
                Multiplier::Ramp,
            ),
            comp(
                MeasureFunctional::product(InnerFunction::polynomial(&[(1.0, &[2])]), InnerFunction::constant(1.0)),
                Multiplier::Noise {
                    loading: Tensor::Scalar(0.4),
                    channel: Channel::W0,
                },
            ),
        ],
    )?;

    let mut gaps = [0.0f64; 3];
    for rep in 0..trials {
        let w0 = sample_brownian(grid, 1, &mut seeds.stream(StreamRole::PrimaryNoise, rep, 0))?;
        let w1 = sample_brownian(grid, 1, &mut seeds.stream(StreamRole::SecondaryNoise, rep, 0))?;
        let y0 = InitialLaw::gaussian(0.0, 1.0);
        let full = simulate_particle_system(&c(0.3), &c(0.9), n, &y0, grid, 1, &seeds, rep)?;
        let cond = simulate_conditional_particle_system(&c(0.3), &c(0.0), &c(0.9), n, &y0, &w0, &seeds, rep)?;
        let x = simulate_ito_process(&c(0.2), &c(0.8), None, &[0.1], Driving::Single(&w0))?;
        let x2 = simulate_ito_process(&c(0.2), &c(0.7), Some(&c(0.5)), &[0.1], Driving::Pair { w0: &w0, w1: &w1 })?;
        for (u1, u2) in single.iter().zip(&double) {
            // The full flow is driven by the particles' own paths, which the
            // conditional cloud reads as W^1; the field noise rides on W^0 in both.
            let narrow = expand_full_flow_measure(u1, &full, &w0)?;
            let wide = expand_conditional_joint(u2, &x2, &cond, &w0, &w1)?;
            gaps[0] = gaps[0].max(expansion_gap(&wide, &narrow, conditional_to_full));
            let wide = expand_full_flow_joint(u1, &x, &full, &w0)?;
            gaps[1] = gaps[1].max(expansion_gap(&wide, &narrow, same));
        }
        let wide = expand_full_flow_joint(&measure_free, &x, &full, &w0)?;
        let narrow = expand_ito_wentzell_classic(&measure_free, &x, &w0)?;
        gaps[2] = gaps[2].max(expansion_gap(&wide, &narrow, same));
    }
    Ok(gaps)
}
