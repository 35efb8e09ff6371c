use proptest::prelude::*;

use super::*;
use crate::functional::{
    make_ito_field, FieldComponent, FieldKind, InnerFunction, ItoRandomField, MeasureFunctional, Multiplier, NoiseMode,
};
use crate::model::{make_time_grid, sample_brownian, BrownianPath, SeedPolicy, StreamRole, TimeGrid};
use crate::sde::{
    simulate_conditional_particle_system, simulate_ito_process, simulate_particle_system, Channel, CoefficientSpec,
    Driving, InitialLaw, ParticleCloudPath, StatePath, Tensor,
};

fn grid(m: usize) -> TimeGrid {
    make_time_grid(1.0, m).unwrap()
}

fn bm(m: usize, seed: u64, role: StreamRole, rep: u64) -> BrownianPath {
    sample_brownian(grid(m), 1, &mut SeedPolicy::new(seed).stream(role, rep, 0)).unwrap()
}

fn c(v: f64) -> CoefficientSpec {
    CoefficientSpec::constant(v)
}

fn process(beta: f64, gamma: f64, x0: f64, w: &BrownianPath) -> StatePath {
    simulate_ito_process(&c(beta), &c(gamma), None, &[x0], Driving::Single(w)).unwrap()
}

fn process2(gamma0: f64, gamma1: f64, w0: &BrownianPath, w1: &BrownianPath) -> StatePath {
    simulate_ito_process(&c(0.0), &c(gamma0), Some(&c(gamma1)), &[0.0], Driving::Pair { w0, w1 }).unwrap()
}

fn full_cloud(n: usize, y0: InitialLaw, b: f64, s: f64, m: usize, rep: u64) -> ParticleCloudPath {
    simulate_particle_system(&c(b), &c(s), n, &y0, grid(m), 1, &SeedPolicy::new(5), rep).unwrap()
}

fn cond_cloud(n: usize, b: f64, s0: f64, s1: f64, w0: &BrownianPath, rep: u64) -> ParticleCloudPath {
    simulate_conditional_particle_system(&c(b), &c(s0), &c(s1), n, &InitialLaw::point(0.0), w0, &SeedPolicy::new(5), rep)
        .unwrap()
}

fn x() -> InnerFunction {
    InnerFunction::coordinate(0)
}

fn one() -> InnerFunction {
    InnerFunction::constant(1.0)
}

fn v2() -> InnerFunction {
    InnerFunction::polynomial(&[(1.0, &[2])])
}

fn field(mode: NoiseMode, comps: Vec<(MeasureFunctional, Multiplier)>) -> ItoRandomField {
    let comps = comps
        .into_iter()
        .map(|(functional, multiplier)| FieldComponent { functional, multiplier })
        .collect();
    ItoRandomField::new(mode, 1, comps).unwrap()
}

fn noise(load: f64, channel: Channel) -> Multiplier {
    Multiplier::Noise {
        loading: Tensor::Scalar(load),
        channel,
    }
}

fn statik(f: MeasureFunctional, two: bool) -> ItoRandomField {
    make_ito_field(&FieldKind::Static { functional: f, two_noise: two }, 1).unwrap()
}

fn qv_minus_t(w: &BrownianPath) -> f64 {
    w.increments().iter().map(|d| d * d).sum::<f64>() - 1.0
}

fn ito_sum(w: &BrownianPath) -> f64 {
    (0..w.grid().steps()).map(|i| w.value(i)[0] * w.increment(i)[0]).sum()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn assert_all_zero(r: &ExpansionReport) {
    assert_eq!(r.lhs, 0.0, "{r:?}");
    assert!(r.terms.iter().all(|(_, v)| *v == 0.0), "{r:?}");
    assert_eq!(r.residual, 0.0);
}

#[test]
fn term_and_theorem_names_round_trip() {
    for t in ALL_TERMS {
        assert_eq!(t.as_str().parse::<TermId>().unwrap(), t);
        assert_eq!(serde_json::to_value(t).unwrap(), serde_json::json!(t.as_str()));
    }
    for t in TheoremId::ALL {
        assert_eq!(t.as_str().parse::<TheoremId>().unwrap(), t);
        assert_eq!(serde_json::to_value(t).unwrap(), serde_json::json!(t.as_str()));
    }
    assert!("nope".parse::<TermId>().is_err());
    assert_eq!(TheoremId::IwlConditionalJoint.schema().len(), 15);
    assert_eq!(TheoremId::IwlFullJoint.schema().len(), 8);
}

#[test]
fn classic_x_times_w() {
    let m = 256;
    let w = bm(m, 1, StreamRole::PrimaryNoise, 0);
    let v = field(NoiseMode::Single, vec![(MeasureFunctional::product(x(), one()), noise(1.0, Channel::W0))]);
    let xp = process(0.0, 1.0, 0.0, &w);
    let r = expand_ito_wentzell_classic(&v, &xp, &w).unwrap();
    let s = ito_sum(&w);
    assert!(close(r.lhs, w.terminal()[0].powi(2), 1e-12));
    let expect = [0.0, s, 0.0, s, 0.0, 1.0];
    for ((_, got), want) in r.terms.iter().zip(expect) {
        assert!(close(*got, want, 1e-12), "{r:?}");
    }
    assert!(close(r.residual, qv_minus_t(&w), 1e-12));
    let reduced = expand_ito_wentzell_reduced(&v, &xp, &w).unwrap();
    assert_eq!(reduced.terms, r.terms);
}

#[test]
fn classic_residual_statistics() {
    let m = 64;
    let reps = 4000;
    let v = field(NoiseMode::Single, vec![(MeasureFunctional::product(x(), one()), noise(1.0, Channel::W0))]);
    let rs: Vec<f64> = (0..reps)
        .map(|rep| {
            let w = bm(m, 2, StreamRole::PrimaryNoise, rep);
            expand_ito_wentzell_classic(&v, &process(0.0, 1.0, 0.0, &w), &w).unwrap().residual
        })
        .collect();
    let mean = rs.iter().sum::<f64>() / reps as f64;
    let var = rs.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let expected = 2.0 / m as f64;
    assert!(mean.abs() < 4.0 * (expected / reps as f64).sqrt(), "{mean}");
    assert!((var / expected - 1.0).abs() < 0.1, "{var} vs {expected}");
}

#[test]
fn classic_trivial_cases() {
    let w = bm(32, 3, StreamRole::PrimaryNoise, 0);
    let v = statik(MeasureFunctional::product(InnerFunction::polynomial(&[(1.0, &[3])]), one()), false);
    assert_all_zero(&expand_ito_wentzell_classic(&v, &process(0.0, 0.0, 0.4, &w), &w).unwrap());

    let v = statik(MeasureFunctional::product(x(), one()), false);
    let r = expand_ito_wentzell_classic(&v, &process(1.0, 0.0, 0.0, &w), &w).unwrap();
    assert!(close(r.lhs, 1.0, 1e-12));
    assert!(close(r.term(TermId::DxuBetaDt).unwrap(), 1.0, 1e-12));
    assert!(r.residual.abs() <= 1e-12);
}

#[test]
fn classic_rejects_measure_dependence_and_mismatched_grids() {
    let w = bm(32, 3, StreamRole::PrimaryNoise, 0);
    let xp = process(0.0, 1.0, 0.0, &w);
    let v = statik(MeasureFunctional::linear(x()), false);
    assert!(expand_ito_wentzell_classic(&v, &xp, &w).is_err());
    let v = statik(MeasureFunctional::product(x(), one()), false);
    let other = bm(64, 3, StreamRole::PrimaryNoise, 0);
    assert!(expand_ito_wentzell_classic(&v, &xp, &other).is_err());
}

#[test]
fn ito_lions_second_moment() {
    let (n, m) = (2000, 200);
    let w = bm(m, 4, StreamRole::PrimaryNoise, 0);
    let xp = process(0.0, 0.0, 0.0, &w);
    let cloud = full_cloud(n, InitialLaw::point(0.0), 0.0, 1.0, m, 0);
    let u = statik(MeasureFunctional::linear(v2()), false);
    let r = expand_ito_lions(&u, &xp, &cloud, &w).unwrap();
    assert!(close(r.lhs, 1.0, 0.15), "{r:?}");
    assert_eq!(r.term(TermId::DmuBDt), Some(0.0));
    assert!(close(r.term(TermId::DvDmuSigmaDt).unwrap(), 1.0, 1e-12));
    let bound = 3.0 * ((n as f64).powf(-0.5) + (m as f64).powf(-0.5));
    assert!(r.residual.abs() <= bound, "{} > {bound}", r.residual);
}

#[test]
fn ito_lions_mean_with_drift() {
    let (n, m) = (1000, 100);
    let w = bm(m, 4, StreamRole::PrimaryNoise, 0);
    let xp = process(0.0, 0.0, 0.0, &w);
    let u = statik(MeasureFunctional::linear(x()), false);
    let mut sq = 0.0;
    let reps = 40;
    for rep in 0..reps {
        let cloud = full_cloud(n, InitialLaw::point(0.0), 1.0, 0.8, m, rep);
        let r = expand_ito_lions(&u, &xp, &cloud, &w).unwrap();
        assert!(close(r.term(TermId::DmuBDt).unwrap(), 1.0, 1e-12));
        assert_eq!(r.term(TermId::DvDmuSigmaDt), Some(0.0));
        let mean_change: f64 = (0..n).map(|l| cloud.particle(m, l)[0]).sum::<f64>() / n as f64;
        assert!(close(r.residual, mean_change - 1.0, 1e-12));
        sq += r.residual * r.residual;
    }
    let rms = (sq / reps as f64).sqrt();
    let expect = 0.8 / (n as f64).sqrt();
    assert!(rms < 1.5 * expect && rms > 0.5 * expect, "{rms} vs {expect}");
}

#[test]
fn ito_lions_trivial_and_errors() {
    let m = 16;
    let w = bm(m, 4, StreamRole::PrimaryNoise, 0);
    let xp = process(0.0, 0.0, 0.3, &w);
    let frozen = full_cloud(5, InitialLaw::gaussian(0.0, 1.0), 0.0, 0.0, m, 0);
    for f in crate::functional::tests::catalogue(1) {
        assert_all_zero(&expand_ito_lions(&statik(f, false), &xp, &frozen, &w).unwrap());
    }
    let u = statik(MeasureFunctional::linear(v2()), false);
    let cond = cond_cloud(5, 0.0, 1.0, 1.0, &w, 0);
    assert!(expand_ito_lions(&u, &xp, &cond, &w).is_err());
    let noisy = make_ito_field(
        &FieldKind::LinearNoise {
            functional: MeasureFunctional::linear(v2()),
            loading: Tensor::Scalar(1.0),
            channel: Channel::W0,
            two_noise: false,
        },
        1,
    )
    .unwrap();
    assert!(expand_ito_lions(&noisy, &xp, &frozen, &w).is_err());
}

#[test]
fn ito_lions_time_dependence() {
    let m = 100;
    let w = bm(m, 4, StreamRole::PrimaryNoise, 0);
    let xp = process(0.0, 0.0, 0.0, &w);
    let frozen = full_cloud(3, InitialLaw::point(2.0), 0.0, 0.0, m, 0);
    let u = make_ito_field(
        &FieldKind::DriftRamp {
            functional: MeasureFunctional::linear(x()),
            two_noise: false,
        },
        1,
    )
    .unwrap();
    let r = expand_ito_lions(&u, &xp, &frozen, &w).unwrap();
    assert!(close(r.term(TermId::DtuDt).unwrap(), r.lhs, 1e-12));
    assert!(r.residual.abs() <= 1e-12);
}

#[test]
fn full_flow_measure_gaussian_second_moment() {
    let (n, m, reps) = (512, 64, 32);
    let u = statik(MeasureFunctional::linear(v2()), false);
    let rs: Vec<f64> = (0..reps)
        .map(|rep| {
            let w = bm(m, 6, StreamRole::PrimaryNoise, rep);
            let cloud = full_cloud(n, InitialLaw::gaussian(0.0, 1.0), 0.5, 1.0, m, rep);
            expand_full_flow_measure(&u, &cloud, &w).unwrap().residual
        })
        .collect();
    let mean = rs.iter().sum::<f64>() / reps as f64;
    let se = (rs.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / ((reps - 1) * reps) as f64).sqrt();
    assert!(mean.abs() <= 3.0 * se + 0.25 / m as f64, "{mean} ± {se}");
}

#[test]
fn full_flow_measure_linear_noise_telescopes() {
    let m = 50;
    let w = bm(m, 7, StreamRole::PrimaryNoise, 0);
    let frozen = full_cloud(4, InitialLaw::gaussian(0.0, 1.0), 0.0, 0.0, m, 0);
    let u = make_ito_field(
        &FieldKind::LinearNoise {
            functional: MeasureFunctional::Variance,
            loading: Tensor::Scalar(0.7),
            channel: Channel::W0,
            two_noise: false,
        },
        1,
    )
    .unwrap();
    let r = expand_full_flow_measure(&u, &frozen, &w).unwrap();
    assert!(close(r.lhs, 0.7 * w.terminal()[0], 1e-12));
    assert!(close(r.term(TermId::PsiDW).unwrap(), 0.7 * w.terminal()[0], 1e-12));
    assert!(r.residual.abs() <= 1e-12);
}

#[test]
fn full_flow_measure_exponential_martingale_rate() {
    let u = make_ito_field(
        &FieldKind::ExponentialMartingale {
            functional: MeasureFunctional::linear(x()),
            lambda: Tensor::Scalar(1.0),
            channel: Channel::W0,
            two_noise: false,
        },
        1,
    )
    .unwrap();
    let reps = 200;
    let ladder = [64usize, 256, 1024, 4096];
    let rms: Vec<f64> = ladder
        .iter()
        .map(|&m| {
            let cloud = full_cloud(1, InitialLaw::point(1.0), 0.0, 0.0, m, 0);
            let sq: f64 = (0..reps)
                .map(|rep| {
                    let w = bm(m, 8, StreamRole::PrimaryNoise, rep);
                    let r = expand_full_flow_measure(&u, &cloud, &w).unwrap();
                    // The grid-consistent lhs telescopes; the closed form E_T - 1 does not.
                    assert!(r.residual.abs() <= 1e-12);
                    let closed = (w.terminal()[0] - 0.5).exp() - 1.0;
                    (closed - r.rhs()).powi(2)
                })
                .sum();
            (sq / reps as f64).sqrt()
        })
        .collect();
    let xs: Vec<f64> = ladder.iter().map(|&m| (m as f64).log2()).collect();
    let ys: Vec<f64> = rms.iter().map(|r| -r.log2()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((0.35..=0.65).contains(&slope), "{slope}: {rms:?}");
}

#[test]
fn full_flow_measure_rejects_two_noise_and_x_dependence() {
    let w = bm(8, 7, StreamRole::PrimaryNoise, 0);
    let cloud = full_cloud(4, InitialLaw::point(0.0), 0.0, 1.0, 8, 0);
    assert!(expand_full_flow_measure(&statik(MeasureFunctional::Variance, true), &cloud, &w).is_err());
    assert!(expand_full_flow_measure(&statik(MeasureFunctional::product(x(), x()), false), &cloud, &w).is_err());
}

#[test]
fn full_flow_joint_cross_term() {
    let m = 2000;
    let cst = 0.7;
    let w = bm(m, 9, StreamRole::PrimaryNoise, 0);
    let xp = process(0.0, 1.0, 0.0, &w);
    let cloud = full_cloud(3, InitialLaw::point(cst), 0.0, 0.0, m, 0);
    let u = field(NoiseMode::Single, vec![(MeasureFunctional::product(x(), x()), noise(1.0, Channel::W0))]);
    let r = expand_full_flow_joint(&u, &xp, &cloud, &w).unwrap();
    assert!(close(r.lhs, cst * w.terminal()[0].powi(2), 1e-10));
    assert!(close(r.term(TermId::DxpsiGammaDt).unwrap(), cst, 1e-12));
    assert!(close(r.residual, cst * qv_minus_t(&w), 1e-10));
    let ablated = term_ablation(&r, TermId::DxpsiGammaDt).unwrap();
    assert!(close(ablated, cst, 0.15), "{ablated}");
}

#[test]
fn full_flow_joint_classical_square() {
    let m = 300;
    let w = bm(m, 10, StreamRole::PrimaryNoise, 0);
    let xp = process(0.0, 1.0, 0.0, &w);
    let cloud = full_cloud(3, InitialLaw::point(1.0), 0.0, 0.0, m, 0);
    let u = statik(MeasureFunctional::product(v2(), x()), false);
    let r = expand_full_flow_joint(&u, &xp, &cloud, &w).unwrap();
    assert!(close(r.lhs, w.terminal()[0].powi(2), 1e-12));
    assert!(close(r.term(TermId::DxuGammaDW).unwrap(), 2.0 * ito_sum(&w), 1e-12));
    assert!(close(r.term(TermId::HessXDt).unwrap(), 1.0, 1e-12));
    assert!(close(r.residual, qv_minus_t(&w), 1e-12));
}

/// Terms with the same name agree; terms present only in `wide` vanish.
fn assert_reduces(wide: &ExpansionReport, narrow: &ExpansionReport, tol: f64) {
    assert!(close(wide.lhs, narrow.lhs, tol));
    for (id, v) in &wide.terms {
        match narrow.term(*id) {
            Some(n) => assert!(close(*v, n, tol), "{id}: {v} vs {n}"),
            None => assert_eq!(*v, 0.0, "{id} should vanish"),
        }
    }
}

#[test]
fn reduction_lattice() {
    let m = 64;
    let w = bm(m, 11, StreamRole::PrimaryNoise, 0);
    let w1 = bm(m, 11, StreamRole::SecondaryNoise, 0);
    let cloud = full_cloud(20, InitialLaw::gaussian(0.0, 1.0), 0.3, 0.9, m, 0);
    let xp = process(0.2, 0.8, 0.1, &w);

    // Joint full flow with an x-free field equals the measure-only expansion.
    let u = make_ito_field(
        &FieldKind::ExponentialMartingale {
            functional: MeasureFunctional::quadratic_mean(InnerFunction::trigonometric(1.0, vec![0.7], 0.2)),
            lambda: Tensor::Scalar(0.5),
            channel: Channel::W0,
            two_noise: false,
        },
        1,
    )
    .unwrap();
    let joint = expand_full_flow_joint(&u, &xp, &cloud, &w).unwrap();
    let measure = expand_full_flow_measure(&u, &cloud, &w).unwrap();
    assert_reduces(&joint, &measure, 1e-12);

    // Joint full flow with a measure-free field equals the classical expansion.
    let v = field(
        NoiseMode::Single,
        vec![
            (MeasureFunctional::product(InnerFunction::trigonometric(1.0, vec![1.3], 0.0), one()), Multiplier::Ramp),
            (MeasureFunctional::product(v2(), one()), noise(0.4, Channel::W0)),
        ],
    );
    let joint = expand_full_flow_joint(&v, &xp, &cloud, &w).unwrap();
    let classic = expand_ito_wentzell_classic(&v, &xp, &w).unwrap();
    for (id, val) in &joint.terms {
        let other = match id {
            TermId::DmuBDt | TermId::DvDmuSigmaDt => 0.0,
            _ => classic.term(*id).unwrap(),
        };
        assert!(close(*val, other, 1e-12), "{id}");
    }

    // Conditional joint with an x-free field equals the conditional measure expansion.
    let cond = cond_cloud(20, 0.3, 0.6, 0.9, &w, 0);
    let u2 = make_ito_field(
        &FieldKind::MeanTimesCommonNoise {
            loading: Tensor::Scalar(0.8),
            f: Some(InnerFunction::trigonometric(1.0, vec![0.9], 0.1)),
        },
        1,
    )
    .unwrap();
    let x2 = process2(0.7, 0.5, &w, &w1);
    let joint = expand_conditional_joint(&u2, &x2, &cond, &w, &w1).unwrap();
    let measure = expand_conditional_measure(&u2, &cond, &w, &w1).unwrap();
    assert_reduces(&joint, &measure, 1e-12);
}

#[test]
fn conditional_without_common_noise_matches_full_flow() {
    let m = 40;
    let w0 = bm(m, 12, StreamRole::PrimaryNoise, 0);
    let w1 = bm(m, 12, StreamRole::SecondaryNoise, 0);
    let cond = cond_cloud(30, 0.4, 0.0, 1.0, &w0, 3);
    let full = full_cloud(30, InitialLaw::point(0.0), 0.4, 1.0, m, 3);
    assert_eq!(cond.points(m), full.points(m));
    for f in [MeasureFunctional::Variance, MeasureFunctional::quadratic_mean(v2())] {
        let c = expand_conditional_measure(&statik(f.clone(), true), &cond, &w0, &w1).unwrap();
        let s = expand_full_flow_measure(&statik(f, false), &full, &w0).unwrap();
        assert!(close(c.lhs, s.lhs, 1e-12));
        for (id, v) in &c.terms {
            let want = match id {
                TermId::Psi0DW0 => s.term(TermId::PsiDW).unwrap(),
                TermId::PhiDt | TermId::DmuBDt | TermId::DvDmuSigmaDt => s.term(*id).unwrap(),
                _ => {
                    assert_eq!(*v, 0.0, "{id}");
                    continue;
                }
            };
            assert!(close(*v, want, 1e-12), "{id}: {v} vs {want}");
        }
    }
}

#[test]
fn conditional_squared_mean() {
    let m = 500;
    let w0 = bm(m, 13, StreamRole::PrimaryNoise, 0);
    let w1 = bm(m, 13, StreamRole::SecondaryNoise, 0);
    let cloud = cond_cloud(400, 0.0, 1.0, 1.0, &w0, 0);
    let u = statik(MeasureFunctional::quadratic_mean(x()), true);
    let r = expand_conditional_measure(&u, &cloud, &w0, &w1).unwrap();
    assert!(close(r.term(TermId::Dmu2Sigma0Dt).unwrap(), 1.0, 1e-12));
    assert_eq!(r.term(TermId::DmuPsi0Sigma0Dt), Some(0.0));
    let shift = term_ablation(&r, TermId::Dmu2Sigma0Dt).unwrap() - r.residual;
    assert!(close(shift, 1.0, 1e-12));
    assert!(r.residual.abs() < 0.3, "{r:?}");
}

#[test]
fn conditional_mean_times_common_noise() {
    let m = 1000;
    let w0 = bm(m, 14, StreamRole::PrimaryNoise, 0);
    let w1 = bm(m, 14, StreamRole::SecondaryNoise, 0);
    let cloud = cond_cloud(1000, 0.0, 1.0, 1.0, &w0, 0);
    let u = make_ito_field(
        &FieldKind::MeanTimesCommonNoise {
            loading: Tensor::Scalar(1.0),
            f: None,
        },
        1,
    )
    .unwrap();
    let r = expand_conditional_measure(&u, &cloud, &w0, &w1).unwrap();
    assert!(close(r.term(TermId::DmuPsi0Sigma0Dt).unwrap(), 1.0, 1e-12));
    assert!(r.residual.abs() < 0.15, "{r:?}");
    let ablated = term_ablation(&r, TermId::DmuPsi0Sigma0Dt).unwrap();
    assert!(close(ablated, 1.0, 0.15), "{ablated}");
}

#[test]
fn conditional_rejects_single_noise_fields() {
    let w0 = bm(8, 14, StreamRole::PrimaryNoise, 0);
    let w1 = bm(8, 14, StreamRole::SecondaryNoise, 0);
    let cloud = cond_cloud(4, 0.0, 1.0, 1.0, &w0, 0);
    assert!(expand_conditional_measure(&statik(MeasureFunctional::Variance, false), &cloud, &w0, &w1).is_err());
    let other = bm(8, 15, StreamRole::PrimaryNoise, 0);
    assert!(expand_conditional_measure(&statik(MeasureFunctional::Variance, true), &cloud, &other, &w1).is_err());
}

#[test]
fn conditional_joint_product_rule() {
    let m = 2000;
    let w0 = bm(m, 16, StreamRole::PrimaryNoise, 0);
    let w1 = bm(m, 16, StreamRole::SecondaryNoise, 0);
    let cloud = cond_cloud(10, 0.0, 1.0, 0.0, &w0, 0);
    let xp = process2(1.0, 0.0, &w0, &w1);
    let u = statik(MeasureFunctional::product(x(), x()), true);
    let r = expand_conditional_joint(&u, &xp, &cloud, &w0, &w1).unwrap();
    let wt = w0.terminal()[0];
    assert!(close(r.lhs, wt * wt, 1e-10));
    assert!(close(r.term(TermId::DxDmuGamma0Dt).unwrap(), 1.0, 1e-12));
    assert!(close(r.term(TermId::DxuGamma0DW0).unwrap(), ito_sum(&w0), 1e-10));
    assert!(close(r.term(TermId::Sigma0DmuDW0).unwrap(), ito_sum(&w0), 1e-10));
    assert!(close(r.residual, qv_minus_t(&w0), 1e-10));
    let ablated = term_ablation(&r, TermId::DxDmuGamma0Dt).unwrap();
    assert!(close(ablated, 1.0, 0.15), "{ablated}");
}

#[test]
fn conditional_joint_second_noise_cross_term() {
    let m = 2000;
    let cst = 0.6;
    let w0 = bm(m, 17, StreamRole::PrimaryNoise, 0);
    let w1 = bm(m, 17, StreamRole::SecondaryNoise, 0);
    let cloud = cond_cloud(3, 0.0, 0.0, 0.0, &w0, 0);
    let xp = process2(0.0, 1.0, &w0, &w1);
    let u = field(NoiseMode::Two, vec![(MeasureFunctional::product(x(), one()), noise(cst, Channel::W1))]);
    let r = expand_conditional_joint(&u, &xp, &cloud, &w0, &w1).unwrap();
    assert!(close(r.term(TermId::Dxpsi1Gamma1Dt).unwrap(), cst, 1e-12));
    assert_eq!(r.term(TermId::Dxpsi0Gamma0Dt), Some(0.0));
    assert!(close(r.residual, cst * qv_minus_t(&w1), 1e-10));
    let shift = term_ablation(&r, TermId::Dxpsi1Gamma1Dt).unwrap() - r.residual;
    assert!(close(shift, cst, 1e-12));
}

#[test]
fn conditional_ito_lions_cross_variation() {
    let m = 1000;
    let w0 = bm(m, 18, StreamRole::PrimaryNoise, 0);
    let w1 = bm(m, 18, StreamRole::SecondaryNoise, 0);
    let cloud = cond_cloud(50, 0.0, 1.0, 0.5, &w0, 0);
    let xp = process2(1.0, 0.5, &w0, &w1);
    let u = statik(MeasureFunctional::product(x(), x()), true);
    let r = expand_conditional_ito_lions(&u, &xp, &cloud, &w0, &w1).unwrap();
    assert!(close(r.term(TermId::DxDmuGamma0Dt).unwrap(), 1.0, 1e-12));
    assert!(r.residual.abs() < 0.3, "{r:?}");
}

#[test]
fn residual_and_ablation_bookkeeping() {
    let m = 30;
    let w = bm(m, 19, StreamRole::PrimaryNoise, 0);
    let cloud = full_cloud(7, InitialLaw::gaussian(0.0, 1.0), 0.2, 0.7, m, 0);
    let r = expand_full_flow_measure(&statik(MeasureFunctional::Variance, false), &cloud, &w).unwrap();
    assert_eq!(residual(&r).to_bits(), r.residual.to_bits());
    assert_eq!(r.term(TermId::PsiDW), Some(0.0));
    assert_eq!(term_ablation(&r, TermId::PsiDW).unwrap(), r.residual);
    assert!(term_ablation(&r, TermId::HessXDt).is_err());
    let back = r.residual + r.rhs();
    assert!((back - r.lhs).abs() <= 4.0 * f64::EPSILON * r.lhs.abs().max(r.rhs().abs()).max(1.0));
    let json = serde_json::to_value(&r).unwrap();
    assert_eq!(json["theorem"], "IWL-full-measure");
    assert!(json["terms"]["dv_dmu_sigma_dt"].is_number());
}

#[test]
fn engine_rejects_misuse() {
    let g = grid(4);
    let u = statik(MeasureFunctional::Variance, false);
    let shape = InputShape {
        process: None,
        cloud: Some(CloudMode::Full),
    };
    let mut e = ChainEngine::new(TheoremId::IwlFullMeasure, &u, g, shape).unwrap();
    let dw = [0.1];
    let pts = [0.0, 1.0];
    let zeros = [0.0; 2];
    let sig = [1.0; 2];
    let view = crate::sde::CloudView {
        dim: 1,
        points: &pts,
        drift: &zeros,
        sigma_own: &sig,
        sigma_common: None,
    };
    let step = StepInput {
        process: None,
        cloud: Some(view),
        dw0: &dw,
        dw1: None,
    };
    assert!(e.step(&step).is_err());
    e.begin(None, Some(crate::model::MeasureView::new(1, &pts))).unwrap();
    e.step(&step).unwrap();
    assert!(e.finish(None, Some(crate::model::MeasureView::new(1, &pts)), Discretization::default()).is_err());
    assert!(ChainEngine::new(TheoremId::IwlFullJoint, &u, g, shape).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn frozen_dynamics_telescope(which in 0usize..6, x0 in -1.0f64..1.0, seed in 0u64..1000) {
        let m = 12;
        let w0 = bm(m, seed, StreamRole::PrimaryNoise, 0);
        let w1 = bm(m, seed, StreamRole::SecondaryNoise, 0);
        let f = crate::functional::tests::catalogue(1)[which].clone();
        let xp = process(0.0, 0.0, x0, &w0);
        let xp2 = simulate_ito_process(&c(0.0), &c(0.0), Some(&c(0.0)), &[x0], Driving::Pair { w0: &w0, w1: &w1 }).unwrap();
        let full = full_cloud(6, InitialLaw::gaussian(0.0, 1.0), 0.0, 0.0, m, seed);
        let cond = simulate_conditional_particle_system(&c(0.0), &c(0.0), &c(0.0), 6, &InitialLaw::gaussian(0.0, 1.0), &w0, &SeedPolicy::new(seed), 0).unwrap();
        let single = statik(f.clone(), false);
        let two = statik(f.clone(), true);
        let mut reports = vec![
            expand_ito_lions(&single, &xp, &full, &w0).unwrap(),
            expand_full_flow_joint(&single, &xp, &full, &w0).unwrap(),
            expand_conditional_joint(&two, &xp2, &cond, &w0, &w1).unwrap(),
            expand_conditional_ito_lions(&two, &xp2, &cond, &w0, &w1).unwrap(),
        ];
        if !f.depends_on_x() {
            reports.push(expand_full_flow_measure(&single, &full, &w0).unwrap());
            reports.push(expand_conditional_measure(&two, &cond, &w0, &w1).unwrap());
        }
        if f.is_measure_free() {
            reports.push(expand_ito_wentzell_classic(&single, &xp, &w0).unwrap());
        }
        for r in reports {
            prop_assert!(r.residual.abs() <= 1e-12, "{:?}", r);
            prop_assert!(r.terms.iter().all(|(_, v)| *v == 0.0));
        }
    }
}

#[test]
fn scalar_particle_loop_matches_general_loop() {
    let m = 40;
    let w0 = bm(m, 21, StreamRole::PrimaryNoise, 0);
    let w1 = bm(m, 21, StreamRole::SecondaryNoise, 0);
    let cloud = cond_cloud(64, 0.3, 0.8, 1.1, &w0, 0);
    let cubic = InnerFunction::polynomial(&[(1.0, &[3]), (-0.5, &[1])]);
    let u = field(
        NoiseMode::Two,
        vec![
            (MeasureFunctional::quadratic_mean(cubic.clone()), Multiplier::Unit),
            (MeasureFunctional::linear(v2()), Multiplier::Unit),
            (MeasureFunctional::product(InnerFunction::constant(2.0), cubic), Multiplier::Unit),
        ],
    );
    let run = |general: bool| {
        super::engine::GENERAL_LOOP_ONLY.with(|c| c.set(general));
        let r = expand_conditional_measure(&u, &cloud, &w0, &w1).unwrap();
        super::engine::GENERAL_LOOP_ONLY.with(|c| c.set(false));
        r
    };
    let (fast, slow) = (run(false), run(true));
    assert_eq!(fast.terms, slow.terms);
    assert_eq!(fast.residual, slow.residual);
}
