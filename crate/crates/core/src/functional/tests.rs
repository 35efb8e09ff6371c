use proptest::prelude::*;

use super::*;
use crate::model::{make_time_grid, sample_brownian, EmpiricalMeasure, SeedPolicy, StreamRole};
use crate::sde::{Channel, Tensor};

fn v2() -> InnerFunction {
    InnerFunction::square_norm(1)
}

fn id() -> InnerFunction {
    InnerFunction::coordinate(0)
}

fn cloud(xs: &[f64]) -> EmpiricalMeasure {
    EmpiricalMeasure::from_scalars(xs).unwrap()
}

/// Every catalogue kind in dimension `d` with non-trivial inner functions.
pub(crate) fn catalogue(d: usize) -> Vec<MeasureFunctional> {
    let poly = if d == 1 {
        InnerFunction::polynomial(&[(0.5, &[2]), (-0.3, &[3]), (0.1, &[1])])
    } else {
        InnerFunction::polynomial(&[(0.5, &[2, 0]), (-0.3, &[1, 2]), (0.2, &[0, 1])])
    };
    let trig = InnerFunction::trigonometric(0.7, (0..d).map(|a| 0.9 - 0.4 * a as f64).collect(), 0.3);
    vec![
        MeasureFunctional::Linear { f: poly.clone() },
        MeasureFunctional::QuadraticMean { f: trig.clone() },
        MeasureFunctional::DoubleIntegral { kernel: poly.clone() },
        MeasureFunctional::Variance,
        MeasureFunctional::Product { a: trig, f: poly },
        MeasureFunctional::ScaledSecondMoment { scale: 0.75 },
    ]
}

fn random_cloud(n: usize, d: usize, rep: u64) -> EmpiricalMeasure {
    let mut s = SeedPolicy::new(77).stream(StreamRole::TestCloud, rep, 0);
    let pts = (0..n * d).map(|_| s.normal() * 0.8).collect();
    EmpiricalMeasure::new(d, pts).unwrap()
}

#[test]
fn values_on_small_clouds() {
    let mu = cloud(&[1.0, 2.0, 3.0]);
    assert_eq!(eval_functional(&MeasureFunctional::linear(id()), &[0.0], &mu), 2.0);
    assert_eq!(eval_functional(&MeasureFunctional::quadratic_mean(id()), &[0.0], &mu), 4.0);
    let var = eval_functional(&MeasureFunctional::Variance, &[0.0], &mu);
    assert!((var - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn closed_form_lions_derivatives() {
    let mu = cloud(&[1.0, 2.0, 3.0]);
    let f = MeasureFunctional::linear(v2());
    assert_eq!(lions_derivative(&f, &[0.0], &mu, &[3.0]), vec![6.0]);
    assert_eq!(lions_hessian_v(&f, &[0.0], &mu, &[3.0]), vec![2.0]);
    assert_eq!(lions_second(&f, &[3.0], &[1.0]), vec![0.0]);

    let q = MeasureFunctional::quadratic_mean(id());
    for v in [-1.0, 0.5, 7.0] {
        assert_eq!(lions_derivative(&q, &[0.0], &mu, &[v]), vec![4.0]);
        assert_eq!(lions_hessian_v(&q, &[0.0], &mu, &[v]), vec![0.0]);
        assert_eq!(lions_second(&q, &[v], &[2.0 * v]), vec![2.0]);
    }

    let var = MeasureFunctional::Variance;
    assert_eq!(lions_derivative(&var, &[0.0], &mu, &[5.0]), vec![6.0]);
    assert_eq!(lions_hessian_v(&var, &[0.0], &mu, &[5.0]), vec![2.0]);
    assert_eq!(lions_second(&var, &[5.0], &[1.0]), vec![-2.0]);
}

#[test]
fn space_derivatives_match_finite_differences() {
    let h = 1e-5;
    for d in [1, 2] {
        let mu = random_cloud(16, d, d as u64);
        let x: Vec<f64> = (0..d).map(|a| 0.3 - 0.5 * a as f64).collect();
        let v: Vec<f64> = (0..d).map(|a| -0.2 + 0.7 * a as f64).collect();
        for f in catalogue(d) {
            let sd = space_derivatives(&f, &x, &mu, &v);
            for j in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (f.eval(&xp, &mu) - f.eval(&xm, &mu)) / (2.0 * h);
                assert!((sd.dx[j] - fd).abs() < 1e-6, "{} dx", f.name());
                let sp = space_derivatives(&f, &xp, &mu, &v);
                let sm = space_derivatives(&f, &xm, &mu, &v);
                for i in 0..d {
                    let fd = (sp.dx[i] - sm.dx[i]) / (2.0 * h);
                    assert!((sd.dxx[i * d + j] - fd).abs() < 1e-6, "{} dxx", f.name());
                    let (gp, gm) = (lions_derivative(&f, &xp, &mu, &v), lions_derivative(&f, &xm, &mu, &v));
                    let fd = (gp[i] - gm[i]) / (2.0 * h);
                    assert!((sd.dx_dmu[i * d + j] - fd).abs() < 1e-6, "{} dx_dmu", f.name());
                }
            }
        }
    }
}

#[test]
fn dv_dmu_is_the_v_gradient_of_dmu() {
    let h = 1e-5;
    for d in [1, 2] {
        let mu = random_cloud(10, d, 9);
        let x = vec![0.1; d];
        let v: Vec<f64> = (0..d).map(|a| 0.4 - a as f64).collect();
        for f in catalogue(d) {
            let hv = lions_hessian_v(&f, &x, &mu, &v);
            for b in 0..d {
                let mut vp = v.clone();
                let mut vm = v.clone();
                vp[b] += h;
                vm[b] -= h;
                let (gp, gm) = (lions_derivative(&f, &x, &mu, &vp), lions_derivative(&f, &x, &mu, &vm));
                for a in 0..d {
                    let fd = (gp[a] - gm[a]) / (2.0 * h);
                    assert!((hv[a * d + b] - fd).abs() < 1e-6, "{}", f.name());
                }
            }
        }
    }
}

#[test]
fn pair_trace_sum_matches_brute_force() {
    for d in [1, 2] {
        let n = 7;
        let mu = random_cloud(n, d, 3);
        let mut st = SeedPolicy::new(5).stream(StreamRole::TestCloud, 0, 1);
        let s: Vec<f64> = (0..n * d * d).map(|_| st.normal()).collect();
        for f in catalogue(d) {
            let mut brute = 0.0;
            for l in 0..n {
                for m in 0..n {
                    if l == m {
                        continue;
                    }
                    let k = lions_second(&f, mu.point(l), mu.point(m));
                    for a in 0..d {
                        for b in 0..d {
                            for c in 0..d {
                                brute += k[a * d + b] * s[(l * d + a) * d + c] * s[(m * d + b) * d + c];
                            }
                        }
                    }
                }
            }
            let fast = f.pair_trace_sum(mu.view(), &s);
            assert!((fast - brute).abs() < 1e-11 * (1.0 + brute.abs()), "{}: {fast} vs {brute}", f.name());
        }
    }
}

#[test]
fn quadratic_mean_pair_average_is_exactly_two() {
    // d^2_mu u = 2 for (int v dmu)^2: the U-statistic average over unit
    // diffusions equals 2 for every cloud.
    let mu = random_cloud(33, 1, 4);
    let s = vec![1.0; 33];
    let f = MeasureFunctional::quadratic_mean(id());
    let avg = f.pair_trace_sum(mu.view(), &s) / (33.0 * 32.0);
    assert_eq!(avg, 2.0);
}

#[test]
fn predicates() {
    let x_only = MeasureFunctional::product(id(), InnerFunction::constant(1.0));
    assert!(x_only.is_measure_free() && x_only.depends_on_x());
    assert!(!MeasureFunctional::Variance.depends_on_x());
    assert!(MeasureFunctional::Variance.has_second_lions());
    assert!(!MeasureFunctional::linear(v2()).has_second_lions());
    assert!(MeasureFunctional::one().is_measure_free());
}

#[test]
fn functional_parses_from_toml() {
    #[derive(serde::Deserialize)]
    struct W {
        u: MeasureFunctional,
    }
    let w: W = toml::from_str(
        "u = { kind = \"quadratic-mean\", f = { kind = \"polynomial\", terms = [{ coef = 1.0, powers = [1] }] } }",
    )
    .unwrap();
    assert_eq!(w.u, MeasureFunctional::quadratic_mean(id()));
    let w: W = toml::from_str("u = { kind = \"variance\" }").unwrap();
    assert_eq!(w.u, MeasureFunctional::Variance);
    assert!(toml::from_str::<W>("u = { kind = \"cubic\" }").is_err());
}

proptest! {
    #[test]
    fn permutation_invariance(xs in prop::collection::vec(-3.0f64..3.0, 2..24), rot in 0usize..24) {
        let n = xs.len() / 2;
        prop_assume!(n >= 1);
        let pts: Vec<f64> = xs[..2 * n].to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left(rot % n);
        perm.reverse();
        let permuted: Vec<f64> = perm.iter().flat_map(|&l| pts[2 * l..2 * l + 2].to_vec()).collect();
        let a = EmpiricalMeasure::new(2, pts).unwrap();
        let b = EmpiricalMeasure::new(2, permuted).unwrap();
        let x = [0.2, -0.4];
        for f in catalogue(2) {
            let (u, w) = (f.eval(&x, &a), f.eval(&x, &b));
            prop_assert!((u - w).abs() <= 1e-13 * (1.0 + u.abs()), "{}: {u} vs {w}", f.name());
        }
    }

    #[test]
    fn second_lions_transpose_symmetry(v in prop::collection::vec(-2.0f64..2.0, 4)) {
        let (p, q) = (&v[..2], &v[2..]);
        for f in catalogue(2) {
            let k = lions_second(&f, p, q);
            let kt = lions_second(&f, q, p);
            for a in 0..2 {
                for b in 0..2 {
                    prop_assert_eq!(k[a * 2 + b], kt[b * 2 + a]);
                }
            }
        }
    }
}

// Fields.

fn path(m: usize, seed: u64, role: StreamRole) -> crate::model::BrownianPath {
    let grid = make_time_grid(1.0, m).unwrap();
    sample_brownian(grid, 1, &mut SeedPolicy::new(seed).stream(role, 0, 0)).unwrap()
}

#[test]
fn static_field_is_constant() {
    let f = MeasureFunctional::linear(v2());
    let field = make_ito_field(&FieldKind::Static { functional: f.clone(), two_noise: false }, 1).unwrap();
    let w = path(16, 1, StreamRole::PrimaryNoise);
    let tr = field.trajectory(&w, None).unwrap();
    let mu = cloud(&[1.0, -2.0]);
    for i in 0..=16 {
        assert_eq!(field_value(&field, &tr, i, &[0.0], &mu).unwrap(), f.eval(&[0.0], &mu));
        if i < 16 {
            assert_eq!(field.phi(&tr, i, &[0.0], &mu), 0.0);
            assert_eq!(field.psi(&tr, i, Channel::W0, &[0.0], &mu), vec![0.0]);
        }
    }
    assert!(field.is_deterministic());
}

#[test]
fn linear_noise_telescopes() {
    let c = 0.7;
    let field = make_ito_field(
        &FieldKind::LinearNoise {
            functional: MeasureFunctional::linear(InnerFunction::constant(0.0)),
            loading: Tensor::Scalar(c),
            channel: Channel::W0,
            two_noise: false,
        },
        1,
    )
    .unwrap();
    let w = path(64, 2, StreamRole::PrimaryNoise);
    let tr = field.trajectory(&w, None).unwrap();
    let mu = cloud(&[0.0]);
    for i in [0, 1, 17, 64] {
        let u = field_value(&field, &tr, i, &[0.0], &mu).unwrap();
        assert!((u - c * w.value(i)[0]).abs() < 1e-12);
    }
    assert!(field_value(&field, &tr, 65, &[0.0], &mu).is_err());
}

#[test]
fn drift_ramp_converges_to_three_halves() {
    let f = MeasureFunctional::linear(InnerFunction::constant(2.0));
    let field = make_ito_field(&FieldKind::DriftRamp { functional: f, two_noise: false }, 1).unwrap();
    let mu = cloud(&[0.0]);
    let mut prev = f64::INFINITY;
    for m in [8, 64, 512] {
        let w = path(m, 3, StreamRole::PrimaryNoise);
        let tr = field.trajectory(&w, None).unwrap();
        let err = (field_value(&field, &tr, m, &[0.0], &mu).unwrap() - 3.0).abs();
        // Left Riemann sum of int_0^1 s ds misses dt/2, times F = 2.
        assert!((err - 1.0 / m as f64).abs() < 1e-12, "M={m}: {err}");
        assert!(err < prev);
        prev = err;
    }
}

#[test]
fn exponential_martingale_strong_rate() {
    let field = make_ito_field(
        &FieldKind::ExponentialMartingale {
            functional: MeasureFunctional::one(),
            lambda: Tensor::Scalar(1.0),
            channel: Channel::W0,
            two_noise: false,
        },
        1,
    )
    .unwrap();
    let mu = cloud(&[0.0]);
    let ladder = [256usize, 1024, 4096];
    let reps = 64;
    let mut errs = Vec::new();
    for &m in &ladder {
        let grid = make_time_grid(1.0, m).unwrap();
        let mut total = 0.0;
        for rep in 0..reps {
            let w = sample_brownian(grid, 1, &mut SeedPolicy::new(21).stream(StreamRole::PrimaryNoise, rep, 0)).unwrap();
            let tr = field.trajectory(&w, None).unwrap();
            let mut max = 0.0f64;
            for i in 0..=m {
                let exact = (w.value(i)[0] - grid.node(i) / 2.0).exp();
                max = max.max((field_value(&field, &tr, i, &[0.0], &mu).unwrap() - exact).abs());
            }
            total += max;
        }
        errs.push(total / reps as f64);
    }
    let slope = -(errs[2].log2() - errs[0].log2()) / ((ladder[2] as f64).log2() - (ladder[0] as f64).log2());
    assert!((0.35..=0.65).contains(&slope), "slope {slope}, errors {errs:?}");
}

#[test]
fn mean_times_common_noise_coefficients() {
    let field = make_ito_field(&FieldKind::MeanTimesCommonNoise { loading: Tensor::Scalar(1.0), f: None }, 1).unwrap();
    assert!(field.is_two_noise() && !field.depends_on_x());
    let w0 = path(8, 4, StreamRole::PrimaryNoise);
    let w1 = path(8, 4, StreamRole::SecondaryNoise);
    assert!(field.trajectory(&w0, None).is_err());
    let tr = field.trajectory(&w0, Some(&w1)).unwrap();
    let mu = cloud(&[1.0, 2.0]);
    assert_eq!(field.psi(&tr, 3, Channel::W0, &[0.0], &mu), vec![1.5]);
    assert_eq!(field.psi(&tr, 3, Channel::W1, &[0.0], &mu), vec![0.0]);
    assert_eq!(field.dmu_psi(&tr, 3, &[0.0], &mu, &[9.0]), vec![1.0]);
    let u = field_value(&field, &tr, 8, &[0.0], &mu).unwrap();
    assert!((u - 1.5 * w0.terminal()[0]).abs() < 1e-12);
}

#[test]
fn dx_psi_of_product_field() {
    // psi_t(x, mu) = x m(mu): d_x psi = m.
    let field = make_ito_field(
        &FieldKind::Composite {
            two_noise: false,
            components: vec![FieldComponent {
                functional: MeasureFunctional::product(id(), id()),
                multiplier: Multiplier::Noise {
                    loading: Tensor::Scalar(1.0),
                    channel: Channel::W0,
                },
            }],
        },
        1,
    )
    .unwrap();
    let w = path(4, 5, StreamRole::PrimaryNoise);
    let tr = field.trajectory(&w, None).unwrap();
    let mu = cloud(&[3.0]);
    assert_eq!(field.dx_psi(&tr, 0, Channel::W0, &[2.0], &mu), vec![3.0]);
}

#[test]
fn invalid_fields_rejected() {
    let bad = FieldKind::LinearNoise {
        functional: MeasureFunctional::one(),
        loading: Tensor::Scalar(1.0),
        channel: Channel::W1,
        two_noise: false,
    };
    assert!(make_ito_field(&bad, 1).is_err());
    let bad_dim = FieldKind::Static {
        functional: MeasureFunctional::linear(InnerFunction::square_norm(2)),
        two_noise: false,
    };
    assert!(make_ito_field(&bad_dim, 1).is_err());
    #[derive(serde::Deserialize)]
    struct W {
        #[allow(dead_code)]
        field: FieldKind,
    }
    assert!(toml::from_str::<W>("field = { kind = \"sideways\" }").is_err());
}
