use super::*;
use crate::chain::{TermId, TheoremId};
use crate::error::Error;
use crate::functional::{InnerFunction, MeasureFunctional};
use crate::model::{EmpiricalMeasure, SeedPolicy};

const CLASSIC: &str = r#"
schema_version = 1
theorem = "IW-classic"
replications = 64
seed = 11

[ladder]
steps = [16384]

[field]
kind = "composite"

[[field.components]]
multiplier = { kind = "noise", loading = 1.0 }
[field.components.functional]
kind = "product"
a = { kind = "polynomial", terms = [{ coef = 1.0, powers = [1] }] }
f = { kind = "polynomial", terms = [{ coef = 1.0 }] }

[process]
x0 = { kind = "point", value = 0.0 }
beta = { kind = "constant", value = 0.0 }
gamma = { kind = "constant", value = 1.0 }
"#;

const FROZEN: &str = r#"
schema_version = 1
theorem = "IL-full"
replications = 8
seed = 3

[ladder]
steps = [16, 64]
particles = [4, 16]

[field]
kind = "static"
functional = { kind = "variance" }

[process]
x0 = { kind = "point", value = 0.5 }
beta = { kind = "constant", value = 0.0 }
gamma = { kind = "constant", value = 0.0 }

[cloud]
y0 = { kind = "gaussian", mean = 0.0, std = 1.0 }
drift = { kind = "constant", value = 0.0 }
sigma = { kind = "constant", value = 0.0 }
"#;

const GAUSSIAN: &str = r#"
schema_version = 1
theorem = "IWL-full-measure"
replications = 16
seed = 5

[ladder]
steps = [64]
particles = [64, 256, 1024]

[field]
kind = "static"
functional = { kind = "linear", f = { kind = "polynomial", terms = [{ coef = 1.0, powers = [2] }] } }

[cloud]
y0 = { kind = "gaussian", mean = 0.0, std = 1.0 }
drift = { kind = "constant", value = 0.5 }
sigma = { kind = "constant", value = 1.0 }

[tolerances]
slope_n = [0.3, 0.7]
"#;

fn parse(src: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(src).unwrap()
}

fn config_err(src: &str) -> (String, String) {
    match ExperimentConfig::from_toml_str(src) {
        Err(Error::Config { path, message }) => (path, message),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn frozen_dynamics_gives_zero_rows_and_no_slopes() {
    let cfg = parse(FROZEN);
    let study = convergence_study(&cfg).unwrap();
    assert_eq!(study.table.rows.len(), 4);
    for row in &study.table.rows {
        assert_eq!((row.mean_residual, row.rms_residual, row.se), (0.0, 0.0, 0.0));
        assert_eq!(row.valid, 8);
    }
    assert!(study.table.slope_m.is_none());
    assert!(study.table.slope_n.is_none());
    assert!(!study.table.warnings.is_empty());
    let csv = terms_csv(cfg.theorem, &study.points);
    for line in csv.lines().skip(1) {
        assert!(line.ends_with(",0.0"), "{line}");
    }
}

#[test]
fn classic_rms_matches_quadratic_variation_spread() {
    let cfg = parse(CLASSIC);
    let p = run_replications(&cfg, LadderPoint { steps: 16384, particles: 1 }).unwrap();
    let target = (2.0f64 / 16384.0).sqrt();
    let rms = p.stats.rms_residual;
    assert!(rms > target / 2.0 && rms < target * 2.0, "rms {rms} vs {target}");
    assert!(rms >= p.stats.mean_residual.abs());
}

#[test]
fn runs_are_deterministic() {
    let cfg = parse(FROZEN.replace("gamma = { kind = \"constant\", value = 0.0 }", "gamma = { kind = \"constant\", value = 0.7 }").as_str());
    let a = convergence_study(&cfg).unwrap();
    let b = convergence_study(&cfg).unwrap();
    assert_eq!(terms_csv(cfg.theorem, &a.points), terms_csv(cfg.theorem, &b.points));
    assert_eq!(convergence_csv(&a.table), convergence_csv(&b.table));
}

#[test]
fn more_replications_extend_without_altering() {
    let mut cfg = parse(GAUSSIAN);
    let point = LadderPoint { steps: 32, particles: 16 };
    cfg.replications = 4;
    let short = run_replications(&cfg, point).unwrap();
    cfg.replications = 9;
    let long = run_replications(&cfg, point).unwrap();
    assert_eq!(short.records[..], long.records[..4]);
}

#[test]
fn gaussian_rms_decays_in_particles() {
    let cfg = parse(GAUSSIAN);
    let study = convergence_study(&cfg).unwrap();
    let checks = evaluate_checks(cfg.theorem, &cfg.tolerances, &study.points, &study.table, None);
    assert!(all_passed(&checks), "{checks:#?}");
    assert!(study.table.slope_m.is_none());
}

#[test]
fn unknown_field_kind_names_the_key() {
    let (path, message) = config_err(&CLASSIC.replace("kind = \"composite\"", "kind = \"wobbly\""));
    assert!(path.starts_with("field"), "{path}");
    assert!(message.contains("wobbly") && message.contains("line"), "{message}");
}

#[test]
fn unknown_keys_and_bad_values_are_located() {
    let (path, message) = config_err(&CLASSIC.replace("seed = 11", "seed = 11\nsede = 2"));
    assert!(message.contains("sede"), "{path}: {message}");
    let (path, _) = config_err(&CLASSIC.replace("steps = [16384]", "steps = [8, 4]"));
    assert_eq!(path, "ladder.steps");
    let (path, _) = config_err(&CLASSIC.replace("replications = 64", "replications = 0"));
    assert_eq!(path, "replications");
    let (path, _) = config_err(&CLASSIC.replace("[process]", "[tolerances]\nablation = [{ term = \"dmu_b_dt\", expected = 0.0, tolerance = 1.0 }]\n\n[process]"));
    assert_eq!(path, "tolerances.ablation[0].term");
    let (path, _) = config_err(FROZEN.replace("theorem = \"IL-full\"", "theorem = \"IW-classic\"").as_str());
    assert_eq!(path, "cloud");
    let (path, _) = config_err(&CLASSIC.replace("schema_version = 1", "schema_version = 9"));
    assert_eq!(path, "schema_version");
}

#[test]
fn config_round_trips_through_toml() {
    for src in [CLASSIC, FROZEN, GAUSSIAN] {
        let cfg = parse(src);
        let echoed = cfg.to_toml_string().unwrap();
        assert_eq!(parse(&echoed), cfg, "{echoed}");
    }
}

#[test]
fn fault_hook_breaks_exact_identity() {
    let mut cfg = parse(FROZEN);
    cfg.ladder.steps = vec![16];
    cfg.ladder.particles = vec![4];
    cfg.process.as_mut().unwrap().gamma = crate::sde::CoefficientSpec::constant(1.0);
    cfg.tolerances.max_abs_residual = Some(1e-9);
    let study = convergence_study(&cfg).unwrap();
    let checks = evaluate_checks(cfg.theorem, &cfg.tolerances, &study.points, &study.table, None);
    assert!(all_passed(&checks), "{checks:#?}");

    cfg.cloud.as_mut().unwrap().sigma = crate::sde::CoefficientSpec::constant(1.0);
    cfg.fault = Some(Fault::ScaleTerm {
        term: TermId::DvDmuSigmaDt,
        factor: 0.0,
    });
    let study = convergence_study(&cfg).unwrap();
    let checks = evaluate_checks(cfg.theorem, &cfg.tolerances, &study.points, &study.table, None);
    assert!(!all_passed(&checks));
    assert!(checks.iter().any(|c| !c.passed && c.name.starts_with("max |residual|")));
}

#[test]
fn convergence_csv_has_fixed_columns() {
    let cfg = parse(FROZEN);
    let study = convergence_study(&cfg).unwrap();
    let csv = convergence_csv(&study.table);
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "M,N,n,R,mean_residual,rms_residual,se,slope_M,slope_N");
    assert_eq!(lines.count(), 4);
    let json = Report {
        theorem: cfg.theorem,
        passed: true,
        checks: &[],
        table: &study.table,
        mollification: None,
    }
    .to_json();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["theorem"], "IL-full");
}

fn gaussian_cloud(n: usize, seed: u64) -> EmpiricalMeasure {
    let mut s = SeedPolicy::new(seed).stream(crate::model::StreamRole::TestCloud, 0, 0);
    EmpiricalMeasure::from_scalars(&(0..n).map(|_| s.normal()).collect::<Vec<_>>()).unwrap()
}

#[test]
fn mollification_linear_sits_at_noise_floor() {
    let f = MeasureFunctional::linear(InnerFunction::polynomial(&[(1.0, &[1])]));
    let mu = gaussian_cloud(64, 1);
    let t = mollification_study(&f, &[0.0], &mu, &[4, 16, 64], 200, &SeedPolicy::new(2)).unwrap();
    for r in &t.rows {
        assert!(r.error <= 4.0 * r.se + 1e-12, "{r:?}");
        assert!(r.error_within_bound() && r.all_draws_within());
    }
}

#[test]
fn mollification_variance_errors_decrease_within_bounds() {
    let mu = gaussian_cloud(64, 4);
    let t = mollification_study(&MeasureFunctional::Variance, &[0.0], &mu, &[4, 16, 64], 400, &SeedPolicy::new(9)).unwrap();
    assert!(t.errors_decreasing(), "{t:#?}");
    for r in &t.rows {
        assert!(r.error_within_bound() && r.all_draws_within(), "{r:?}");
    }
    let csv = mollification_csv(&t);
    assert_eq!(csv.lines().count(), 4);
    assert!(!TheoremId::IlFull.schema().is_empty());
}

#[test]
fn cross_ladder_visits_only_the_fitted_rows() {
    let ladder = Ladder {
        steps: vec![8, 16, 32],
        particles: vec![2, 4, 8],
        shape: LadderShape::Cross,
    };
    let got: Vec<(usize, usize)> = ladder.points().iter().map(|p| (p.steps, p.particles)).collect();
    assert_eq!(got, [(8, 8), (16, 8), (32, 2), (32, 4), (32, 8)]);
    let grid = Ladder {
        shape: LadderShape::Grid,
        ..ladder
    };
    assert_eq!(grid.points().len(), 9);

    let cfg = parse(&GAUSSIAN.replace("particles = [64, 256, 1024]", "particles = [64, 256, 1024]\nshape = \"cross\""));
    assert_eq!(cfg.ladder.shape, LadderShape::Cross);
    assert_eq!(parse(&cfg.to_toml_string().unwrap()), cfg);
}
