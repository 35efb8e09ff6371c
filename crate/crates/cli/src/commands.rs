use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::Deserialize;

use itolions::chain::TermId;
use itolions::functional::{lions_derivative, lions_hessian_v, lions_second, MeasureFunctional};
use itolions::harness::{
    all_passed, convergence_csv, mollification_csv, run_experiment, terms_csv, ExperimentConfig, Fault, Report,
};
use itolions::lions::{empirical_projection, numeric_lions_derivative, numeric_lions_second, FiniteDifferenceScheme};
use itolions::model::{EmpiricalMeasure, SeedPolicy, StreamRole};
use itolions::sde::{InitialLaw, Tensor};
use itolions::suites::{run_suite, Suite};

use crate::manifest::{timestamp, RunManifest};

pub enum Outcome {
    Passed,
    Failed,
}

impl Outcome {
    fn from(passed: bool) -> Self {
        if passed {
            Outcome::Passed
        } else {
            Outcome::Failed
        }
    }
}

pub enum CommandError {
    /// Exit 2: the input could not be understood.
    Config(String),
    /// Exit 3: anything that went wrong while running.
    Runtime(anyhow::Error),
}

impl From<itolions::Error> for CommandError {
    fn from(e: itolions::Error) -> Self {
        match e {
            itolions::Error::Config { .. } => CommandError::Config(e.to_string()),
            other => CommandError::Runtime(other.into()),
        }
    }
}

impl From<anyhow::Error> for CommandError {
    fn from(e: anyhow::Error) -> Self {
        CommandError::Runtime(e)
    }
}

type Result<T> = std::result::Result<T, CommandError>;

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Verify,
    Converge,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Verify => "verify",
            Mode::Converge => "converge",
        }
    }
}

fn parse_fault(spec: Option<&str>) -> Result<Option<Fault>> {
    let Some(spec) = spec else { return Ok(None) };
    let bad = || CommandError::Config(format!("fault `{spec}`: expected TERM=FACTOR"));
    let (term, factor) = spec.split_once('=').ok_or_else(bad)?;
    let term: TermId = term.parse().map_err(|e: itolions::Error| CommandError::Config(e.to_string()))?;
    let factor: f64 = factor.parse().map_err(|_| bad())?;
    Ok(Some(Fault::ScaleTerm { term, factor }))
}

fn read_config(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CommandError::Config(format!("{}: {e}", path.display())))
}

/// A fresh `<out>/<timestamp>-<command>` directory; never reuses an existing one.
fn run_dir(out: &Path, command: &str, started: chrono::DateTime<chrono::Utc>) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let stem = format!("{}-{command}", started.format("%Y%m%dT%H%M%S%.3fZ"));
    for k in 0.. {
        let dir = if k == 0 { out.join(&stem) } else { out.join(format!("{stem}-{k}")) };
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e).with_context(|| format!("creating {}", dir.display())),
        }
    }
    unreachable!()
}

fn write(dir: &Path, name: &str, contents: &str, outputs: &mut Vec<String>) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    outputs.push(path.display().to_string());
    Ok(())
}

pub fn run(mode: Mode, config: &Path, out: &Path, seed: Option<u64>, fault: Option<&str>) -> Result<Outcome> {
    let started = chrono::Utc::now();
    let mut cfg = ExperimentConfig::from_toml_str(&read_config(config)?)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.fault = parse_fault(fault)?;
    let echo = cfg.to_toml_string()?;
    let dir = run_dir(out, mode.name(), started)?;

    let run = run_experiment(&cfg)?;
    let passed = run.passed();
    for c in &run.checks {
        println!("{}", c.line());
    }
    for w in &run.study.table.warnings {
        eprintln!("warning: {w}");
    }

    let mut outputs = Vec::new();
    let report = Report {
        theorem: cfg.theorem,
        passed,
        checks: &run.checks,
        table: &run.study.table,
        mollification: run.mollification.as_ref(),
    };
    write(&dir, "report.json", &report.to_json(), &mut outputs)?;
    write(&dir, "terms.csv", &terms_csv(cfg.theorem, &run.study.points), &mut outputs)?;
    if mode == Mode::Converge {
        write(&dir, "convergence.csv", &convergence_csv(&run.study.table), &mut outputs)?;
    }
    if let Some(m) = &run.mollification {
        write(&dir, "mollification.csv", &mollification_csv(m), &mut outputs)?;
    }
    let manifest_path = dir.join("manifest.json");
    outputs.push(manifest_path.display().to_string());
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: mode.name(),
        config_path: config.display().to_string(),
        config: echo,
        seed: cfg.seed,
        started: timestamp(started),
        finished: timestamp(chrono::Utc::now()),
        outputs,
        passed,
        checks: run.checks.clone(),
        warnings: run.study.table.warnings.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| anyhow!(e))?;
    fs::write(&manifest_path, json).with_context(|| format!("writing {}", manifest_path.display()))?;
    println!("{} -> {}", if passed { "PASS" } else { "FAIL" }, dir.display());
    Ok(Outcome::from(passed))
}

pub fn oracle(suite: &str, fault: Option<&str>) -> Result<Outcome> {
    let suite: Suite = suite.parse()?;
    let checks = run_suite(suite, parse_fault(fault)?)?;
    for c in &checks {
        println!("{}", c.line());
    }
    let passed = all_passed(&checks);
    println!("{} {suite}: {} checks", if passed { "PASS" } else { "FAIL" }, checks.len());
    Ok(Outcome::from(passed))
}

/// Input of `project-deriv`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProjectionConfig {
    functional: MeasureFunctional,
    particles: usize,
    #[serde(default = "unit")]
    dim: usize,
    y0: InitialLaw,
    seed: u64,
    #[serde(default)]
    x: Option<Tensor>,
    #[serde(default = "default_step")]
    step: f64,
}

fn unit() -> usize {
    1
}

fn default_step() -> f64 {
    FiniteDifferenceScheme::default().base_step
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn project_deriv(config: &Path, j: usize, k: Option<usize>) -> Result<Outcome> {
    let src = read_config(config)?;
    let de = toml::de::Deserializer::parse(&src).map_err(|e| CommandError::Config(e.to_string()))?;
    let cfg: ProjectionConfig = serde_path_to_error::deserialize(de)
        .map_err(|e| CommandError::Config(format!("at `{}`: {}", e.path(), e.inner().message())))?;
    let d = cfg.dim;
    if cfg.particles == 0 || d == 0 {
        return Err(CommandError::Config("particles and dim must be positive".into()));
    }
    let sampler = cfg.y0.resolve(d)?;
    let seeds = SeedPolicy::new(cfg.seed);
    let mut points = vec![0.0; cfg.particles * d];
    for (l, p) in points.chunks_exact_mut(d).enumerate() {
        sampler.sample(&mut seeds.stream(StreamRole::ParticleInitial, 0, l as u64), p);
    }
    let mu = EmpiricalMeasure::new(d, points)?;
    let x = match &cfg.x {
        Some(x) => x.resolve_vector(d)?,
        None => vec![0.0; d],
    };
    let k = k.unwrap_or(j);
    if j >= mu.len() || k >= mu.len() {
        return Err(CommandError::Config(format!("particle index out of range for N = {}", mu.len())));
    }
    let scheme = FiniteDifferenceScheme::new(cfg.step).map_err(|e| CommandError::Config(e.to_string()))?;
    let f = &cfg.functional;
    println!("functional {}  N={}  d={d}  h={}", f.name(), mu.len(), cfg.step);
    println!("u^N = {:?}", empirical_projection(f, &mu, Some(&x)));
    println!("x^{j} = {}", fmt_vec(mu.point(j)));
    let num = numeric_lions_derivative(f, &x, &mu, j, &scheme)?;
    println!("d_mu u (numeric)     = {}", fmt_vec(&num));
    println!("d_mu u (closed form) = {}", fmt_vec(&lions_derivative(f, &x, &mu, mu.point(j))));
    let second = numeric_lions_second(f, &x, &mu, j, k, &scheme)?;
    if let Some(dv) = &second.dv_dmu {
        println!("d_v d_mu u (numeric)     = {}", fmt_vec(dv));
        println!("d_v d_mu u (closed form) = {}", fmt_vec(&lions_hessian_v(f, &x, &mu, mu.point(j))));
    }
    println!("d2_mu u (x^{j}, x^{k}) (numeric)     = {}", fmt_vec(&second.dmu2));
    println!("d2_mu u (x^{j}, x^{k}) (closed form) = {}", fmt_vec(&lions_second(f, mu.point(j), mu.point(k))));
    Ok(Outcome::Passed)
}
