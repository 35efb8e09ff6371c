use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, Fault};
use super::stats::{fit_decay_rate, SlopeFit, Summary};
use crate::chain::{
    ChainEngine, Discretization, ExpansionReport, ProcessStep, StepInput, TermId, TheoremId,
};
use crate::error::{Error, Result};
use crate::functional::ItoRandomField;
use crate::model::{sample_brownian, BrownianPath, MeasureView, SeedPolicy, StreamRole};
use crate::sde::{CloudStepper, Driving};

/// Largest tolerated share of non-finite replications per ladder point.
pub const MAX_NAN_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LadderPoint {
    pub steps: usize,
    pub particles: usize,
}

/// One replication's outcome. Non-finite replications carry `NaN`s.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRecord {
    pub replication: u64,
    pub lhs: f64,
    pub terms: Vec<f64>,
    pub residual: f64,
}

impl ReplicationRecord {
    pub fn is_finite(&self) -> bool {
        self.residual.is_finite() && self.lhs.is_finite() && self.terms.iter().all(|t| t.is_finite())
    }

    fn failed(replication: u64, terms: usize) -> Self {
        Self {
            replication,
            lhs: f64::NAN,
            terms: vec![f64::NAN; terms],
            residual: f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermStat {
    pub term: TermId,
    pub mean: f64,
    pub se: f64,
}

/// Statistics over the finite replications at one ladder point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsRow {
    pub steps: usize,
    pub particles: usize,
    pub replications: usize,
    pub valid: usize,
    pub non_finite: usize,
    pub failed: bool,
    pub mean_residual: f64,
    pub variance: f64,
    pub rms_residual: f64,
    pub se: f64,
    pub rms_se: f64,
    pub mean_lhs: f64,
    pub mean_rhs: f64,
    pub se_rhs: f64,
    pub terms: Vec<TermStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointResult {
    pub point: LadderPoint,
    pub records: Vec<ReplicationRecord>,
    pub stats: StatsRow,
}

impl PointResult {
    pub fn valid(&self) -> impl Iterator<Item = &ReplicationRecord> {
        self.records.iter().filter(|r| r.is_finite())
    }

    pub fn term_values(&self, schema: &[TermId], term: TermId) -> Option<Vec<f64>> {
        let k = schema.iter().position(|t| *t == term)?;
        Some(self.valid().map(|r| r.terms[k]).collect())
    }
}

/// Simulate every input of one replication and stream it through the engine.
pub fn replicate(
    config: &ExperimentConfig,
    field: &ItoRandomField,
    point: LadderPoint,
    replication: u64,
) -> Result<ExpansionReport> {
    let theorem = config.theorem;
    let d = config.dim;
    let grid = config.grid(point.steps)?;
    let seeds = SeedPolicy::new(config.seed);
    let w0 = sample_brownian(grid, d, &mut seeds.stream(StreamRole::PrimaryNoise, replication, 0))?;
    let w1: Option<BrownianPath> = if theorem.is_conditional() {
        Some(sample_brownian(grid, d, &mut seeds.stream(StreamRole::SecondaryNoise, replication, 0))?)
    } else {
        None
    };
    let process = match &config.process {
        Some(p) if theorem.has_process() => {
            let driving = match &w1 {
                Some(w1) => Driving::Pair { w0: &w0, w1 },
                None => Driving::Single(&w0),
            };
            Some(p.simulate(driving, &seeds, replication)?)
        }
        _ => None,
    };
    let mut cloud = match &config.cloud {
        Some(c) if theorem.has_cloud() => Some(CloudStepper::new(c, point.particles, d, grid, &seeds, replication)?),
        _ => None,
    };
    let conditional = theorem.is_conditional();

    let mut engine = ChainEngine::new(theorem, field, grid, config.input_shape())?;
    engine.begin(
        process.as_ref().map(|x| x.value(0)),
        cloud.as_ref().map(|c| MeasureView::new(d, c.points())),
    )?;
    for i in 0..grid.steps() {
        let dw0 = w0.increment(i);
        if let Some(c) = cloud.as_mut() {
            c.evaluate(conditional.then(|| w0.value(i)));
        }
        let input = StepInput {
            process: process.as_ref().map(|x| ProcessStep {
                x: x.value(i),
                beta: x.beta(i),
                gamma0: x.gamma0(i),
                gamma1: x.gamma1(i),
            }),
            cloud: cloud.as_ref().map(|c| c.view()),
            dw0,
            dw1: w1.as_ref().map(|w| w.increment(i)),
        };
        engine.step(&input)?;
        if let Some(c) = cloud.as_mut() {
            c.advance(conditional.then_some(dw0))?;
        }
    }
    let meta = Discretization {
        seed: Some(config.seed),
        replication: Some(replication),
        ..Discretization::default()
    };
    let report = engine.finish(
        process.as_ref().map(|x| x.terminal()),
        cloud.as_ref().map(|c| MeasureView::new(d, c.points())),
        meta,
    )?;
    match config.fault {
        Some(Fault::ScaleTerm { term, factor }) => {
            let terms = report
                .terms
                .iter()
                .map(|&(t, v)| (t, if t == term { v * factor } else { v }))
                .collect();
            ExpansionReport::new(report.theorem, report.lhs, terms, report.meta)
        }
        None => Ok(report),
    }
}

/// `R` independent replications at one ladder point, aggregated in
/// replication order. Non-finite replications are excluded and counted.
pub fn run_replications(config: &ExperimentConfig, point: LadderPoint) -> Result<PointResult> {
    let field = config.build_field()?;
    let schema = config.theorem.schema();
    let records = (0..config.replications as u64)
        .into_par_iter()
        .map(|rep| match replicate(config, &field, point, rep) {
            Ok(r) => Ok(ReplicationRecord {
                replication: rep,
                lhs: r.lhs,
                terms: r.terms.iter().map(|(_, v)| *v).collect(),
                residual: r.residual,
            }),
            Err(Error::NonFinite { .. }) => Ok(ReplicationRecord::failed(rep, schema.len())),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    let stats = summarize(point, schema, &records);
    Ok(PointResult { point, records, stats })
}

fn summarize(point: LadderPoint, schema: &[TermId], records: &[ReplicationRecord]) -> StatsRow {
    let valid: Vec<&ReplicationRecord> = records.iter().filter(|r| r.is_finite()).collect();
    let non_finite = records.len() - valid.len();
    let residuals: Vec<f64> = valid.iter().map(|r| r.residual).collect();
    let res = Summary::of(&residuals);
    let lhs = Summary::of(&valid.iter().map(|r| r.lhs).collect::<Vec<_>>());
    let rhs = Summary::of(&valid.iter().map(|r| r.terms.iter().sum()).collect::<Vec<f64>>());
    let terms = schema
        .iter()
        .enumerate()
        .map(|(k, &term)| {
            let s = Summary::of(&valid.iter().map(|r| r.terms[k]).collect::<Vec<_>>());
            TermStat {
                term,
                mean: s.mean,
                se: s.se,
            }
        })
        .collect();
    StatsRow {
        steps: point.steps,
        particles: point.particles,
        replications: records.len(),
        valid: valid.len(),
        non_finite,
        failed: non_finite as f64 > MAX_NAN_FRACTION * records.len() as f64,
        mean_residual: res.mean,
        variance: res.variance,
        rms_residual: res.rms,
        se: res.se,
        rms_se: res.rms_se,
        mean_lhs: lhs.mean,
        mean_rhs: rhs.mean,
        se_rhs: rhs.se,
        terms,
    }
}

/// All ladder rows with fitted convergence rates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub theorem: TheoremId,
    pub rows: Vec<StatsRow>,
    /// RMS decay rate in `M` at the largest `N`.
    pub slope_m: Option<SlopeFit>,
    /// RMS decay rate in `N` at the largest `M`.
    pub slope_n: Option<SlopeFit>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Study {
    pub table: ConvergenceTable,
    pub points: Vec<PointResult>,
}

impl ConvergenceTable {
    pub fn build(theorem: TheoremId, rows: Vec<StatsRow>) -> Self {
        let mut warnings = Vec::new();
        let max_n = rows.iter().map(|r| r.particles).max().unwrap_or(0);
        let max_m = rows.iter().map(|r| r.steps).max().unwrap_or(0);
        let mut fit = |axis: &str, pick: &dyn Fn(&StatsRow) -> Option<f64>| {
            let (x, y): (Vec<f64>, Vec<f64>) = rows.iter().filter_map(|r| pick(r).map(|x| (x, r.rms_residual))).unzip();
            if x.len() < 3 {
                warnings.push(format!("slope vs {axis} omitted: {} ladder point(s), need 3", x.len()));
                return None;
            }
            let f = fit_decay_rate(&x, &y);
            if f.is_none() {
                warnings.push(format!("slope vs {axis} undefined: RMS residual not strictly positive"));
            }
            f
        };
        let slope_m = fit("M", &|r: &StatsRow| (r.particles == max_n).then_some(r.steps as f64));
        let slope_n = fit("N", &|r: &StatsRow| (r.steps == max_m).then_some(r.particles as f64));
        for r in &rows {
            if r.failed {
                warnings.push(format!(
                    "M={} N={}: {} of {} replications non-finite",
                    r.steps, r.particles, r.non_finite, r.replications
                ));
            }
        }
        ConvergenceTable {
            theorem,
            rows,
            slope_m,
            slope_n,
            warnings,
        }
    }
}

/// Every ladder point of the config (see [`Ladder::points`]), `M` outer.
///
/// [`Ladder::points`]: super::Ladder::points
pub fn convergence_study(config: &ExperimentConfig) -> Result<Study> {
    let points = config
        .ladder
        .points()
        .into_iter()
        .map(|p| run_replications(config, p))
        .collect::<Result<Vec<_>>>()?;
    let table = ConvergenceTable::build(config.theorem, points.iter().map(|p| p.stats.clone()).collect());
    Ok(Study { table, points })
}
