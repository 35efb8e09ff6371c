//! Shared fixtures for the benchmarks in `benches/`.

use itolions::harness::{ExperimentConfig, LadderPoint};
use itolions::model::{EmpiricalMeasure, SeedPolicy, StreamRole};
use itolions::suites::{builtin, configs};

/// A standard Gaussian cloud of `n` points in `d` dimensions.
pub fn gaussian_cloud(n: usize, d: usize, seed: u64) -> EmpiricalMeasure {
    let mut s = SeedPolicy::new(seed).stream(StreamRole::TestCloud, 0, 0);
    EmpiricalMeasure::new(d, (0..n * d).map(|_| s.normal()).collect()).expect("valid cloud")
}

/// The conditional squared-mean oracle reduced to one replication at `point`.
pub fn conditional_oracle(point: LadderPoint) -> ExperimentConfig {
    let mut cfg = builtin(configs::CONDITIONAL_SQUARE);
    cfg.replications = 1;
    cfg.ladder.steps = vec![point.steps];
    cfg.ladder.particles = vec![point.particles];
    cfg
}
