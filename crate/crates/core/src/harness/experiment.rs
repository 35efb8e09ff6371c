use super::checks::{all_passed, evaluate_checks, CheckOutcome};
use super::config::ExperimentConfig;
use super::mollify::MollificationTable;
use super::run::{convergence_study, Study};
use crate::error::Result;

/// Everything one config produces.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub study: Study,
    pub mollification: Option<MollificationTable>,
    pub checks: Vec<CheckOutcome>,
}

impl Experiment {
    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }
}

/// Run the ladder, the optional mollification study, and every configured check.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment> {
    let study = convergence_study(config)?;
    let mollification = config
        .mollification
        .as_ref()
        .map(|m| m.run(config.dim, config.seed))
        .transpose()?;
    let checks = evaluate_checks(
        config.theorem,
        &config.tolerances,
        &study.points,
        &study.table,
        mollification.as_ref(),
    );
    Ok(Experiment {
        study,
        mollification,
        checks,
    })
}
