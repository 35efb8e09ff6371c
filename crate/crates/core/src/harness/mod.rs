//! Monte Carlo layer over the chain-rule evaluators: configs, replications,
//! statistics, convergence ladders, tolerance checks and output tables.

mod checks;
mod config;
mod experiment;
mod mollify;
mod output;
mod run;
mod stats;

pub use checks::{all_passed, evaluate_checks, monotone_in_n, CheckOutcome};
pub use config::{
    AblationCheck, ExactTerm, ExpectedSum, ExperimentConfig, Fault, Ladder, LadderShape, MollificationSpec, Tolerances,
    SCHEMA_VERSION,
};
pub use experiment::{run_experiment, Experiment};
pub use mollify::{mollification_study, MollificationRow, MollificationTable};
pub use output::{convergence_csv, fmt_f64, mollification_csv, terms_csv, Report};
pub use run::{
    convergence_study, replicate, run_replications, ConvergenceTable, LadderPoint, PointResult, ReplicationRecord,
    StatsRow, Study, TermStat, MAX_NAN_FRACTION,
};
pub use stats::{fit_decay_rate, SlopeFit, Summary};

#[cfg(test)]
mod tests;
