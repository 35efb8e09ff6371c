//! Term-by-term discretized chain rules for Itô random fields evaluated along
//! processes and flows of empirical measures.
//!
//! Every stochastic integral is a left-point sum on the shared grid and the
//! left-hand side is rebuilt from the field dynamics on the same grid, so a
//! residual measures only quadratic-variation and particle-approximation error.

mod engine;
mod expand;
mod report;

pub use engine::{ChainEngine, CloudMode, InputShape, NoiseCount, ProcessStep, StepInput};
pub use expand::{
    expand, expand_conditional_ito_lions, expand_conditional_joint, expand_conditional_measure, expand_full_flow_joint,
    expand_full_flow_measure, expand_ito_lions, expand_ito_wentzell_classic, expand_ito_wentzell_reduced, PathInputs,
};
pub use report::{residual, term_ablation, Discretization, ExpansionReport, TermId, TheoremId, ALL_TERMS};

#[cfg(test)]
mod tests;
