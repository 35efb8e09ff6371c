use std::fmt::Write;

use serde::Serialize;

use super::checks::CheckOutcome;
use super::mollify::MollificationTable;
use super::run::{ConvergenceTable, PointResult};
use crate::chain::TheoremId;

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// One row per replication per ladder point.
pub fn terms_csv(theorem: TheoremId, points: &[PointResult]) -> String {
    let mut s = String::from("M,N,replication,lhs");
    for t in theorem.schema() {
        s.push(',');
        s.push_str(t.as_str());
    }
    s.push_str(",residual\n");
    for p in points {
        for r in &p.records {
            write!(s, "{},{},{},{}", p.point.steps, p.point.particles, r.replication, fmt_f64(r.lhs)).unwrap();
            for v in &r.terms {
                s.push(',');
                s.push_str(&fmt_f64(*v));
            }
            writeln!(s, ",{}", fmt_f64(r.residual)).unwrap();
        }
    }
    s
}

/// `M,N,n,R,mean_residual,rms_residual,se,slope_M,slope_N`; the slope columns
/// repeat the fitted rates and are empty when undefined.
pub fn convergence_csv(table: &ConvergenceTable) -> String {
    let mut s = String::from("M,N,n,R,mean_residual,rms_residual,se,slope_M,slope_N\n");
    let sm = opt(table.slope_m.map(|f| f.rate));
    let sn = opt(table.slope_n.map(|f| f.rate));
    for r in &table.rows {
        writeln!(
            s,
            "{},{},,{},{},{},{},{sm},{sn}",
            r.steps,
            r.particles,
            r.valid,
            fmt_f64(r.mean_residual),
            fmt_f64(r.rms_residual),
            fmt_f64(r.se)
        )
        .unwrap();
    }
    s
}

pub fn mollification_csv(table: &MollificationTable) -> String {
    let mut s = String::from("N,n,Q,value,se,error,error_bound,lipschitz,max_w2_sq,w2_bound,draws_within\n");
    for r in &table.rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            table.particles,
            r.level,
            r.draws,
            fmt_f64(r.value),
            fmt_f64(r.se),
            fmt_f64(r.error),
            fmt_f64(r.error_bound),
            fmt_f64(r.lipschitz),
            fmt_f64(r.max_w2_sq),
            fmt_f64(r.w2_bound),
            r.draws_within
        )
        .unwrap();
    }
    s
}

/// Machine-readable summary of a study.
#[derive(Debug, Clone, Serialize)]
pub struct Report<'a> {
    pub theorem: TheoremId,
    pub passed: bool,
    pub checks: &'a [CheckOutcome],
    pub table: &'a ConvergenceTable,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mollification: Option<&'a MollificationTable>,
}

impl Report<'_> {
    pub fn to_json(&self) -> String {
        // Non-finite floats serialize as null.
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
