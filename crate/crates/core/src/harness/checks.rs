use serde::Serialize;

use super::config::Tolerances;
use super::mollify::MollificationTable;
use super::run::{ConvergenceTable, PointResult, MAX_NAN_FRACTION};
use crate::chain::TheoremId;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    /// `PASS name: detail` / `FAIL name: detail`.
    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

pub fn all_passed(checks: &[CheckOutcome]) -> bool {
    checks.iter().all(|c| c.passed)
}

fn at(p: &PointResult) -> String {
    format!("M={} N={}", p.point.steps, p.point.particles)
}

/// Evaluate the configured tolerances against a study. Non-finite shares above
/// the limit always fail.
pub fn evaluate_checks(
    theorem: TheoremId,
    tol: &Tolerances,
    points: &[PointResult],
    table: &ConvergenceTable,
    mollification: Option<&MollificationTable>,
) -> Vec<CheckOutcome> {
    let schema = theorem.schema();
    let mut out = Vec::new();
    for p in points {
        let s = &p.stats;
        out.push(CheckOutcome::new(
            format!("finite replications [{}]", at(p)),
            !s.failed,
            format!("{} of {} non-finite (limit {:.0}%)", s.non_finite, s.replications, MAX_NAN_FRACTION * 100.0),
        ));
        if let Some(max) = tol.max_rms_residual {
            out.push(CheckOutcome::new(
                format!("rms residual [{}]", at(p)),
                s.rms_residual <= max,
                format!("{:e} <= {max:e}", s.rms_residual),
            ));
        }
        if let Some([lo, hi]) = tol.rms_range {
            out.push(CheckOutcome::new(
                format!("rms residual range [{}]", at(p)),
                (lo..=hi).contains(&s.rms_residual),
                format!("{:e} in [{lo:e}, {hi:e}]", s.rms_residual),
            ));
        }
        if let Some(max) = tol.max_abs_residual {
            let worst = p.valid().map(|r| r.residual.abs()).fold(0.0, f64::max);
            out.push(CheckOutcome::new(
                format!("max |residual| [{}]", at(p)),
                worst <= max,
                format!("{worst:e} <= {max:e}"),
            ));
        }
        if let Some(k) = tol.mean_residual_se {
            out.push(CheckOutcome::new(
                format!("mean residual [{}]", at(p)),
                s.mean_residual.abs() <= k * s.se + 1e-12,
                format!("|{:e}| <= {k} * SE = {:e}", s.mean_residual, k * s.se),
            ));
        }
        if let Some(e) = tol.expected_term_sum {
            out.push(CheckOutcome::new(
                format!("term sum [{}]", at(p)),
                (s.mean_rhs - e.value).abs() <= e.se_factor * s.se_rhs + 1e-12,
                format!("{:.6} vs {} within {} * SE = {:e}", s.mean_rhs, e.value, e.se_factor, e.se_factor * s.se_rhs),
            ));
        }
        for a in &tol.ablation {
            let k = schema.iter().position(|t| *t == a.term);
            let vals: Vec<f64> = p.valid().map(|r| r.residual + k.map_or(f64::NAN, |k| r.terms[k])).collect();
            let mut mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let what = if a.shift {
                mean -= s.mean_residual;
                "mean residual shift"
            } else {
                "mean ablated residual"
            };
            out.push(CheckOutcome::new(
                format!("ablate {} [{}]", a.term, at(p)),
                (mean - a.expected).abs() <= a.tolerance,
                format!("{what} {mean:.6} vs {} ± {}", a.expected, a.tolerance),
            ));
        }
        for e in &tol.exact_terms {
            let worst = p
                .term_values(schema, e.term)
                .unwrap_or_default()
                .iter()
                .map(|v| (v - e.value).abs())
                .fold(0.0, f64::max);
            out.push(CheckOutcome::new(
                format!("term {} [{}]", e.term, at(p)),
                worst <= e.tolerance,
                format!("max |{} - {}| = {worst:e} <= {:e}", e.term, e.value, e.tolerance),
            ));
        }
    }
    for (axis, window, fit) in [("M", tol.slope_m, table.slope_m), ("N", tol.slope_n, table.slope_n)] {
        if let Some([lo, hi]) = window {
            out.push(match fit {
                Some(f) => CheckOutcome::new(
                    format!("rate vs {axis}"),
                    (lo..=hi).contains(&f.rate),
                    format!("{:.4} ± {:.4} in [{lo}, {hi}]", f.rate, f.half_width),
                ),
                None => CheckOutcome::new(format!("rate vs {axis}"), false, "slope undefined"),
            });
        }
    }
    if tol.monotone_in_n {
        out.push(monotone_in_n(table));
    }
    if let Some(m) = mollification {
        for r in &m.rows {
            out.push(CheckOutcome::new(
                format!("mollification error [n={}]", r.level),
                r.error_within_bound(),
                format!("{:e} <= Lip * radius = {:e}", r.error, r.error_bound),
            ));
            out.push(CheckOutcome::new(
                format!("mollification W2 [n={}]", r.level),
                r.all_draws_within(),
                format!("{} of {} draws within radius^2 (max {:e})", r.draws_within, r.draws, r.max_w2_sq),
            ));
        }
        if tol.mollification_decreasing {
            let errs: Vec<String> = m.rows.iter().map(|r| format!("{:e}", r.error)).collect();
            out.push(CheckOutcome::new(
                "mollification decreasing",
                m.errors_decreasing(),
                errs.join(" > "),
            ));
        }
    }
    out
}

/// At the largest `M`, RMS is nonincreasing in `N` up to one standard error of
/// each successive difference.
pub fn monotone_in_n(table: &ConvergenceTable) -> CheckOutcome {
    let max_m = table.rows.iter().map(|r| r.steps).max().unwrap_or(0);
    let mut rows: Vec<_> = table.rows.iter().filter(|r| r.steps == max_m).collect();
    rows.sort_by_key(|r| r.particles);
    let mut ok = true;
    let mut parts = Vec::new();
    for w in rows.windows(2) {
        let slack = (w[0].rms_se.powi(2) + w[1].rms_se.powi(2)).sqrt();
        ok &= w[1].rms_residual <= w[0].rms_residual + slack;
        parts.push(format!("N={}: {:e}", w[0].particles, w[0].rms_residual));
    }
    if let Some(last) = rows.last() {
        parts.push(format!("N={}: {:e}", last.particles, last.rms_residual));
    }
    CheckOutcome::new(format!("rms monotone in N [M={max_m}]"), ok, parts.join(", "))
}
