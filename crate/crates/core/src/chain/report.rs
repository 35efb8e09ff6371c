use std::fmt;
use std::str::FromStr;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// Which expansion is being checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TheoremId {
    #[serde(rename = "IW-classic")]
    IwClassic,
    #[serde(rename = "IW-reduced")]
    IwReduced,
    #[serde(rename = "IL-full")]
    IlFull,
    #[serde(rename = "IWL-full-measure")]
    IwlFullMeasure,
    #[serde(rename = "IWL-full-joint")]
    IwlFullJoint,
    #[serde(rename = "IL-conditional")]
    IlConditional,
    #[serde(rename = "IWL-conditional-measure")]
    IwlConditionalMeasure,
    #[serde(rename = "IWL-conditional-joint")]
    IwlConditionalJoint,
}

/// Named right-hand-side terms. Strings are stable and used in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermId {
    PhiDt,
    /// `int d_t u ds` for deterministic time-dependent functionals.
    DtuDt,
    #[serde(rename = "psi_dW")]
    PsiDW,
    #[serde(rename = "psi0_dW0")]
    Psi0DW0,
    #[serde(rename = "psi1_dW1")]
    Psi1DW1,
    DxuBetaDt,
    #[serde(rename = "dxu_gamma_dW")]
    DxuGammaDW,
    #[serde(rename = "dxu_gamma0_dW0")]
    DxuGamma0DW0,
    #[serde(rename = "dxu_gamma1_dW1")]
    DxuGamma1DW1,
    HessXDt,
    DxpsiGammaDt,
    #[serde(rename = "dxpsi0_gamma0_dt")]
    Dxpsi0Gamma0Dt,
    #[serde(rename = "dxpsi1_gamma1_dt")]
    Dxpsi1Gamma1Dt,
    DmuBDt,
    #[serde(rename = "sigma0_dmu_dW0")]
    Sigma0DmuDW0,
    DvDmuSigmaDt,
    #[serde(rename = "dmu2_sigma0_dt")]
    Dmu2Sigma0Dt,
    #[serde(rename = "dx_dmu_gamma0_dt")]
    DxDmuGamma0Dt,
    #[serde(rename = "dmu_psi0_sigma0_dt")]
    DmuPsi0Sigma0Dt,
}

pub const ALL_TERMS: [TermId; 19] = [
    TermId::PhiDt,
    TermId::DtuDt,
    TermId::PsiDW,
    TermId::Psi0DW0,
    TermId::Psi1DW1,
    TermId::DxuBetaDt,
    TermId::DxuGammaDW,
    TermId::DxuGamma0DW0,
    TermId::DxuGamma1DW1,
    TermId::HessXDt,
    TermId::DxpsiGammaDt,
    TermId::Dxpsi0Gamma0Dt,
    TermId::Dxpsi1Gamma1Dt,
    TermId::DmuBDt,
    TermId::Sigma0DmuDW0,
    TermId::DvDmuSigmaDt,
    TermId::Dmu2Sigma0Dt,
    TermId::DxDmuGamma0Dt,
    TermId::DmuPsi0Sigma0Dt,
];

impl TermId {
    pub fn as_str(self) -> &'static str {
        match self {
            TermId::PhiDt => "phi_dt",
            TermId::DtuDt => "dtu_dt",
            TermId::PsiDW => "psi_dW",
            TermId::Psi0DW0 => "psi0_dW0",
            TermId::Psi1DW1 => "psi1_dW1",
            TermId::DxuBetaDt => "dxu_beta_dt",
            TermId::DxuGammaDW => "dxu_gamma_dW",
            TermId::DxuGamma0DW0 => "dxu_gamma0_dW0",
            TermId::DxuGamma1DW1 => "dxu_gamma1_dW1",
            TermId::HessXDt => "hess_x_dt",
            TermId::DxpsiGammaDt => "dxpsi_gamma_dt",
            TermId::Dxpsi0Gamma0Dt => "dxpsi0_gamma0_dt",
            TermId::Dxpsi1Gamma1Dt => "dxpsi1_gamma1_dt",
            TermId::DmuBDt => "dmu_b_dt",
            TermId::Sigma0DmuDW0 => "sigma0_dmu_dW0",
            TermId::DvDmuSigmaDt => "dv_dmu_sigma_dt",
            TermId::Dmu2Sigma0Dt => "dmu2_sigma0_dt",
            TermId::DxDmuGamma0Dt => "dx_dmu_gamma0_dt",
            TermId::DmuPsi0Sigma0Dt => "dmu_psi0_sigma0_dt",
        }
    }
}

impl fmt::Display for TermId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TermId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ALL_TERMS
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown term id `{s}`")))
    }
}

impl TheoremId {
    pub const ALL: [TheoremId; 8] = [
        TheoremId::IwClassic,
        TheoremId::IwReduced,
        TheoremId::IlFull,
        TheoremId::IwlFullMeasure,
        TheoremId::IwlFullJoint,
        TheoremId::IlConditional,
        TheoremId::IwlConditionalMeasure,
        TheoremId::IwlConditionalJoint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TheoremId::IwClassic => "IW-classic",
            TheoremId::IwReduced => "IW-reduced",
            TheoremId::IlFull => "IL-full",
            TheoremId::IwlFullMeasure => "IWL-full-measure",
            TheoremId::IwlFullJoint => "IWL-full-joint",
            TheoremId::IlConditional => "IL-conditional",
            TheoremId::IwlConditionalMeasure => "IWL-conditional-measure",
            TheoremId::IwlConditionalJoint => "IWL-conditional-joint",
        }
    }

    /// Right-hand-side terms in summation order.
    pub fn schema(self) -> &'static [TermId] {
        use TermId::*;
        match self {
            TheoremId::IwClassic | TheoremId::IwReduced => {
                &[PhiDt, PsiDW, DxuBetaDt, DxuGammaDW, HessXDt, DxpsiGammaDt]
            }
            TheoremId::IlFull => &[DtuDt, DxuBetaDt, DxuGammaDW, HessXDt, DmuBDt, DvDmuSigmaDt],
            TheoremId::IwlFullMeasure => &[PhiDt, PsiDW, DmuBDt, DvDmuSigmaDt],
            TheoremId::IwlFullJoint => &[
                PhiDt,
                PsiDW,
                DxuGammaDW,
                DxpsiGammaDt,
                DxuBetaDt,
                HessXDt,
                DmuBDt,
                DvDmuSigmaDt,
            ],
            TheoremId::IlConditional => &[
                DtuDt,
                DxuBetaDt,
                DxuGamma0DW0,
                DxuGamma1DW1,
                HessXDt,
                DmuBDt,
                Sigma0DmuDW0,
                DvDmuSigmaDt,
                DxDmuGamma0Dt,
                Dmu2Sigma0Dt,
            ],
            TheoremId::IwlConditionalMeasure => &[
                PhiDt,
                Psi0DW0,
                Psi1DW1,
                DmuBDt,
                Sigma0DmuDW0,
                DvDmuSigmaDt,
                Dmu2Sigma0Dt,
                DmuPsi0Sigma0Dt,
            ],
            TheoremId::IwlConditionalJoint => &[
                PhiDt,
                Psi0DW0,
                Psi1DW1,
                DxuBetaDt,
                DxuGamma0DW0,
                DxuGamma1DW1,
                HessXDt,
                DmuBDt,
                Sigma0DmuDW0,
                DvDmuSigmaDt,
                Dmu2Sigma0Dt,
                DxDmuGamma0Dt,
                Dxpsi0Gamma0Dt,
                Dxpsi1Gamma1Dt,
                DmuPsi0Sigma0Dt,
            ],
        }
    }

    pub fn has_process(self) -> bool {
        !matches!(self, TheoremId::IwlFullMeasure | TheoremId::IwlConditionalMeasure)
    }

    pub fn has_cloud(self) -> bool {
        !matches!(self, TheoremId::IwClassic | TheoremId::IwReduced)
    }

    pub fn is_conditional(self) -> bool {
        matches!(
            self,
            TheoremId::IlConditional | TheoremId::IwlConditionalMeasure | TheoremId::IwlConditionalJoint
        )
    }

    /// Deterministic-field expansions (time dependence only).
    pub fn is_ito_lions(self) -> bool {
        matches!(self, TheoremId::IlFull | TheoremId::IlConditional)
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TheoremId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TheoremId::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown theorem id `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Discretization {
    pub steps: usize,
    pub particles: usize,
    pub dt: f64,
    pub seed: Option<u64>,
    pub replication: Option<u64>,
}

/// Pathwise left-hand side, per-term right-hand side, and their difference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionReport {
    pub theorem: TheoremId,
    pub lhs: f64,
    #[serde(serialize_with = "terms_as_map")]
    pub terms: Vec<(TermId, f64)>,
    pub residual: f64,
    pub meta: Discretization,
}

fn terms_as_map<S: Serializer>(terms: &[(TermId, f64)], s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut map = s.serialize_map(Some(terms.len()))?;
    for (id, v) in terms {
        map.serialize_entry(id.as_str(), v)?;
    }
    map.end()
}

/// `lhs - sum terms`, summed left to right in schema order.
fn difference(lhs: f64, terms: &[(TermId, f64)]) -> f64 {
    let mut rhs = 0.0;
    for (_, v) in terms {
        rhs += v;
    }
    lhs - rhs
}

impl ExpansionReport {
    pub fn new(theorem: TheoremId, lhs: f64, terms: Vec<(TermId, f64)>, meta: Discretization) -> Result<Self> {
        let schema = theorem.schema();
        if terms.len() != schema.len() || terms.iter().zip(schema).any(|((a, _), b)| a != b) {
            return Err(Error::invalid(format!("terms do not follow the {theorem} schema")));
        }
        let residual = difference(lhs, &terms);
        Ok(Self {
            theorem,
            lhs,
            terms,
            residual,
            meta,
        })
    }

    pub fn term(&self, id: TermId) -> Option<f64> {
        self.terms.iter().find(|(t, _)| *t == id).map(|(_, v)| *v)
    }

    pub fn rhs(&self) -> f64 {
        self.terms.iter().map(|(_, v)| v).sum()
    }
}

/// Recompute `lhs - sum terms` from the stored fields.
pub fn residual(report: &ExpansionReport) -> f64 {
    difference(report.lhs, &report.terms)
}

/// The residual had `term` been left out of the expansion.
pub fn term_ablation(report: &ExpansionReport, term: TermId) -> Result<f64> {
    let v = report
        .term(term)
        .ok_or_else(|| Error::invalid(format!("{term} is not part of the {} schema", report.theorem)))?;
    Ok(residual(report) + v)
}
