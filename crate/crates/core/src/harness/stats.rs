use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::linalg::CompensatedSum;

/// Mean, population variance and RMS of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Population variance, so that `rms^2 = mean^2 + variance`.
    pub variance: f64,
    pub rms: f64,
    /// Standard error of the mean (sample variance).
    pub se: f64,
    /// Delta-method standard error of the RMS.
    pub rms_se: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Summary {
                count: 0,
                mean: f64::NAN,
                variance: f64::NAN,
                rms: f64::NAN,
                se: f64::NAN,
                rms_se: f64::NAN,
            };
        }
        let nf = n as f64;
        let mut s = CompensatedSum::new();
        let mut s2 = CompensatedSum::new();
        for &v in values {
            s.add(v);
            s2.add(v * v);
        }
        let mean = s.value() / nf;
        let mean_sq = s2.value() / nf;
        let mut centered = CompensatedSum::new();
        let mut sq_dev = CompensatedSum::new();
        for &v in values {
            centered.add((v - mean).powi(2));
            sq_dev.add((v * v - mean_sq).powi(2));
        }
        let variance = centered.value() / nf;
        let rms = mean_sq.sqrt();
        let (se, rms_se) = if n > 1 {
            let se = (centered.value() / (nf - 1.0) / nf).sqrt();
            let se_sq = (sq_dev.value() / (nf - 1.0) / nf).sqrt();
            (se, if rms > 0.0 { se_sq / (2.0 * rms) } else { 0.0 })
        } else {
            (0.0, 0.0)
        };
        Summary {
            count: n,
            mean,
            variance,
            rms,
            se,
            rms_se,
        }
    }
}

/// Least-squares fit of `log2 y = a + s log2 x`, reported as the decay rate `-s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub rate: f64,
    /// 95% confidence half-width from the fit's residual variance; infinite
    /// with only two points.
    pub half_width: f64,
    pub intercept: f64,
    pub points: usize,
}

/// `None` unless there are at least three strictly positive points.
pub fn fit_decay_rate(x: &[f64], y: &[f64]) -> Option<SlopeFit> {
    let n = x.len();
    if n != y.len() || n < 3 || x.iter().chain(y).any(|v| !(v.is_finite() && *v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.log2()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.log2()).collect();
    let nf = n as f64;
    let mx = lx.iter().sum::<f64>() / nf;
    let my = ly.iter().sum::<f64>() / nf;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let df = nf - 2.0;
    let se_slope = (sse / df / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, df).expect("df >= 1").inverse_cdf(0.975);
    Some(SlopeFit {
        rate: -slope,
        half_width: t * se_slope,
        intercept,
        points: n,
    })
}
