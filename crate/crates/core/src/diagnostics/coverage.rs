use ndarray::{Array2, ArrayView1};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::DiagnosticReport;
use crate::distributions::Distribution;
use crate::error::{check_dim, invalid, Result, SbiError};
use crate::rng::Rng;

/// `0, 0.05, 0.10, …, 0.95, 1`.
pub fn coverage_levels() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub levels: Vec<f64>,
    pub ecp: Vec<f64>,
    /// Per-case credibility fraction `f_i`.
    pub credibility: Vec<f64>,
    pub n_cases: usize,
    pub max_deviation: f64,
}

impl CoverageCurve {
    /// `ECP(α) = #{f_i < α}/N` for `α < 1` and `ECP(1) = 1`, so both
    /// endpoints are exact.
    pub fn from_credibility(credibility: Vec<f64>) -> Self {
        let levels = coverage_levels();
        let n = credibility.len();
        let ecp: Vec<f64> = levels
            .iter()
            .map(|&a| {
                let c = if a >= 1.0 {
                    credibility.iter().filter(|f| **f <= 1.0).count()
                } else {
                    credibility.iter().filter(|f| **f < a).count()
                };
                c as f64 / n as f64
            })
            .collect();
        let max_deviation = levels.iter().zip(&ecp).map(|(a, e)| (a - e).abs()).fold(0.0, f64::max);
        Self { levels, ecp, credibility, n_cases: n, max_deviation }
    }

    /// Mean signed deviation `ECP(α) − α` over interior levels; positive for
    /// overdispersed posteriors.
    pub fn mean_signed_deviation(&self) -> f64 {
        let inner: Vec<f64> =
            self.levels.iter().zip(&self.ecp).filter(|(a, _)| **a > 0.0 && **a < 1.0).map(|(a, e)| e - a).collect();
        inner.iter().sum::<f64>() / inner.len() as f64
    }

    pub fn report(&self, method: &str, tolerance: f64) -> DiagnosticReport {
        DiagnosticReport::new(
            method,
            self.max_deviation <= tolerance,
            self.max_deviation,
            tolerance,
            json!({ "levels": self.levels, "ecp": self.ecp, "n_cases": self.n_cases }),
        )
    }

    /// Curve points: header `alpha,ecp`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha,ecp\n");
        for (a, e) in self.levels.iter().zip(&self.ecp) {
            s.push_str(&format!("{a},{e}\n"));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TarpReference {
    /// Uniform over the axis-aligned bounding box of each case's samples.
    SampleBox,
    Distribution(Distribution),
    /// One fixed reference point per case.
    Points(Array2<f64>),
}

fn check_cases(theta_star: &Array2<f64>, samples: &[Array2<f64>]) -> Result<()> {
    if theta_star.nrows() != samples.len() {
        return Err(invalid(format!("{} true parameters but {} sample sets", theta_star.nrows(), samples.len())));
    }
    for s in samples {
        check_dim(theta_star.ncols(), s.ncols())?;
        if s.nrows() == 0 {
            return Err(invalid("empty posterior sample set"));
        }
        let first = s.row(0);
        if s.rows().into_iter().all(|r| r == first) {
            return Err(SbiError::Diagnostic(
                "posterior samples of a case are all identical; coverage is undefined".into(),
            ));
        }
    }
    Ok(())
}

fn dist2(a: ArrayView1<f64>, b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// TARP expected coverage: `f_i` is the fraction of posterior samples closer to
/// a reference point than `θ*_i` is.
pub fn run_tarp(
    theta_star: &Array2<f64>,
    samples: &[Array2<f64>],
    reference: &TarpReference,
    rng: &mut Rng,
) -> Result<CoverageCurve> {
    if theta_star.nrows() < 100 || samples.iter().any(|s| s.nrows() < 100) {
        return Err(invalid("TARP needs at least 100 cases and 100 samples per case"));
    }
    check_cases(theta_star, samples)?;
    let d = theta_star.ncols();
    if let TarpReference::Points(p) = reference {
        check_dim(theta_star.nrows(), p.nrows())?;
        check_dim(d, p.ncols())?;
    }
    if let TarpReference::Distribution(dist) = reference {
        check_dim(d, dist.dim())?;
    }
    let mut cred = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let r: Vec<f64> = match reference {
            TarpReference::SampleBox => (0..d)
                .map(|j| {
                    let col = s.column(j);
                    let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    lo + rng.random::<f64>() * (hi - lo)
                })
                .collect(),
            TarpReference::Distribution(dist) => dist.sample(1, rng)?.row(0).to_vec(),
            TarpReference::Points(p) => p.row(i).to_vec(),
        };
        let dt = dist2(theta_star.row(i), &r);
        let closer = s.rows().into_iter().filter(|row| dist2(*row, &r) < dt).count();
        cred.push(closer as f64 / s.nrows() as f64);
    }
    Ok(CoverageCurve::from_credibility(cred))
}

/// Density-rank expected coverage: `f_i` is the fraction of posterior samples
/// with higher estimated density than `θ*_i`. `log_q(i, θ)` evaluates the
/// posterior density of case `i` at the rows of `θ`.
pub fn expected_coverage_rank(
    theta_star: &Array2<f64>,
    samples: &[Array2<f64>],
    log_q: &mut dyn FnMut(usize, &Array2<f64>) -> Result<Vec<f64>>,
) -> Result<CoverageCurve> {
    check_cases(theta_star, samples)?;
    let mut cred = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let star = theta_star.row(i).to_owned().insert_axis(ndarray::Axis(0));
        let l_star = log_q(i, &star)?[0];
        let l = log_q(i, s)?;
        if l.len() != s.nrows() {
            return Err(SbiError::Diagnostic("density callback returned the wrong number of values".into()));
        }
        let above = l.iter().filter(|v| **v > l_star).count();
        cred.push(above as f64 / s.nrows() as f64);
    }
    Ok(CoverageCurve::from_credibility(cred))
}
