//! Samplers over unnormalized log-densities.

mod importance;
mod mcmc;
mod rejection;

pub use importance::{importance_sample, ImportanceResult};
pub use mcmc::{effective_sample_size, mh_sample, slice_sample, split_rhat, McmcDiagnostics, McmcResult};
pub use rejection::{rejection_sample, RejectionResult};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SbiError};

/// Unnormalized log-density evaluated on a batch of rows.
pub trait LogDensityTarget {
    fn dim(&self) -> usize;

    /// One value per row of `theta`: finite or `−∞`.
    fn log_density(&self, theta: &Array2<f64>) -> Result<Vec<f64>>;

    /// Optional axis-aligned box known to contain the support.
    fn support(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }
}

/// Wraps a per-row closure as a target.
pub struct FnTarget<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64> FnTarget<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64> LogDensityTarget for FnTarget<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, theta: &Array2<f64>) -> Result<Vec<f64>> {
        Ok(theta.rows().into_iter().map(|r| (self.f)(&r.to_vec())).collect())
    }
}

impl LogDensityTarget for crate::distributions::Distribution {
    fn dim(&self) -> usize {
        crate::distributions::Distribution::dim(self)
    }

    fn log_density(&self, theta: &Array2<f64>) -> Result<Vec<f64>> {
        self.log_prob_batch(theta)
    }

    fn support(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        Some(self.support_bounds())
    }
}

/// Evaluates and validates a batch: NaN is a contract violation.
pub(crate) fn eval_target(t: &dyn LogDensityTarget, theta: &Array2<f64>) -> Result<Vec<f64>> {
    let v = t.log_density(theta)?;
    if v.len() != theta.nrows() {
        return Err(SbiError::Sampling(format!("target returned {} values for {} rows", v.len(), theta.nrows())));
    }
    if v.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(SbiError::Sampling("target log-density returned NaN or +inf".into()));
    }
    Ok(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    PriorDraw,
    /// Draw 1024 points from the initial distribution, resample by target density.
    ResampleBestOf1024,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub chains: usize,
    pub warmup: usize,
    pub thin: usize,
    /// Initial random-walk step of MH.
    pub scale: f64,
    /// Robbins–Monro target for the MH acceptance rate during warmup.
    pub target_acceptance: f64,
    pub init: InitStrategy,
    /// Initial bracket width of the slice sampler.
    pub slice_width: f64,
    /// Step-out limit of the slice sampler.
    pub max_step_out: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            chains: 20,
            warmup: 200,
            thin: 1,
            scale: 0.5,
            target_acceptance: 0.234,
            init: InitStrategy::ResampleBestOf1024,
            slice_width: 1.0,
            max_step_out: 50,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.warmup == 0 || self.thin == 0 {
            return Err(invalid("chains, warmup and thin must be at least 1"));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) || !(self.slice_width > 0.0 && self.slice_width.is_finite()) {
            return Err(invalid("proposal scale and slice width must be positive"));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(invalid("target_acceptance must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// `(Σw)² / Σw²` of normalized or unnormalized weights.
pub fn ess_of_weights(w: &[f64]) -> f64 {
    let s: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|v| v * v).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// Self-normalizes log-weights; errors if every weight is zero.
pub fn normalize_log_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    let m = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(SbiError::Sampling("all importance weights are zero".into()));
    }
    let e: Vec<f64> = log_w.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / s).collect())
}
