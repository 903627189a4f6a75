use ndarray::Array2;
use serde::Serialize;

use super::{ess_of_weights, eval_target, normalize_log_weights, LogDensityTarget};
use crate::distributions::Distribution;
use crate::error::{check_dim, Result};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImportanceResult {
    #[serde(skip)]
    pub samples: Array2<f64>,
    pub log_weights: Vec<f64>,
    /// Self-normalized; sums to one.
    pub weights: Vec<f64>,
    pub ess: f64,
}

impl ImportanceResult {
    pub fn weighted_mean(&self) -> Vec<f64> {
        let d = self.samples.ncols();
        let mut m = vec![0.0; d];
        for (row, w) in self.samples.rows().into_iter().zip(&self.weights) {
            for (acc, v) in m.iter_mut().zip(row) {
                *acc += w * v;
            }
        }
        m
    }
}

/// Self-normalized importance sampling with `w̃ = p̃(θ) / q(θ)`, `θ ~ q`.
pub fn importance_sample(
    target: &dyn LogDensityTarget,
    proposal: &Distribution,
    n: usize,
    rng: &mut Rng,
) -> Result<ImportanceResult> {
    check_dim(target.dim(), proposal.dim())?;
    let samples = proposal.sample(n, rng)?;
    let lt = eval_target(target, &samples)?;
    let lq = proposal.log_prob_batch(&samples)?;
    let log_weights: Vec<f64> =
        lt.iter().zip(&lq).map(|(a, b)| if *a == f64::NEG_INFINITY { f64::NEG_INFINITY } else { a - b }).collect();
    let weights = normalize_log_weights(&log_weights)?;
    let ess = ess_of_weights(&weights);
    Ok(ImportanceResult { samples, log_weights, weights, ess })
}
