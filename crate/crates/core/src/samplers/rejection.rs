use ndarray::Array2;
use rand::Rng as _;

use super::{eval_target, LogDensityTarget};
use crate::distributions::Distribution;
use crate::error::{check_dim, invalid, Result, SbiError};
use crate::rng::Rng;

const MAX_PROPOSALS_BEFORE_CHECK: usize = 10_000_000;
const MIN_ACCEPTANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct RejectionResult {
    pub samples: Array2<f64>,
    pub proposals: usize,
    pub acceptance_rate: f64,
}

/// Accepts `θ ~ q` with probability `exp(log p̃(θ) − log M − log q(θ))`.
/// The bound `p̃ ≤ M q` is the caller's responsibility.
pub fn rejection_sample(
    target: &dyn LogDensityTarget,
    proposal: &Distribution,
    log_m: f64,
    n: usize,
    rng: &mut Rng,
) -> Result<RejectionResult> {
    check_dim(target.dim(), proposal.dim())?;
    if n == 0 {
        return Err(invalid("rejection_sample: n must be at least 1"));
    }
    let d = proposal.dim();
    let mut accepted: Vec<f64> = Vec::with_capacity(n * d);
    let mut n_acc = 0usize;
    let mut proposals = 0usize;
    let mut batch = n.max(256);
    while n_acc < n {
        let theta = proposal.sample(batch, rng)?;
        let lt = eval_target(target, &theta)?;
        let lq = proposal.log_prob_batch(&theta)?;
        for (i, row) in theta.rows().into_iter().enumerate() {
            proposals += 1;
            let u: f64 = rng.random();
            if lt[i] > f64::NEG_INFINITY && u.ln() < lt[i] - log_m - lq[i] {
                accepted.extend(row.iter());
                n_acc += 1;
                if n_acc == n {
                    break;
                }
            }
        }
        if proposals >= MAX_PROPOSALS_BEFORE_CHECK && (n_acc as f64) / (proposals as f64) < MIN_ACCEPTANCE {
            return Err(SbiError::Sampling(format!(
                "rejection sampling accepted {n_acc} of {proposals} proposals; the proposal does not cover the target"
            )));
        }
        // Size the next batch from the observed rate, bounded to keep memory flat.
        let rate = (n_acc.max(1) as f64) / proposals as f64;
        batch = (((n - n_acc) as f64 / rate * 1.1).ceil() as usize).clamp(256, 1 << 18);
    }
    Ok(RejectionResult {
        samples: Array2::from_shape_vec((n, d), accepted).expect("n × d"),
        proposals,
        acceptance_rate: n as f64 / proposals as f64,
    })
}
