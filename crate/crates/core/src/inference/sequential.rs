use ndarray::Array2;
use rand::RngCore;

use super::{train_from, InferenceMethod, MethodKind, Posterior, SamplerConfig};
use crate::error::{invalid, Result, SbiError};
use crate::estimators::Estimator;
use crate::neural::TrainReport;
use crate::rng::Rng;
use crate::simgym::{simulate_for_sbi, simulate_parameters, SimulationBatch, Simulator};

/// Fraction of the posterior's own sample densities below the truncation level.
pub const TRUNCATION_QUANTILE: f64 = 5e-4;
const TRUNCATION_DRAWS: usize = 10_000;
const MIN_TRUNCATION_ACCEPTANCE: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct SequentialResult {
    pub posterior: Posterior,
    pub estimator: Estimator,
    /// One batch per round, unfiltered.
    pub batches: Vec<SimulationBatch>,
    pub reports: Vec<TrainReport>,
    /// Batch seed of every round.
    pub round_seeds: Vec<u64>,
    /// Rows used in the final training run.
    pub n_train: usize,
}

/// Multi-round inference focused on `x_o`.
///
/// Round one simulates from the prior. Later rounds simulate from the current
/// posterior (NLE, NRE) or from the prior truncated to the region where the
/// current posterior density exceeds its [`TRUNCATION_QUANTILE`] level (NPE),
/// then retrain on every pair collected so far, starting from the previous
/// weights.
pub fn run_sequential(
    m: &InferenceMethod,
    sim: &dyn Simulator,
    x_o: &Array2<f64>,
    rounds: usize,
    sims_per_round: usize,
    workers: usize,
    sampler: &SamplerConfig,
    rng: &mut Rng,
) -> Result<SequentialResult> {
    if rounds == 0 || sims_per_round == 0 {
        return Err(invalid("rounds and sims_per_round must be at least 1"));
    }
    let mut batches = Vec::with_capacity(rounds);
    let mut reports = Vec::with_capacity(rounds);

    let first = simulate_for_sbi(&m.prior, sim, sims_per_round, workers, rng)?;
    let mut all = first.clone();
    batches.push(first);
    let trained = train_from(m, &all, None)?;
    reports.push(trained.report);
    let mut estimator = trained.estimator;
    let mut posterior = Posterior::new(m.kind, estimator.clone(), m.prior.clone(), x_o.clone(), sampler.clone())?;

    for _ in 1..rounds {
        let theta = match m.kind {
            MethodKind::Npe => truncated_prior(&posterior, sims_per_round, rng)?,
            MethodKind::Nle | MethodKind::Nre => posterior.sample(sims_per_round, rng)?.samples,
        };
        let batch = simulate_parameters(sim, theta, workers, rng.next_u64())?;
        all = all.append(&batch)?;
        batches.push(batch);
        let trained = train_from(m, &all, Some(&estimator))?;
        reports.push(trained.report);
        estimator = trained.estimator;
        posterior = Posterior::new(m.kind, estimator.clone(), m.prior.clone(), x_o.clone(), sampler.clone())?;
    }

    Ok(SequentialResult {
        round_seeds: batches.iter().map(|b| b.seed).collect(),
        n_train: all.n_valid(),
        posterior,
        estimator,
        batches,
        reports,
    })
}

/// Prior draws whose posterior log-density exceeds the truncation level.
fn truncated_prior(posterior: &Posterior, n: usize, rng: &mut Rng) -> Result<Array2<f64>> {
    let draws = posterior.sample(TRUNCATION_DRAWS, rng)?.samples;
    let mut lq = posterior.log_prob(&draws)?;
    lq.sort_by(|a, b| a.total_cmp(b));
    let level = lq[(TRUNCATION_QUANTILE * lq.len() as f64).floor() as usize];

    let prior = &posterior.prior;
    let d = prior.dim();
    let max_proposals = (n as f64 / MIN_TRUNCATION_ACCEPTANCE).ceil() as usize;
    let mut kept = Vec::with_capacity(n * d);
    let mut n_acc = 0;
    let mut proposals = 0;
    while n_acc < n {
        let batch = (4 * (n - n_acc)).clamp(1000, 100_000);
        let theta = prior.sample(batch, rng)?;
        let lp = posterior.log_prob(&theta)?;
        proposals += batch;
        for (row, l) in theta.rows().into_iter().zip(lp) {
            if l >= level {
                kept.extend(row.iter());
                n_acc += 1;
                if n_acc == n {
                    break;
                }
            }
        }
        let rate = n_acc as f64 / proposals as f64;
        if n_acc < n && (proposals >= max_proposals || (proposals >= 100_000 && rate < MIN_TRUNCATION_ACCEPTANCE)) {
            return Err(SbiError::Sampling(format!(
                "truncated prior accepts {rate:.2e} of prior draws (below {MIN_TRUNCATION_ACCEPTANCE:.0e}); \
                 use more rounds or more simulations per round"
            )));
        }
    }
    Ok(Array2::from_shape_vec((n, d), kept).expect("n × d"))
}
