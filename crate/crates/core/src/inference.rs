//! NPE, NLE and NRE: training on simulations, posterior construction, the
//! sequential scheme and importance-sampling correction.

mod posterior;
mod sequential;

pub use posterior::{Posterior, PosteriorSamples, SamplerConfig, SamplingStrategy};
pub use sequential::{run_sequential, SequentialResult, TRUNCATION_QUANTILE};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::distributions::Distribution;
use crate::error::{check_dim, invalid, Result, SbiError};
use crate::estimators::{DensityEstimator, EmbeddingConfig, Estimator, EstimatorConfig, RatioEstimator};
use crate::neural::{TrainConfig, TrainReport};
use crate::rng::{labeled_seed, Rng};
use crate::samplers::{ess_of_weights, normalize_log_weights, ImportanceResult};
use crate::simgym::SimulationBatch;

pub const MIN_TRAINING_ROWS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Npe,
    Nle,
    Nre,
}

impl MethodKind {
    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Npe => "npe",
            MethodKind::Nle => "nle",
            MethodKind::Nre => "nre",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferenceMethod {
    pub kind: MethodKind,
    pub estimator: EstimatorConfig,
    pub train: TrainConfig,
    pub prior: Distribution,
}

impl InferenceMethod {
    /// Engine defaults for `kind`: MDN density estimator, default training.
    pub fn new(kind: MethodKind, prior: Distribution) -> Self {
        Self { kind, estimator: EstimatorConfig::default(), train: TrainConfig::default(), prior }
    }
}

/// A trained estimator with its training record.
#[derive(Clone, Debug, PartialEq)]
pub struct Trained {
    pub estimator: Estimator,
    pub report: TrainReport,
    /// Invalid rows removed before training.
    pub dropped: usize,
}

/// Trains the method's estimator on `batch` (invalid rows are dropped first).
pub fn train_amortized(m: &InferenceMethod, batch: &SimulationBatch) -> Result<Trained> {
    train_from(m, batch, None)
}

/// As [`train_amortized`], optionally starting from the weights of `init`.
pub(crate) fn train_from(m: &InferenceMethod, batch: &SimulationBatch, init: Option<&Estimator>) -> Result<Trained> {
    let (batch, dropped) = batch.filter_valid()?;
    if batch.len() < MIN_TRAINING_ROWS {
        return Err(invalid(format!(
            "training needs at least {MIN_TRAINING_ROWS} valid simulations, got {}",
            batch.len()
        )));
    }
    check_dim(m.prior.dim(), batch.theta_dim())?;
    let seed = labeled_seed(m.train.seed, "init");
    let (theta, x) = (&batch.theta, &batch.x);
    let warm = |est: &mut crate::neural::ParamSet| -> Result<()> {
        if let Some(prev) = init {
            if prev.params().count() == est.count() {
                est.load_flat(&prev.params().flatten()).map_err(SbiError::Format)?;
            }
        }
        Ok(())
    };
    let (estimator, report) = match m.kind {
        MethodKind::Npe => {
            let mut est = DensityEstimator::new(&m.estimator, theta.ncols(), x.ncols(), seed)?;
            warm(&mut est.params)?;
            let report = est.fit(theta, x, &m.train)?;
            (Estimator::Density(est), report)
        }
        MethodKind::Nle => {
            // The likelihood is conditioned on θ; embeddings apply to data only.
            let cfg = EstimatorConfig { embedding: EmbeddingConfig::Identity, ..m.estimator.clone() };
            let mut est = DensityEstimator::new(&cfg, x.ncols(), theta.ncols(), seed)?;
            warm(&mut est.params)?;
            let report = est.fit(x, theta, &m.train)?;
            (Estimator::Density(est), report)
        }
        MethodKind::Nre => {
            let mut est = RatioEstimator::new(&m.estimator, theta.ncols(), x.ncols(), seed)?;
            warm(&mut est.params)?;
            let report = est.fit(theta, x, &m.train)?;
            (Estimator::Ratio(est), report)
        }
    };
    Ok(Trained { estimator, report, dropped })
}

/// Builds the posterior for observation rows `x_o` (one or more i.i.d. rows).
pub fn build_posterior(
    kind: MethodKind,
    estimator: Estimator,
    prior: Distribution,
    x_o: Array2<f64>,
    sampler: SamplerConfig,
) -> Result<Posterior> {
    Posterior::new(kind, estimator, prior, x_o, sampler)
}

/// A proposal for importance correction: sampleable and density-evaluable.
pub trait Proposal {
    fn dim(&self) -> usize;
    fn sample(&self, n: usize, rng: &mut Rng) -> Result<Array2<f64>>;
    fn log_prob(&self, theta: &Array2<f64>) -> Result<Vec<f64>>;
}

impl Proposal for Distribution {
    fn dim(&self) -> usize {
        Distribution::dim(self)
    }
    fn sample(&self, n: usize, rng: &mut Rng) -> Result<Array2<f64>> {
        Distribution::sample(self, n, rng)
    }
    fn log_prob(&self, theta: &Array2<f64>) -> Result<Vec<f64>> {
        self.log_prob_batch(theta)
    }
}

/// Reweights draws of `q` toward `p(θ | x_o) ∝ p(x_o | θ) p(θ)`:
/// `w̃ = exp(log p(x_o|θ) + log p(θ) − log q(θ))`, self-normalized.
pub fn importance_correct(
    q: &dyn Proposal,
    prior: &Distribution,
    log_likelihood: impl Fn(&[f64]) -> f64,
    n: usize,
    rng: &mut Rng,
) -> Result<ImportanceResult> {
    check_dim(prior.dim(), q.dim())?;
    let samples = q.sample(n, rng)?;
    let lq = q.log_prob(&samples)?;
    let lp = prior.log_prob_batch(&samples)?;
    let log_weights: Vec<f64> = samples
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            if lp[i] == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            let ll = log_likelihood(&row.to_vec());
            let w = ll + lp[i] - lq[i];
            if w.is_nan() {
                f64::NEG_INFINITY
            } else {
                w
            }
        })
        .collect();
    let weights = normalize_log_weights(&log_weights)?;
    let ess = ess_of_weights(&weights);
    Ok(ImportanceResult { samples, log_weights, weights, ess })
}

/// Everything needed to replay a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub method: Option<MethodKind>,
    pub rounds: usize,
    pub seed: u64,
    /// Sub-seeds by stage label and round.
    pub seeds: Vec<(String, u64)>,
    pub batches: Vec<String>,
    pub checkpoints: Vec<String>,
    pub outputs: Vec<String>,
    pub config: serde_json::Value,
}
