use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{MethodKind, Proposal};
use crate::distributions::Distribution;
use crate::error::{check_dim, invalid, Result, SbiError};
use crate::estimators::{DensityEstimator, Estimator, RatioEstimator};
use crate::rng::Rng;
use crate::samplers::{
    importance_sample, mh_sample, rejection_sample, slice_sample, LogDensityTarget, McmcConfig, McmcDiagnostics,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingStrategy {
    /// Draw from the NPE estimator, reject draws outside the prior support.
    Direct,
    Mcmc,
    Slice,
    Rejection,
    /// Sampling-importance-resampling with the prior as proposal.
    Importance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// `direct` for NPE and `mcmc` otherwise when unset.
    pub strategy: Option<SamplingStrategy>,
    pub mcmc: McmcConfig,
    /// Proposal cap of the direct sampler per call.
    pub max_proposals: usize,
    /// Rejection bound `log M` on `log p̃ − log prior`; estimated when unset.
    pub rejection_log_m: Option<f64>,
    /// Prior draws per returned sample in importance resampling.
    pub importance_factor: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            strategy: None,
            mcmc: McmcConfig::default(),
            max_proposals: 1_000_000,
            rejection_log_m: None,
            importance_factor: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSamples {
    pub samples: Array2<f64>,
    pub strategy: SamplingStrategy,
    /// Direct and rejection sampling.
    pub acceptance_rate: Option<f64>,
    pub mcmc: Option<McmcDiagnostics>,
    /// Importance resampling.
    pub ess: Option<f64>,
}

/// Posterior over θ given one or more i.i.d. observation rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Posterior {
    pub kind: MethodKind,
    pub estimator: Estimator,
    pub prior: Distribution,
    pub x_o: Array2<f64>,
    pub sampler: SamplerConfig,
    /// NPE conditioning vector (all rows flattened into one set).
    npe_cond: Vec<f64>,
}

impl Posterior {
    pub fn new(
        kind: MethodKind,
        estimator: Estimator,
        prior: Distribution,
        x_o: Array2<f64>,
        sampler: SamplerConfig,
    ) -> Result<Self> {
        sampler.mcmc.validate()?;
        if x_o.nrows() == 0 {
            return Err(invalid("posterior needs at least one observation row"));
        }
        if x_o.iter().any(|v| !v.is_finite()) {
            return Err(invalid("observation contains non-finite values"));
        }
        let mut npe_cond = Vec::new();
        match (kind, &estimator) {
            (MethodKind::Npe, Estimator::Density(d)) => {
                check_dim(prior.dim(), d.target_dim)?;
                if x_o.nrows() > 1 {
                    match d.embedding.element_dim() {
                        Some(e) if d.embedding.is_permutation_invariant() => check_dim(e, x_o.ncols())?,
                        _ => {
                            return Err(invalid(
                                "NPE with several i.i.d. observations needs a permutation-invariant embedding; \
                                 train with embedding type \"mean-pool\" or pass a single observation row",
                            ))
                        }
                    }
                } else {
                    d.embedding.check_input(x_o.ncols(), d.cond_dim)?;
                }
                npe_cond = x_o.iter().copied().collect();
            }
            (MethodKind::Nle, Estimator::Density(d)) => {
                check_dim(prior.dim(), d.cond_dim)?;
                check_dim(d.target_dim, x_o.ncols())?;
            }
            (MethodKind::Nre, Estimator::Ratio(r)) => {
                check_dim(prior.dim(), r.theta_dim)?;
                r.embedding.check_input(x_o.ncols(), r.x_dim)?;
            }
            _ => return Err(invalid(format!("estimator does not fit method {}", kind.name()))),
        }
        Ok(Self { kind, estimator, prior, x_o, sampler, npe_cond })
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn strategy(&self) -> SamplingStrategy {
        self.sampler.strategy.unwrap_or(match self.kind {
            MethodKind::Npe => SamplingStrategy::Direct,
            _ => SamplingStrategy::Mcmc,
        })
    }

    fn density(&self) -> &DensityEstimator {
        match &self.estimator {
            Estimator::Density(d) => d,
            Estimator::Ratio(_) => unreachable!("checked at construction"),
        }
    }

    fn ratio(&self) -> &RatioEstimator {
        match &self.estimator {
            Estimator::Ratio(r) => r,
            Estimator::Density(_) => unreachable!("checked at construction"),
        }
    }

    /// Data term per θ row, summed over observation rows. All observations
    /// are stacked into a single network evaluation.
    fn data_term(&self, theta: &Array2<f64>) -> Result<Vec<f64>> {
        let b = theta.nrows();
        let j = self.x_o.nrows();
        let mut xs = Array2::<f64>::zeros((b * j, self.x_o.ncols()));
        let mut ts = Array2::<f64>::zeros((b * j, theta.ncols()));
        for k in 0..j {
            for i in 0..b {
                xs.row_mut(k * b + i).assign(&self.x_o.row(k));
                ts.row_mut(k * b + i).assign(&theta.row(i));
            }
        }
        let per = match self.kind {
            MethodKind::Nle => self.density().log_prob(&xs, &ts)?,
            MethodKind::Nre => self.ratio().logits(&ts, &xs)?,
            MethodKind::Npe => unreachable!("NPE has no separate data term"),
        };
        let mut out = vec![0.0; b];
        for k in 0..j {
            for i in 0..b {
                out[i] += per[k * b + i];
            }
        }
        Ok(out)
    }

    /// NPE: `log q(θ | x_o)`, `−∞` outside the prior support. Unnormalized
    /// by the leaked mass.
    pub fn log_prob(&self, theta: &Array2<f64>) -> Result<Vec<f64>> {
        if self.kind != MethodKind::Npe {
            return Err(invalid("only NPE posteriors have an evaluable density; use log_target"));
        }
        check_dim(self.dim(), theta.ncols())?;
        let lp = self.prior.log_prob_batch(theta)?;
        let cond = Array2::from_shape_vec((1, self.npe_cond.len()), self.npe_cond.clone()).expect("one row");
        let lq = self.density().log_prob(theta, &cond)?;
        Ok(lq.into_iter().zip(lp).map(|(q, p)| if p == f64::NEG_INFINITY { p } else { q }).collect())
    }

    /// Unnormalized log posterior. NPE: as [`Posterior::log_prob`]. NLE:
    /// `Σ_j log q(x_j | θ) + log p(θ)`. NRE: `Σ_j ℓ(θ, x_j) + log p(θ)`.
    pub fn log_target(&self, theta: &Array2<f64>) -> Result<Vec<f64>> {
        if self.kind == MethodKind::Npe {
            return self.log_prob(theta);
        }
        check_dim(self.dim(), theta.ncols())?;
        let lp = self.prior.log_prob_batch(theta)?;
        let data = self.data_term(theta)?;
        Ok(data
            .into_iter()
            .zip(lp)
            .map(|(d, p)| {
                let v = d + p;
                if p == f64::NEG_INFINITY || v.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    v
                }
            })
            .collect())
    }

    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<PosteriorSamples> {
        if n == 0 {
            return Err(invalid("sample: n must be at least 1"));
        }
        let strategy = self.strategy();
        let mut out =
            PosteriorSamples { samples: Array2::zeros((0, 0)), strategy, acceptance_rate: None, mcmc: None, ess: None };
        match strategy {
            SamplingStrategy::Direct => {
                let (s, rate) = self.sample_direct(n, rng)?;
                out.samples = s;
                out.acceptance_rate = Some(rate);
            }
            SamplingStrategy::Mcmc => {
                let r = mh_sample(self, &self.sampler.mcmc, n, &self.prior, rng)?;
                out.samples = r.samples;
                out.mcmc = Some(r.diagnostics);
            }
            SamplingStrategy::Slice => {
                let r = slice_sample(self, &self.sampler.mcmc, n, &self.prior, rng)?;
                out.samples = r.samples;
                out.mcmc = Some(r.diagnostics);
            }
            SamplingStrategy::Rejection => {
                let log_m = match self.sampler.rejection_log_m {
                    Some(m) => m,
                    None => self.estimate_log_m(rng)?,
                };
                let r = rejection_sample(self, &self.prior, log_m, n, rng)?;
                out.samples = r.samples;
                out.acceptance_rate = Some(r.acceptance_rate);
            }
            SamplingStrategy::Importance => {
                let pool = n * self.sampler.importance_factor.max(1);
                let r = importance_sample(self, &self.prior, pool, rng)?;
                let mut rows = Vec::with_capacity(n * self.dim());
                for _ in 0..n {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut pick = r.weights.iter().rposition(|w| *w > 0.0).expect("positive weight");
                    for (i, w) in r.weights.iter().enumerate() {
                        acc += w;
                        if u < acc {
                            pick = i;
                            break;
                        }
                    }
                    rows.extend(r.samples.row(pick).iter());
                }
                out.samples = Array2::from_shape_vec((n, self.dim()), rows).expect("n × d");
                out.ess = Some(r.ess);
            }
        }
        Ok(out)
    }

    /// Largest data term over 10⁴ prior draws plus a margin of 1 nat.
    fn estimate_log_m(&self, rng: &mut Rng) -> Result<f64> {
        let theta = self.prior.sample(10_000, rng)?;
        let lt = self.log_target(&theta)?;
        let lp = self.prior.log_prob_batch(&theta)?;
        let m = lt.iter().zip(&lp).filter(|(t, _)| t.is_finite()).map(|(t, p)| t - p).fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(SbiError::Sampling("could not bound the target over prior draws".into()));
        }
        Ok(m + 1.0)
    }

    /// NPE draws restricted to the prior support. Returns samples and the
    /// acceptance rate (one minus the leaked fraction).
    fn sample_direct(&self, n: usize, rng: &mut Rng) -> Result<(Array2<f64>, f64)> {
        if self.kind != MethodKind::Npe {
            return Err(invalid("direct sampling is only available for NPE"));
        }
        let d = self.dim();
        let mut kept: Vec<f64> = Vec::with_capacity(n * d);
        let mut n_acc = 0;
        let mut proposals = 0usize;
        let cap = self.sampler.max_proposals;
        while n_acc < n {
            if proposals >= cap {
                return Err(SbiError::Sampling(format!(
                    "only {n_acc} of {n} posterior draws fell inside the prior support after {proposals} proposals; \
                     the estimator leaks most of its mass"
                )));
            }
            let rate = (n_acc.max(1) as f64) / (proposals.max(1) as f64);
            let want = (((n - n_acc) as f64 / rate) * 1.1).ceil() as usize;
            let batch = want.clamp(16, 1 << 16).min(cap - proposals);
            let draws = self.density().sample(&self.npe_cond, batch, rng)?;
            proposals += batch;
            let lp = self.prior.log_prob_batch(&draws)?;
            for (row, p) in draws.rows().into_iter().zip(lp) {
                if p > f64::NEG_INFINITY && row.iter().all(|v| v.is_finite()) {
                    kept.extend(row.iter());
                    n_acc += 1;
                    if n_acc == n {
                        break;
                    }
                }
            }
        }
        Ok((Array2::from_shape_vec((n, d), kept).expect("n × d"), n as f64 / proposals as f64))
    }
}

impl LogDensityTarget for Posterior {
    fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn log_density(&self, theta: &Array2<f64>) -> Result<Vec<f64>> {
        self.log_target(theta)
    }

    fn support(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        Some(self.prior.support_bounds())
    }
}

/// NPE posteriors serve as importance-sampling proposals.
impl Proposal for Posterior {
    fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn sample(&self, n: usize, rng: &mut Rng) -> Result<Array2<f64>> {
        Ok(self.sample_direct(n, rng)?.0)
    }

    fn log_prob(&self, theta: &Array2<f64>) -> Result<Vec<f64>> {
        Posterior::log_prob(self, theta)
    }
}
