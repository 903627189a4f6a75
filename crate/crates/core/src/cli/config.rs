use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::diagnostics::C2stConfig;
use crate::distributions::{linear_gaussian_posterior, Distribution};
use crate::error::{Result, SbiError};
use crate::estimators::EstimatorConfig;
use crate::inference::{InferenceMethod, MethodKind, SamplerConfig};
use crate::linalg::diag;
use crate::neural::TrainConfig;
use crate::simgym::{FailureInjector, IdentitySimulator, LinearGaussianSimulator, Simulator, TwoMoonsSimulator};

/// Names accepted by `[simulator] name`.
pub const SIMULATORS: &[&str] = &["identity", "linear-gaussian", "two-moons"];

/// A whole run. Only `seed` is required.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Defaults to `N(0, I)` (a `[-1, 1]²` box for two-moons).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Distribution>,
    #[serde(default)]
    pub simulator: SimulatorConfig,
    #[serde(default)]
    pub method: MethodConfig,
    /// `train.seed` is derived from the run seed and must not be set.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorConfig {
    pub name: String,
    pub dim: usize,
    /// Noise scale of `linear-gaussian`.
    pub sigma: f64,
    /// Fraction of rows replaced by NaN.
    pub failure_rate: f64,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self { name: "linear-gaussian".into(), dim: 2, sigma: 0.1f64.sqrt(), failure_rate: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodConfig {
    pub kind: MethodKind,
    pub rounds: usize,
    /// Simulations per round when `rounds > 1`.
    pub sims_per_round: usize,
    pub workers: usize,
    pub estimator: EstimatorConfig,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            kind: MethodKind::Npe,
            rounds: 1,
            sims_per_round: 1000,
            workers: 1,
            estimator: EstimatorConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TarpReferenceKind {
    SampleBox,
    Prior,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// SBC trials.
    pub trials: usize,
    /// SBC posterior draws per trial.
    pub posterior_draws: usize,
    /// Coverage cases.
    pub cases: usize,
    /// Coverage posterior samples per case.
    pub posterior_samples: usize,
    pub sbc_alpha: f64,
    pub coverage_tolerance: f64,
    pub c2st_threshold: f64,
    pub tarp_reference: TarpReferenceKind,
    pub c2st: C2stConfig,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            trials: 200,
            posterior_draws: 100,
            cases: 500,
            posterior_samples: 500,
            sbc_alpha: 0.01,
            coverage_tolerance: 0.05,
            c2st_threshold: 0.6,
            tarp_reference: TarpReferenceKind::SampleBox,
            c2st: C2stConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| SbiError::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| SbiError::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SbiError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| SbiError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.train.seed != 0 {
            return Err(SbiError::Config("train.seed is derived from the run seed; set `seed` instead".into()));
        }
        if self.method.rounds == 0 || self.method.workers == 0 {
            return Err(SbiError::Config("method.rounds and method.workers must be at least 1".into()));
        }
        self.train.validate()?;
        self.method.estimator.validate()?;
        self.sampler.mcmc.validate()?;
        let sim = self.simulator()?;
        let prior = self.prior()?;
        if prior.dim() != sim.theta_dim() {
            return Err(SbiError::Config(format!(
                "prior has dimension {} but simulator '{}' takes {}",
                prior.dim(),
                self.simulator.name,
                sim.theta_dim()
            )));
        }
        Ok(())
    }

    pub fn prior(&self) -> Result<Distribution> {
        match &self.prior {
            Some(p) => Ok(p.clone()),
            None if self.simulator.name == "two-moons" => Distribution::uniform_box(vec![-1.0; 2], vec![1.0; 2]),
            None => Distribution::standard_normal(self.simulator.dim),
        }
    }

    pub fn simulator(&self) -> Result<Box<dyn Simulator>> {
        let s = &self.simulator;
        let inner: Box<dyn Simulator> = match s.name.as_str() {
            "identity" => Box::new(IdentitySimulator { dim: s.dim }),
            "linear-gaussian" => {
                if !(s.sigma > 0.0) {
                    return Err(SbiError::Config("simulator.sigma must be positive".into()));
                }
                Box::new(LinearGaussianSimulator { dim: s.dim, sigma: s.sigma })
            }
            "two-moons" => {
                if s.dim != 2 {
                    return Err(SbiError::Config("two-moons is 2-dimensional; set simulator.dim = 2".into()));
                }
                Box::new(TwoMoonsSimulator)
            }
            other => {
                return Err(SbiError::Config(format!(
                    "unknown simulator '{other}'; available: {}",
                    SIMULATORS.join(", ")
                )))
            }
        };
        if !(0.0..1.0).contains(&s.failure_rate) {
            return Err(SbiError::Config("simulator.failure_rate must lie in [0, 1)".into()));
        }
        if s.failure_rate > 0.0 {
            return Ok(Box::new(FailureInjector { inner, failure_rate: s.failure_rate }));
        }
        Ok(inner)
    }

    /// Inference method with the run's train seed filled in.
    pub fn method(&self, train_seed: u64) -> Result<InferenceMethod> {
        let mut m = InferenceMethod::new(self.method.kind, self.prior()?);
        m.estimator = self.method.estimator.clone();
        m.train = TrainConfig { seed: train_seed, ..self.train.clone() };
        Ok(m)
    }

    /// Exact posterior at `x`, available for `linear-gaussian` under a gaussian prior.
    pub fn oracle_posterior(&self, x: &[f64]) -> Result<Distribution> {
        if self.simulator.name != "linear-gaussian" {
            return Err(SbiError::Config("an oracle posterior exists only for the linear-gaussian simulator".into()));
        }
        let prior = self.prior()?;
        if prior.gaussian_moments().is_none() {
            return Err(SbiError::Config("an oracle posterior needs a gaussian prior".into()));
        }
        let var = self.simulator.sigma * self.simulator.sigma;
        let cov: Array2<f64> = diag(&vec![var; self.simulator.dim]);
        linear_gaussian_posterior(&prior, &cov, x)
    }
}
