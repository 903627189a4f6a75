//! Conditional density estimators (MDN, MAF), the ratio classifier, embedding
//! networks, and the trained-estimator wrappers that handle z-scoring and
//! checkpoints.
//!
//! Wrappers evaluate densities in original coordinates: targets are z-scored
//! internally and the Jacobian term `−Σ log σ` is added back.

pub mod classifier;
pub mod embedding;
pub mod maf;
pub mod mdn;

use ndarray::Array2;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result, SbiError};
use crate::neural::{train, Activation, Graph, Model, ParamSet, Standardizer, Tensor, TrainConfig, TrainReport, Var};
use crate::rng::{rng_from_seed, Rng};

pub use classifier::{classifier_loss, derangement, RatioClassifier};
pub use embedding::{canonicalize_sets, EmbeddingConfig, EmbeddingNet};
pub use maf::Maf;
pub use mdn::{Mdn, MixtureParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityFamily {
    Mdn,
    Maf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub density: DensityFamily,
    /// Mixture components (MDN).
    pub components: usize,
    /// Autoregressive layers (MAF).
    pub flow_layers: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub activation: Activation,
    pub embedding: EmbeddingConfig,
    pub z_score: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            density: DensityFamily::Mdn,
            components: 10,
            flow_layers: 5,
            hidden: 50,
            hidden_layers: 2,
            activation: Activation::Relu,
            embedding: EmbeddingConfig::Identity,
            z_score: true,
        }
    }
}

impl EstimatorConfig {
    pub fn maf() -> Self {
        Self { density: DensityFamily::Maf, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.components == 0 || self.flow_layers == 0 || self.hidden == 0 || self.hidden_layers == 0 {
            return Err(invalid("components, flow_layers, hidden and hidden_layers must be at least 1"));
        }
        Ok(())
    }

    fn hidden_widths(&self) -> Vec<usize> {
        vec![self.hidden; self.hidden_layers]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DensityNet {
    Mdn(Mdn),
    Maf(Maf),
}

/// Trained conditional density `q(y | c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityEstimator {
    pub config: EstimatorConfig,
    pub target_dim: usize,
    /// Width of the conditioning rows seen in training.
    pub cond_dim: usize,
    pub params: ParamSet,
    pub net: DensityNet,
    pub embedding: EmbeddingNet,
    pub target_scaler: Standardizer,
    pub cond_scaler: Standardizer,
}

impl Model for DensityEstimator {
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

/// Rows broadcast against each other: each count must be 1 or the maximum.
fn broadcast_rows(a: usize, b: usize) -> Result<usize> {
    let n = a.max(b);
    if (a != 1 && a != n) || (b != 1 && b != n) || a == 0 || b == 0 {
        return Err(invalid(format!("cannot broadcast {a} rows against {b} rows")));
    }
    Ok(n)
}

fn repeat_rows(t: Tensor, n: usize) -> Tensor {
    if t.rows() == n {
        t
    } else {
        t.select_rows(&vec![0; n])
    }
}

/// Reshapes rows holding sets of `e`-wide elements into one element per row.
fn elements(a: &Array2<f64>, e: usize) -> Array2<f64> {
    let data: Vec<f64> = a.iter().copied().collect();
    Array2::from_shape_vec((data.len() / e, e), data).expect("width is a multiple of e")
}

fn cond_scaler_fit(embedding: &EmbeddingNet, cond: &Array2<f64>) -> Standardizer {
    match embedding.element_dim() {
        Some(e) => Standardizer::fit(&elements(cond, e)),
        None => Standardizer::fit(cond),
    }
}

fn prepare_cond(embedding: &EmbeddingNet, scaler: &Standardizer, cond: &Array2<f64>) -> Tensor {
    let mut z = scaler.standardize_rows(cond);
    if let Some(e) = embedding.element_dim() {
        canonicalize_sets(&mut z, e);
    }
    Tensor::from_array(&z)
}

impl DensityEstimator {
    /// Untrained estimator with identity scalers.
    pub fn new(config: &EstimatorConfig, target_dim: usize, cond_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if target_dim == 0 || cond_dim == 0 {
            return Err(invalid("target and conditioning dimensions must be positive"));
        }
        let mut rng = rng_from_seed(seed);
        let mut params = ParamSet::default();
        let embedding = EmbeddingNet::build(&config.embedding, cond_dim, &mut params, &mut rng)?;
        let e = embedding.output_dim();
        let net = match config.density {
            DensityFamily::Mdn => DensityNet::Mdn(Mdn::new(
                &mut params,
                target_dim,
                e,
                config.components,
                &config.hidden_widths(),
                config.activation,
                &mut rng,
            )),
            DensityFamily::Maf => DensityNet::Maf(Maf::new(
                &mut params,
                target_dim,
                e,
                config.flow_layers,
                config.hidden,
                config.hidden_layers,
                config.activation,
                &mut rng,
            )),
        };
        let cond_scaler = Standardizer::identity(embedding.element_dim().unwrap_or(cond_dim));
        Ok(Self {
            config: config.clone(),
            target_dim,
            cond_dim,
            params,
            net,
            embedding,
            target_scaler: Standardizer::identity(target_dim),
            cond_scaler,
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self.net {
            DensityNet::Mdn(_) => "mdn",
            DensityNet::Maf(_) => "maf",
        }
    }

    /// `log q` in standardized coordinates for graph inputs.
    pub fn net_log_prob(&self, g: &mut Graph, y: Var, c: Var) -> Var {
        let e = self.embedding.forward(g, c);
        match &self.net {
            DensityNet::Mdn(m) => m.log_prob(g, y, e),
            DensityNet::Maf(f) => f.log_prob(g, y, e),
        }
    }

    /// Negative mean log-density of the selected rows of prepared tensors.
    pub fn loss(&self, g: &mut Graph, y: &Tensor, c: &Tensor, rows: &[usize]) -> Var {
        let yv = g.input(y.select_rows(rows));
        let cv = g.input(c.select_rows(rows));
        let lp = self.net_log_prob(g, yv, cv);
        let m = g.mean(lp);
        g.neg(m)
    }

    fn check_cond(&self, width: usize) -> Result<()> {
        self.embedding.check_input(width, self.cond_dim)
    }

    pub fn prepare_target(&self, target: &Array2<f64>) -> Tensor {
        Tensor::from_array(&self.target_scaler.standardize_rows(target))
    }

    pub fn prepare_cond(&self, cond: &Array2<f64>) -> Tensor {
        prepare_cond(&self.embedding, &self.cond_scaler, cond)
    }

    /// Fits the scalers (if z-scoring is on) and trains by maximum likelihood.
    pub fn fit(&mut self, target: &Array2<f64>, cond: &Array2<f64>, cfg: &TrainConfig) -> Result<TrainReport> {
        check_dim(self.target_dim, target.ncols())?;
        check_dim(self.cond_dim, cond.ncols())?;
        check_dim(target.nrows(), cond.nrows())?;
        if self.config.z_score {
            self.target_scaler = Standardizer::fit(target);
            self.cond_scaler = cond_scaler_fit(&self.embedding, cond);
        }
        let y = self.prepare_target(target);
        let c = self.prepare_cond(cond);
        train(self, target.nrows(), cfg, |m, g, rows, _| Ok(m.loss(g, &y, &c, rows)))
    }

    /// `log q(target_i | cond_i)` in original coordinates. Either side may
    /// hold a single row, which is broadcast.
    pub fn log_prob(&self, target: &Array2<f64>, cond: &Array2<f64>) -> Result<Vec<f64>> {
        check_dim(self.target_dim, target.ncols())?;
        self.check_cond(cond.ncols())?;
        let n = broadcast_rows(target.nrows(), cond.nrows())?;
        let y = repeat_rows(self.prepare_target(target), n);
        let c = repeat_rows(self.prepare_cond(cond), n);
        let mut g = Graph::new(&self.params);
        let yv = g.input(y);
        let cv = g.input(c);
        let lp = self.net_log_prob(&mut g, yv, cv);
        let jac = self.target_scaler.log_scale_sum();
        Ok(g.value(lp).data().iter().map(|v| v - jac).collect())
    }

    /// Embedded, standardized conditioning row.
    fn embed_cond(&self, cond: &[f64]) -> Result<Tensor> {
        self.check_cond(cond.len())?;
        let row = Array2::from_shape_vec((1, cond.len()), cond.to_vec()).expect("one row");
        let c = self.prepare_cond(&row);
        let mut g = Graph::new(&self.params);
        let cv = g.input(c);
        let e = self.embedding.forward(&mut g, cv);
        Ok(g.value(e).clone())
    }

    /// `n` draws from `q(· | cond)` in original coordinates.
    pub fn sample(&self, cond: &[f64], n: usize, rng: &mut Rng) -> Result<Array2<f64>> {
        let e = self.embed_cond(cond)?;
        let d = self.target_dim;
        let z = match &self.net {
            DensityNet::Mdn(m) => {
                let mix = m.mixture_params(&self.params, &e).remove(0);
                let rows = mix.sample(n, rng);
                Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect()).expect("n × d")
            }
            DensityNet::Maf(f) => {
                use rand::Rng as _;
                let u: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
                let u = Tensor::from_vec(n, d, u);
                let c = repeat_rows(e, n);
                f.inverse(&self.params, &u, &c).to_array()
            }
        };
        Ok(self.target_scaler.destandardize_rows(&z))
    }
}

/// Trained ratio estimator: logit `ℓ(θ, x) ≈ log p(θ, x) − log p(θ)p(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioEstimator {
    pub config: EstimatorConfig,
    pub theta_dim: usize,
    pub x_dim: usize,
    pub params: ParamSet,
    pub classifier: RatioClassifier,
    pub embedding: EmbeddingNet,
    pub theta_scaler: Standardizer,
    pub x_scaler: Standardizer,
}

impl Model for RatioEstimator {
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

impl RatioEstimator {
    pub fn new(config: &EstimatorConfig, theta_dim: usize, x_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if theta_dim == 0 || x_dim == 0 {
            return Err(invalid("parameter and data dimensions must be positive"));
        }
        let mut rng = rng_from_seed(seed);
        let mut params = ParamSet::default();
        let embedding = EmbeddingNet::build(&config.embedding, x_dim, &mut params, &mut rng)?;
        let classifier = RatioClassifier::new(
            &mut params,
            theta_dim,
            embedding.output_dim(),
            &config.hidden_widths(),
            config.activation,
            &mut rng,
        );
        let x_scaler = Standardizer::identity(embedding.element_dim().unwrap_or(x_dim));
        Ok(Self {
            config: config.clone(),
            theta_dim,
            x_dim,
            params,
            classifier,
            embedding,
            theta_scaler: Standardizer::identity(theta_dim),
            x_scaler,
        })
    }

    pub fn prepare_theta(&self, theta: &Array2<f64>) -> Tensor {
        Tensor::from_array(&self.theta_scaler.standardize_rows(theta))
    }

    pub fn prepare_x(&self, x: &Array2<f64>) -> Tensor {
        prepare_cond(&self.embedding, &self.x_scaler, x)
    }

    pub fn loss(&self, g: &mut Graph, theta: &Tensor, x: &Tensor, rows: &[usize], rng: &mut Rng) -> Result<Var> {
        let xv = g.input(x.select_rows(rows));
        let emb = self.embedding.forward(g, xv);
        classifier_loss(&self.classifier, g, &theta.select_rows(rows), emb, rng)
    }

    pub fn fit(&mut self, theta: &Array2<f64>, x: &Array2<f64>, cfg: &TrainConfig) -> Result<TrainReport> {
        check_dim(self.theta_dim, theta.ncols())?;
        check_dim(self.x_dim, x.ncols())?;
        check_dim(theta.nrows(), x.nrows())?;
        if self.config.z_score {
            self.theta_scaler = Standardizer::fit(theta);
            self.x_scaler = cond_scaler_fit(&self.embedding, x);
        }
        let t = self.prepare_theta(theta);
        let xs = self.prepare_x(x);
        train(self, theta.nrows(), cfg, |m, g, rows, rng| m.loss(g, &t, &xs, rows, rng))
    }

    /// Logits for paired rows; either side may hold a single row.
    pub fn logits(&self, theta: &Array2<f64>, x: &Array2<f64>) -> Result<Vec<f64>> {
        check_dim(self.theta_dim, theta.ncols())?;
        self.embedding.check_input(x.ncols(), self.x_dim)?;
        let n = broadcast_rows(theta.nrows(), x.nrows())?;
        let mut g = Graph::new(&self.params);
        let tv = g.input(repeat_rows(self.prepare_theta(theta), n));
        let xv = g.input(repeat_rows(self.prepare_x(x), n));
        let emb = self.embedding.forward(&mut g, xv);
        let l = self.classifier.logits(&mut g, tv, emb);
        Ok(g.value(l).data().to_vec())
    }
}

/// Checkpoint header: enough to rebuild the architecture before loading the
/// flat weight vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorHeader {
    /// `mdn`, `maf` or `ratio-classifier`.
    pub kind: String,
    pub config: EstimatorConfig,
    /// Density target (or θ for the classifier).
    pub target_dim: usize,
    /// Conditioning input (or x for the classifier).
    pub cond_dim: usize,
    pub target_scaler: Standardizer,
    pub cond_scaler: Standardizer,
    pub n_params: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Estimator {
    Density(DensityEstimator),
    Ratio(RatioEstimator),
}

impl Estimator {
    pub fn params(&self) -> &ParamSet {
        match self {
            Estimator::Density(d) => &d.params,
            Estimator::Ratio(r) => &r.params,
        }
    }

    pub fn header(&self) -> EstimatorHeader {
        match self {
            Estimator::Density(d) => EstimatorHeader {
                kind: d.kind_name().to_string(),
                config: d.config.clone(),
                target_dim: d.target_dim,
                cond_dim: d.cond_dim,
                target_scaler: d.target_scaler.clone(),
                cond_scaler: d.cond_scaler.clone(),
                n_params: d.params.count(),
            },
            Estimator::Ratio(r) => EstimatorHeader {
                kind: "ratio-classifier".to_string(),
                config: r.config.clone(),
                target_dim: r.theta_dim,
                cond_dim: r.x_dim,
                target_scaler: r.theta_scaler.clone(),
                cond_scaler: r.x_scaler.clone(),
                n_params: r.params.count(),
            },
        }
    }

    /// Rebuilds an estimator from its header and flat weights.
    pub fn from_parts(h: &EstimatorHeader, flat: &[f64]) -> Result<Self> {
        let mut est = match h.kind.as_str() {
            "mdn" | "maf" => {
                let family = if h.kind == "mdn" { DensityFamily::Mdn } else { DensityFamily::Maf };
                if family != h.config.density {
                    return Err(SbiError::Format(format!("checkpoint kind {} disagrees with its config", h.kind)));
                }
                let mut d = DensityEstimator::new(&h.config, h.target_dim, h.cond_dim, 0)?;
                d.target_scaler = h.target_scaler.clone();
                d.cond_scaler = h.cond_scaler.clone();
                Estimator::Density(d)
            }
            "ratio-classifier" => {
                let mut r = RatioEstimator::new(&h.config, h.target_dim, h.cond_dim, 0)?;
                r.theta_scaler = h.target_scaler.clone();
                r.x_scaler = h.cond_scaler.clone();
                Estimator::Ratio(r)
            }
            other => return Err(SbiError::Format(format!("unknown estimator kind '{other}'"))),
        };
        if flat.len() != h.n_params {
            return Err(SbiError::Format(format!("expected {} weights, found {}", h.n_params, flat.len())));
        }
        let params = match &mut est {
            Estimator::Density(d) => &mut d.params,
            Estimator::Ratio(r) => &mut r.params,
        };
        params.load_flat(flat).map_err(SbiError::Format)?;
        Ok(est)
    }
}

/// Little-endian IEEE-754 bytes, hex encoded.
pub fn encode_weights(flat: &[f64]) -> String {
    let bytes: Vec<u8> = flat.iter().flat_map(|v| v.to_le_bytes()).collect();
    hex::encode(bytes)
}

pub fn decode_weights(s: &str) -> Result<Vec<f64>> {
    let bytes = hex::decode(s.trim()).map_err(|e| SbiError::Format(format!("weight payload: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(SbiError::Format("weight payload length is not a multiple of 8 bytes".into()));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}
