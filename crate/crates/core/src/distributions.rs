//! Priors, proposals and analytic reference densities.
//!
//! A [`Distribution`] is immutable once constructed; every constructor validates
//! its parameters so that sampling and density evaluation cannot fail except on
//! a dimension mismatch. Discrete coordinates (categorical) are carried as
//! integer-valued reals inside the same parameter vector as continuous ones.

use ndarray::{Array2, ArrayView1};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{check_dim, invalid, Result, SbiError};
use crate::linalg;
use crate::rng::Rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    /// Half-open box `[lower, upper)`.
    UniformBox {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    GaussianDiag {
        mean: Vec<f64>,
        var: Vec<f64>,
        std: Vec<f64>,
    },
    /// `scale_tril` is the lower Cholesky factor of the covariance.
    GaussianFull {
        mean: Vec<f64>,
        scale_tril: Array2<f64>,
    },
    MixtureOfGaussians {
        weights: Vec<f64>,
        components: Vec<Distribution>,
    },
    /// One coordinate taking values `0..probs.len()`.
    Categorical {
        probs: Vec<f64>,
    },
    IndependentProduct {
        components: Vec<Distribution>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionSpec", into = "DistributionSpec")]
pub struct Distribution {
    kind: Kind,
    dim: usize,
}

fn check_weights(w: &[f64], what: &str) -> Result<()> {
    if w.is_empty() {
        return Err(invalid(format!("{what}: empty")));
    }
    if w.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(invalid(format!("{what}: entries must be finite and nonnegative")));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("{what}: must sum to 1 (got {s})")));
    }
    Ok(())
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid(format!("{what}: non-finite entry")));
    }
    Ok(())
}

impl Distribution {
    pub fn uniform_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(invalid("uniform-box: bounds must be nonempty and of equal length"));
        }
        check_finite(&lower, "uniform-box lower")?;
        check_finite(&upper, "uniform-box upper")?;
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(invalid("uniform-box: lower must be < upper in every coordinate"));
        }
        let dim = lower.len();
        Ok(Self { kind: Kind::UniformBox { lower, upper }, dim })
    }

    pub fn gaussian_diag(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.is_empty() || mean.len() != var.len() {
            return Err(invalid("gaussian-diag: mean and var must be nonempty and of equal length"));
        }
        check_finite(&mean, "gaussian-diag mean")?;
        if var.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid("gaussian-diag: variances must be positive"));
        }
        let dim = mean.len();
        let std = var.iter().map(|v| v.sqrt()).collect();
        Ok(Self { kind: Kind::GaussianDiag { mean, var, std }, dim })
    }

    /// Standard normal in `dim` dimensions.
    pub fn standard_normal(dim: usize) -> Result<Self> {
        Self::gaussian_diag(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn gaussian_full(mean: Vec<f64>, cov: &Array2<f64>) -> Result<Self> {
        let l = linalg::cholesky(cov)?;
        Self::gaussian_scale_tril(mean, l)
    }

    pub fn gaussian_scale_tril(mean: Vec<f64>, scale_tril: Array2<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || scale_tril.dim() != (d, d) {
            return Err(invalid("gaussian-full: scale_tril must be d×d for a nonempty mean"));
        }
        check_finite(&mean, "gaussian-full mean")?;
        for i in 0..d {
            if !(scale_tril[[i, i]] > 0.0) || !scale_tril[[i, i]].is_finite() {
                return Err(invalid("gaussian-full: Cholesky diagonal must be strictly positive"));
            }
            for j in 0..d {
                if j > i && scale_tril[[i, j]] != 0.0 {
                    return Err(invalid("gaussian-full: scale_tril must be lower triangular"));
                }
                if !scale_tril[[i, j]].is_finite() {
                    return Err(invalid("gaussian-full: non-finite Cholesky entry"));
                }
            }
        }
        Ok(Self { kind: Kind::GaussianFull { mean, scale_tril }, dim: d })
    }

    pub fn mixture(weights: Vec<f64>, components: Vec<Distribution>) -> Result<Self> {
        check_weights(&weights, "mixture weights")?;
        if weights.len() != components.len() {
            return Err(invalid("mixture: one weight per component required"));
        }
        let dim = components[0].dim;
        for c in &components {
            if !c.is_gaussian() {
                return Err(invalid("mixture: components must be gaussian"));
            }
            if c.dim != dim {
                return Err(invalid("mixture: components must share a dimension"));
            }
        }
        Ok(Self { kind: Kind::MixtureOfGaussians { weights, components }, dim })
    }

    pub fn categorical(probs: Vec<f64>) -> Result<Self> {
        check_weights(&probs, "categorical probabilities")?;
        Ok(Self { kind: Kind::Categorical { probs }, dim: 1 })
    }

    pub fn independent(components: Vec<Distribution>) -> Result<Self> {
        if components.is_empty() {
            return Err(invalid("independent-product: no components"));
        }
        let dim = components.iter().map(|c| c.dim).sum();
        Ok(Self { kind: Kind::IndependentProduct { components }, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            Kind::UniformBox { .. } => "uniform-box",
            Kind::GaussianDiag { .. } => "gaussian-diag",
            Kind::GaussianFull { .. } => "gaussian-full",
            Kind::MixtureOfGaussians { .. } => "mixture-of-gaussians",
            Kind::Categorical { .. } => "categorical",
            Kind::IndependentProduct { .. } => "independent-product",
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.kind, Kind::GaussianDiag { .. } | Kind::GaussianFull { .. })
    }

    /// Mean vector and covariance matrix of a gaussian distribution.
    pub fn gaussian_moments(&self) -> Option<(Vec<f64>, Array2<f64>)> {
        match &self.kind {
            Kind::GaussianDiag { mean, var, .. } => Some((mean.clone(), linalg::diag(var))),
            Kind::GaussianFull { mean, scale_tril } => Some((mean.clone(), scale_tril.dot(&scale_tril.t()))),
            _ => None,
        }
    }

    /// Same gaussian with its covariance multiplied by `factor`.
    pub fn with_scaled_covariance(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(invalid("covariance scale factor must be positive"));
        }
        let (mean, cov) = self.gaussian_moments().ok_or_else(|| invalid("covariance scaling needs a gaussian"))?;
        Self::gaussian_full(mean, &(cov * factor))
    }

    /// Axis-aligned bounds of the support, infinite where unbounded.
    pub fn support_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.kind {
            Kind::UniformBox { lower, upper } => (lower.clone(), upper.clone()),
            Kind::Categorical { probs } => (vec![0.0], vec![probs.len() as f64]),
            Kind::IndependentProduct { components } => {
                let mut lo = Vec::with_capacity(self.dim);
                let mut hi = Vec::with_capacity(self.dim);
                for c in components {
                    let (l, h) = c.support_bounds();
                    lo.extend(l);
                    hi.extend(h);
                }
                (lo, hi)
            }
            _ => (vec![f64::NEG_INFINITY; self.dim], vec![f64::INFINITY; self.dim]),
        }
    }

    /// True when the support is all of ℝᵈ.
    pub fn has_unbounded_support(&self) -> bool {
        match &self.kind {
            Kind::GaussianDiag { .. } | Kind::GaussianFull { .. } => true,
            Kind::MixtureOfGaussians { .. } => true,
            Kind::IndependentProduct { components } => components.iter().all(|c| c.has_unbounded_support()),
            _ => false,
        }
    }

    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<Array2<f64>> {
        if n == 0 {
            return Err(invalid("sample: n must be at least 1"));
        }
        let mut out = Array2::<f64>::zeros((n, self.dim));
        for mut row in out.rows_mut() {
            let v = self.sample_one(rng);
            row.iter_mut().zip(v).for_each(|(o, x)| *o = x);
        }
        Ok(out)
    }

    fn sample_one(&self, rng: &mut Rng) -> Vec<f64> {
        match &self.kind {
            Kind::UniformBox { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(&l, &u)| loop {
                    let x = l + rng.random::<f64>() * (u - l);
                    if x < u {
                        break x;
                    }
                })
                .collect(),
            Kind::GaussianDiag { mean, std, .. } => {
                mean.iter().zip(std).map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal)).collect()
            }
            Kind::GaussianFull { mean, scale_tril } => {
                let z: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
                let lz = linalg::matvec(scale_tril, &z);
                mean.iter().zip(lz).map(|(m, v)| m + v).collect()
            }
            Kind::MixtureOfGaussians { weights, components } => {
                let k = pick_index(weights, rng.random::<f64>());
                components[k].sample_one(rng)
            }
            Kind::Categorical { probs } => vec![pick_index(probs, rng.random::<f64>()) as f64],
            Kind::IndependentProduct { components } => components.iter().flat_map(|c| c.sample_one(rng)).collect(),
        }
    }

    pub fn log_prob(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.dim, theta.len())?;
        Ok(self.log_prob_unchecked(theta))
    }

    /// Row-wise log densities of a `[n × dim]` matrix.
    pub fn log_prob_batch(&self, theta: &Array2<f64>) -> Result<Vec<f64>> {
        check_dim(self.dim, theta.ncols())?;
        Ok(theta.rows().into_iter().map(|r| self.log_prob_row(r)).collect())
    }

    pub(crate) fn log_prob_row(&self, row: ArrayView1<f64>) -> f64 {
        match row.as_slice() {
            Some(s) => self.log_prob_unchecked(s),
            None => self.log_prob_unchecked(&row.to_vec()),
        }
    }

    fn log_prob_unchecked(&self, theta: &[f64]) -> f64 {
        if theta.iter().any(|v| v.is_nan()) {
            return f64::NEG_INFINITY;
        }
        match &self.kind {
            Kind::UniformBox { lower, upper } => {
                let mut lp = 0.0;
                for ((&x, &l), &u) in theta.iter().zip(lower).zip(upper) {
                    if !(x >= l && x < u) {
                        return f64::NEG_INFINITY;
                    }
                    lp -= (u - l).ln();
                }
                lp
            }
            Kind::GaussianDiag { mean, std, .. } => {
                let mut lp = -0.5 * self.dim as f64 * LN_2PI;
                for ((&x, &m), &s) in theta.iter().zip(mean).zip(std) {
                    let z = (x - m) / s;
                    lp -= 0.5 * z * z + s.ln();
                }
                lp
            }
            Kind::GaussianFull { mean, scale_tril } => {
                let r: Vec<f64> = theta.iter().zip(mean).map(|(x, m)| x - m).collect();
                let z = linalg::solve_lower(scale_tril, &r);
                let quad: f64 = z.iter().map(|v| v * v).sum();
                let logdet: f64 = (0..self.dim).map(|i| scale_tril[[i, i]].ln()).sum();
                -0.5 * self.dim as f64 * LN_2PI - logdet - 0.5 * quad
            }
            Kind::MixtureOfGaussians { weights, components } => {
                let terms: Vec<f64> =
                    weights.iter().zip(components).map(|(w, c)| w.ln() + c.log_prob_unchecked(theta)).collect();
                log_sum_exp(&terms)
            }
            Kind::Categorical { probs } => {
                let x = theta[0];
                if x.fract() != 0.0 || x < 0.0 || x >= probs.len() as f64 {
                    return f64::NEG_INFINITY;
                }
                probs[x as usize].ln()
            }
            Kind::IndependentProduct { components } => {
                let mut offset = 0;
                let mut lp = 0.0;
                for c in components {
                    lp += c.log_prob_unchecked(&theta[offset..offset + c.dim]);
                    offset += c.dim;
                }
                lp
            }
        }
    }

    /// Component densities of an independent product (for diagnostics and tests).
    pub fn components(&self) -> &[Distribution] {
        match &self.kind {
            Kind::IndependentProduct { components } | Kind::MixtureOfGaussians { components, .. } => components,
            _ => &[],
        }
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("distribution serializes")
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        Ok(serde_json::from_value(v.clone())?)
    }
}

fn pick_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc && *w > 0.0 {
            return i;
        }
    }
    // Rounding left u beyond the cumulative sum: last positive-weight entry.
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Exact posterior of `x = θ + ε`, `ε ~ N(0, likelihood_cov)`, under a gaussian prior.
pub fn linear_gaussian_posterior(
    prior: &Distribution,
    likelihood_cov: &Array2<f64>,
    x_o: &[f64],
) -> Result<Distribution> {
    let (mu0, cov0) =
        prior.gaussian_moments().ok_or_else(|| invalid("linear_gaussian_posterior: prior must be gaussian"))?;
    let d = mu0.len();
    check_dim(d, x_o.len())?;
    check_dim(d, likelihood_cov.nrows())?;
    let prior_prec = linalg::spd_inverse(&cov0)?;
    let lik_prec = linalg::spd_inverse(likelihood_cov)?;
    let post_prec = &prior_prec + &lik_prec;
    let post_cov = linalg::spd_inverse(&post_prec)?;
    let rhs: Vec<f64> =
        linalg::matvec(&prior_prec, &mu0).into_iter().zip(linalg::matvec(&lik_prec, x_o)).map(|(a, b)| a + b).collect();
    let mean = linalg::matvec(&post_cov, &rhs);
    Distribution::gaussian_full(mean, &post_cov)
}

// ---------------------------------------------------------------------------
// JSON document: {"kind": "...", "dim": n, "params": {...}}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSpec {
    pub kind: String,
    pub dim: usize,
    pub params: Value,
}

fn field<T: serde::de::DeserializeOwned>(params: &Value, name: &str, kind: &str) -> Result<T> {
    let v = params.get(name).ok_or_else(|| SbiError::Format(format!("{kind}: missing params.{name}")))?;
    serde_json::from_value(v.clone()).map_err(|e| SbiError::Format(format!("{kind}: params.{name}: {e}")))
}

fn check_param_keys(params: &Value, allowed: &[&str], kind: &str) -> Result<()> {
    let obj = params.as_object().ok_or_else(|| SbiError::Format(format!("{kind}: params must be an object")))?;
    for k in obj.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(SbiError::Format(format!("{kind}: unknown param `{k}`")));
        }
    }
    Ok(())
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> Result<Array2<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != m) {
        return Err(SbiError::Format("ragged matrix".into()));
    }
    Array2::from_shape_vec((n, m), rows.into_iter().flatten().collect()).map_err(|e| SbiError::Format(e.to_string()))
}

fn matrix_to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

impl TryFrom<DistributionSpec> for Distribution {
    type Error = SbiError;

    fn try_from(spec: DistributionSpec) -> Result<Self> {
        let p = &spec.params;
        let kind = spec.kind.as_str();
        let d = match kind {
            "uniform-box" => {
                check_param_keys(p, &["lower", "upper"], kind)?;
                Distribution::uniform_box(field(p, "lower", kind)?, field(p, "upper", kind)?)?
            }
            "gaussian-diag" => {
                check_param_keys(p, &["mean", "var"], kind)?;
                Distribution::gaussian_diag(field(p, "mean", kind)?, field(p, "var", kind)?)?
            }
            "gaussian-full" => {
                check_param_keys(p, &["mean", "cov", "scale_tril"], kind)?;
                let mean: Vec<f64> = field(p, "mean", kind)?;
                match (p.get("scale_tril"), p.get("cov")) {
                    (Some(_), None) => {
                        Distribution::gaussian_scale_tril(mean, matrix_from_rows(field(p, "scale_tril", kind)?)?)?
                    }
                    (None, Some(_)) => Distribution::gaussian_full(mean, &matrix_from_rows(field(p, "cov", kind)?)?)?,
                    _ => {
                        return Err(SbiError::Format(
                            "gaussian-full: give exactly one of params.cov, params.scale_tril".into(),
                        ))
                    }
                }
            }
            "mixture-of-gaussians" => {
                check_param_keys(p, &["weights", "components"], kind)?;
                let comps: Vec<Distribution> = field(p, "components", kind)?;
                Distribution::mixture(field(p, "weights", kind)?, comps)?
            }
            "categorical" => {
                check_param_keys(p, &["probs"], kind)?;
                Distribution::categorical(field(p, "probs", kind)?)?
            }
            "independent-product" => {
                check_param_keys(p, &["components"], kind)?;
                Distribution::independent(field(p, "components", kind)?)?
            }
            other => return Err(SbiError::Format(format!("unknown distribution kind `{other}`"))),
        };
        if d.dim != spec.dim {
            return Err(SbiError::Format(format!("{kind}: declared dim {} but parameters imply {}", spec.dim, d.dim)));
        }
        Ok(d)
    }
}

impl From<Distribution> for DistributionSpec {
    fn from(d: Distribution) -> Self {
        let kind = d.kind_name().to_string();
        let params = match d.kind {
            Kind::UniformBox { lower, upper } => json!({ "lower": lower, "upper": upper }),
            Kind::GaussianDiag { mean, var, .. } => json!({ "mean": mean, "var": var }),
            Kind::GaussianFull { mean, scale_tril } => {
                json!({ "mean": mean, "scale_tril": matrix_to_rows(&scale_tril) })
            }
            Kind::MixtureOfGaussians { weights, components } => {
                json!({ "weights": weights, "components": components })
            }
            Kind::Categorical { probs } => json!({ "probs": probs }),
            Kind::IndependentProduct { components } => json!({ "components": components }),
        };
        DistributionSpec { kind, dim: d.dim, params }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use ndarray::array;
    use std::f64::consts::PI;

    fn mixture3() -> Distribution {
        Distribution::mixture(
            vec![0.2, 0.5, 0.3],
            vec![
                Distribution::gaussian_diag(vec![-1.0, 0.0], vec![0.5, 1.0]).unwrap(),
                Distribution::gaussian_full(vec![1.0, 1.0], &array![[1.0, 0.3], [0.3, 0.5]]).unwrap(),
                Distribution::gaussian_diag(vec![0.0, -2.0], vec![2.0, 0.25]).unwrap(),
            ],
        )
        .unwrap()
    }

    fn trapezoid_2d(d: &Distribution, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 } * if j == 0 || j == n { 0.5 } else { 1.0 };
                let p = [lo + i as f64 * h, lo + j as f64 * h];
                total += w * d.log_prob(&p).unwrap().exp();
            }
        }
        total * h * h
    }

    #[test]
    fn gaussian_at_mean() {
        let d = Distribution::standard_normal(2).unwrap();
        assert!((d.log_prob(&[0.0, 0.0]).unwrap() + (2.0 * PI).ln()).abs() < 1e-12);
        assert!((d.log_prob(&[0.0, 0.0]).unwrap() + 1.837877).abs() < 1e-6);
    }

    #[test]
    fn uniform_outside_support() {
        let d = Distribution::uniform_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(d.log_prob(&[2.0, 0.5]).unwrap(), f64::NEG_INFINITY);
        // half-open boundary
        assert_eq!(d.log_prob(&[1.0, 0.5]).unwrap(), f64::NEG_INFINITY);
        assert_eq!(d.log_prob(&[0.0, 0.5]).unwrap(), 0.0);
        let s = d.sample(100, &mut rng_from_seed(1)).unwrap();
        assert!(s.iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn degenerate_categorical() {
        let d = Distribution::categorical(vec![1.0, 0.0, 0.0]).unwrap();
        let s = d.sample(500, &mut rng_from_seed(3)).unwrap();
        assert!(s.iter().all(|v| *v == 0.0));
        assert_eq!(d.log_prob(&[1.0]).unwrap(), f64::NEG_INFINITY);
        assert_eq!(d.log_prob(&[0.5]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn gaussian_sample_mean_clt() {
        for seed in [11, 12, 13] {
            let d = Distribution::standard_normal(3).unwrap();
            let s = d.sample(100_000, &mut rng_from_seed(seed)).unwrap();
            for m in s.mean_axis(ndarray::Axis(0)).unwrap() {
                assert!(m.abs() < 0.02, "mean {m}");
            }
        }
    }

    #[test]
    fn mixture_matches_explicit_sum() {
        let mix = mixture3();
        let comps = mix.components().to_vec();
        let w = [0.2, 0.5, 0.3];
        let mut rng = rng_from_seed(5);
        for row in mix.sample(50, &mut rng).unwrap().rows() {
            let t = row.to_vec();
            let explicit: f64 = (0..3).map(|k| w[k] * comps[k].log_prob(&t).unwrap().exp()).sum();
            let lp = mix.log_prob(&t).unwrap();
            assert!((lp - explicit.ln()).abs() < 1e-12, "{lp} vs {}", explicit.ln());
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        let cases = [
            Distribution::standard_normal(2).unwrap(),
            Distribution::gaussian_full(vec![0.5, -0.5], &array![[1.0, 0.4], [0.4, 0.8]]).unwrap(),
            mixture3(),
            Distribution::uniform_box(vec![-1.0, -2.0], vec![1.0, 1.0]).unwrap(),
        ];
        for d in &cases[..3] {
            let z = trapezoid_2d(d, -10.0, 10.0, 400);
            assert!((z - 1.0).abs() < 1e-3, "{} integrates to {z}", d.kind_name());
        }
        // Box density: integrate by cells (the trapezoid rule smears discontinuities).
        let d = &cases[3];
        let n = 300;
        let (lo, hi) = (-3.0, 3.0);
        let h = (hi - lo) / n as f64;
        let mut z = 0.0;
        for i in 0..n {
            for j in 0..n {
                let p = [lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h];
                z += d.log_prob(&p).unwrap().exp() * h * h;
            }
        }
        assert!((z - 1.0).abs() < 1e-3, "box integrates to {z}");
        // Categorical masses sum to one.
        let c = Distribution::categorical(vec![0.1, 0.6, 0.3]).unwrap();
        let z: f64 = (0..3).map(|k| c.log_prob(&[k as f64]).unwrap().exp()).sum();
        assert!((z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn product_is_sum_of_components() {
        let a = Distribution::uniform_box(vec![0.0], vec![2.0]).unwrap();
        let b = Distribution::categorical(vec![0.25, 0.75]).unwrap();
        let c = Distribution::standard_normal(2).unwrap();
        let p = Distribution::independent(vec![a.clone(), b.clone(), c.clone()]).unwrap();
        assert_eq!(p.dim(), 4);
        let mut rng = rng_from_seed(9);
        for row in p.sample(100, &mut rng).unwrap().rows() {
            let t = row.to_vec();
            let want = a.log_prob(&t[..1]).unwrap() + b.log_prob(&t[1..2]).unwrap() + c.log_prob(&t[2..]).unwrap();
            assert_eq!(p.log_prob(&t).unwrap(), want);
            assert!(t[1] == 0.0 || t[1] == 1.0);
        }
    }

    #[test]
    fn construction_rejects_bad_params() {
        assert!(Distribution::uniform_box(vec![1.0], vec![1.0]).is_err());
        assert!(Distribution::gaussian_diag(vec![0.0], vec![0.0]).is_err());
        assert!(Distribution::categorical(vec![0.5, 0.4]).is_err());
        assert!(Distribution::categorical(vec![1.5, -0.5]).is_err());
        assert!(Distribution::gaussian_full(vec![0.0, 0.0], &array![[1.0, 2.0], [2.0, 1.0]]).is_err());
        let d = Distribution::standard_normal(2).unwrap();
        assert!(matches!(d.log_prob(&[0.0]), Err(SbiError::DimensionMismatch { .. })));
    }

    #[test]
    fn conjugate_posterior_closed_forms() {
        let prior = Distribution::standard_normal(2).unwrap();
        let post = linear_gaussian_posterior(&prior, &(linalg::diag(&[0.1, 0.1])), &[0.0, 0.0]).unwrap();
        let (m, c) = post.gaussian_moments().unwrap();
        assert!(m.iter().all(|v| v.abs() < 1e-14));
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 / 11.0 } else { 0.0 };
                assert!((c[[i, j]] - want).abs() < 1e-14);
            }
        }
        let post = linear_gaussian_posterior(&prior, &linalg::diag(&[1.0, 1.0]), &[2.0, 0.0]).unwrap();
        let (m, c) = post.gaussian_moments().unwrap();
        assert!((m[0] - 1.0).abs() < 1e-14 && m[1].abs() < 1e-14);
        assert!((c[[0, 0]] - 0.5).abs() < 1e-14 && (c[[1, 1]] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn json_round_trip() {
        let p = Distribution::independent(vec![
            Distribution::uniform_box(vec![0.0], vec![2.0]).unwrap(),
            Distribution::categorical(vec![0.25, 0.75]).unwrap(),
            mixture3(),
        ])
        .unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let back: Distribution = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
        let v: Value =
            serde_json::from_str(r#"{"kind":"uniform-box","dim":1,"params":{"lower":[0],"upper":[1],"typo":1}}"#)
                .unwrap();
        assert!(Distribution::from_json(&v).is_err());
        let v: Value =
            serde_json::from_str(r#"{"kind":"uniform-box","dim":2,"params":{"lower":[0],"upper":[1]}}"#).unwrap();
        assert!(Distribution::from_json(&v).is_err());
    }
}
