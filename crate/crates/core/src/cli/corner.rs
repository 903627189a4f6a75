use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SbiError};

/// Keep samples with `|θ_dims[i] − values[i]| < band` for every `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSpec {
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
    /// `None` keeps every sample.
    pub band: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram1d {
    pub dim: usize,
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub mass: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram2d {
    pub dims: (usize, usize),
    /// `mass[a][b]`: bin `a` of the first dimension, bin `b` of the second.
    pub mass: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CornerData {
    pub bins: usize,
    /// Histogram range of every dimension of the input, from all samples.
    pub ranges: Vec<(f64, f64)>,
    /// Dimensions shown (all but the conditioned ones).
    pub dims: Vec<usize>,
    pub marginals: Vec<Histogram1d>,
    /// One grid per pair `i < j` of shown dimensions.
    pub pairs: Vec<Histogram2d>,
    pub n_samples: usize,
    /// Samples left after conditioning.
    pub n_used: usize,
    pub conditional: Option<ConditionalSpec>,
}

fn bin_of(v: f64, (lo, hi): (f64, f64), bins: usize) -> usize {
    (((v - lo) / (hi - lo) * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

/// 1-d and pairwise 2-d histograms of `samples`, optionally restricted to a
/// band around fixed values of some dimensions.
pub fn corner_data(samples: &Array2<f64>, bins: usize, cond: Option<&ConditionalSpec>) -> Result<CornerData> {
    if samples.nrows() == 0 {
        return Err(invalid("corner: no samples"));
    }
    if bins < 2 {
        return Err(invalid("corner: bins must be at least 2"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(invalid("corner: samples contain non-finite values"));
    }
    let d = samples.ncols();
    let ranges: Vec<(f64, f64)> = samples
        .axis_iter(Axis(1))
        .map(|c| {
            let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        })
        .collect();

    let (dims, kept): (Vec<usize>, Vec<usize>) = match cond {
        None => ((0..d).collect(), (0..samples.nrows()).collect()),
        Some(c) => {
            if c.dims.len() != c.values.len() || c.dims.is_empty() {
                return Err(invalid("corner: conditional dims and values must be nonempty and of equal length"));
            }
            if c.dims.iter().any(|&j| j >= d) {
                return Err(invalid(format!("corner: conditional dimension out of range (samples have {d})")));
            }
            let band = c.band.unwrap_or(f64::INFINITY);
            if !(band > 0.0) {
                return Err(invalid("corner: band must be positive"));
            }
            let kept: Vec<usize> = (0..samples.nrows())
                .filter(|&i| c.dims.iter().zip(&c.values).all(|(&j, v)| (samples[[i, j]] - v).abs() < band))
                .collect();
            if kept.is_empty() {
                return Err(SbiError::InvalidParameter(format!(
                    "corner: band {band} around the conditioning values keeps no samples; use a wider band"
                )));
            }
            ((0..d).filter(|j| !c.dims.contains(j)).collect(), kept)
        }
    };
    let w = 1.0 / kept.len() as f64;

    let marginals = dims
        .iter()
        .map(|&j| {
            let (lo, hi) = ranges[j];
            let mut mass = vec![0.0; bins];
            for &i in &kept {
                mass[bin_of(samples[[i, j]], ranges[j], bins)] += w;
            }
            let edges = (0..=bins).map(|b| lo + (hi - lo) * b as f64 / bins as f64).collect();
            Histogram1d { dim: j, edges, mass }
        })
        .collect();
    let mut pairs = Vec::new();
    for (a, &i) in dims.iter().enumerate() {
        for &j in &dims[a + 1..] {
            let mut mass = vec![vec![0.0; bins]; bins];
            for &r in &kept {
                mass[bin_of(samples[[r, i]], ranges[i], bins)][bin_of(samples[[r, j]], ranges[j], bins)] += w;
            }
            pairs.push(Histogram2d { dims: (i, j), mass });
        }
    }
    Ok(CornerData {
        bins,
        ranges,
        dims,
        marginals,
        pairs,
        n_samples: samples.nrows(),
        n_used: kept.len(),
        conditional: cond.cloned(),
    })
}
