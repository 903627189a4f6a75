use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

pub const SIGMA_MIN: f64 = 1e-14;

/// Per-column z-scoring fitted on training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    /// Column means and (unbiased) standard deviations, floored at [`SIGMA_MIN`].
    pub fn fit(data: &Array2<f64>) -> Self {
        let n = data.nrows();
        let mean = data.mean_axis(Axis(0)).map(|m| m.to_vec()).unwrap_or_else(|| vec![0.0; data.ncols()]);
        let std = if n > 1 {
            data.std_axis(Axis(0), 1.0).iter().map(|s| s.max(SIGMA_MIN)).collect()
        } else {
            vec![1.0; data.ncols()]
        };
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn standardize(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(i, x)| {
                let k = i % self.dim();
                (x - self.mean[k]) / self.std[k]
            })
            .collect()
    }

    pub fn destandardize(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(i, z)| {
                let k = i % self.dim();
                z * self.std[k] + self.mean[k]
            })
            .collect()
    }

    /// Standardizes every row. Rows whose width is a multiple of the fitted
    /// dimension are treated as blocks of elements (set-valued inputs).
    pub fn standardize_rows(&self, a: &Array2<f64>) -> Array2<f64> {
        let d = self.dim();
        let mut out = a.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                let k = j % d;
                *v = (*v - self.mean[k]) / self.std[k];
            }
        }
        out
    }

    pub fn destandardize_rows(&self, a: &Array2<f64>) -> Array2<f64> {
        let d = self.dim();
        let mut out = a.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                let k = j % d;
                *v = *v * self.std[k] + self.mean[k];
            }
        }
        out
    }

    /// Σ log σ: the log-Jacobian of destandardization.
    pub fn log_scale_sum(&self) -> f64 {
        self.std.iter().map(|s| s.ln()).sum()
    }
}
