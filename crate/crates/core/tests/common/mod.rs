#![allow(dead_code)]

use ndarray::{Array2, Axis};
use sbi_core::distributions::{linear_gaussian_posterior, Distribution};
use sbi_core::linalg::diag;
use sbi_core::rng::Rng;
use sbi_core::simgym::{LinearGaussianSimulator, Simulator};

pub const NOISE_VAR: f64 = 0.1;

pub fn prior() -> Distribution {
    Distribution::standard_normal(2).unwrap()
}

pub fn simulator() -> LinearGaussianSimulator {
    LinearGaussianSimulator { dim: 2, sigma: NOISE_VAR.sqrt() }
}

pub fn oracle(x_o: &[f64]) -> Distribution {
    linear_gaussian_posterior(&prior(), &diag(&[NOISE_VAR, NOISE_VAR]), x_o).unwrap()
}

pub fn oracle_mean(x_o: &[f64]) -> Vec<f64> {
    oracle(x_o).gaussian_moments().unwrap().0
}

/// An observation from the prior predictive.
pub fn draw_observation(rng: &mut Rng) -> Vec<f64> {
    use rand::RngCore;
    let theta = prior().sample(1, rng).unwrap();
    let seeds = [rng.next_u64()];
    simulator().simulate(theta.view(), &seeds).unwrap().row(0).to_vec()
}

pub fn row(x: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, x.len()), x.to_vec()).unwrap()
}

pub fn mean(s: &Array2<f64>) -> Vec<f64> {
    s.mean_axis(Axis(0)).unwrap().to_vec()
}

/// Euclidean distance between two vectors.
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Every `k`-th row.
pub fn thin(s: &Array2<f64>, k: usize) -> Array2<f64> {
    let idx: Vec<usize> = (0..s.nrows()).step_by(k).collect();
    s.select(Axis(0), &idx)
}
