//! Running simulators over parameter draws and collecting `(θ, x)` pairs.
//!
//! Every row is simulated with its own seed derived from the batch seed and the
//! row index, so the output does not depend on how rows are split across
//! workers. Failed simulations are signalled by non-finite outputs.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::{Rng as _, RngCore};
use rand_distr::StandardNormal;

use crate::distributions::Distribution;
use crate::error::{invalid, Result, SbiError};
use crate::rng::{rng_from_seed, row_seed, Rng};

/// A forward model mapping parameters to data.
///
/// `simulate` receives a block of parameter rows and one seed per row; row `i`
/// of the output must depend only on row `i` of `theta` and `seeds[i]`.
/// Failures are reported either as NaN/Inf entries in a row or by returning
/// `Err` for the whole block.
pub trait Simulator: Sync {
    fn theta_dim(&self) -> usize;
    fn x_dim(&self) -> usize;
    fn simulate(&self, theta: ArrayView2<f64>, seeds: &[u64]) -> std::result::Result<Array2<f64>, String>;
}

impl<S: Simulator + ?Sized> Simulator for Box<S> {
    fn theta_dim(&self) -> usize {
        (**self).theta_dim()
    }
    fn x_dim(&self) -> usize {
        (**self).x_dim()
    }
    fn simulate(&self, theta: ArrayView2<f64>, seeds: &[u64]) -> std::result::Result<Array2<f64>, String> {
        (**self).simulate(theta, seeds)
    }
}

/// Wraps a per-row closure `(θ, rng) -> x` as a [`Simulator`].
pub struct FnSimulator<F> {
    theta_dim: usize,
    x_dim: usize,
    f: F,
}

impl<F> FnSimulator<F>
where
    F: Fn(&[f64], &mut Rng) -> Vec<f64> + Sync,
{
    pub fn new(theta_dim: usize, x_dim: usize, f: F) -> Self {
        Self { theta_dim, x_dim, f }
    }
}

impl<F> Simulator for FnSimulator<F>
where
    F: Fn(&[f64], &mut Rng) -> Vec<f64> + Sync,
{
    fn theta_dim(&self) -> usize {
        self.theta_dim
    }

    fn x_dim(&self) -> usize {
        self.x_dim
    }

    fn simulate(&self, theta: ArrayView2<f64>, seeds: &[u64]) -> std::result::Result<Array2<f64>, String> {
        let mut out = Array2::<f64>::zeros((theta.nrows(), self.x_dim));
        for (i, row) in theta.rows().into_iter().enumerate() {
            let mut rng = rng_from_seed(seeds[i]);
            let x = (self.f)(&row.to_vec(), &mut rng);
            if x.len() != self.x_dim {
                return Err(format!("simulator returned {} values, expected {}", x.len(), self.x_dim));
            }
            out.row_mut(i).iter_mut().zip(x).for_each(|(o, v)| *o = v);
        }
        Ok(out)
    }
}

/// `x = θ`.
#[derive(Clone, Debug)]
pub struct IdentitySimulator {
    pub dim: usize,
}

impl Simulator for IdentitySimulator {
    fn theta_dim(&self) -> usize {
        self.dim
    }
    fn x_dim(&self) -> usize {
        self.dim
    }
    fn simulate(&self, theta: ArrayView2<f64>, _seeds: &[u64]) -> std::result::Result<Array2<f64>, String> {
        Ok(theta.to_owned())
    }
}

/// `x = θ + σ·ε`, `ε ~ N(0, I)`.
#[derive(Clone, Debug)]
pub struct LinearGaussianSimulator {
    pub dim: usize,
    pub sigma: f64,
}

impl Simulator for LinearGaussianSimulator {
    fn theta_dim(&self) -> usize {
        self.dim
    }
    fn x_dim(&self) -> usize {
        self.dim
    }
    fn simulate(&self, theta: ArrayView2<f64>, seeds: &[u64]) -> std::result::Result<Array2<f64>, String> {
        let mut out = theta.to_owned();
        for (mut row, &seed) in out.rows_mut().into_iter().zip(seeds) {
            let mut rng = rng_from_seed(seed);
            for v in row.iter_mut() {
                *v += self.sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(out)
    }
}

/// The two-moons toy: a crescent-shaped, bimodal posterior in 2-d.
#[derive(Clone, Debug, Default)]
pub struct TwoMoonsSimulator;

impl Simulator for TwoMoonsSimulator {
    fn theta_dim(&self) -> usize {
        2
    }
    fn x_dim(&self) -> usize {
        2
    }
    fn simulate(&self, theta: ArrayView2<f64>, seeds: &[u64]) -> std::result::Result<Array2<f64>, String> {
        let mut out = Array2::<f64>::zeros((theta.nrows(), 2));
        for (i, t) in theta.rows().into_iter().enumerate() {
            let mut rng = rng_from_seed(seeds[i]);
            let a = std::f64::consts::PI * (rng.random::<f64>() - 0.5);
            let r = 0.1 + 0.01 * rng.sample::<f64, _>(StandardNormal);
            let p = [r * a.cos() + 0.25, r * a.sin()];
            let s = std::f64::consts::FRAC_1_SQRT_2;
            out[[i, 0]] = p[0] - (t[0] + t[1]).abs() * s;
            out[[i, 1]] = p[1] + (-t[0] + t[1]) * s;
        }
        Ok(out)
    }
}

/// Replaces a random fraction of rows of another simulator with NaN.
pub struct FailureInjector<S> {
    pub inner: S,
    pub failure_rate: f64,
}

impl<S: Simulator> Simulator for FailureInjector<S> {
    fn theta_dim(&self) -> usize {
        self.inner.theta_dim()
    }
    fn x_dim(&self) -> usize {
        self.inner.x_dim()
    }
    fn simulate(&self, theta: ArrayView2<f64>, seeds: &[u64]) -> std::result::Result<Array2<f64>, String> {
        let mut out = self.inner.simulate(theta, seeds)?;
        for (mut row, &seed) in out.rows_mut().into_iter().zip(seeds) {
            // Independent stream from the one the inner simulator uses.
            let mut rng = rng_from_seed(seed ^ 0xFA11_FA11_FA11_FA11);
            if rng.random::<f64>() < self.failure_rate {
                row.fill(f64::NAN);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationBatch {
    pub theta: Array2<f64>,
    pub x: Array2<f64>,
    pub valid: Vec<bool>,
    pub seed: u64,
    pub provenance: String,
}

fn row_is_finite(theta: ndarray::ArrayView1<f64>, x: ndarray::ArrayView1<f64>) -> bool {
    theta.iter().chain(x.iter()).all(|v| v.is_finite())
}

impl SimulationBatch {
    /// Builds a batch and computes its validity mask from finiteness.
    pub fn new(theta: Array2<f64>, x: Array2<f64>, seed: u64, provenance: impl Into<String>) -> Result<Self> {
        if theta.nrows() != x.nrows() {
            return Err(invalid(format!("theta has {} rows but x has {}", theta.nrows(), x.nrows())));
        }
        let valid = theta.rows().into_iter().zip(x.rows()).map(|(t, x)| row_is_finite(t, x)).collect();
        Ok(Self { theta, x, valid, seed, provenance: provenance.into() })
    }

    pub fn empty(theta_dim: usize, x_dim: usize) -> Self {
        Self {
            theta: Array2::zeros((0, theta_dim)),
            x: Array2::zeros((0, x_dim)),
            valid: Vec::new(),
            seed: 0,
            provenance: String::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.theta.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn theta_dim(&self) -> usize {
        self.theta.ncols()
    }

    pub fn x_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Keeps the valid rows, in order. Returns the filtered batch and the number
    /// of dropped rows.
    pub fn filter_valid(&self) -> Result<(SimulationBatch, usize)> {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.valid[i]).collect();
        let dropped = self.len() - keep.len();
        if keep.is_empty() {
            return Err(SbiError::NoValidRows { dropped });
        }
        let batch = SimulationBatch {
            theta: self.theta.select(Axis(0), &keep),
            x: self.x.select(Axis(0), &keep),
            valid: vec![true; keep.len()],
            seed: self.seed,
            provenance: self.provenance.clone(),
        };
        Ok((batch, dropped))
    }

    /// Row-wise concatenation, `self` first.
    pub fn append(&self, other: &SimulationBatch) -> Result<SimulationBatch> {
        if self.theta_dim() != other.theta_dim() || self.x_dim() != other.x_dim() {
            return Err(SbiError::DimensionMismatch {
                expected: self.theta_dim() + self.x_dim(),
                got: other.theta_dim() + other.x_dim(),
            });
        }
        let theta =
            ndarray::concatenate(Axis(0), &[self.theta.view(), other.theta.view()]).expect("column counts checked");
        let x = ndarray::concatenate(Axis(0), &[self.x.view(), other.x.view()]).expect("column counts checked");
        let mut valid = self.valid.clone();
        valid.extend_from_slice(&other.valid);
        let provenance = match (self.provenance.is_empty(), other.provenance.is_empty()) {
            (true, _) => other.provenance.clone(),
            (_, true) => self.provenance.clone(),
            _ => format!("{} + {}", self.provenance, other.provenance),
        };
        let seed = if self.is_empty() { other.seed } else { self.seed };
        Ok(SimulationBatch { theta, x, valid, seed, provenance })
    }

    /// Splits into rows `[0, index)` and `[index, n)`.
    pub fn split_at(&self, index: usize) -> Result<(SimulationBatch, SimulationBatch)> {
        if index > self.len() {
            return Err(invalid("split index beyond batch length"));
        }
        let part = |a: usize, b: usize| SimulationBatch {
            theta: self.theta.slice(s![a..b, ..]).to_owned(),
            x: self.x.slice(s![a..b, ..]).to_owned(),
            valid: self.valid[a..b].to_vec(),
            seed: self.seed,
            provenance: self.provenance.clone(),
        };
        Ok((part(0, index), part(index, self.len())))
    }
}

/// Draws `n` parameter sets from `prior` and simulates them on up to `workers`
/// threads.
pub fn simulate_for_sbi(
    prior: &Distribution,
    sim: &dyn Simulator,
    n: usize,
    workers: usize,
    rng: &mut Rng,
) -> Result<SimulationBatch> {
    if n == 0 {
        return Err(invalid("simulate_for_sbi: n must be at least 1"));
    }
    if prior.dim() != sim.theta_dim() {
        return Err(SbiError::DimensionMismatch { expected: sim.theta_dim(), got: prior.dim() });
    }
    let theta = prior.sample(n, rng)?;
    let batch_seed = rng.next_u64();
    simulate_parameters(sim, theta, workers, batch_seed)
}

/// Simulates the given parameter rows. Row `i` uses `row_seed(batch_seed, i)`.
pub fn simulate_parameters(
    sim: &dyn Simulator,
    theta: Array2<f64>,
    workers: usize,
    batch_seed: u64,
) -> Result<SimulationBatch> {
    let n = theta.nrows();
    if n == 0 {
        return Err(invalid("simulate: no parameter rows"));
    }
    if workers == 0 {
        return Err(invalid("simulate: workers must be at least 1"));
    }
    if theta.ncols() != sim.theta_dim() {
        return Err(SbiError::DimensionMismatch { expected: sim.theta_dim(), got: theta.ncols() });
    }
    let x_dim = sim.x_dim();
    let seeds: Vec<u64> = (0..n as u64).map(|i| row_seed(batch_seed, i)).collect();
    let chunk = n.div_ceil(4 * workers);
    let n_chunks = n.div_ceil(chunk);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Array2<f64>, Vec<String>)>> = Mutex::new(Vec::with_capacity(n_chunks));

    let run_chunk = |c: usize| {
        let (a, b) = (c * chunk, ((c + 1) * chunk).min(n));
        let view = theta.slice(s![a..b, ..]);
        let mut errors = Vec::new();
        let out = match checked_simulate(sim, view, &seeds[a..b], x_dim) {
            Ok(out) => out,
            Err(_) => {
                // Retry row by row so only the offending rows are lost and the
                // outcome does not depend on the chunking.
                let mut out = Array2::<f64>::from_elem((b - a, x_dim), f64::NAN);
                for i in a..b {
                    match checked_simulate(sim, theta.slice(s![i..i + 1, ..]), &seeds[i..i + 1], x_dim) {
                        Ok(row) => out.row_mut(i - a).assign(&row.row(0)),
                        Err(e) => errors.push(format!("row {i}: {e}")),
                    }
                }
                out
            }
        };
        results.lock().expect("no panics while holding the lock").push((c, out, errors));
    };

    std::thread::scope(|scope| {
        for _ in 0..workers.min(n_chunks) {
            scope.spawn(|| loop {
                let c = next.fetch_add(1, Ordering::Relaxed);
                if c >= n_chunks {
                    break;
                }
                run_chunk(c);
            });
        }
    });

    let mut parts = results.into_inner().expect("workers joined");
    parts.sort_by_key(|p| p.0);
    let mut x = Array2::<f64>::zeros((n, x_dim));
    let mut errors = Vec::new();
    for (c, out, errs) in parts {
        let a = c * chunk;
        x.slice_mut(s![a..a + out.nrows(), ..]).assign(&out);
        errors.extend(errs);
    }
    let mut provenance = format!("simulated n={n} batch_seed={batch_seed}");
    if !errors.is_empty() {
        errors.sort();
        provenance.push_str(&format!("; {} rows raised errors (first: {})", errors.len(), errors[0]));
    }
    let batch = SimulationBatch::new(theta, x, batch_seed, provenance)?;
    if batch.n_valid() == 0 {
        return Err(SbiError::Simulation(format!(
            "simulator failed on all {n} rows{}",
            errors.first().map(|e| format!(" ({e})")).unwrap_or_default()
        )));
    }
    Ok(batch)
}

fn checked_simulate(
    sim: &dyn Simulator,
    theta: ArrayView2<f64>,
    seeds: &[u64],
    x_dim: usize,
) -> std::result::Result<Array2<f64>, String> {
    let out = sim.simulate(theta, seeds)?;
    if out.dim() != (theta.nrows(), x_dim) {
        return Err(format!("simulator returned shape {:?}, expected ({}, {x_dim})", out.dim(), theta.nrows()));
    }
    Ok(out)
}
