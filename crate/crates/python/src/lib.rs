//! Python bindings: distributions, simulation, training, sampling and C2ST.
//!
//! Arrays cross the boundary as lists of rows (`list[list[float]]`).

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use sbi_core::cli::{self, Checkpoint, RunConfig as CoreConfig};
use sbi_core::diagnostics::{c2st as core_c2st, C2stConfig};
use sbi_core::distributions::Distribution as CoreDist;
use sbi_core::inference::{build_posterior, train_amortized, MethodKind, SamplerConfig};
use sbi_core::rng::{labeled_seed, rng_from_seed};
use sbi_core::simgym::{simulate_for_sbi, SimulationBatch};
use sbi_core::SbiError;

fn py_err(e: SbiError) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn to_array(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    if n == 0 || d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("expected a nonempty list of equal-length rows"));
    }
    Ok(Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect()).expect("shape checked"))
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

#[pyclass(frozen)]
struct Distribution {
    inner: CoreDist,
}

#[pymethods]
impl Distribution {
    #[staticmethod]
    fn standard_normal(dim: usize) -> PyResult<Self> {
        Ok(Self { inner: CoreDist::standard_normal(dim).map_err(py_err)? })
    }

    #[staticmethod]
    fn gaussian_diag(mean: Vec<f64>, var: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: CoreDist::gaussian_diag(mean, var).map_err(py_err)? })
    }

    #[staticmethod]
    fn uniform_box(lower: Vec<f64>, upper: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: CoreDist::uniform_box(lower, upper).map_err(py_err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let v = text.parse().map_err(|e| PyValueError::new_err(format!("{e}")))?;
        Ok(Self { inner: CoreDist::from_json(&v).map_err(py_err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json().to_string()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(&self.inner.sample(n, &mut rng_from_seed(seed)).map_err(py_err)?))
    }

    fn log_prob(&self, theta: Vec<f64>) -> PyResult<f64> {
        self.inner.log_prob(&theta).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Distribution({})", self.to_json())
    }
}

/// Simulated `(θ, x)` pairs with a validity flag per row.
#[pyclass(frozen)]
struct Batch {
    inner: SimulationBatch,
}

#[pymethods]
impl Batch {
    #[new]
    #[pyo3(signature = (theta, x, seed = 0))]
    fn new(theta: Vec<Vec<f64>>, x: Vec<Vec<f64>>, seed: u64) -> PyResult<Self> {
        let inner = SimulationBatch::new(to_array(theta)?, to_array(x)?, seed, "python").map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn theta(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.theta)
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.x)
    }

    #[getter]
    fn valid(&self) -> Vec<bool> {
        self.inner.valid.clone()
    }

    #[getter]
    fn n_valid(&self) -> usize {
        self.inner.n_valid()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// A run configuration (TOML or JSON text).
#[pyclass(frozen)]
struct RunConfig {
    inner: CoreConfig,
}

#[pymethods]
impl RunConfig {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self { inner: CoreConfig::parse(text).map_err(py_err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: CoreConfig::load(&path).map_err(py_err)? })
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method.kind.name()
    }

    fn prior(&self) -> PyResult<Distribution> {
        Ok(Distribution { inner: self.inner.prior().map_err(py_err)? })
    }

    /// Exact posterior at `x` (linear-gaussian simulator, gaussian prior).
    fn oracle_posterior(&self, x: Vec<f64>) -> PyResult<Distribution> {
        Ok(Distribution { inner: self.inner.oracle_posterior(&x).map_err(py_err)? })
    }

    /// Same rows as `sbi simulate` with this config.
    #[pyo3(signature = (n, workers = None))]
    fn simulate(&self, py: Python<'_>, n: usize, workers: Option<usize>) -> PyResult<Batch> {
        let cfg = &self.inner;
        let workers = workers.unwrap_or(cfg.method.workers);
        let inner = py
            .detach(|| {
                let prior = cfg.prior()?;
                let sim = cfg.simulator()?;
                let mut rng = rng_from_seed(labeled_seed(cfg.seed, "sim"));
                simulate_for_sbi(&prior, sim.as_ref(), n, workers, &mut rng)
            })
            .map_err(py_err)?;
        Ok(Batch { inner })
    }

    /// Same model as `sbi train` with this config on `batch`.
    fn train(&self, py: Python<'_>, batch: &Batch) -> PyResult<Model> {
        let cfg = &self.inner;
        let ck = py
            .detach(|| {
                let method = cfg.method(labeled_seed(cfg.seed, "train"))?;
                let t = train_amortized(&method, &batch.inner)?;
                Ok::<_, SbiError>(Checkpoint {
                    method: method.kind,
                    prior: method.prior,
                    estimator: t.estimator,
                    report: t.report,
                })
            })
            .map_err(py_err)?;
        Ok(Model { inner: ck, sampler: cfg.sampler.clone() })
    }
}

/// A trained estimator with its prior, as stored in a checkpoint.
#[pyclass(frozen)]
struct Model {
    inner: Checkpoint,
    sampler: SamplerConfig,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: cli::read_checkpoint(&path).map_err(py_err)?, sampler: SamplerConfig::default() })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        cli::write_checkpoint(&path, &self.inner).map_err(py_err)
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method.name()
    }

    #[getter]
    fn epochs(&self) -> usize {
        self.inner.report.epochs()
    }

    #[getter]
    fn best_val_loss(&self) -> f64 {
        self.inner.report.best_val_loss
    }

    /// `n` posterior draws at `x_obs`; pass several rows for i.i.d. data
    /// (NLE and NRE only).
    fn sample(&self, py: Python<'_>, x_obs: Vec<Vec<f64>>, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let x_o = to_array(x_obs)?;
        if x_o.nrows() > 1 && self.inner.method == MethodKind::Npe {
            return Err(PyValueError::new_err("NPE conditions on a single observation row"));
        }
        let ck = &self.inner;
        let s = py
            .detach(|| {
                let post =
                    build_posterior(ck.method, ck.estimator.clone(), ck.prior.clone(), x_o, self.sampler.clone())?;
                post.sample(n, &mut rng_from_seed(labeled_seed(seed, "sample")))
            })
            .map_err(py_err)?;
        Ok(to_rows(&s.samples))
    }
}

/// Classifier two-sample test accuracy (0.5 means indistinguishable).
#[pyfunction]
#[pyo3(signature = (p, q, seed = 0))]
fn c2st(py: Python<'_>, p: Vec<Vec<f64>>, q: Vec<Vec<f64>>, seed: u64) -> PyResult<f64> {
    let (p, q) = (to_array(p)?, to_array(q)?);
    let r = py.detach(|| core_c2st(&p, &q, &C2stConfig::default(), &mut rng_from_seed(seed))).map_err(py_err)?;
    Ok(r.accuracy)
}

/// Runs the `sbi` command line with `args` (without the program name) and
/// returns its exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    py.detach(|| cli::run(std::iter::once("sbi".to_string()).chain(args)))
}

#[pymodule]
fn sbi_rs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Distribution>()?;
    m.add_class::<Batch>()?;
    m.add_class::<RunConfig>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(c2st, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
