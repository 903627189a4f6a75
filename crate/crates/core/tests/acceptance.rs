//! End-to-end acceptance suite on the 2-d linear-gaussian task with an exact
//! posterior. Prints one PASS/FAIL line per criterion and exits non-zero if
//! any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::*;
use ndarray::Array2;
use rand::Rng as _;
use sbi_core::diagnostics::{c2st, expected_coverage_rank, run_sbc, run_tarp, C2stConfig, TarpReference};
use sbi_core::distributions::Distribution;
use sbi_core::estimators::{DensityEstimator, DensityFamily, EstimatorConfig, RatioEstimator};
use sbi_core::inference::{
    build_posterior, importance_correct, run_sequential, train_amortized, InferenceMethod, MethodKind, Posterior,
    SamplerConfig,
};
use sbi_core::neural::gradcheck::check_gradients;
use sbi_core::neural::{Activation, Tensor};
use sbi_core::rng::{rng_from_seed, Rng};
use sbi_core::simgym::{simulate_for_sbi, simulate_parameters, FailureInjector, SimulationBatch};

const C2ST_MAX: f64 = 0.60;
const MEAN_ERR_MAX: f64 = 0.1;
const N_SIMS: usize = 10_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn posterior_at(kind: MethodKind, est: &sbi_core::estimators::Estimator, x_o: &[f64]) -> Posterior {
    build_posterior(kind, est.clone(), prior(), row(x_o), SamplerConfig::default()).unwrap()
}

/// C2ST accuracy against exact draws and distance of the sample mean to the exact mean.
fn compare_to_oracle(samples: &Array2<f64>, x_o: &[f64], rng: &mut Rng) -> (f64, f64) {
    let truth = oracle(x_o).sample(samples.nrows(), rng).unwrap();
    let acc = c2st(samples, &truth, &C2stConfig::default(), rng).unwrap().accuracy;
    (acc, dist(&mean(samples), &oracle_mean(x_o)))
}

/// Trains NPE on `batch` and checks five observations at the criterion-1 bounds.
fn npe_oracle_check(batch: &SimulationBatch, seed: u64) -> (bool, String, sbi_core::estimators::Estimator) {
    let m = InferenceMethod::new(MethodKind::Npe, prior());
    let trained = train_amortized(&m, batch).unwrap();
    let mut rng = rng_from_seed(seed);
    let mut worst = (0.0f64, 0.0f64);
    let mut pass = true;
    for _ in 0..5 {
        let x_o = draw_observation(&mut rng);
        let s = posterior_at(MethodKind::Npe, &trained.estimator, &x_o).sample(1000, &mut rng).unwrap().samples;
        let (acc, err) = compare_to_oracle(&s, &x_o, &mut rng);
        pass &= acc <= C2ST_MAX && err <= MEAN_ERR_MAX;
        worst = (worst.0.max(acc), worst.1.max(err));
    }
    (pass, format!("worst c2st {:.3}, worst mean error {:.3}", worst.0, worst.1), trained.estimator)
}

fn training_batch(seed: u64) -> SimulationBatch {
    simulate_for_sbi(&prior(), &simulator(), N_SIMS, 1, &mut rng_from_seed(seed)).unwrap()
}

fn criterion_1_and_3() -> (Outcome, Outcome) {
    let t0 = Instant::now();
    let (pass, detail, est) = npe_oracle_check(&training_batch(101), 1);
    let c1 = outcome(pass, format!("NPE on 5 observations: {detail}; {:.1?}", t0.elapsed()));

    let mut rng = rng_from_seed(3);
    let mut ok = 0;
    let mut errs = Vec::new();
    for _ in 0..10 {
        let x_o = draw_observation(&mut rng);
        let s = posterior_at(MethodKind::Npe, &est, &x_o).sample(2000, &mut rng).unwrap().samples;
        let e = dist(&mean(&s), &oracle_mean(&x_o));
        errs.push(format!("{e:.3}"));
        ok += (e <= MEAN_ERR_MAX) as usize;
    }
    let c3 = outcome(ok >= 9, format!("{ok}/10 fresh observations within {MEAN_ERR_MAX}: [{}]", errs.join(", ")));
    (c1, c3)
}

fn criterion_2() -> Outcome {
    let batch = training_batch(202);
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in [MethodKind::Nle, MethodKind::Nre] {
        let t0 = Instant::now();
        let mut m = InferenceMethod::new(kind, prior());
        if kind == MethodKind::Nre {
            m.train.learning_rate = 1e-3;
        }
        let trained = train_amortized(&m, &batch).unwrap();
        let mut rng = rng_from_seed(5);
        let (mut acc_max, mut err_max, mut rhat_max) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..5 {
            let x_o = draw_observation(&mut rng);
            // Thinning by 20 keeps repeated MH states (which a classifier can
            // memorise across folds) below one percent.
            let s = posterior_at(kind, &trained.estimator, &x_o).sample(20_000, &mut rng).unwrap();
            let rhat = s.mcmc.as_ref().unwrap().max_rhat();
            let (acc, err) = compare_to_oracle(&thin(&s.samples, 20), &x_o, &mut rng);
            pass &= acc <= C2ST_MAX && rhat < 1.05;
            acc_max = acc_max.max(acc);
            err_max = err_max.max(err);
            rhat_max = rhat_max.max(rhat);
        }
        parts.push(format!(
            "{}+MH worst c2st {acc_max:.3}, worst R-hat {rhat_max:.4}, worst mean error {err_max:.3} ({:.1?})",
            kind.name(),
            t0.elapsed()
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_4() -> Outcome {
    let (mut seq_err, mut amort_err) = (0.0, 0.0);
    for seed in 0..5u64 {
        let mut rng = rng_from_seed(400 + seed);
        let x_o = draw_observation(&mut rng);
        let mut m = InferenceMethod::new(MethodKind::Nle, prior());
        m.train.seed = seed;
        let seq = run_sequential(&m, &simulator(), &row(&x_o), 2, 500, 1, &SamplerConfig::default(), &mut rng).unwrap();
        let s = seq.posterior.sample(4000, &mut rng).unwrap().samples;
        seq_err += dist(&mean(&s), &oracle_mean(&x_o)) / 5.0;

        let batch = simulate_for_sbi(&prior(), &simulator(), 1000, 1, &mut rng).unwrap();
        let trained = train_amortized(&m, &batch).unwrap();
        let s = posterior_at(MethodKind::Nle, &trained.estimator, &x_o).sample(4000, &mut rng).unwrap().samples;
        amort_err += dist(&mean(&s), &oracle_mean(&x_o)) / 5.0;
    }
    outcome(
        seq_err <= amort_err + 0.05,
        format!("sequential NLE 2x500 mean error {seq_err:.4} vs amortized 1000-sim {amort_err:.4} (+0.05 allowed)"),
    )
}

/// Exact posterior with its covariance multiplied by `scale`.
fn scaled_oracle(x: &[f64], scale: f64) -> Distribution {
    oracle(x).with_scaled_covariance(scale).unwrap()
}

/// (SBC min p-value, TARP max deviation, rank-coverage max deviation).
fn calibration(scale: f64, rng: &mut Rng) -> (f64, f64, f64) {
    let mut post = |x: &[f64], l: usize, rng: &mut Rng| scaled_oracle(x, scale).sample(l, rng);
    let sbc = run_sbc(&prior(), &simulator(), &mut post, 200, 100, rng).unwrap();

    let theta = prior().sample(500, rng).unwrap();
    let batch = simulate_parameters(&simulator(), theta, 1, rng.random()).unwrap();
    let posts: Vec<Distribution> = batch.x.rows().into_iter().map(|x| scaled_oracle(&x.to_vec(), scale)).collect();
    let samples: Vec<Array2<f64>> = posts.iter().map(|p| p.sample(500, rng).unwrap()).collect();
    let tarp = run_tarp(&batch.theta, &samples, &TarpReference::SampleBox, rng).unwrap();
    let mut lq = |i: usize, t: &Array2<f64>| posts[i].log_prob_batch(t);
    let rank = expected_coverage_rank(&batch.theta, &samples, &mut lq).unwrap();
    (sbc.min_p_value(), tarp.max_deviation, rank.max_deviation)
}

fn median3(mut v: [f64; 3]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[1]
}

/// A correct posterior exceeds a single N = 500 coverage bound of 0.05 in
/// roughly one run in thirteen, so the exact case is judged on the median of
/// three independent replicates.
fn criterion_5() -> Outcome {
    let mut rng = rng_from_seed(55);
    let runs: Vec<(f64, f64, f64)> = (0..3).map(|_| calibration(1.0, &mut rng)).collect();
    let p = median3([runs[0].0, runs[1].0, runs[2].0]);
    let tarp = median3([runs[0].1, runs[1].1, runs[2].1]);
    let rank = median3([runs[0].2, runs[1].2, runs[2].2]);
    let mut pass = p > 0.01 && tarp <= 0.05 && rank <= 0.05;
    let all: Vec<String> = runs.iter().map(|r| format!("({:.3}, {:.3}, {:.3})", r.0, r.1, r.2)).collect();
    let mut detail =
        format!("exact, median of 3: SBC min p {p:.3}, TARP dev {tarp:.3}, rank dev {rank:.3} [{}]", all.join(" "));
    for (label, scale) in [("over x9", 9.0), ("under /9", 1.0 / 9.0)] {
        for _ in 0..3 {
            let (p, tarp, rank) = calibration(scale, &mut rng);
            pass &= p < 0.01 && tarp > 0.1 && rank > 0.1;
            detail.push_str(&format!("; {label}: SBC p {p:.1e}, TARP dev {tarp:.3}, rank dev {rank:.3}"));
        }
    }
    outcome(pass, detail)
}

fn criterion_6() -> Outcome {
    let x_o = [1.5, -1.0];
    let exact = oracle_mean(&x_o);
    let post_var = NOISE_VAR / (1.0 + NOISE_VAR);
    // Widened proposal centered on the data rather than on the posterior mean.
    let q = Distribution::gaussian_diag(x_o.to_vec(), vec![4.0 * post_var; 2]).unwrap();
    let lik = |t: &[f64]| {
        -(0..2).map(|i| (x_o[i] - t[i]).powi(2) / (2.0 * NOISE_VAR)).sum::<f64>()
            - (2.0 * std::f64::consts::PI * NOISE_VAR).ln()
    };
    let r = importance_correct(&q, &prior(), lik, 5000, &mut rng_from_seed(66)).unwrap();
    let weighted = dist(&r.weighted_mean(), &exact);
    let unweighted = dist(&mean(&r.samples), &exact);
    outcome(
        weighted < unweighted && weighted < 0.05,
        format!("weighted mean error {weighted:.4}, unweighted {unweighted:.4}, ESS {:.0}/5000", r.ess),
    )
}

fn small(density: DensityFamily) -> EstimatorConfig {
    EstimatorConfig {
        density,
        components: 3,
        flow_layers: 3,
        hidden: 16,
        activation: Activation::Tanh,
        ..Default::default()
    }
}

/// Midpoint rule of `exp(log_prob)` over a box; `dim` is 1 or 2.
fn integral(est: &DensityEstimator, dim: usize, cond: &[f64]) -> f64 {
    let (lo, hi, cells) = (-10.0, 10.0, if dim == 1 { 20_000 } else { 500 });
    let h = (hi - lo) / cells as f64;
    let grid: Vec<f64> = (0..cells).map(|i| lo + (i as f64 + 0.5) * h).collect();
    let pts: Vec<f64> = if dim == 1 {
        grid.clone()
    } else {
        grid.iter().flat_map(|a| grid.iter().flat_map(move |b| [*a, *b])).collect()
    };
    let y = Array2::from_shape_vec((pts.len() / dim, dim), pts).unwrap();
    let lp = est.log_prob(&y, &row(cond)).unwrap();
    lp.iter().map(|l| l.exp()).sum::<f64>() * h.powi(dim as i32)
}

fn criterion_7() -> Outcome {
    let mut worst_grad = 0.0f64;
    let mut checked = 0;
    for seed in 0..10u64 {
        let mut rng = rng_from_seed(700 + seed);
        let mut data =
            |r: usize, c: usize| Tensor::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-2.0..2.0)).collect());
        let (y, c) = (data(6, 2), data(6, 3));
        let rows: Vec<usize> = (0..6).collect();
        for family in [DensityFamily::Mdn, DensityFamily::Maf] {
            let est = DensityEstimator::new(&small(family), 2, 3, seed).unwrap();
            let g = check_gradients(&est.params, 1e-5, 1e-4, 150, |g| est.loss(g, &y, &c, &rows));
            worst_grad = worst_grad.max(g.max_rel_error);
            checked += g.checked;
        }
        let est = RatioEstimator::new(&small(DensityFamily::Mdn), 2, 3, seed).unwrap();
        let g = check_gradients(&est.params, 1e-5, 1e-4, 150, |g| {
            est.loss(g, &y, &c, &rows, &mut rng_from_seed(seed)).unwrap()
        });
        worst_grad = worst_grad.max(g.max_rel_error);
        checked += g.checked;
    }

    let mut worst_norm = 0.0f64;
    for family in [DensityFamily::Mdn, DensityFamily::Maf] {
        for dim in [1, 2] {
            for seed in 0..3 {
                let est = DensityEstimator::new(&small(family), dim, 2, seed).unwrap();
                worst_norm = worst_norm.max((integral(&est, dim, &[0.3, -0.8]) - 1.0).abs());
            }
        }
    }
    outcome(
        worst_grad < 1e-5 && worst_norm < 1e-3,
        format!(
            "max gradient rel. error {worst_grad:.2e} over {checked} checks (MDN, MAF, classifier x 10 seeds); \
             max |integral - 1| {worst_norm:.2e}"
        ),
    )
}

/// simulate → train → sample; returns the batch and the samples.
fn pipeline(kind: MethodKind, workers: usize, seed: u64) -> (SimulationBatch, Array2<f64>) {
    let mut rng = rng_from_seed(seed);
    let batch = simulate_for_sbi(&prior(), &simulator(), 2000, workers, &mut rng).unwrap();
    let mut m = InferenceMethod::new(kind, prior());
    m.train.seed = seed;
    let trained = train_amortized(&m, &batch).unwrap();
    let s = posterior_at(kind, &trained.estimator, &[0.4, -0.6]).sample(500, &mut rng).unwrap();
    (batch, s.samples)
}

fn bits(a: &Array2<f64>) -> Vec<u64> {
    a.iter().map(|v| v.to_bits()).collect()
}

fn criterion_8() -> Outcome {
    let mut same = true;
    for kind in [MethodKind::Npe, MethodKind::Nle, MethodKind::Nre] {
        let (b1, s1) = pipeline(kind, 1, 8);
        let (b2, s2) = pipeline(kind, 1, 8);
        let (b4, s4) = pipeline(kind, 4, 8);
        same &= b1 == b2 && b1 == b4 && bits(&s1) == bits(&s2) && bits(&s1) == bits(&s4);
    }

    let failing = FailureInjector { inner: simulator(), failure_rate: 0.5 };
    let batch = simulate_for_sbi(&prior(), &failing, 2 * N_SIMS, 4, &mut rng_from_seed(808)).unwrap();
    let invalid = batch.len() - batch.n_valid();
    let (pass, detail, _) = npe_oracle_check(&batch, 9);
    let rate_ok = (invalid as f64 / batch.len() as f64 - 0.5).abs() < 0.02;
    outcome(
        same && pass && rate_ok,
        format!(
            "NPE/NLE/NRE pipelines bit-identical across reruns and 1 vs 4 workers: {same}; \
             50% failures: {invalid}/{} rows invalid and filtered, {detail}",
            batch.len()
        ),
    )
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    })
}

fn main() {
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    match catch_unwind(criterion_1_and_3) {
        Ok((c1, c3)) => {
            results.push((1, c1));
            results.push((3, c3));
        }
        Err(_) => {
            results.push((1, outcome(false, "panicked".into())));
            results.push((3, outcome(false, "panicked".into())));
        }
    }
    results.push((2, guarded(criterion_2)));
    results.push((4, guarded(criterion_4)));
    results.push((5, guarded(criterion_5)));
    results.push((6, guarded(criterion_6)));
    results.push((7, guarded(criterion_7)));
    results.push((8, guarded(criterion_8)));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (n, o) in &results {
        println!("criterion {n}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.pass as usize;
    }
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
