mod common;

use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use ndarray::{array, Array2};
use rand::Rng as _;
use rand_distr::StandardNormal;
use sbi_core::distributions::log_sum_exp;
use sbi_core::estimators::{
    DensityEstimator, DensityFamily, DensityNet, EstimatorConfig, MixtureParams, RatioEstimator,
};
use sbi_core::neural::{Tensor, TrainConfig};
use sbi_core::rng::rng_from_seed;

fn mvn_log_pdf(y: &[f64], mean: &[f64], tril: &[f64]) -> f64 {
    let d = y.len();
    let l = DMatrix::from_row_slice(d, d, tril);
    let cov = &l * l.transpose();
    let r = DVector::from_row_slice(y) - DVector::from_row_slice(mean);
    let quad = (r.transpose() * cov.clone().try_inverse().unwrap() * &r)[(0, 0)];
    -0.5 * (quad + cov.determinant().ln() + d as f64 * (2.0 * std::f64::consts::PI).ln())
}

#[test]
fn mdn_density_matches_brute_force_mixture() {
    let cfg = EstimatorConfig { components: 3, z_score: false, hidden: 16, ..EstimatorConfig::default() };
    let est = DensityEstimator::new(&cfg, 2, 2, 5).unwrap();
    let DensityNet::Mdn(mdn) = &est.net else { panic!("expected an MDN") };
    let conds = array![[0.3, -1.0], [2.0, 0.5]];
    let ys = array![[0.1, 0.2], [-1.0, 3.0]];
    let got = est.log_prob(&ys, &conds).unwrap();
    let mixes = mdn.mixture_params(&est.params, &Tensor::from_array(&conds));
    for (i, mix) in mixes.iter().enumerate() {
        let y = ys.row(i).to_vec();
        let terms: Vec<f64> =
            (0..3).map(|k| mix.weights[k].ln() + mvn_log_pdf(&y, &mix.means[k], &mix.scale_trils[k])).collect();
        assert_abs_diff_eq!(got[i], log_sum_exp(&terms), epsilon = 1e-9);
        assert_abs_diff_eq!(mix.log_prob(&y), got[i], epsilon = 1e-9);
        assert_abs_diff_eq!(mix.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }
}

#[test]
fn sampled_points_have_finite_density() {
    let mut rng = rng_from_seed(2);
    for density in [DensityFamily::Mdn, DensityFamily::Maf] {
        let cfg = EstimatorConfig { density, hidden: 16, ..EstimatorConfig::default() };
        let est = DensityEstimator::new(&cfg, 3, 2, 1).unwrap();
        let s = est.sample(&[0.5, -0.5], 200, &mut rng).unwrap();
        let lp = est.log_prob(&s, &common::row(&[0.5, -0.5])).unwrap();
        assert!(lp.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn degenerate_weights_draw_from_one_component() {
    let mix = MixtureParams {
        weights: vec![1.0, 0.0, 0.0],
        means: vec![vec![-50.0], vec![0.0], vec![50.0]],
        scale_trils: vec![vec![1.0]; 3],
    };
    let s = mix.sample(2000, &mut rng_from_seed(0));
    assert!(s.iter().all(|r| (r[0] + 50.0).abs() < 6.0));
}

/// Bimodal 1-d data, independent of a dummy conditioning column.
fn bimodal(n: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut rng = rng_from_seed(seed);
    let y: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            if rng.random::<f64>() < 0.4 {
                -1.5 + 0.4 * z
            } else {
                1.0 + 0.6 * z
            }
        })
        .collect();
    let c: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    (Array2::from_shape_vec((n, 1), y).unwrap(), Array2::from_shape_vec((n, 1), c).unwrap())
}

#[test]
fn trained_samples_follow_the_trained_density() {
    let (y, c) = bimodal(2000, 3);
    for density in [DensityFamily::Mdn, DensityFamily::Maf] {
        let cfg = EstimatorConfig { density, hidden: 32, ..EstimatorConfig::default() };
        let mut est = DensityEstimator::new(&cfg, 1, 1, 7).unwrap();
        est.fit(&y, &c, &TrainConfig { max_epochs: 200, seed: 7, ..TrainConfig::default() }).unwrap();
        let cond = common::row(&[0.5]);

        // CDF of the estimator on a grid, by the midpoint rule.
        let (lo, hi, m) = (-10.0, 10.0, 8000);
        let h = (hi - lo) / m as f64;
        let grid = Array2::from_shape_fn((m, 1), |(i, _)| lo + (i as f64 + 0.5) * h);
        let dens: Vec<f64> = est.log_prob(&grid, &cond).unwrap().iter().map(|l| l.exp() * h).collect();
        let total: f64 = dens.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-3);
        let mut cdf = Vec::with_capacity(m);
        let mut acc = 0.0;
        for d in &dens {
            acc += d;
            cdf.push(acc);
        }
        let cdf_at = |x: f64| {
            let k = (((x - lo) / h).floor() as isize).clamp(0, m as isize - 1) as usize;
            cdf[k]
        };

        let n = 4000;
        let mut s = est.sample(&[0.5], n, &mut rng_from_seed(11)).unwrap().column(0).to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ks = s
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf_at(x);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        // Grid discretization adds at most one cell of mass to the 1% critical value.
        assert!(ks < 1.63 / (n as f64).sqrt() + 0.005, "{density:?}: KS {ks}");
    }
}

#[test]
fn classifier_separates_matched_pairs() {
    let mut rng = rng_from_seed(6);
    let n = 2000;
    let theta = Array2::from_shape_fn((n, 1), |_| rng.random_range(-1.0..1.0));
    let x = theta.clone();
    let mut est = RatioEstimator::new(&EstimatorConfig::default(), 1, 1, 3).unwrap();
    let report = est.fit(&theta, &x, &TrainConfig { learning_rate: 1e-3, seed: 3, ..TrainConfig::default() }).unwrap();
    assert!(report.best_val_loss < 0.1, "loss {}", report.best_val_loss);
    // Matched pairs score far above mismatched ones.
    let pos = est.logits(&array![[0.5]], &array![[0.5]]).unwrap()[0];
    let neg = est.logits(&array![[0.5]], &array![[-0.5]]).unwrap()[0];
    assert!(pos > neg + 3.0, "{pos} vs {neg}");
}

#[test]
fn classifier_reaches_the_discrete_optimum() {
    // Joint table p(θ, x) = [[0.4, 0.1], [0.1, 0.4]] with exact counts.
    let mut rows = Vec::new();
    for (t, xv, count) in [(0.0, 0.0, 6400), (0.0, 1.0, 1600), (1.0, 0.0, 1600), (1.0, 1.0, 6400)] {
        rows.extend(std::iter::repeat_n([t, xv], count));
    }
    let theta = Array2::from_shape_fn((rows.len(), 1), |(i, _)| rows[i][0]);
    let x = Array2::from_shape_fn((rows.len(), 1), |(i, _)| rows[i][1]);
    let mut est = RatioEstimator::new(&EstimatorConfig::default(), 1, 1, 8).unwrap();
    est.fit(&theta, &x, &TrainConfig { seed: 8, ..TrainConfig::default() }).unwrap();
    // Optimal logit is log p(θ, x) / p(θ)p(x).
    for (t, xv, want) in
        [(0.0, 0.0, 1.6f64.ln()), (0.0, 1.0, 0.4f64.ln()), (1.0, 0.0, 0.4f64.ln()), (1.0, 1.0, 1.6f64.ln())]
    {
        let got = est.logits(&array![[t]], &array![[xv]]).unwrap()[0];
        assert_abs_diff_eq!(got, want, epsilon = 0.1);
    }
}
