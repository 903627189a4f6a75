use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng as _;
use sbi_core::distributions::{linear_gaussian_posterior, Distribution};
use sbi_core::rng::rng_from_seed;
use statrs::distribution::{ContinuousCDF, Normal, Uniform};

fn random_spd(d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.5
}

fn to_nd(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

#[test]
fn conjugate_posterior_matches_nalgebra_solve() {
    for seed in 0..5 {
        let d = 3;
        let cov0 = random_spd(d, seed);
        let lik = random_spd(d, seed + 100);
        let mu0 = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let x = DVector::from_vec(vec![1.0, 0.5, -0.7]);

        let p0 = cov0.clone().try_inverse().unwrap();
        let pl = lik.clone().try_inverse().unwrap();
        let cov = (&p0 + &pl).try_inverse().unwrap();
        let mean = &cov * (&p0 * &mu0 + &pl * &x);

        let prior = Distribution::gaussian_full(mu0.as_slice().to_vec(), &to_nd(&cov0)).unwrap();
        let post = linear_gaussian_posterior(&prior, &to_nd(&lik), x.as_slice()).unwrap();
        let (m, c) = post.gaussian_moments().unwrap();
        for i in 0..d {
            assert_abs_diff_eq!(m[i], mean[i], epsilon = 1e-10);
            for j in 0..d {
                assert_abs_diff_eq!(c[[i, j]], cov[(i, j)], epsilon = 1e-10);
            }
        }

        // Density against the closed form.
        let t = [0.1, 0.2, 0.3];
        let r = DVector::from_row_slice(&t) - &mean;
        let chol = cov.clone().cholesky().unwrap();
        let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let quad = (r.transpose() * cov.try_inverse().unwrap() * &r)[(0, 0)];
        let want = -0.5 * (quad + logdet + d as f64 * (2.0 * std::f64::consts::PI).ln());
        assert_abs_diff_eq!(post.log_prob(&t).unwrap(), want, epsilon = 1e-10);
    }
}

/// Kolmogorov–Smirnov statistic of `xs` against `cdf`.
fn ks(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

// 1.63 / sqrt(n) is the 1% critical value.
fn ks_limit(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

#[test]
fn one_dimensional_samples_follow_their_cdf() {
    let n = 5000;
    let mut rng = rng_from_seed(7);

    let g = Distribution::gaussian_diag(vec![1.5], vec![4.0]).unwrap();
    let s = g.sample(n, &mut rng).unwrap().column(0).to_vec();
    let normal = Normal::new(1.5, 2.0).unwrap();
    assert!(ks(s, |x| normal.cdf(x)) < ks_limit(n));

    let u = Distribution::uniform_box(vec![-2.0], vec![3.0]).unwrap();
    let s = u.sample(n, &mut rng).unwrap().column(0).to_vec();
    let unif = Uniform::new(-2.0, 3.0).unwrap();
    assert!(ks(s, |x| unif.cdf(x)) < ks_limit(n));

    let parts = vec![
        Distribution::gaussian_diag(vec![-2.0], vec![0.25]).unwrap(),
        Distribution::gaussian_diag(vec![1.0], vec![1.0]).unwrap(),
    ];
    let mix = Distribution::mixture(vec![0.3, 0.7], parts).unwrap();
    let s = mix.sample(n, &mut rng).unwrap().column(0).to_vec();
    let (a, b) = (Normal::new(-2.0, 0.5).unwrap(), Normal::new(1.0, 1.0).unwrap());
    assert!(ks(s, |x| 0.3 * a.cdf(x) + 0.7 * b.cdf(x)) < ks_limit(n));
}

#[test]
fn categorical_frequencies_match_probabilities() {
    let c = Distribution::categorical(vec![0.2, 0.5, 0.3]).unwrap();
    let s = c.sample(20_000, &mut rng_from_seed(1)).unwrap();
    for (k, p) in [0.2, 0.5, 0.3].iter().enumerate() {
        let f = s.iter().filter(|v| **v == k as f64).count() as f64 / 20_000.0;
        assert_abs_diff_eq!(f, *p, epsilon = 0.015);
        assert_abs_diff_eq!(c.log_prob(&[k as f64]).unwrap(), p.ln(), epsilon = 1e-12);
    }
    assert_eq!(c.log_prob(&[0.5]).unwrap(), f64::NEG_INFINITY);
}

#[test]
fn json_round_trip_preserves_every_kind() {
    let g = Distribution::gaussian_full(vec![0.0, 1.0], &to_nd(&random_spd(2, 3))).unwrap();
    let dists = vec![
        Distribution::uniform_box(vec![0.0], vec![1.0]).unwrap(),
        Distribution::gaussian_diag(vec![0.0, 1.0], vec![1.0, 2.0]).unwrap(),
        g.clone(),
        Distribution::mixture(vec![0.5, 0.5], vec![g.clone(), g.with_scaled_covariance(2.0).unwrap()]).unwrap(),
        Distribution::categorical(vec![0.1, 0.9]).unwrap(),
        Distribution::independent(vec![g, Distribution::categorical(vec![0.1, 0.9]).unwrap()]).unwrap(),
    ];
    for d in dists {
        let back = Distribution::from_json(&d.to_json()).unwrap();
        assert_eq!(back, d);
    }
}

proptest! {
    #[test]
    fn product_density_is_sum_of_parts(a in -3.0f64..3.0, b in -3.0f64..3.0, c in 0.0f64..1.0, m in -1.0f64..1.0, v in 0.1f64..4.0) {
        let g = Distribution::gaussian_diag(vec![m, -m], vec![v, 1.0]).unwrap();
        let u = Distribution::uniform_box(vec![0.0], vec![1.0]).unwrap();
        let p = Distribution::independent(vec![g.clone(), u.clone()]).unwrap();
        let want = g.log_prob(&[a, b]).unwrap() + u.log_prob(&[c]).unwrap();
        prop_assert!((p.log_prob(&[a, b, c]).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn uniform_samples_stay_in_the_box(lo in -5.0f64..5.0, w in 1e-3f64..10.0, seed in 0u64..1000) {
        let u = Distribution::uniform_box(vec![lo, -lo], vec![lo + w, -lo + w]).unwrap();
        let s = u.sample(200, &mut rng_from_seed(seed)).unwrap();
        for r in s.rows() {
            prop_assert!(r[0] >= lo && r[0] < lo + w);
            prop_assert!(r[1] >= -lo && r[1] < -lo + w);
            prop_assert!(u.log_prob(&[r[0], r[1]]).unwrap().is_finite());
        }
        prop_assert_eq!(u.log_prob(&[lo + w, -lo]).unwrap(), f64::NEG_INFINITY);
    }
}
