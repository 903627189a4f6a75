//! Mixture density network head.
//!
//! The backbone maps a conditioning vector to `K` mixture logits, `K·d` means
//! and the entries of `K` lower-triangular Cholesky factors of the component
//! covariances. The head output is laid out quantity by quantity, each block
//! `K` columns wide, so that every per-coordinate quantity is a `[B × K]`
//! slice and all components are processed at once:
//!
//! ```text
//! [ logits | μ_0 .. μ_{d-1} | raw diag_0 .. diag_{d-1} | L_10, L_20, L_21, ... ]
//! ```
//!
//! Diagonal entries are `softplus(raw) + 1e-6`.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::neural::{Activation, Graph, Mlp, ParamSet, Tensor, Var};
use crate::rng::Rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
pub const DIAG_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Mdn {
    pub target_dim: usize,
    pub components: usize,
    pub backbone: Mlp,
}

/// Mixture parameters for one conditioning row.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureParams {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Row-major `d × d` lower-triangular factors.
    pub scale_trils: Vec<Vec<f64>>,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Mdn {
    pub fn head_width(target_dim: usize, components: usize) -> usize {
        let d = target_dim;
        components * (1 + 2 * d + d * (d - 1) / 2)
    }

    pub fn new(
        params: &mut ParamSet,
        target_dim: usize,
        cond_dim: usize,
        components: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        let mut widths = vec![cond_dim];
        widths.extend_from_slice(hidden);
        widths.push(Self::head_width(target_dim, components));
        let backbone = Mlp::new(params, "mdn", &widths, activation, rng);
        Self { target_dim, components, backbone }
    }

    fn offdiag_block(&self, i: usize, j: usize) -> usize {
        // Strictly-lower entries in row-major order: (1,0), (2,0), (2,1), ...
        let d = self.target_dim;
        1 + 2 * d + i * (i - 1) / 2 + j
    }

    /// `log q(y | c)` per row, `[B × 1]`. `y` is `[B × d]`, `c` is `[B × m]`.
    pub fn log_prob(&self, g: &mut Graph, y: Var, c: Var) -> Var {
        let (k, d) = (self.components, self.target_dim);
        let head = self.backbone.forward(g, c);
        let logits = g.slice_cols(head, 0, k);
        let log_w = g.log_softmax_rows(logits);

        let mut zs: Vec<Var> = Vec::with_capacity(d);
        let mut quad: Option<Var> = None;
        let mut log_det: Option<Var> = None;
        for i in 0..d {
            let mu = g.slice_cols(head, (1 + i) * k, k);
            let yi = g.slice_cols(y, i, 1);
            let mut r = g.sub(yi, mu);
            for (j, &zj) in zs.iter().enumerate() {
                let lij = g.slice_cols(head, self.offdiag_block(i, j) * k, k);
                let t = g.mul(lij, zj);
                r = g.sub(r, t);
            }
            let raw = g.slice_cols(head, (1 + d + i) * k, k);
            let sp = g.softplus(raw);
            let lii = g.add_scalar(sp, DIAG_FLOOR);
            let zi = g.div(r, lii);
            let zi2 = g.square(zi);
            let log_lii = g.log(lii);
            quad = Some(match quad {
                None => zi2,
                Some(q) => g.add(q, zi2),
            });
            log_det = Some(match log_det {
                None => log_lii,
                Some(l) => g.add(l, log_lii),
            });
            zs.push(zi);
        }
        let half_quad = g.scale(quad.expect("d ≥ 1"), -0.5);
        let comp = g.sub(half_quad, log_det.expect("d ≥ 1"));
        let comp = g.add_scalar(comp, -0.5 * d as f64 * LN_2PI);
        let joint = g.add(log_w, comp);
        g.logsumexp_rows(joint)
    }

    /// Mixture parameters at each conditioning row.
    pub fn mixture_params(&self, params: &ParamSet, c: &Tensor) -> Vec<MixtureParams> {
        let (k, d) = (self.components, self.target_dim);
        let mut g = Graph::new(params);
        let cv = g.input(c.clone());
        let head = self.backbone.forward(&mut g, cv);
        let h = g.value(head);
        (0..h.rows())
            .map(|r| {
                let row = h.row(r);
                let logits = &row[..k];
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
                let s: f64 = e.iter().sum();
                let weights = e.iter().map(|v| v / s).collect();
                let means = (0..k).map(|c| (0..d).map(|i| row[(1 + i) * k + c]).collect()).collect();
                let scale_trils = (0..k)
                    .map(|c| {
                        let mut l = vec![0.0; d * d];
                        for i in 0..d {
                            l[i * d + i] = softplus(row[(1 + d + i) * k + c]) + DIAG_FLOOR;
                            for j in 0..i {
                                l[i * d + j] = row[self.offdiag_block(i, j) * k + c];
                            }
                        }
                        l
                    })
                    .collect();
                MixtureParams { weights, means, scale_trils }
            })
            .collect()
    }
}

impl MixtureParams {
    /// Ancestral sampling: component by weight, then `μ + L ε`.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
        let d = self.means[0].len();
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut comp = self.weights.len() - 1;
                for (i, w) in self.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        comp = i;
                        break;
                    }
                }
                let eps: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let l = &self.scale_trils[comp];
                (0..d).map(|i| self.means[comp][i] + (0..=i).map(|j| l[i * d + j] * eps[j]).sum::<f64>()).collect()
            })
            .collect()
    }

    /// Log density by explicit per-component evaluation (no autodiff).
    pub fn log_prob(&self, y: &[f64]) -> f64 {
        let d = y.len();
        let terms: Vec<f64> = (0..self.weights.len())
            .map(|c| {
                let l = &self.scale_trils[c];
                let mut z = vec![0.0; d];
                let mut quad = 0.0;
                let mut logdet = 0.0;
                for i in 0..d {
                    let mut r = y[i] - self.means[c][i];
                    for j in 0..i {
                        r -= l[i * d + j] * z[j];
                    }
                    z[i] = r / l[i * d + i];
                    quad += z[i] * z[i];
                    logdet += l[i * d + i].ln();
                }
                self.weights[c].ln() - 0.5 * quad - logdet - 0.5 * d as f64 * LN_2PI
            })
            .collect();
        crate::distributions::log_sum_exp(&terms)
    }
}
