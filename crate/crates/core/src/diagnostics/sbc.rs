use ndarray::Array2;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::DiagnosticReport;
use crate::distributions::Distribution;
use crate::error::{check_dim, invalid, Result, SbiError};
use crate::rng::Rng;
use crate::simgym::{simulate_parameters, Simulator};

const MAX_SKIP_FRACTION: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbcResult {
    /// One row per completed trial, one rank per parameter dimension.
    pub ranks: Vec<Vec<usize>>,
    /// Posterior draws per trial; ranks lie in `0..=l`.
    pub l: usize,
    pub p_values: Vec<f64>,
    pub completed: usize,
    pub skipped: usize,
}

/// Kolmogorov distribution tail `P(K > λ)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = 2.0 * (-1f64).powi(j - 1) * (-2.0 * jf * jf * lambda * lambda).exp();
        s += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

/// KS test of ranks against the discrete uniform on `{0..l}`.
///
/// `D = max_k |F_n(k) − (k+1)/(l+1)|` over the support points; the p-value
/// uses the asymptotic Kolmogorov law with Stephens' small-sample factor.
pub fn ks_uniform_ranks(ranks: &[usize], l: usize) -> (f64, f64) {
    let n = ranks.len();
    let mut counts = vec![0usize; l + 1];
    for &r in ranks {
        counts[r.min(l)] += 1;
    }
    let mut cum = 0usize;
    let mut d = 0.0f64;
    for (k, c) in counts.iter().enumerate() {
        cum += c;
        let emp = cum as f64 / n as f64;
        let theo = (k + 1) as f64 / (l + 1) as f64;
        d = d.max((emp - theo).abs());
    }
    let sn = (n as f64).sqrt();
    (d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d))
}

/// Simulation-based calibration: for each of `n_trials` trials draw
/// `θ* ~ prior`, `x ~ sim(θ*)`, ask `posterior_fn` for `l` draws at `x`, and
/// record per dimension the number of draws below `θ*`.
///
/// Trials whose simulation is invalid or whose `posterior_fn` fails are
/// skipped; more than 20% skips is an error.
pub fn run_sbc(
    prior: &Distribution,
    sim: &dyn Simulator,
    posterior_fn: &mut dyn FnMut(&[f64], usize, &mut Rng) -> Result<Array2<f64>>,
    n_trials: usize,
    l: usize,
    rng: &mut Rng,
) -> Result<SbcResult> {
    if n_trials < 50 || l < 10 {
        return Err(invalid("SBC needs at least 50 trials and 10 posterior draws per trial"));
    }
    check_dim(sim.theta_dim(), prior.dim())?;
    let d = prior.dim();
    let mut ranks = Vec::with_capacity(n_trials);
    let mut skipped = 0;
    for _ in 0..n_trials {
        let theta = prior.sample(1, rng)?;
        let seed = rng.next_u64();
        let x = match simulate_parameters(sim, theta.clone(), 1, seed) {
            Ok(b) if b.valid[0] => b.x.row(0).to_vec(),
            _ => {
                skipped += 1;
                continue;
            }
        };
        match posterior_fn(&x, l, rng) {
            Ok(s) if s.nrows() == l && s.ncols() == d => {
                let r = (0..d).map(|j| s.column(j).iter().filter(|v| **v < theta[[0, j]]).count()).collect();
                ranks.push(r);
            }
            _ => skipped += 1,
        }
    }
    if skipped as f64 > MAX_SKIP_FRACTION * n_trials as f64 {
        return Err(SbiError::Diagnostic(format!("{skipped} of {n_trials} SBC trials failed")));
    }
    let p_values = (0..d)
        .map(|j| {
            let col: Vec<usize> = ranks.iter().map(|r: &Vec<usize>| r[j]).collect();
            ks_uniform_ranks(&col, l).1
        })
        .collect();
    Ok(SbcResult { completed: ranks.len(), ranks, l, p_values, skipped })
}

impl SbcResult {
    pub fn min_p_value(&self) -> f64 {
        self.p_values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Passes when every per-dimension p-value exceeds `alpha`.
    pub fn report(&self, alpha: f64) -> DiagnosticReport {
        let p = self.min_p_value();
        DiagnosticReport::new(
            "sbc",
            p > alpha,
            p,
            alpha,
            json!({
                "p_values": self.p_values,
                "l": self.l,
                "completed": self.completed,
                "skipped": self.skipped,
            }),
        )
    }

    /// Raw ranks: header `trial,rank_0,...`.
    pub fn to_csv(&self) -> String {
        let d = self.p_values.len();
        let mut s = String::from("trial");
        for j in 0..d {
            s.push_str(&format!(",rank_{j}"));
        }
        s.push('\n');
        for (i, r) in self.ranks.iter().enumerate() {
            s.push_str(&i.to_string());
            for v in r {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}
