//! Random-walk Metropolis–Hastings and axis-wise slice sampling.
//!
//! All chains advance together; MH evaluates the target once per step for the
//! whole `[chains × d]` block of proposals. Post-warmup draws are pooled
//! round-robin (step 0 of every chain, then step 1, ...).

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{eval_target, normalize_log_weights, InitStrategy, LogDensityTarget, McmcConfig};
use crate::distributions::Distribution;
use crate::error::{check_dim, invalid, Result, SbiError};
use crate::rng::Rng;

const INIT_POOL: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McmcDiagnostics {
    pub sampler: String,
    pub chains: usize,
    pub warmup: usize,
    pub thin: usize,
    /// Post-warmup iterations per chain (before thinning).
    pub iterations: usize,
    /// Post-warmup acceptance rate of each chain.
    pub acceptance: Vec<f64>,
    /// Split-R̂ per dimension over all post-warmup iterations.
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
    pub final_scale: f64,
    /// Proposal scale after every iteration, warmup included.
    pub scale_trace: Vec<f64>,
    pub config: McmcConfig,
    pub seed: Option<u64>,
}

impl McmcDiagnostics {
    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean_acceptance(&self) -> f64 {
        self.acceptance.iter().sum::<f64>() / self.acceptance.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McmcResult {
    pub samples: Array2<f64>,
    pub diagnostics: McmcDiagnostics,
}

/// Starting states for every chain, with their log-densities.
fn initial_states(
    target: &dyn LogDensityTarget,
    cfg: &McmcConfig,
    init: &Distribution,
    rng: &mut Rng,
) -> Result<(Array2<f64>, Vec<f64>)> {
    check_dim(target.dim(), init.dim())?;
    let pool_size = match cfg.init {
        InitStrategy::PriorDraw => cfg.chains,
        InitStrategy::ResampleBestOf1024 => INIT_POOL,
    };
    let pool = init.sample(pool_size, rng)?;
    let lp = eval_target(target, &pool)?;
    if lp.iter().all(|v| *v == f64::NEG_INFINITY) {
        return Err(SbiError::Sampling("every MCMC initialization has zero target density".into()));
    }
    let picks: Vec<usize> = match cfg.init {
        InitStrategy::PriorDraw => {
            // Chains that start outside the support take over a finite start.
            let finite: Vec<usize> = (0..pool_size).filter(|&i| lp[i] > f64::NEG_INFINITY).collect();
            let mut k = 0;
            (0..cfg.chains)
                .map(|i| {
                    if lp[i] > f64::NEG_INFINITY {
                        i
                    } else {
                        k += 1;
                        finite[(k - 1) % finite.len()]
                    }
                })
                .collect()
        }
        InitStrategy::ResampleBestOf1024 => {
            let w = normalize_log_weights(&lp)?;
            (0..cfg.chains)
                .map(|_| {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    for (i, wi) in w.iter().enumerate() {
                        acc += wi;
                        if u < acc {
                            return i;
                        }
                    }
                    w.iter().rposition(|v| *v > 0.0).expect("some weight is positive")
                })
                .collect()
        }
    };
    let d = target.dim();
    let mut states = Array2::<f64>::zeros((cfg.chains, d));
    let mut lps = Vec::with_capacity(cfg.chains);
    for (c, &i) in picks.iter().enumerate() {
        states.row_mut(c).assign(&pool.row(i));
        lps.push(lp[i]);
    }
    Ok((states, lps))
}

/// Per-chain post-warmup traces, `[chain][iteration][dim]` flattened per chain.
struct Traces {
    d: usize,
    chains: Vec<Vec<f64>>,
}

impl Traces {
    fn new(chains: usize, d: usize, iterations: usize) -> Self {
        Self { d, chains: (0..chains).map(|_| Vec::with_capacity(iterations * d)).collect() }
    }

    fn record(&mut self, states: &Array2<f64>) {
        for (c, row) in states.rows().into_iter().enumerate() {
            self.chains[c].extend(row.iter());
        }
    }

    fn dim_series(&self, j: usize) -> Vec<Vec<f64>> {
        self.chains.iter().map(|ch| ch.iter().skip(j).step_by(self.d).copied().collect()).collect()
    }

    fn pool(&self, n: usize, thin: usize) -> Array2<f64> {
        let iters = self.chains[0].len() / self.d;
        let mut out = Vec::with_capacity(n * self.d);
        let mut taken = 0;
        'outer: for t in (thin - 1..iters).step_by(thin) {
            for ch in &self.chains {
                out.extend_from_slice(&ch[t * self.d..(t + 1) * self.d]);
                taken += 1;
                if taken == n {
                    break 'outer;
                }
            }
        }
        Array2::from_shape_vec((n, self.d), out).expect("enough pooled draws")
    }

    fn rhat_ess(&self) -> (Vec<f64>, Vec<f64>) {
        (0..self.d)
            .map(|j| {
                let s = self.dim_series(j);
                (split_rhat(&s), effective_sample_size(&s))
            })
            .unzip()
    }
}

fn iterations_for(n: usize, cfg: &McmcConfig) -> usize {
    n.div_ceil(cfg.chains) * cfg.thin
}

/// Gaussian random-walk Metropolis–Hastings with chains evaluated as one batch.
///
/// During warmup the step size follows a Robbins–Monro recursion on its
/// logarithm toward `cfg.target_acceptance`; it is frozen afterwards.
pub fn mh_sample(
    target: &dyn LogDensityTarget,
    cfg: &McmcConfig,
    n: usize,
    init: &Distribution,
    rng: &mut Rng,
) -> Result<McmcResult> {
    cfg.validate()?;
    if n == 0 {
        return Err(invalid("mh_sample: n must be at least 1"));
    }
    let d = target.dim();
    let (mut states, mut lps) = initial_states(target, cfg, init, rng)?;
    let iterations = iterations_for(n, cfg);
    let mut traces = Traces::new(cfg.chains, d, iterations);
    let mut accepted = vec![0usize; cfg.chains];
    let mut log_scale = cfg.scale.ln();
    let mut scale_trace = Vec::with_capacity(cfg.warmup + iterations);

    for step in 0..cfg.warmup + iterations {
        let scale = log_scale.exp();
        let mut proposal = states.clone();
        proposal.iter_mut().for_each(|v| *v += scale * rng.sample::<f64, _>(StandardNormal));
        let lp_prop = eval_target(target, &proposal)?;
        let mut n_acc = 0;
        for c in 0..cfg.chains {
            let u: f64 = rng.random();
            if u.ln() < lp_prop[c] - lps[c] {
                states.row_mut(c).assign(&proposal.row(c));
                lps[c] = lp_prop[c];
                n_acc += 1;
                if step >= cfg.warmup {
                    accepted[c] += 1;
                }
            }
        }
        if step < cfg.warmup {
            let rate = n_acc as f64 / cfg.chains as f64;
            let gain = 1.0 / ((step + 1) as f64).powf(0.6);
            log_scale += gain * (rate - cfg.target_acceptance);
        } else {
            traces.record(&states);
        }
        scale_trace.push(log_scale.exp());
    }

    let (rhat, ess) = traces.rhat_ess();
    Ok(McmcResult {
        samples: traces.pool(n, cfg.thin),
        diagnostics: McmcDiagnostics {
            sampler: "mh".into(),
            chains: cfg.chains,
            warmup: cfg.warmup,
            thin: cfg.thin,
            iterations,
            acceptance: accepted.iter().map(|&a| a as f64 / iterations as f64).collect(),
            rhat,
            ess,
            final_scale: log_scale.exp(),
            scale_trace,
            config: cfg.clone(),
            seed: None,
        },
    })
}

fn eval_one(target: &dyn LogDensityTarget, x: &[f64]) -> Result<f64> {
    let a = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("one row");
    Ok(eval_target(target, &a)?[0])
}

/// Axis-wise slice sampling with stepping out (Neal 2003), cycling through
/// coordinates once per iteration.
pub fn slice_sample(
    target: &dyn LogDensityTarget,
    cfg: &McmcConfig,
    n: usize,
    init: &Distribution,
    rng: &mut Rng,
) -> Result<McmcResult> {
    cfg.validate()?;
    if n == 0 {
        return Err(invalid("slice_sample: n must be at least 1"));
    }
    let d = target.dim();
    let w = cfg.slice_width;
    let m = cfg.max_step_out;
    let (mut states, mut lps) = initial_states(target, cfg, init, rng)?;
    let iterations = iterations_for(n, cfg);
    let mut traces = Traces::new(cfg.chains, d, iterations);

    for step in 0..cfg.warmup + iterations {
        for c in 0..cfg.chains {
            let mut x: Vec<f64> = states.row(c).to_vec();
            let mut lx = lps[c];
            for j in 0..d {
                let x0 = x[j];
                let u: f64 = rng.random();
                let level = lx + (1.0 - u).ln();
                let mut left = x0 - w * rng.random::<f64>();
                let mut right = left + w;
                let mut jl = (m as f64 * rng.random::<f64>()).floor() as usize;
                let mut jr = (m - 1).saturating_sub(jl);
                let at = |v: f64, x: &mut Vec<f64>| -> Result<f64> {
                    x[j] = v;
                    eval_one(target, x)
                };
                while jl > 0 && at(left, &mut x)? > level {
                    left -= w;
                    jl -= 1;
                }
                while jr > 0 && at(right, &mut x)? > level {
                    right += w;
                    jr -= 1;
                }
                let mut shrinks = 0;
                loop {
                    let cand = left + rng.random::<f64>() * (right - left);
                    let lc = at(cand, &mut x)?;
                    if lc > level {
                        lx = lc;
                        break;
                    }
                    if cand < x0 {
                        left = cand;
                    } else {
                        right = cand;
                    }
                    shrinks += 1;
                    if shrinks > 200 {
                        // Interval collapsed onto x0 in floating point.
                        x[j] = x0;
                        break;
                    }
                }
            }
            states.row_mut(c).iter_mut().zip(&x).for_each(|(s, v)| *s = *v);
            lps[c] = lx;
        }
        if step >= cfg.warmup {
            traces.record(&states);
        }
    }

    let (rhat, ess) = traces.rhat_ess();
    Ok(McmcResult {
        samples: traces.pool(n, cfg.thin),
        diagnostics: McmcDiagnostics {
            sampler: "slice".into(),
            chains: cfg.chains,
            warmup: cfg.warmup,
            thin: cfg.thin,
            iterations,
            acceptance: vec![1.0; cfg.chains],
            rhat,
            ess,
            final_scale: w,
            scale_trace: Vec::new(),
            config: cfg.clone(),
            seed: None,
        },
    })
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, s)
}

/// Split-R̂: each chain is halved and the potential scale reduction is
/// computed over the `2m` half-chains. NaN with fewer than 4 draws per chain.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let len = chains.iter().map(Vec::len).min().unwrap_or(0);
    let half = len / 2;
    if half < 2 {
        return f64::NAN;
    }
    let mut parts: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for ch in chains {
        parts.push(&ch[..half]);
        parts.push(&ch[len - half..len]);
    }
    let n = half as f64;
    let stats: Vec<(f64, f64)> = parts.iter().map(|p| mean_var(p)).collect();
    let m = stats.len() as f64;
    let grand = stats.iter().map(|s| s.0).sum::<f64>() / m;
    let b = n / (m - 1.0) * stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m;
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Multi-chain effective sample size from variogram autocorrelations,
/// truncated at the first negative pair sum.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let m = chains.len();
    if n < 4 || m == 0 {
        return f64::NAN;
    }
    let stats: Vec<(f64, f64)> = chains.iter().map(|c| mean_var(&c[..n])).collect();
    let nf = n as f64;
    let grand = stats.iter().map(|s| s.0).sum::<f64>() / m as f64;
    let b = if m > 1 { nf / (m as f64 - 1.0) * stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>() } else { 0.0 };
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m as f64;
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    if var_plus == 0.0 {
        return (m * n) as f64;
    }
    let rho = |t: usize| {
        let v: f64 = chains.iter().map(|c| (t..n).map(|i| (c[i] - c[i - t]).powi(2)).sum::<f64>()).sum::<f64>()
            / (m as f64 * (nf - t as f64));
        1.0 - v / (2.0 * var_plus)
    };
    let mut sum = 0.0;
    let mut t = 1;
    while t + 1 < n {
        let pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        sum += pair;
        t += 2;
    }
    (m * n) as f64 / (1.0 + 2.0 * sum)
}
