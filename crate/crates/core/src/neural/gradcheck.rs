//! Central finite-difference gradient checking.

use super::graph::{Graph, Var};
use super::params::ParamSet;

/// Worst-case mismatch between autodiff and finite-difference gradients.
#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Compares `backward` against central differences with step `h` for up to
/// `max_checks` scalar parameters (evenly strided over the flattened set).
///
/// The relative error is `|a − n| / max(|a|, |n|, floor)`; the floor keeps
/// vanishing gradients from turning round-off into huge ratios.
pub fn check_gradients<F>(params: &ParamSet, h: f64, floor: f64, max_checks: usize, f: F) -> GradCheck
where
    F: Fn(&mut Graph) -> Var,
{
    let analytic = {
        let mut g = Graph::new(params);
        let l = f(&mut g);
        g.backward(l)
    };
    let flat_grad: Vec<f64> = analytic.grads.iter().flat_map(|t| t.data().iter().copied()).collect();
    let total = params.count();
    let stride = (total / max_checks.max(1)).max(1);
    let mut work = params.clone();
    let eval = |p: &ParamSet| {
        let mut g = Graph::new(p);
        let l = f(&mut g);
        g.value(l).item()
    };
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut k = 0;
    while k < total {
        let orig = work.flat_get(k);
        work.flat_set(k, orig + h);
        let up = eval(&work);
        work.flat_set(k, orig - h);
        let down = eval(&work);
        work.flat_set(k, orig);
        let numeric = (up - down) / (2.0 * h);
        let a = flat_grad[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        worst = worst.max(rel);
        checked += 1;
        k += stride;
    }
    GradCheck { max_rel_error: worst, checked }
}
