//! The preconfigured training loop: seeded train/validation split, mini-batch
//! Adam with global-norm clipping, and early stopping on validation loss.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::optim::Adam;
use super::params::ParamSet;
use crate::error::{invalid, Result, SbiError};
use crate::rng::{labeled_seed, rng_from_seed, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub validation_fraction: f64,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            batch_size: 200,
            validation_fraction: 0.1,
            patience: 20,
            max_epochs: 1 << 14,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(invalid("validation_fraction must lie in (0, 1)"));
        }
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.max_epochs == 0 || !(self.clip_norm > 0.0) {
            return Err(invalid("learning_rate, batch_size, max_epochs and clip_norm must be positive"));
        }
        Ok(())
    }
}

/// Anything owning a [`ParamSet`] can be trained.
pub trait Model {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss per epoch, evaluated after the epoch's updates.
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Epoch (0-based) whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub n_train: usize,
    pub n_val: usize,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.val_loss.len()
    }
}

/// Splits `0..n` into mini-batches; a trailing batch of one row is merged into
/// its predecessor (pairwise losses need at least two rows).
fn batches(idx: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = idx.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let n = out.len();
        let start = (n - 1) * size;
        out[n - 1] = &idx[start..];
    }
    out
}

/// Trains `model` on `n` examples addressed by index.
///
/// `loss` builds the mean loss of the given rows in the graph; the generator it
/// receives is the training stream (or a fixed stream during validation, so
/// validation losses of different epochs are comparable).
pub fn train<M, F>(model: &mut M, n: usize, cfg: &TrainConfig, mut loss: F) -> Result<TrainReport>
where
    M: Model,
    F: FnMut(&M, &mut Graph, &[usize], &mut Rng) -> Result<Var>,
{
    cfg.validate()?;
    let mut split_rng = rng_from_seed(labeled_seed(cfg.seed, "split"));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut split_rng);
    let n_val = ((n as f64 * cfg.validation_fraction).floor() as usize).max(1);
    if n < n_val + 2 {
        return Err(invalid(format!("need at least 2 training rows after the validation split (n = {n})")));
    }
    let val_idx: Vec<usize> = order[..n_val].to_vec();
    let mut train_idx: Vec<usize> = order[n_val..].to_vec();
    let mut rng = rng_from_seed(labeled_seed(cfg.seed, "batches"));
    let val_seed = labeled_seed(cfg.seed, "validation");

    let mut opt = Adam::new(model.params(), cfg.learning_rate);
    let mut report =
        TrainReport { n_train: train_idx.len(), n_val, best_val_loss: f64::INFINITY, ..Default::default() };
    let mut best = model.params().clone();
    let mut since_best = 0usize;

    for epoch in 0..cfg.max_epochs {
        train_idx.shuffle(&mut rng);
        for (b, rows) in batches(&train_idx, cfg.batch_size).into_iter().enumerate() {
            let mut grads = {
                let mut g = Graph::new(model.params());
                let l = loss(model, &mut g, rows, &mut rng)?;
                let value = g.value(l).item();
                if !value.is_finite() {
                    return Err(SbiError::NonFiniteLoss { epoch, batch: b });
                }
                g.backward(l)
            };
            grads.clip_global_norm(cfg.clip_norm);
            opt.step(model.params_mut(), &grads);
        }

        let mut sorted_train = train_idx.clone();
        sorted_train.sort_unstable();
        let train_loss = evaluate(model, &sorted_train, cfg.batch_size, val_seed, epoch, &mut loss)?;
        let val_loss = evaluate(model, &val_idx, cfg.batch_size, val_seed, epoch, &mut loss)?;
        report.train_loss.push(train_loss);
        report.val_loss.push(val_loss);

        if val_loss < report.best_val_loss {
            report.best_val_loss = val_loss;
            report.best_epoch = epoch;
            best.clone_from(model.params());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.patience {
                break;
            }
        }
    }
    *model.params_mut() = best;
    Ok(report)
}

/// Row-weighted mean loss over `idx`.
fn evaluate<M, F>(model: &M, idx: &[usize], batch_size: usize, seed: u64, epoch: usize, loss: &mut F) -> Result<f64>
where
    M: Model,
    F: FnMut(&M, &mut Graph, &[usize], &mut Rng) -> Result<Var>,
{
    let mut rng = rng_from_seed(seed);
    let mut total = 0.0;
    for (b, rows) in batches(idx, batch_size).into_iter().enumerate() {
        let mut g = Graph::new(model.params());
        let l = loss(model, &mut g, rows, &mut rng)?;
        let v = g.value(l).item();
        if !v.is_finite() {
            return Err(SbiError::NonFiniteLoss { epoch, batch: b });
        }
        total += v * rows.len() as f64;
    }
    Ok(total / idx.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::mlp::{Activation, Mlp};
    use crate::neural::tensor::Tensor;

    struct Regressor {
        params: ParamSet,
        net: Mlp,
    }

    impl Model for Regressor {
        fn params(&self) -> &ParamSet {
            &self.params
        }
        fn params_mut(&mut self) -> &mut ParamSet {
            &mut self.params
        }
    }

    fn regressor(seed: u64) -> Regressor {
        let mut params = ParamSet::default();
        let net = Mlp::new(&mut params, "net", &[1, 8, 1], Activation::Tanh, &mut rng_from_seed(seed));
        Regressor { params, net }
    }

    fn mse_loss<'a>(
        xs: &'a [f64],
        ys: &'a [f64],
    ) -> impl FnMut(&Regressor, &mut Graph, &[usize], &mut Rng) -> Result<Var> + 'a {
        move |m, g, rows, _| {
            let x = g.input(Tensor::from_vec(rows.len(), 1, rows.iter().map(|&i| xs[i]).collect()));
            let y = g.input(Tensor::from_vec(rows.len(), 1, rows.iter().map(|&i| ys[i]).collect()));
            let p = m.net.forward(g, x);
            let r = g.sub(p, y);
            let s = g.square(r);
            Ok(g.mean(s))
        }
    }

    #[test]
    fn identical_rows_give_equal_train_and_val_loss() {
        let xs = vec![0.3; 40];
        let ys = vec![1.2; 40];
        let mut m = regressor(1);
        let cfg = TrainConfig { max_epochs: 15, batch_size: 8, learning_rate: 1e-2, ..Default::default() };
        let r = train(&mut m, 40, &cfg, mse_loss(&xs, &ys)).unwrap();
        for (t, v) in r.train_loss.iter().zip(&r.val_loss) {
            assert!((t - v).abs() < 1e-9);
        }
    }

    #[test]
    fn patience_zero_stops_at_first_non_improving_epoch() {
        let xs: Vec<f64> = (0..60).map(|i| i as f64 / 60.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (6.0 * x).sin()).collect();
        let mut m = regressor(2);
        let cfg =
            TrainConfig { patience: 0, learning_rate: 0.3, batch_size: 10, max_epochs: 500, ..Default::default() };
        let r = train(&mut m, 60, &cfg, mse_loss(&xs, &ys)).unwrap();
        let last = r.epochs() - 1;
        assert!(r.epochs() < 500);
        assert!(r.val_loss[last] >= r.best_val_loss);
        for e in 1..last {
            assert!(r.val_loss[e] < r.val_loss[e - 1], "stopped late at epoch {e}");
        }
    }

    #[test]
    fn deterministic_and_keeps_best() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 0.5).collect();
        let cfg = TrainConfig { max_epochs: 40, batch_size: 16, learning_rate: 1e-2, seed: 5, ..Default::default() };
        let mut a = regressor(3);
        let mut b = regressor(3);
        let ra = train(&mut a, 100, &cfg, mse_loss(&xs, &ys)).unwrap();
        let rb = train(&mut b, 100, &cfg, mse_loss(&xs, &ys)).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a.params, b.params);
        assert!(ra.best_val_loss <= *ra.val_loss.last().unwrap());
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let xs = vec![1.0; 20];
        let ys = vec![f64::NAN; 20];
        let mut m = regressor(4);
        let err = train(&mut m, 20, &TrainConfig::default(), mse_loss(&xs, &ys)).unwrap_err();
        assert!(matches!(err, SbiError::NonFiniteLoss { epoch: 0, batch: 0 }));
    }

    #[test]
    fn trailing_singleton_batch_is_merged() {
        let idx: Vec<usize> = (0..11).collect();
        let b = batches(&idx, 5);
        assert_eq!(b.len(), 2);
        assert_eq!(b[1].len(), 6);
    }
}
