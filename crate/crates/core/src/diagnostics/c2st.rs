use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::DiagnosticReport;
use crate::error::{check_dim, invalid, Result};
use crate::neural::{train, Activation, Graph, Mlp, Model, ParamSet, Standardizer, Tensor, TrainConfig};
use crate::rng::{labeled_seed, rng_from_seed, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct C2stConfig {
    pub folds: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub train: TrainConfig,
}

impl Default for C2stConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            hidden: 50,
            hidden_layers: 2,
            train: TrainConfig {
                learning_rate: 1e-3,
                batch_size: 128,
                patience: 10,
                max_epochs: 200,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct C2stResult {
    /// Mean held-out accuracy over folds.
    pub accuracy: f64,
    pub fold_accuracies: Vec<f64>,
    pub folds: usize,
    pub n_p: usize,
    pub n_q: usize,
}

impl C2stResult {
    pub fn report(&self, threshold: f64) -> DiagnosticReport {
        DiagnosticReport::new(
            "c2st",
            self.accuracy <= threshold,
            self.accuracy,
            threshold,
            json!({ "fold_accuracies": self.fold_accuracies, "n_p": self.n_p, "n_q": self.n_q }),
        )
    }
}

struct Classifier {
    params: ParamSet,
    net: Mlp,
}

impl Model for Classifier {
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

/// Classifier two-sample test: cross-validated accuracy of an MLP telling
/// `samples_p` (label 0) from `samples_q` (label 1). 0.5 means indistinguishable.
pub fn c2st(samples_p: &Array2<f64>, samples_q: &Array2<f64>, cfg: &C2stConfig, rng: &mut Rng) -> Result<C2stResult> {
    check_dim(samples_p.ncols(), samples_q.ncols())?;
    if cfg.folds < 2 {
        return Err(invalid("c2st needs at least 2 folds"));
    }
    let (np, nq) = (samples_p.nrows(), samples_q.nrows());
    if np != nq || np < 200 {
        return Err(invalid(format!("c2st needs equal sample counts of at least 200 (got {np} and {nq})")));
    }
    let pooled = concatenate(Axis(0), &[samples_p.view(), samples_q.view()]).expect("dims checked");
    let z = Tensor::from_array(&Standardizer::fit(&pooled).standardize_rows(&pooled));
    let labels: Vec<f64> = (0..np + nq).map(|i| if i < np { 0.0 } else { 1.0 }).collect();
    let labels = Tensor::from_vec(np + nq, 1, labels);
    let mut order: Vec<usize> = (0..np + nq).collect();
    order.shuffle(rng);
    let run_seed = rng.next_u64();
    let d = pooled.ncols();

    let mut fold_accuracies = Vec::with_capacity(cfg.folds);
    for k in 0..cfg.folds {
        let (a, b) = (k * order.len() / cfg.folds, (k + 1) * order.len() / cfg.folds);
        let test: Vec<usize> = order[a..b].to_vec();
        let fit: Vec<usize> = order[..a].iter().chain(&order[b..]).copied().collect();
        let seed = labeled_seed(run_seed, &format!("fold{k}"));
        let mut params = ParamSet::default();
        let mut widths = vec![d];
        widths.extend(std::iter::repeat_n(cfg.hidden, cfg.hidden_layers));
        widths.push(1);
        let net = Mlp::new(&mut params, "c2st", &widths, Activation::Relu, &mut rng_from_seed(seed));
        let mut model = Classifier { params, net };
        let xs = z.select_rows(&fit);
        let ys = labels.select_rows(&fit);
        let tc = TrainConfig { seed, ..cfg.train.clone() };
        train(&mut model, fit.len(), &tc, |m, g, rows, _| {
            let x = g.input(xs.select_rows(rows));
            let y = g.input(ys.select_rows(rows));
            let l = m.net.forward(g, x);
            // BCE with logits: softplus(ℓ) − y·ℓ.
            let sp = g.softplus(l);
            let yl = g.mul(y, l);
            let per = g.sub(sp, yl);
            Ok(g.mean(per))
        })?;
        let mut g = Graph::new(&model.params);
        let x = g.input(z.select_rows(&test));
        let l = model.net.forward(&mut g, x);
        let logits = g.value(l);
        let correct =
            test.iter().enumerate().filter(|(r, &i)| (logits.get(*r, 0) > 0.0) == (labels.get(i, 0) > 0.5)).count();
        fold_accuracies.push(correct as f64 / test.len() as f64);
    }
    let accuracy = fold_accuracies.iter().sum::<f64>() / cfg.folds as f64;
    Ok(C2stResult { accuracy, fold_accuracies, folds: cfg.folds, n_p: np, n_q: nq })
}
