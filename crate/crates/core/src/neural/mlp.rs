use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::ParamSet;
use super::tensor::Tensor;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Tanh => g.tanh(x),
        }
    }
}

/// `x·W + b` with parameters stored in a [`ParamSet`]. An optional constant
/// mask multiplies `W` elementwise (masked autoregressive layers).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: usize,
    pub bias: usize,
    pub n_in: usize,
    pub n_out: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mask: Option<Vec<f64>>,
}

impl Linear {
    /// Uniform `±1/√n_in` initialization for weights and biases.
    pub fn new(params: &mut ParamSet, name: &str, n_in: usize, n_out: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (n_in.max(1) as f64).sqrt();
        let weight = params.push_uniform(format!("{name}.weight"), n_in, n_out, bound, rng);
        let bias = params.push_uniform(format!("{name}.bias"), 1, n_out, bound, rng);
        Self { weight, bias, n_in, n_out, mask: None }
    }

    pub fn with_mask(mut self, mask: Vec<f64>) -> Self {
        assert_eq!(mask.len(), self.n_in * self.n_out, "mask shape");
        self.mask = Some(mask);
        self
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let mut w = g.param(self.weight);
        if let Some(mask) = &self.mask {
            let m = g.input(Tensor::from_vec(self.n_in, self.n_out, mask.clone()));
            w = g.mul(w, m);
        }
        let b = g.param(self.bias);
        g.affine(x, w, b)
    }
}

/// Feed-forward network with a linear output layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `widths` lists input, hidden and output sizes, e.g. `[2, 50, 50, 1]`.
    pub fn new(params: &mut ParamSet, name: &str, widths: &[usize], activation: Activation, rng: &mut Rng) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(params, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self { widths: widths.to_vec(), activation, layers }
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("nonempty widths")
    }

    /// Σ (w_in·w_out + w_out) over layers.
    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, h);
            if i < last {
                h = self.activation.apply(g, h);
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn parameter_count_matches_layers() {
        let mut p = ParamSet::default();
        let m = Mlp::new(&mut p, "m", &[3, 50, 50, 7], Activation::Relu, &mut rng_from_seed(0));
        assert_eq!(m.param_count(), 3 * 50 + 50 + 50 * 50 + 50 + 50 * 7 + 7);
        assert_eq!(p.count(), m.param_count());
        let mut g = Graph::new(&p);
        let x = g.input(Tensor::zeros(4, 3));
        let y = m.forward(&mut g, x);
        assert_eq!(g.shape(y), [4, 7]);
    }
}
