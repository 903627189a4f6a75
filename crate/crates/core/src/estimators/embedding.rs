use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::neural::{Activation, Graph, Mlp, ParamSet, Tensor, Var};
use crate::rng::Rng;

/// Architecture of the summary network applied to conditioning inputs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EmbeddingConfig {
    #[default]
    Identity,
    Mlp {
        hidden: usize,
        output_dim: usize,
    },
    /// Deep-set network: per-element `φ`, mean over elements, then `ρ`.
    MeanPool {
        element_dim: usize,
        hidden: usize,
        output_dim: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum EmbeddingNet {
    Identity { dim: usize },
    Mlp { net: Mlp },
    MeanPool { element_dim: usize, phi: Mlp, rho: Mlp },
}

impl EmbeddingNet {
    pub fn build(cfg: &EmbeddingConfig, input_dim: usize, params: &mut ParamSet, rng: &mut Rng) -> Result<Self> {
        Ok(match *cfg {
            EmbeddingConfig::Identity => EmbeddingNet::Identity { dim: input_dim },
            EmbeddingConfig::Mlp { hidden, output_dim } => EmbeddingNet::Mlp {
                net: Mlp::new(params, "embedding", &[input_dim, hidden, hidden, output_dim], Activation::Relu, rng),
            },
            EmbeddingConfig::MeanPool { element_dim, hidden, output_dim } => {
                if element_dim == 0 || !input_dim.is_multiple_of(element_dim) {
                    return Err(invalid(format!(
                        "mean-pool embedding: input width {input_dim} is not a multiple of element_dim {element_dim}"
                    )));
                }
                let phi = Mlp::new(params, "embedding.phi", &[element_dim, hidden, hidden], Activation::Relu, rng);
                let rho = Mlp::new(params, "embedding.rho", &[hidden, hidden, output_dim], Activation::Relu, rng);
                EmbeddingNet::MeanPool { element_dim, phi, rho }
            }
        })
    }

    pub fn output_dim(&self) -> usize {
        match self {
            EmbeddingNet::Identity { dim } => *dim,
            EmbeddingNet::Mlp { net } => net.output_dim(),
            EmbeddingNet::MeanPool { rho, .. } => rho.output_dim(),
        }
    }

    pub fn is_permutation_invariant(&self) -> bool {
        matches!(self, EmbeddingNet::MeanPool { .. })
    }

    /// Width of one set element, if this is a set network.
    pub fn element_dim(&self) -> Option<usize> {
        match self {
            EmbeddingNet::MeanPool { element_dim, .. } => Some(*element_dim),
            _ => None,
        }
    }

    /// Checks that `width` is an acceptable input width.
    pub fn check_input(&self, width: usize, trained_width: usize) -> Result<()> {
        match self {
            EmbeddingNet::MeanPool { element_dim, .. } => {
                if width == 0 {
                    return Err(invalid("embedding: empty set"));
                }
                if !width.is_multiple_of(*element_dim) {
                    return Err(invalid(format!("embedding: width {width} is not a multiple of {element_dim}")));
                }
                Ok(())
            }
            _ => crate::error::check_dim(trained_width, width),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        match self {
            EmbeddingNet::Identity { .. } => x,
            EmbeddingNet::Mlp { net } => net.forward(g, x),
            EmbeddingNet::MeanPool { element_dim, phi, rho } => {
                let width = g.shape(x)[1];
                let n = width / element_dim;
                let mut terms: Vec<Var> = (0..n)
                    .map(|k| {
                        let e = g.slice_cols(x, k * element_dim, *element_dim);
                        let h = phi.forward(g, e);
                        phi.activation.apply(g, h)
                    })
                    .collect();
                // Pairwise summation: n identical terms sum exactly for n a power of two.
                while terms.len() > 1 {
                    let mut next = Vec::with_capacity(terms.len().div_ceil(2));
                    for pair in terms.chunks(2) {
                        next.push(if pair.len() == 2 { g.add(pair[0], pair[1]) } else { pair[0] });
                    }
                    terms = next;
                }
                let pooled = g.scale(terms[0], 1.0 / n as f64);
                rho.forward(g, pooled)
            }
        }
    }

    /// Embeds a single input vector (or flattened set).
    pub fn embed(&self, params: &ParamSet, x: &[f64]) -> Result<Vec<f64>> {
        if x.is_empty() {
            return Err(invalid("embedding: empty input"));
        }
        if let Some(e) = self.element_dim() {
            if !x.len().is_multiple_of(e) {
                return Err(invalid(format!("embedding: width {} is not a multiple of {e}", x.len())));
            }
        }
        if let EmbeddingNet::Mlp { net } = self {
            crate::error::check_dim(net.input_dim(), x.len())?;
        }
        let mut row = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("one row");
        if let Some(e) = self.element_dim() {
            canonicalize_sets(&mut row, e);
        }
        let mut g = Graph::new(params);
        let v = g.input(Tensor::from_array(&row));
        let out = self.forward(&mut g, v);
        Ok(g.value(out).data().to_vec())
    }
}

/// Sorts the elements of every row-encoded set lexicographically, so that
/// pooled sums are accumulated in the same order for any permutation of the
/// set. Makes permutation invariance exact in floating point.
pub fn canonicalize_sets(x: &mut Array2<f64>, element_dim: usize) {
    let width = x.ncols();
    if element_dim == 0 || width <= element_dim {
        return;
    }
    for mut row in x.rows_mut() {
        let mut elems: Vec<Vec<f64>> = row.to_vec().chunks(element_dim).map(|c| c.to_vec()).collect();
        elems.sort_by(|a, b| {
            a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        });
        for (dst, v) in row.iter_mut().zip(elems.into_iter().flatten()) {
            *dst = v;
        }
    }
}
