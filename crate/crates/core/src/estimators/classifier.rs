use rand::Rng as _;

use crate::error::{invalid, Result};
use crate::neural::{Activation, Graph, Mlp, ParamSet, Tensor, Var};
use crate::rng::Rng;

/// Logit `ℓ(θ, x)` of the likelihood-to-evidence ratio, from an MLP over the
/// concatenation `[θ, embedded x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioClassifier {
    pub theta_dim: usize,
    pub embed_dim: usize,
    pub net: Mlp,
}

impl RatioClassifier {
    pub fn new(
        params: &mut ParamSet,
        theta_dim: usize,
        embed_dim: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        let mut widths = vec![theta_dim + embed_dim];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let net = Mlp::new(params, "classifier", &widths, activation, rng);
        Self { theta_dim, embed_dim, net }
    }

    /// Logits `[B × 1]`.
    pub fn logits(&self, g: &mut Graph, theta: Var, emb: Var) -> Var {
        let joint = g.concat_cols(&[theta, emb]);
        self.net.forward(g, joint)
    }
}

/// Uniformly random cyclic permutation (Sattolo): no index maps to itself.
pub fn derangement(n: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(invalid("classifier loss needs a batch of at least 2 rows"));
    }
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..i);
        p.swap(i, j);
    }
    Ok(p)
}

/// Binary cross-entropy with logits, averaged over the joint pairs (label 1)
/// and the shuffled pairs `(θ_σ(i), x_i)` (label 0):
///
/// `½·mean softplus(−ℓ(θ_i, x_i)) + ½·mean softplus(ℓ(θ_σ(i), x_i))`.
///
/// `theta` holds the raw rows so the shuffle can be applied outside the graph.
pub fn classifier_loss(cl: &RatioClassifier, g: &mut Graph, theta: &Tensor, emb: Var, rng: &mut Rng) -> Result<Var> {
    let perm = derangement(theta.rows(), rng)?;
    Ok(classifier_loss_with(cl, g, theta, emb, &perm))
}

pub fn classifier_loss_with(cl: &RatioClassifier, g: &mut Graph, theta: &Tensor, emb: Var, perm: &[usize]) -> Var {
    let pos_theta = g.input(theta.clone());
    let neg_theta = g.input(theta.select_rows(perm));
    let pos = cl.logits(g, pos_theta, emb);
    let neg = cl.logits(g, neg_theta, emb);
    let flipped = g.neg(pos);
    let lp = g.softplus(flipped);
    let ln = g.softplus(neg);
    let mp = g.mean(lp);
    let mn = g.mean(ln);
    let total = g.add(mp, mn);
    g.scale(total, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn derangement_has_no_fixed_points() {
        let mut rng = rng_from_seed(5);
        for n in 2..40 {
            let p = derangement(n, &mut rng).unwrap();
            let mut seen = p.clone();
            seen.sort_unstable();
            assert_eq!(seen, (0..n).collect::<Vec<_>>());
            assert!(p.iter().enumerate().all(|(i, &j)| i != j));
        }
        assert!(derangement(1, &mut rng).is_err());
    }

    #[test]
    fn zero_logit_gives_log_two() {
        let mut params = ParamSet::default();
        let cl = RatioClassifier::new(&mut params, 1, 1, &[4], Activation::Relu, &mut rng_from_seed(0));
        params.zero_all();
        let theta = Tensor::from_vec(3, 1, vec![0.1, 0.2, 0.3]);
        let mut g = Graph::new(&params);
        let x = g.input(Tensor::from_vec(3, 1, vec![1.0, 2.0, 3.0]));
        let l = classifier_loss(&cl, &mut g, &theta, x, &mut rng_from_seed(1)).unwrap();
        assert!((g.value(l).item() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn swapping_identical_rows_leaves_loss_unchanged() {
        let mut params = ParamSet::default();
        let cl = RatioClassifier::new(&mut params, 1, 1, &[8], Activation::Tanh, &mut rng_from_seed(2));
        let theta = Tensor::from_vec(3, 1, vec![0.5, 0.5, -1.0]);
        let xs = Tensor::from_vec(3, 1, vec![0.7, 0.7, 2.0]);
        let eval = |perm: &[usize]| {
            let mut g = Graph::new(&params);
            let x = g.input(xs.clone());
            let l = classifier_loss_with(&cl, &mut g, &theta, x, perm);
            g.value(l).item()
        };
        // Rows 0 and 1 are identical; relabelling them maps one derangement to another.
        assert_eq!(eval(&[1, 2, 0]), eval(&[2, 0, 1].map(|i| [1, 0, 2][i])));
    }
}
