//! Masked autoregressive flow.
//!
//! Each layer is a MADE network emitting a shift `m_i` and log-scale `s_i` for
//! coordinate `i` from the coordinates before it (and the full conditioning
//! vector). Direction convention, data `y` to base `u`:
//!
//! ```text
//! u_i = (y_i − m_i(y_<i, c)) · exp(−s_i(y_<i, c)),   log|det ∂u/∂y| = −Σ_i s_i
//! ```
//!
//! so `log q(y | c) = log N(u; 0, I) − Σ_layers Σ_i s_i`. Coordinates are
//! reversed between layers. Log-scales are clamped to `[−7, 7]`.

use crate::neural::{Activation, Graph, Linear, ParamSet, Tensor, Var};
use crate::rng::Rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
pub const LOG_SCALE_CLAMP: f64 = 7.0;

#[derive(Clone, Debug, PartialEq)]
pub struct MadeLayer {
    pub input: Linear,
    pub context: Linear,
    pub hidden: Vec<Linear>,
    pub shift: Linear,
    pub log_scale: Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Maf {
    pub dim: usize,
    pub cond_dim: usize,
    pub activation: Activation,
    pub layers: Vec<MadeLayer>,
}

/// MADE connectivity masks for `dim` inputs and `hidden` units per layer.
/// Returns (input→hidden, hidden→hidden, hidden→output), each row-major
/// `[n_in × n_out]`.
pub fn made_masks(dim: usize, hidden: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let in_deg: Vec<usize> = (1..=dim).collect();
    let hid_deg: Vec<usize> = (0..hidden).map(|k| if dim > 1 { k % (dim - 1) + 1 } else { 0 }).collect();
    let mut m_in = vec![0.0; dim * hidden];
    for (j, dj) in in_deg.iter().enumerate() {
        for (k, dk) in hid_deg.iter().enumerate() {
            if dk >= dj {
                m_in[j * hidden + k] = 1.0;
            }
        }
    }
    let mut m_hid = vec![0.0; hidden * hidden];
    for (j, dj) in hid_deg.iter().enumerate() {
        for (k, dk) in hid_deg.iter().enumerate() {
            if dk >= dj {
                m_hid[j * hidden + k] = 1.0;
            }
        }
    }
    let mut m_out = vec![0.0; hidden * dim];
    for (k, dk) in hid_deg.iter().enumerate() {
        for (i, di) in in_deg.iter().enumerate() {
            if di > dk {
                m_out[k * dim + i] = 1.0;
            }
        }
    }
    (m_in, m_hid, m_out)
}

impl Maf {
    pub fn new(
        params: &mut ParamSet,
        dim: usize,
        cond_dim: usize,
        n_layers: usize,
        hidden: usize,
        hidden_layers: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        let (m_in, m_hid, m_out) = made_masks(dim, hidden);
        let layers = (0..n_layers)
            .map(|l| {
                let name = format!("maf.{l}");
                let input = Linear::new(params, &format!("{name}.input"), dim, hidden, rng).with_mask(m_in.clone());
                let context = Linear::new(params, &format!("{name}.context"), cond_dim, hidden, rng);
                let hidden_layers = (1..hidden_layers.max(1))
                    .map(|h| {
                        Linear::new(params, &format!("{name}.hidden{h}"), hidden, hidden, rng).with_mask(m_hid.clone())
                    })
                    .collect();
                let shift = Linear::new(params, &format!("{name}.shift"), hidden, dim, rng).with_mask(m_out.clone());
                let log_scale =
                    Linear::new(params, &format!("{name}.log_scale"), hidden, dim, rng).with_mask(m_out.clone());
                MadeLayer { input, context, hidden: hidden_layers, shift, log_scale }
            })
            .collect();
        Self { dim, cond_dim, activation, layers }
    }

    fn reverse(&self) -> Vec<usize> {
        (0..self.dim).rev().collect()
    }

    /// Shift and clamped log-scale of one layer, each `[B × d]`.
    fn made(&self, layer: &MadeLayer, g: &mut Graph, y: Var, c: Var) -> (Var, Var) {
        let a = layer.input.forward(g, y);
        let b = layer.context.forward(g, c);
        let mut h = g.add(a, b);
        h = self.activation.apply(g, h);
        for lin in &layer.hidden {
            h = lin.forward(g, h);
            h = self.activation.apply(g, h);
        }
        let shift = layer.shift.forward(g, h);
        let raw = layer.log_scale.forward(g, h);
        let log_scale = g.clamp(raw, -LOG_SCALE_CLAMP, LOG_SCALE_CLAMP);
        (shift, log_scale)
    }

    /// Data → base transform. Returns `(u, log|det|)`, `[B × d]` and `[B × 1]`.
    pub fn forward(&self, g: &mut Graph, y: Var, c: Var) -> (Var, Var) {
        let perm = self.reverse();
        let mut cur = y;
        let mut log_det: Option<Var> = None;
        for (l, layer) in self.layers.iter().enumerate() {
            if l > 0 {
                cur = g.permute_cols(cur, &perm);
            }
            let (shift, log_scale) = self.made(layer, g, cur, c);
            let centered = g.sub(cur, shift);
            let neg = g.neg(log_scale);
            let inv_scale = g.exp(neg);
            cur = g.mul(centered, inv_scale);
            let s = g.sum_rows(log_scale);
            let ld = g.neg(s);
            log_det = Some(match log_det {
                None => ld,
                Some(acc) => g.add(acc, ld),
            });
        }
        let ld = match log_det {
            Some(v) => v,
            None => {
                let rows = g.shape(y)[0];
                g.constant(rows, 1, 0.0)
            }
        };
        (cur, ld)
    }

    /// `log q(y | c)` per row, `[B × 1]`.
    pub fn log_prob(&self, g: &mut Graph, y: Var, c: Var) -> Var {
        let (u, log_det) = self.forward(g, y, c);
        let u2 = g.square(u);
        let s = g.sum_rows(u2);
        let base = g.scale(s, -0.5);
        let base = g.add_scalar(base, -0.5 * self.dim as f64 * LN_2PI);
        g.add(base, log_det)
    }

    /// Base → data transform of `u` (`[B × d]`) at conditions `c` (`[B × m]`).
    pub fn inverse(&self, params: &ParamSet, u: &Tensor, c: &Tensor) -> Tensor {
        let perm = self.reverse();
        let rows = u.rows();
        let mut cur = u.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            // Invert this layer coordinate by coordinate.
            let mut y = Tensor::zeros(rows, self.dim);
            for i in 0..self.dim {
                let mut g = Graph::new(params);
                let yv = g.input(y.clone());
                let cv = g.input(c.clone());
                let (shift, log_scale) = self.made(layer, &mut g, yv, cv);
                let (sh, ls) = (g.value(shift), g.value(log_scale));
                for r in 0..rows {
                    let v = cur.get(r, i) * ls.get(r, i).exp() + sh.get(r, i);
                    y.set(r, i, v);
                }
            }
            cur = if l > 0 {
                // Undo the reversal applied before this layer.
                let mut back = Tensor::zeros(rows, self.dim);
                for r in 0..rows {
                    for (j, &p) in perm.iter().enumerate() {
                        back.set(r, p, y.get(r, j));
                    }
                }
                back
            } else {
                y
            };
        }
        cur
    }

    /// Data → base transform without building gradients.
    pub fn transform(&self, params: &ParamSet, y: &Tensor, c: &Tensor) -> (Tensor, Vec<f64>) {
        let mut g = Graph::new(params);
        let yv = g.input(y.clone());
        let cv = g.input(c.clone());
        let (u, ld) = self.forward(&mut g, yv, cv);
        (g.value(u).clone(), g.value(ld).data().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masks_are_autoregressive() {
        for dim in 1..5 {
            let hidden = 7;
            let (m_in, m_hid, m_out) = made_masks(dim, hidden);
            // Connectivity input j → output i through two hidden layers must imply i > j.
            for i in 0..dim {
                for j in 0..dim {
                    let mut path = false;
                    for a in 0..hidden {
                        for b in 0..hidden {
                            if m_in[j * hidden + a] > 0.0 && m_hid[a * hidden + b] > 0.0 && m_out[b * dim + i] > 0.0 {
                                path = true;
                            }
                        }
                    }
                    assert!(!path || i > j, "dim {dim}: output {i} sees input {j}");
                }
            }
        }
    }
}
