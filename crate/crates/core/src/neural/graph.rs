//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation applied to its nodes. Operations are
//! only constructible through the typed builder methods, so a graph never
//! contains anything `backward` cannot differentiate. Binary elementwise ops
//! broadcast along any axis of extent 1.

use super::params::ParamSet;
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Exp(Var),
    Log(Var),
    Tanh(Var),
    Relu(Var),
    Softplus(Var),
    Sigmoid(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    LogSumExpRows(Var),
    LogSoftmaxRows(Var),
    SoftmaxRows(Var),
    SumRows(Var),
    SumAll(Var),
    MeanAll(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    PermuteCols(Var, Vec<usize>),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients of a scalar with respect to every tensor of a [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Gradients {
    pub grads: Vec<Tensor>,
}

impl Gradients {
    pub fn global_norm(&self) -> f64 {
        self.grads.iter().map(|g| g.squared_norm()).sum::<f64>().sqrt()
    }

    /// Rescales so the global norm is at most `max_norm`; returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for g in &mut self.grads {
                g.data_mut().iter_mut().for_each(|v| *v *= s);
            }
        }
        norm
    }
}

pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
}

fn broadcast_shape(a: [usize; 2], b: [usize; 2]) -> [usize; 2] {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            x
        } else if x == 1 {
            y
        } else {
            panic!("shapes {a:?} and {b:?} do not broadcast")
        }
    };
    [dim(a[0], b[0]), dim(a[1], b[1])]
}

/// Elementwise `f(a, b)` with broadcasting.
fn zip_broadcast(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let [r, c] = broadcast_shape(a.shape(), b.shape());
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::from_vec(r, c, data);
    }
    let mut out = Tensor::zeros(r, c);
    let (ar, ac) = (a.rows() > 1, a.cols() > 1);
    let (br, bc) = (b.rows() > 1, b.cols() > 1);
    for i in 0..r {
        for j in 0..c {
            let x = a.get(if ar { i } else { 0 }, if ac { j } else { 0 });
            let y = b.get(if br { i } else { 0 }, if bc { j } else { 0 });
            out.set(i, j, f(x, y));
        }
    }
    out
}

/// Sums `g` (of the broadcast shape) down to `shape`.
fn reduce_to(g: &Tensor, shape: [usize; 2]) -> Tensor {
    if g.shape() == shape {
        return g.clone();
    }
    let mut out = Tensor::zeros(shape[0], shape[1]);
    let (kr, kc) = (shape[0] > 1, shape[1] > 1);
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let (oi, oj) = (if kr { i } else { 0 }, if kc { j } else { 0 });
            let v = out.get(oi, oj) + g.get(i, j);
            out.set(oi, oj, v);
        }
    }
    out
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn row_logsumexp(row: &[f64]) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self { params, nodes: Vec::with_capacity(256) }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant (no gradient flows to it).
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    pub fn constant(&mut self, rows: usize, cols: usize, value: f64) -> Var {
        self.input(Tensor::filled(rows, cols, value))
    }

    pub fn param(&mut self, index: usize) -> Var {
        let t = self.params.get(index).clone();
        self.push(t, Op::Param(index))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_t(false, self.value(b), false);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = zip_broadcast(self.value(a), self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = zip_broadcast(self.value(a), self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = zip_broadcast(self.value(a), self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let v = zip_broadcast(self.value(a), self.value(b), |x, y| x / y);
        self.push(v, Op::Div(a, b))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| -x);
        self.push(v, Op::Neg(a))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.push(v, Op::AddScalar(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Log(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi))
    }

    /// `[r × c] → [r × 1]`, `log Σ_j exp(a_ij)`.
    pub fn logsumexp_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = (0..t.rows()).map(|i| row_logsumexp(t.row(i))).collect();
        let v = Tensor::from_vec(t.rows(), 1, data);
        self.push(v, Op::LogSumExpRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut v = t.clone();
        for i in 0..t.rows() {
            let lse = row_logsumexp(t.row(i));
            for j in 0..t.cols() {
                v.set(i, j, t.get(i, j) - lse);
            }
        }
        self.push(v, Op::LogSoftmaxRows(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut v = t.clone();
        for i in 0..t.rows() {
            let lse = row_logsumexp(t.row(i));
            for j in 0..t.cols() {
                v.set(i, j, (t.get(i, j) - lse).exp());
            }
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    /// `[r × c] → [r × 1]`, sum over columns.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = (0..t.rows()).map(|i| t.row(i).iter().sum()).collect();
        let v = Tensor::from_vec(t.rows(), 1, data);
        self.push(v, Op::SumRows(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::SumAll(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let v = Tensor::scalar(t.sum() / t.len() as f64);
        self.push(v, Op::MeanAll(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.shape(parts[0])[0];
        let cols: usize = parts.iter().map(|p| self.shape(*p)[1]).sum();
        let mut v = Tensor::zeros(rows, cols);
        let mut off = 0;
        for p in parts {
            let t = self.value(*p);
            assert_eq!(t.rows(), rows, "concat_cols: row counts differ");
            for i in 0..rows {
                for j in 0..t.cols() {
                    v.set(i, off + j, t.get(i, j));
                }
            }
            off += t.cols();
        }
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    /// Columns `[start, start + len)`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = self.value(a);
        assert!(start + len <= t.cols(), "slice_cols out of range");
        let mut v = Tensor::zeros(t.rows(), len);
        for i in 0..t.rows() {
            for j in 0..len {
                v.set(i, j, t.get(i, start + j));
            }
        }
        self.push(v, Op::SliceCols(a, start))
    }

    /// Output column `j` is input column `perm[j]`.
    pub fn permute_cols(&mut self, a: Var, perm: &[usize]) -> Var {
        let t = self.value(a);
        assert_eq!(perm.len(), t.cols(), "permutation length");
        let mut v = Tensor::zeros(t.rows(), t.cols());
        for i in 0..t.rows() {
            for (j, &p) in perm.iter().enumerate() {
                v.set(i, j, t.get(i, p));
            }
        }
        self.push(v, Op::PermuteCols(a, perm.to_vec()))
    }

    /// Affine layer `x·W + b` (bias broadcast over rows).
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let h = self.matmul(x, w);
        self.add(h, b)
    }

    /// Reverse pass from a `[1 × 1]` node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.shape(loss), [1, 1], "backward needs a scalar loss");
        let mut adj: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Tensor::scalar(1.0));
        let mut grads: Vec<Tensor> = (0..self.params.len())
            .map(|i| {
                let [r, c] = self.params.get(i).shape();
                Tensor::zeros(r, c)
            })
            .collect();

        fn acc(adj: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut adj[v.0] {
                Some(t) => t.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            let out = &node.value;
            match &node.op {
                Op::Input => {}
                Op::Param(p) => grads[*p].add_assign(&g),
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    acc(&mut adj, *a, g.matmul_t(false, vb, true));
                    acc(&mut adj, *b, va.matmul_t(true, &g, false));
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *a, reduce_to(&g, self.shape(*a)));
                    acc(&mut adj, *b, reduce_to(&g, self.shape(*b)));
                }
                Op::Sub(a, b) => {
                    acc(&mut adj, *a, reduce_to(&g, self.shape(*a)));
                    acc(&mut adj, *b, reduce_to(&g.map(|x| -x), self.shape(*b)));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = zip_broadcast(&g, vb, |g, y| g * y);
                    let gb = zip_broadcast(&g, va, |g, x| g * x);
                    acc(&mut adj, *a, reduce_to(&ga, va.shape()));
                    acc(&mut adj, *b, reduce_to(&gb, vb.shape()));
                }
                Op::Div(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = zip_broadcast(&g, vb, |g, y| g / y);
                    // d(a/b)/db = -out / b
                    let t = zip_broadcast(out, vb, |o, y| -o / y);
                    let gb = zip_broadcast(&g, &t, |g, t| g * t);
                    acc(&mut adj, *a, reduce_to(&ga, va.shape()));
                    acc(&mut adj, *b, reduce_to(&gb, vb.shape()));
                }
                Op::Neg(a) => acc(&mut adj, *a, g.map(|x| -x)),
                Op::Scale(a, s) => {
                    let s = *s;
                    acc(&mut adj, *a, g.map(|x| x * s))
                }
                Op::AddScalar(a) => acc(&mut adj, *a, g),
                Op::Exp(a) => acc(&mut adj, *a, zip_broadcast(&g, out, |g, y| g * y)),
                Op::Log(a) => acc(&mut adj, *a, zip_broadcast(&g, self.value(*a), |g, x| g / x)),
                Op::Tanh(a) => acc(&mut adj, *a, zip_broadcast(&g, out, |g, y| g * (1.0 - y * y))),
                Op::Relu(a) => {
                    acc(&mut adj, *a, zip_broadcast(&g, self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 }))
                }
                Op::Softplus(a) => acc(&mut adj, *a, zip_broadcast(&g, self.value(*a), |g, x| g * sigmoid(x))),
                Op::Sigmoid(a) => acc(&mut adj, *a, zip_broadcast(&g, out, |g, y| g * y * (1.0 - y))),
                Op::Square(a) => acc(&mut adj, *a, zip_broadcast(&g, self.value(*a), |g, x| 2.0 * g * x)),
                Op::Clamp(a, lo, hi) => {
                    let (lo, hi) = (*lo, *hi);
                    acc(
                        &mut adj,
                        *a,
                        zip_broadcast(&g, self.value(*a), |g, x| if x >= lo && x <= hi { g } else { 0.0 }),
                    )
                }
                Op::LogSumExpRows(a) => {
                    let va = self.value(*a);
                    let mut ga = Tensor::zeros(va.rows(), va.cols());
                    for i in 0..va.rows() {
                        let (gi, lse) = (g.get(i, 0), out.get(i, 0));
                        if !lse.is_finite() {
                            continue;
                        }
                        for j in 0..va.cols() {
                            ga.set(i, j, gi * (va.get(i, j) - lse).exp());
                        }
                    }
                    acc(&mut adj, *a, ga)
                }
                Op::LogSoftmaxRows(a) => {
                    let mut ga = g.clone();
                    for i in 0..out.rows() {
                        let gsum: f64 = g.row(i).iter().sum();
                        for j in 0..out.cols() {
                            ga.set(i, j, g.get(i, j) - out.get(i, j).exp() * gsum);
                        }
                    }
                    acc(&mut adj, *a, ga)
                }
                Op::SoftmaxRows(a) => {
                    let mut ga = g.clone();
                    for i in 0..out.rows() {
                        let dot: f64 = g.row(i).iter().zip(out.row(i)).map(|(g, s)| g * s).sum();
                        for j in 0..out.cols() {
                            ga.set(i, j, out.get(i, j) * (g.get(i, j) - dot));
                        }
                    }
                    acc(&mut adj, *a, ga)
                }
                Op::SumRows(a) => {
                    let [r, c] = self.shape(*a);
                    let mut ga = Tensor::zeros(r, c);
                    for i in 0..r {
                        for j in 0..c {
                            ga.set(i, j, g.get(i, 0));
                        }
                    }
                    acc(&mut adj, *a, ga)
                }
                Op::SumAll(a) => {
                    let [r, c] = self.shape(*a);
                    acc(&mut adj, *a, Tensor::filled(r, c, g.item()))
                }
                Op::MeanAll(a) => {
                    let [r, c] = self.shape(*a);
                    acc(&mut adj, *a, Tensor::filled(r, c, g.item() / (r * c) as f64))
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let [r, c] = self.shape(*p);
                        let mut gp = Tensor::zeros(r, c);
                        for i in 0..r {
                            for j in 0..c {
                                gp.set(i, j, g.get(i, off + j));
                            }
                        }
                        off += c;
                        acc(&mut adj, *p, gp);
                    }
                }
                Op::SliceCols(a, start) => {
                    let [r, c] = self.shape(*a);
                    let mut ga = Tensor::zeros(r, c);
                    for i in 0..r {
                        for j in 0..g.cols() {
                            ga.set(i, start + j, g.get(i, j));
                        }
                    }
                    acc(&mut adj, *a, ga)
                }
                Op::PermuteCols(a, perm) => {
                    let [r, c] = self.shape(*a);
                    let mut ga = Tensor::zeros(r, c);
                    for i in 0..r {
                        for (j, &p) in perm.iter().enumerate() {
                            ga.set(i, p, g.get(i, j));
                        }
                    }
                    acc(&mut adj, *a, ga)
                }
            }
        }
        Gradients { grads }
    }
}
