use crate::error::{Error, Result};
use crate::graph::AgriGraph;

use super::Matrix;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Per-channel batch statistics observed by a training-mode batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (divide by n) variance used for normalization.
    pub var: Vec<f64>,
    pub count: usize,
}

enum Op<'g> {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    /// `a + 1·b` with `b` a single row.
    AddRow(Var, Var),
    Concat(Var, Var),
    Relu(Var),
    NeighborMean(Var, &'g AgriGraph),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    MulConst(Var, Matrix),
    MaskedMse {
        pred: Var,
        target: Vec<f64>,
        mask: Vec<usize>,
    },
    Sum(Var),
}

struct Node<'g> {
    value: Matrix,
    op: Op<'g>,
}

/// Linear record of a forward computation, replayed backwards by
/// [`Tape::backward`]. Nodes are appended in evaluation order, so every
/// operation's inputs precede it.
#[derive(Default)]
pub struct Tape<'g> {
    nodes: Vec<Node<'g>>,
    params: Vec<Var>,
}

impl<'g> Tape<'g> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    fn push(&mut self, value: Matrix, op: Op<'g>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant input.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Records a trainable input; it receives a gradient from `backward`.
    pub fn param(&mut self, value: Matrix) -> Var {
        let v = self.push(value, Op::Leaf);
        self.params.push(v);
        v
    }

    pub fn params(&self) -> &[Var] {
        &self.params
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`, the usual `x · Wᵀ` of a dense layer.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul_t(self.value(b))?;
        Ok(self.push(out, Op::MatMulT(a, b)))
    }

    /// Adds the single-row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(Error::Shape {
                op: "add_row",
                left: av.shape(),
                right: bv.shape(),
            });
        }
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(a, bias)))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(Error::Shape {
                op: "concat_cols",
                left: av.shape(),
                right: bv.shape(),
            });
        }
        let mut out = Matrix::zeros(av.rows(), av.cols() + bv.cols());
        for r in 0..av.rows() {
            let row = out.row_mut(r);
            row[..av.cols()].copy_from_slice(av.row(r));
            row[av.cols()..].copy_from_slice(bv.row(r));
        }
        Ok(self.push(out, Op::Concat(a, b)))
    }

    /// Elementwise `max(0, x)`; the subgradient at exactly 0 is 0.
    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(out, Op::Relu(x))
    }

    /// Row `i` becomes the mean of the rows of `h` at the neighbours of `i`.
    /// Isolated nodes get a zero row.
    pub fn neighbor_mean(&mut self, h: Var, graph: &'g AgriGraph) -> Result<Var> {
        let hv = self.value(h);
        if hv.rows() != graph.node_count() {
            return Err(Error::Shape {
                op: "neighbor_mean",
                left: hv.shape(),
                right: (graph.node_count(), graph.node_count()),
            });
        }
        let mut out = Matrix::zeros(hv.rows(), hv.cols());
        for (i, nbrs) in graph.adjacency().iter().enumerate() {
            if nbrs.is_empty() {
                continue;
            }
            let row = out.row_mut(i);
            for &j in nbrs {
                for (o, v) in row.iter_mut().zip(hv.row(j)) {
                    *o += v;
                }
            }
            let inv = 1.0 / nbrs.len() as f64;
            row.iter_mut().for_each(|o| *o *= inv);
        }
        Ok(self.push(out, Op::NeighborMean(h, graph)))
    }

    /// Batch normalization with statistics from the current batch. `gamma`
    /// and `beta` are `1 × d`. Needs at least two rows.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, BatchStats)> {
        let xv = self.value(x);
        let (n, d) = xv.shape();
        if n < 2 {
            return Err(Error::Domain(format!(
                "training-mode batch norm needs at least 2 rows, got {n}"
            )));
        }
        let mut mean = vec![0.0; d];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(xv.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for r in 0..n {
            for ((s, v), m) in var.iter_mut().zip(xv.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= n as f64);
        let stats = BatchStats {
            mean: mean.clone(),
            var: var.clone(),
            count: n,
        };
        let out = self.normalize(x, gamma, beta, &mean, &var, eps, true)?;
        Ok((out, stats))
    }

    /// Batch normalization with fixed (running) statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        self.normalize(x, gamma, beta, mean, var, eps, false)
    }

    #[allow(clippy::too_many_arguments)]
    fn normalize(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        var: &[f64],
        eps: f64,
        batch_stats: bool,
    ) -> Result<Var> {
        let xv = self.value(x);
        let (n, d) = xv.shape();
        for (name, p) in [("gamma", gamma), ("beta", beta)] {
            let pv = self.value(p);
            if pv.shape() != (1, d) {
                return Err(Error::Shape {
                    op: if name == "gamma" {
                        "batch_norm gamma"
                    } else {
                        "batch_norm beta"
                    },
                    left: xv.shape(),
                    right: pv.shape(),
                });
            }
        }
        if mean.len() != d || var.len() != d {
            return Err(Error::Shape {
                op: "batch_norm stats",
                left: xv.shape(),
                right: (mean.len(), var.len()),
            });
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = Matrix::zeros(n, d);
        let mut out = Matrix::zeros(n, d);
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        for r in 0..n {
            let xr = xv.row(r);
            for c in 0..d {
                let h = (xr[c] - mean[c]) * inv_std[c];
                xhat.set(r, c, h);
                out.set(r, c, g[c] * h + b[c]);
            }
        }
        Ok(self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
        ))
    }

    /// Elementwise product with a constant of the same shape.
    pub fn mul_const(&mut self, x: Var, c: Matrix) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape() != c.shape() {
            return Err(Error::Shape {
                op: "mul_const",
                left: xv.shape(),
                right: c.shape(),
            });
        }
        let mut out = xv.clone();
        for (o, k) in out.data_mut().iter_mut().zip(c.data()) {
            *o *= k;
        }
        Ok(self.push(out, Op::MulConst(x, c)))
    }

    /// Mean of `(pred − target)²` over the rows listed in `mask`.
    pub fn masked_mse(&mut self, pred: Var, target: &[f64], mask: &[usize]) -> Result<Var> {
        let pv = self.value(pred);
        if pv.cols() != 1 || pv.rows() != target.len() {
            return Err(Error::Shape {
                op: "masked_mse",
                left: pv.shape(),
                right: (target.len(), 1),
            });
        }
        if mask.is_empty() {
            return Err(Error::Domain("loss mask is empty".into()));
        }
        if let Some(&bad) = mask.iter().find(|&&i| i >= target.len()) {
            return Err(Error::NodeOutOfRange {
                index: bad,
                n: target.len(),
            });
        }
        let loss = mask
            .iter()
            .map(|&i| {
                let e = pv.data()[i] - target[i];
                e * e
            })
            .sum::<f64>()
            / mask.len() as f64;
        Ok(self.push(
            Matrix::filled(1, 1, loss),
            Op::MaskedMse {
                pred,
                target: target.to_vec(),
                mask: mask.to_vec(),
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Matrix::filled(1, 1, s), Op::Sum(x))
    }

    /// Reverse-mode pass from a `1 × 1` output.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::Shape {
                op: "backward (loss must be 1x1)",
                left: shape,
                right: (1, 1),
            });
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul_t(self.value(*b))?;
                    let db = self.value(*a).t_matmul(&g)?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::MatMulT(a, b) => {
                    let da = g.matmul(self.value(*b))?;
                    let db = g.t_matmul(self.value(*a))?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::AddRow(a, bias) => {
                    let mut db = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, v) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *bias, db);
                    accumulate(&mut grads, *a, g);
                }
                Op::Concat(a, b) => {
                    let split = self.value(*a).cols();
                    accumulate(&mut grads, *a, g.slice_cols(0, split));
                    accumulate(&mut grads, *b, g.slice_cols(split, g.cols()));
                }
                Op::Relu(x) => {
                    let mut dx = g;
                    for (d, &y) in dx.data_mut().iter_mut().zip(node.value.data()) {
                        if y <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::NeighborMean(h, graph) => {
                    let mut dh = Matrix::zeros(g.rows(), g.cols());
                    for (i, nbrs) in graph.adjacency().iter().enumerate() {
                        if nbrs.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / nbrs.len() as f64;
                        let gi = g.row(i);
                        for &j in nbrs {
                            for (d, v) in dh.row_mut(j).iter_mut().zip(gi) {
                                *d += v * inv;
                            }
                        }
                    }
                    accumulate(&mut grads, *h, dh);
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                    batch_stats,
                } => {
                    let (n, d) = g.shape();
                    let gam = self.value(*gamma).data();
                    let mut dgamma = Matrix::zeros(1, d);
                    let mut dbeta = Matrix::zeros(1, d);
                    for r in 0..n {
                        let gr = g.row(r);
                        let hr = xhat.row(r);
                        for c in 0..d {
                            dbeta.data_mut()[c] += gr[c];
                            dgamma.data_mut()[c] += gr[c] * hr[c];
                        }
                    }
                    let mut dx = Matrix::zeros(n, d);
                    let nf = n as f64;
                    for r in 0..n {
                        let gr = g.row(r);
                        let hr = xhat.row(r);
                        let out = dx.row_mut(r);
                        for c in 0..d {
                            let scale = gam[c] * inv_std[c];
                            out[c] = if *batch_stats {
                                scale
                                    * (gr[c] - dbeta.data()[c] / nf - hr[c] * dgamma.data()[c] / nf)
                            } else {
                                scale * gr[c]
                            };
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *gamma, dgamma);
                    accumulate(&mut grads, *beta, dbeta);
                }
                Op::MulConst(x, c) => {
                    let mut dx = g;
                    for (d, k) in dx.data_mut().iter_mut().zip(c.data()) {
                        *d *= k;
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::MaskedMse { pred, target, mask } => {
                    let upstream = g.data()[0];
                    let pv = self.value(*pred);
                    let mut dp = Matrix::zeros(pv.rows(), 1);
                    let k = 2.0 * upstream / mask.len() as f64;
                    for &i in mask {
                        dp.data_mut()[i] += k * (pv.data()[i] - target[i]);
                    }
                    accumulate(&mut grads, *pred, dp);
                }
                Op::Sum(x) => {
                    let xv = self.value(*x);
                    accumulate(
                        &mut grads,
                        *x,
                        Matrix::filled(xv.rows(), xv.cols(), g.data()[0]),
                    );
                }
            }
        }

        let params = self
            .params
            .iter()
            .map(|&p| {
                grads[p.0].take().unwrap_or_else(|| {
                    let (r, c) = self.value(p).shape();
                    Matrix::zeros(r, c)
                })
            })
            .collect();
        Ok(Gradients { params })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Gradients of every registered parameter, in registration order.
#[derive(Debug, Clone)]
pub struct Gradients {
    params: Vec<Matrix>,
}

impl Gradients {
    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub fn into_params(self) -> Vec<Matrix> {
        self.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{union_graph, EdgeSet};

    #[test]
    fn relu_values() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::from_rows(&[[-1.0, 0.0, 2.0]]));
        let y = t.relu(x);
        assert_eq!(t.value(y).data(), &[0.0, 0.0, 2.0]);
        let pos = t.leaf(Matrix::from_rows(&[[0.5, 3.0]]));
        let y = t.relu(pos);
        assert_eq!(t.value(y), t.value(pos));
    }

    #[test]
    fn concat_shapes_and_slices() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::filled(4, 2, 1.0));
        let b = t.leaf(Matrix::filled(4, 3, 2.0));
        let c = t.concat_cols(a, b).unwrap();
        assert_eq!(t.value(c).shape(), (4, 5));
        assert_eq!(&t.value(c).slice_cols(0, 2), t.value(a));
        assert_eq!(&t.value(c).slice_cols(2, 5), t.value(b));
        let bad = t.leaf(Matrix::zeros(3, 1));
        assert!(t.concat_cols(a, bad).is_err());
    }

    #[test]
    fn sum_of_concat_gradient_is_ones() {
        let mut t = Tape::new();
        let a = t.param(Matrix::filled(2, 2, 0.3));
        let b = t.param(Matrix::filled(2, 1, -0.7));
        let c = t.concat_cols(a, b).unwrap();
        let s = t.sum(c);
        let g = t.backward(s).unwrap();
        assert_eq!(g.params()[0], Matrix::filled(2, 2, 1.0));
        assert_eq!(g.params()[1], Matrix::filled(2, 1, 1.0));
    }

    #[test]
    fn linear_sum_gradient_broadcasts_input() {
        // loss = sum(W x) ⇒ dloss/dW[i][j] = x[j] for every row i.
        let mut t = Tape::new();
        let w = t.param(Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]));
        let x = t.leaf(Matrix::column(&[0.5, -1.0, 2.0]));
        let y = t.matmul(w, x).unwrap();
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        assert_eq!(
            g.params()[0],
            Matrix::from_rows(&[[0.5, -1.0, 2.0], [0.5, -1.0, 2.0]])
        );
    }

    #[test]
    fn unused_param_gets_zero_gradient() {
        let mut t = Tape::new();
        let used = t.param(Matrix::filled(1, 2, 1.0));
        let unused = t.param(Matrix::filled(3, 2, 9.0));
        let s = t.sum(used);
        let g = t.backward(s).unwrap();
        assert_eq!(g.params()[1], Matrix::zeros(3, 2));
        let _ = unused;
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let x = t.param(Matrix::zeros(2, 2));
        assert!(matches!(t.backward(x), Err(Error::Shape { .. })));
    }

    #[test]
    fn neighbor_mean_basic_and_isolated() {
        let s: EdgeSet = [(0, 1), (0, 2)].into_iter().collect();
        let g = union_graph(&s, &EdgeSet::new(), 4).unwrap();
        let mut t = Tape::new();
        let h = t.leaf(Matrix::from_rows(&[
            [9.0, 9.0],
            [1.0, 10.0],
            [3.0, 20.0],
            [5.0, 5.0],
        ]));
        let m = t.neighbor_mean(h, &g).unwrap();
        assert_eq!(t.value(m).row(0), &[2.0, 15.0]);
        assert_eq!(t.value(m).row(1), &[9.0, 9.0]);
        assert_eq!(t.value(m).row(3), &[0.0, 0.0]);
        let wrong = t.leaf(Matrix::zeros(3, 2));
        assert!(t.neighbor_mean(wrong, &g).is_err());
    }

    #[test]
    fn batch_norm_needs_two_rows() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::zeros(1, 3));
        let g = t.param(Matrix::filled(1, 3, 1.0));
        let b = t.param(Matrix::zeros(1, 3));
        assert!(t.batch_norm_train(x, g, b, 1e-5).is_err());
    }

    #[test]
    fn masked_mse_values() {
        let mut t = Tape::new();
        let p = t.leaf(Matrix::column(&[2.0, 0.0, 100.0]));
        let l = t.masked_mse(p, &[1.0, 1.0, 0.0], &[0, 1]).unwrap();
        assert_eq!(t.value(l).data(), &[1.0]);
        assert!(t.masked_mse(p, &[1.0, 1.0, 0.0], &[]).is_err());
    }
}
