//! Define-by-run reverse-mode differentiation over matrices.
//!
//! Every operation evaluates immediately and records itself on the tape;
//! `backward` walks the tape in reverse, pushing gradients only along paths
//! that reach trainable parameters. The op set is exactly what the models
//! need: dense algebra, the activations, gathers/scatters for message
//! routing, reductions, batch norm, and guarded `sqrt`/`acos`/division so
//! geometric quantities (distances, volumes, angles) can be recomputed
//! differentiably from positions inside the forward pass.

use std::rc::Rc;

use super::matrix::{sigmoid, sigmoid_grad_from_value, swish, swish_grad, Matrix};
use super::optim::ParameterStore;
use super::NnError;
use crate::scalar::{real, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op<R> {
    Leaf { param: Option<String> },
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    /// Broadcast-add a `1 × c` row to every row.
    AddRow(NodeId, NodeId),
    /// Broadcast-multiply an `r × 1` column across every column.
    MulCol(NodeId, NodeId),
    Scale(NodeId, R),
    Swish(NodeId),
    Sigmoid(NodeId),
    Cos(NodeId),
    Sin(NodeId),
    /// `sqrt(max(x, floor))`; zero gradient below the floor.
    SqrtGuarded(NodeId, R),
    /// `acos(clamp(x, ±(1 − 1e-12)))`; zero gradient in the clamped region.
    AcosClamped(NodeId),
    ConcatCols(Vec<NodeId>),
    /// `out[i] = x[idx[i]]`.
    GatherRows(NodeId, Rc<Vec<usize>>),
    /// `out[idx[i]] += x[i]`.
    ScatterAddRows(NodeId, Rc<Vec<usize>>),
    RowSums(NodeId),
    ColSums(NodeId),
    SumAll(NodeId),
    /// Per-column standardization; caches the batch statistics it used.
    BatchNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mean: Matrix<R>,
        inv_std: Matrix<R>,
    },
}

struct Node<R> {
    op: Op<R>,
    value: Matrix<R>,
    needs_grad: bool,
}

pub struct Tape<R> {
    nodes: Vec<Node<R>>,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

impl<R: Real> Default for Tape<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> Tape<R> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix<R> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op<R>, value: Matrix<R>, needs_grad: bool) -> NodeId {
        value.debug_check_finite();
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn constant(&mut self, value: Matrix<R>) -> NodeId {
        self.push(Op::Leaf { param: None }, value, false)
    }

    /// Pulls a parameter's current value onto the tape; its gradient will
    /// be accumulated into the store by `backward`. Frozen buffers enter as
    /// constants.
    pub fn param(&mut self, store: &ParameterStore<R>, name: &str) -> Result<NodeId, NnError> {
        let value = store.get(name)?.clone();
        if store.is_trainable(name) {
            Ok(self.push(
                Op::Leaf {
                    param: Some(name.to_string()),
                },
                value,
                true,
            ))
        } else {
            Ok(self.constant(value))
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul(a, b), value, self.needs(a) || self.needs(b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).zip(self.value(b), |x, y| x + y);
        self.push(Op::Add(a, b), value, self.needs(a) || self.needs(b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).zip(self.value(b), |x, y| x - y);
        self.push(Op::Sub(a, b), value, self.needs(a) || self.needs(b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).zip(self.value(b), |x, y| x * y);
        self.push(Op::Mul(a, b), value, self.needs(a) || self.needs(b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).zip(self.value(b), |x, y| x / y);
        self.push(Op::Div(a, b), value, self.needs(a) || self.needs(b))
    }

    pub fn add_row(&mut self, x: NodeId, row: NodeId) -> NodeId {
        let (r, c) = self.value(x).shape();
        assert_eq!(self.value(row).shape(), (1, c), "add_row shape");
        let mut value = self.value(x).clone();
        for i in 0..r {
            for j in 0..c {
                let v = value.get(i, j) + self.nodes[row.0].value.get(0, j);
                value.set(i, j, v);
            }
        }
        self.push(Op::AddRow(x, row), value, self.needs(x) || self.needs(row))
    }

    pub fn mul_col(&mut self, x: NodeId, col: NodeId) -> NodeId {
        let (r, c) = self.value(x).shape();
        assert_eq!(self.value(col).shape(), (r, 1), "mul_col shape");
        let mut value = self.value(x).clone();
        for i in 0..r {
            let s = self.nodes[col.0].value.get(i, 0);
            for j in 0..c {
                let v = value.get(i, j) * s;
                value.set(i, j, v);
            }
        }
        self.push(Op::MulCol(x, col), value, self.needs(x) || self.needs(col))
    }

    pub fn scale(&mut self, x: NodeId, s: R) -> NodeId {
        let value = self.value(x).scale(s);
        self.push(Op::Scale(x, s), value, self.needs(x))
    }

    pub fn swish(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(swish);
        self.push(Op::Swish(x), value, self.needs(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(sigmoid);
        self.push(Op::Sigmoid(x), value, self.needs(x))
    }

    pub fn cos(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| v.cos());
        self.push(Op::Cos(x), value, self.needs(x))
    }

    pub fn sin(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| v.sin());
        self.push(Op::Sin(x), value, self.needs(x))
    }

    pub fn sqrt_guarded(&mut self, x: NodeId, floor: R) -> NodeId {
        let value = self.value(x).map(|v| v.max(floor).sqrt());
        self.push(Op::SqrtGuarded(x, floor), value, self.needs(x))
    }

    pub fn acos_clamped(&mut self, x: NodeId) -> NodeId {
        let lim = R::one() - real::<R>(1e-12);
        let value = self.value(x).map(|v| v.min(lim).max(-lim).acos());
        self.push(Op::AcosClamped(x), value, self.needs(x))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut value = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.rows(), rows, "concat_cols row mismatch");
            for i in 0..rows {
                for j in 0..m.cols() {
                    value.set(i, offset + j, m.get(i, j));
                }
            }
            offset += m.cols();
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(Op::ConcatCols(parts.to_vec()), value, needs)
    }

    pub fn gather_rows(&mut self, x: NodeId, indices: Rc<Vec<usize>>) -> NodeId {
        let src = self.value(x);
        let mut value = Matrix::zeros(indices.len(), src.cols());
        for (i, &idx) in indices.iter().enumerate() {
            for j in 0..src.cols() {
                value.set(i, j, src.get(idx, j));
            }
        }
        self.push(Op::GatherRows(x, indices), value, self.needs(x))
    }

    pub fn scatter_add_rows(
        &mut self,
        x: NodeId,
        indices: Rc<Vec<usize>>,
        out_rows: usize,
    ) -> NodeId {
        let src = self.value(x);
        assert_eq!(src.rows(), indices.len(), "scatter index count");
        let mut value = Matrix::zeros(out_rows, src.cols());
        for (i, &idx) in indices.iter().enumerate() {
            for j in 0..src.cols() {
                let v = value.get(idx, j) + src.get(i, j);
                value.set(idx, j, v);
            }
        }
        self.push(Op::ScatterAddRows(x, indices), value, self.needs(x))
    }

    pub fn row_sums(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).row_sums();
        self.push(Op::RowSums(x), value, self.needs(x))
    }

    pub fn col_sums(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).col_sums();
        self.push(Op::ColSums(x), value, self.needs(x))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let value = Matrix::from_vec(1, 1, vec![self.value(x).sum()]);
        self.push(Op::SumAll(x), value, self.needs(x))
    }

    /// `x @ W + b` with `W`, `b` taken from the store by name.
    pub fn linear(
        &mut self,
        store: &ParameterStore<R>,
        prefix: &str,
        x: NodeId,
    ) -> Result<NodeId, NnError> {
        let w = self.param(store, &format!("{prefix}/w"))?;
        let b = self.param(store, &format!("{prefix}/b"))?;
        let xw = self.matmul(x, w);
        Ok(self.add_row(xw, b))
    }

    /// Per-column batch normalization.
    ///
    /// Training mode standardizes with batch statistics and updates the
    /// store's running mean/variance buffers (`<prefix>/running_mean`,
    /// `<prefix>/running_var`); evaluation mode standardizes with the
    /// frozen running statistics.
    pub fn batch_norm(
        &mut self,
        store: &mut ParameterStore<R>,
        prefix: &str,
        x: NodeId,
        training: bool,
    ) -> Result<NodeId, NnError> {
        let gamma = self.param(store, &format!("{prefix}/gamma"))?;
        let beta = self.param(store, &format!("{prefix}/beta"))?;
        let (rows, cols) = self.value(x).shape();
        let eps = real::<R>(BN_EPS);
        let (mean, var) = if training {
            if rows == 0 {
                return Err(NnError::Usage("batch norm over zero rows".into()));
            }
            let n = real::<R>(rows as f64);
            let mean = self.value(x).col_sums().scale(R::one() / n);
            let mut var = Matrix::zeros(1, cols);
            for i in 0..rows {
                for j in 0..cols {
                    let d = self.value(x).get(i, j) - mean.get(0, j);
                    let v = var.get(0, j) + d * d;
                    var.set(0, j, v);
                }
            }
            let var = var.scale(R::one() / n);
            // fold batch statistics into the running buffers
            let momentum = real::<R>(BN_MOMENTUM);
            let rm_name = format!("{prefix}/running_mean");
            let rv_name = format!("{prefix}/running_var");
            let rm = store.get(&rm_name)?.zip(&mean, |r, b| {
                r * (R::one() - momentum) + b * momentum
            });
            let rv = store.get(&rv_name)?.zip(&var, |r, b| {
                r * (R::one() - momentum) + b * momentum
            });
            store.set(&rm_name, rm)?;
            store.set(&rv_name, rv)?;
            (mean, var)
        } else {
            (
                store.get(&format!("{prefix}/running_mean"))?.clone(),
                store.get(&format!("{prefix}/running_var"))?.clone(),
            )
        };
        let inv_std = var.map(|v| R::one() / (v + eps).sqrt());
        let mut value = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let xhat = (self.value(x).get(i, j) - mean.get(0, j)) * inv_std.get(0, j);
                value.set(
                    i,
                    j,
                    self.value(gamma).get(0, j) * xhat + self.value(beta).get(0, j),
                );
            }
        }
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                inv_std,
            },
            value,
            needs,
        ))
    }

    /// Reverse pass from a `1 × 1` loss node: parameter gradients are
    /// accumulated into the store (on top of whatever is already there, so
    /// zero first for a fresh step).
    pub fn backward(
        &mut self,
        loss: NodeId,
        store: &mut ParameterStore<R>,
    ) -> Result<(), NnError> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(NnError::Usage(
                "backward called without a recorded forward pass".into(),
            ));
        }
        if self.value(loss).shape() != (1, 1) {
            return Err(NnError::Usage(format!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Matrix<R>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::from_vec(1, 1, vec![R::one()]));

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].needs_grad {
                grads[id] = None;
                continue;
            }
            let Some(grad) = grads[id].take() else { continue };
            let acc = |grads: &mut Vec<Option<Matrix<R>>>, target: NodeId, delta: Matrix<R>| {
                if !self.nodes[target.0].needs_grad {
                    return;
                }
                match &mut grads[target.0] {
                    Some(g) => g.add_assign(&delta),
                    slot @ None => *slot = Some(delta),
                }
            };
            match &self.nodes[id].op {
                Op::Leaf { param } => {
                    if let Some(name) = param.clone() {
                        store.accumulate_grad(&name, &grad);
                    }
                }
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let da = grad.matmul_nt(self.value(b));
                    let db = self.value(a).matmul_tn(&grad);
                    acc(&mut grads, a, da);
                    acc(&mut grads, b, db);
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    acc(&mut grads, a, grad.clone());
                    acc(&mut grads, b, grad);
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    acc(&mut grads, a, grad.clone());
                    acc(&mut grads, b, grad.scale(-R::one()));
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let da = grad.zip(self.value(b), |g, y| g * y);
                    let db = grad.zip(self.value(a), |g, x| g * x);
                    acc(&mut grads, a, da);
                    acc(&mut grads, b, db);
                }
                Op::Div(a, b) => {
                    let (a, b) = (*a, *b);
                    let da = grad.zip(self.value(b), |g, y| g / y);
                    let db = grad
                        .zip(self.value(a), |g, x| g * x)
                        .zip(self.value(b), |gx, y| -gx / (y * y));
                    acc(&mut grads, a, da);
                    acc(&mut grads, b, db);
                }
                Op::AddRow(x, row) => {
                    let (x, row) = (*x, *row);
                    acc(&mut grads, row, grad.col_sums());
                    acc(&mut grads, x, grad);
                }
                Op::MulCol(x, col) => {
                    let (x, col) = (*x, *col);
                    let dcol = grad.zip(self.value(x), |g, v| g * v).row_sums();
                    let mut dx = grad.clone();
                    for i in 0..dx.rows() {
                        let s = self.value(col).get(i, 0);
                        for j in 0..dx.cols() {
                            let v = dx.get(i, j) * s;
                            dx.set(i, j, v);
                        }
                    }
                    acc(&mut grads, col, dcol);
                    acc(&mut grads, x, dx);
                }
                Op::Scale(x, s) => {
                    let (x, s) = (*x, *s);
                    acc(&mut grads, x, grad.scale(s));
                }
                Op::Swish(x) => {
                    let x = *x;
                    let dx = grad.zip(self.value(x), |g, v| g * swish_grad(v));
                    acc(&mut grads, x, dx);
                }
                Op::Sigmoid(x) => {
                    let x = *x;
                    let dx = grad.zip(&self.nodes[id].value, |g, s| {
                        g * sigmoid_grad_from_value(s)
                    });
                    acc(&mut grads, x, dx);
                }
                Op::Cos(x) => {
                    let x = *x;
                    let dx = grad.zip(self.value(x), |g, v| -g * v.sin());
                    acc(&mut grads, x, dx);
                }
                Op::Sin(x) => {
                    let x = *x;
                    let dx = grad.zip(self.value(x), |g, v| g * v.cos());
                    acc(&mut grads, x, dx);
                }
                Op::SqrtGuarded(x, floor) => {
                    let (x, floor) = (*x, *floor);
                    let half = real::<R>(0.5);
                    let dx = grad.zip(self.value(x), |g, v| {
                        if v > floor {
                            g * half / v.sqrt()
                        } else {
                            R::zero()
                        }
                    });
                    acc(&mut grads, x, dx);
                }
                Op::AcosClamped(x) => {
                    let x = *x;
                    let lim = R::one() - real::<R>(1e-12);
                    let dx = grad.zip(self.value(x), |g, v| {
                        if v.abs() < lim {
                            -g / (R::one() - v * v).sqrt()
                        } else {
                            R::zero()
                        }
                    });
                    acc(&mut grads, x, dx);
                }
                Op::ConcatCols(parts) => {
                    let parts = parts.clone();
                    let mut offset = 0;
                    for p in parts {
                        let cols = self.value(p).cols();
                        let mut dp = Matrix::zeros(grad.rows(), cols);
                        for i in 0..grad.rows() {
                            for j in 0..cols {
                                dp.set(i, j, grad.get(i, offset + j));
                            }
                        }
                        offset += cols;
                        acc(&mut grads, p, dp);
                    }
                }
                Op::GatherRows(x, indices) => {
                    let (x, indices) = (*x, indices.clone());
                    let mut dx = Matrix::zeros(self.value(x).rows(), grad.cols());
                    for (i, &idx) in indices.iter().enumerate() {
                        for j in 0..grad.cols() {
                            let v = dx.get(idx, j) + grad.get(i, j);
                            dx.set(idx, j, v);
                        }
                    }
                    acc(&mut grads, x, dx);
                }
                Op::ScatterAddRows(x, indices) => {
                    let (x, indices) = (*x, indices.clone());
                    let mut dx = Matrix::zeros(indices.len(), grad.cols());
                    for (i, &idx) in indices.iter().enumerate() {
                        for j in 0..grad.cols() {
                            dx.set(i, j, grad.get(idx, j));
                        }
                    }
                    acc(&mut grads, x, dx);
                }
                Op::RowSums(x) => {
                    let x = *x;
                    let (r, c) = self.value(x).shape();
                    let mut dx = Matrix::zeros(r, c);
                    for i in 0..r {
                        for j in 0..c {
                            dx.set(i, j, grad.get(i, 0));
                        }
                    }
                    acc(&mut grads, x, dx);
                }
                Op::ColSums(x) => {
                    let x = *x;
                    let (r, c) = self.value(x).shape();
                    let mut dx = Matrix::zeros(r, c);
                    for i in 0..r {
                        for j in 0..c {
                            dx.set(i, j, grad.get(0, j));
                        }
                    }
                    acc(&mut grads, x, dx);
                }
                Op::SumAll(x) => {
                    let x = *x;
                    let (r, c) = self.value(x).shape();
                    let g = grad.get(0, 0);
                    let mut dx = Matrix::zeros(r, c);
                    dx.data_mut().fill(g);
                    acc(&mut grads, x, dx);
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    mean,
                    inv_std,
                } => {
                    let (x, gamma, beta) = (*x, *gamma, *beta);
                    let (rows, cols) = self.value(x).shape();
                    let n = real::<R>(rows as f64);
                    // xhat from cached statistics
                    let mut xhat = Matrix::zeros(rows, cols);
                    for i in 0..rows {
                        for j in 0..cols {
                            xhat.set(
                                i,
                                j,
                                (self.value(x).get(i, j) - mean.get(0, j)) * inv_std.get(0, j),
                            );
                        }
                    }
                    let dgamma = grad.zip(&xhat, |g, h| g * h).col_sums();
                    let dbeta = grad.col_sums();
                    // dL/dx = γ·inv_std/N · (N·g − Σg − xhat·Σ(g·xhat))
                    let sum_g = grad.col_sums();
                    let sum_gx = grad.zip(&xhat, |g, h| g * h).col_sums();
                    let mut dx = Matrix::zeros(rows, cols);
                    for i in 0..rows {
                        for j in 0..cols {
                            let g = grad.get(i, j);
                            let v = self.value(gamma).get(0, j) * inv_std.get(0, j) / n
                                * (n * g - sum_g.get(0, j) - xhat.get(i, j) * sum_gx.get(0, j));
                            dx.set(i, j, v);
                        }
                    }
                    acc(&mut grads, gamma, dgamma);
                    acc(&mut grads, beta, dbeta);
                    acc(&mut grads, x, dx);
                }
            }
        }
        Ok(())
    }
}
