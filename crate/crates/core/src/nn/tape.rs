//! Reverse-mode differentiation over a linear tape of dense matrix ops.
//!
//! Each forward call appends a node holding its output. `backward` walks the
//! tape from the loss towards the leaves and adds the resulting gradients into
//! per-leaf accumulators, so two calls without [`Tape::zero_grad`] sum.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng as _;

use super::{NnError, SparseMatrix, Tensor};
use crate::seed::Rng;

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    generation: u64,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Relu(usize),
    MaskApply(usize, Tensor),
    ConcatCols(Vec<usize>),
    SpMM(Arc<SparseMatrix>, usize),
    SoftmaxRows(usize),
    CrossEntropyMasked {
        logits: usize,
        probs: Tensor,
        labels: Vec<u8>,
        mask: Vec<usize>,
    },
    Sum(usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Relu(_) => "relu",
            Op::MaskApply(..) => "dropout_mask_apply",
            Op::ConcatCols(_) => "concat_cols",
            Op::SpMM(..) => "spmm",
            Op::SoftmaxRows(_) => "softmax_rows",
            Op::CrossEntropyMasked { .. } => "cross_entropy_masked",
            Op::Sum(_) => "sum",
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

#[derive(Debug)]
pub struct Tape {
    id: u64,
    generation: u64,
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            generation: 0,
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    /// Drops every recorded node. Vars from before the reset become invalid.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.grads.clear();
        self.generation += 1;
    }

    pub fn zero_grad(&mut self) {
        for g in self.grads.iter_mut().flatten() {
            g.data_mut().fill(0.0);
        }
    }

    fn resolve(&self, v: Var) -> Result<usize, NnError> {
        if v.tape != self.id || v.generation != self.generation || v.index >= self.nodes.len() {
            return Err(NnError::UnknownVar);
        }
        Ok(v.index)
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Result<Var, NnError> {
        if !value.is_finite() {
            return Err(NnError::NonFinite(op.name().into()));
        }
        let index = self.nodes.len();
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        self.grads.push(None);
        Ok(Var {
            tape: self.id,
            generation: self.generation,
            index,
        })
    }

    fn needs(&self, idx: &[usize]) -> bool {
        idx.iter().any(|&i| self.nodes[i].requires_grad)
    }

    /// Trainable leaf; gets a gradient accumulator.
    pub fn param(&mut self, value: Tensor) -> Result<Var, NnError> {
        self.push(Op::Leaf, value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var, NnError> {
        self.push(Op::Leaf, value, false)
    }

    pub fn value(&self, v: Var) -> Result<&Tensor, NnError> {
        Ok(&self.nodes[self.resolve(v)?].value)
    }

    /// Accumulated gradient of a parameter leaf; `None` before any backward.
    pub fn grad(&self, v: Var) -> Result<Option<&Tensor>, NnError> {
        Ok(self.grads[self.resolve(v)?].as_ref())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (ia, ib) = (self.resolve(a)?, self.resolve(b)?);
        let out = self.nodes[ia].value.matmul(&self.nodes[ib].value)?;
        let rg = self.needs(&[ia, ib]);
        self.push(Op::MatMul(ia, ib), out, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (ia, ib) = (self.resolve(a)?, self.resolve(b)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if va.shape() != vb.shape() {
            return Err(NnError::ShapeMismatch {
                op: "add",
                left: va.shape(),
                right: vb.shape(),
            });
        }
        let mut out = va.clone();
        out.add_assign(vb);
        let rg = self.needs(&[ia, ib]);
        self.push(Op::Add(ia, ib), out, rg)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NnError> {
        let ia = self.resolve(a)?;
        let v = &self.nodes[ia].value;
        let out = Tensor::from_parts(
            v.rows(),
            v.cols(),
            v.data().iter().map(|&x| x.max(0.0)).collect(),
        );
        let rg = self.needs(&[ia]);
        self.push(Op::Relu(ia), out, rg)
    }

    /// Elementwise product with a fixed mask (typically from [`dropout_mask`]).
    pub fn dropout_mask_apply(&mut self, a: Var, mask: Tensor) -> Result<Var, NnError> {
        let ia = self.resolve(a)?;
        let v = &self.nodes[ia].value;
        if v.shape() != mask.shape() {
            return Err(NnError::ShapeMismatch {
                op: "dropout_mask_apply",
                left: v.shape(),
                right: mask.shape(),
            });
        }
        let out = Tensor::from_parts(
            v.rows(),
            v.cols(),
            v.data().iter().zip(mask.data()).map(|(x, m)| x * m).collect(),
        );
        let rg = self.needs(&[ia]);
        self.push(Op::MaskApply(ia, mask), out, rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let idx: Vec<usize> = parts
            .iter()
            .map(|&p| self.resolve(p))
            .collect::<Result<_, _>>()?;
        let Some(&first) = idx.first() else {
            return Err(NnError::ShapeMismatch {
                op: "concat_cols",
                left: (0, 0),
                right: (0, 0),
            });
        };
        let rows = self.nodes[first].value.rows();
        for &i in &idx {
            let s = self.nodes[i].value.shape();
            if s.0 != rows {
                return Err(NnError::ShapeMismatch {
                    op: "concat_cols",
                    left: self.nodes[first].value.shape(),
                    right: s,
                });
            }
        }
        let cols: usize = idx.iter().map(|&i| self.nodes[i].value.cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &i in &idx {
                data.extend_from_slice(self.nodes[i].value.row(r));
            }
        }
        let rg = self.needs(&idx);
        self.push(Op::ConcatCols(idx), Tensor::from_parts(rows, cols, data), rg)
    }

    /// `matrix · a` for a fixed sparse operator.
    pub fn spmm(&mut self, matrix: &Arc<SparseMatrix>, a: Var) -> Result<Var, NnError> {
        let ia = self.resolve(a)?;
        let out = matrix.spmm(&self.nodes[ia].value)?;
        let rg = self.needs(&[ia]);
        self.push(Op::SpMM(Arc::clone(matrix), ia), out, rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, NnError> {
        let ia = self.resolve(a)?;
        let out = softmax_rows(&self.nodes[ia].value);
        let rg = self.needs(&[ia]);
        self.push(Op::SoftmaxRows(ia), out, rg)
    }

    /// Mean negative log-likelihood of `labels[u]` over rows `u` in `mask`.
    pub fn cross_entropy_masked(
        &mut self,
        logits: Var,
        labels: &[u8],
        mask: &[usize],
    ) -> Result<Var, NnError> {
        let il = self.resolve(logits)?;
        let z = &self.nodes[il].value;
        if labels.len() != z.rows() {
            return Err(NnError::ShapeMismatch {
                op: "cross_entropy_masked",
                left: z.shape(),
                right: (labels.len(), 1),
            });
        }
        if mask.is_empty() {
            return Err(NnError::EmptyMask);
        }
        if let Some(&bad) = mask.iter().find(|&&u| u >= z.rows()) {
            return Err(NnError::MaskOutOfRange(bad));
        }
        if let Some(&bad) = labels.iter().find(|&&c| c as usize >= z.cols()) {
            return Err(NnError::LabelOutOfRange(bad));
        }
        let probs = softmax_rows(z);
        let mut loss = 0.0;
        for &u in mask {
            let row = z.row(u);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            loss += lse - row[labels[u] as usize];
        }
        loss /= mask.len() as f64;
        let rg = self.needs(&[il]);
        self.push(
            Op::CrossEntropyMasked {
                logits: il,
                probs,
                labels: labels.to_vec(),
                mask: mask.to_vec(),
            },
            Tensor::scalar(loss),
            rg,
        )
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NnError> {
        let ia = self.resolve(a)?;
        let s = self.nodes[ia].value.sum();
        let rg = self.needs(&[ia]);
        self.push(Op::Sum(ia), Tensor::scalar(s), rg)
    }

    /// Propagates d(loss)/d(node) back to every parameter leaf, adding into
    /// the accumulators.
    pub fn backward(&mut self, loss: Var) -> Result<(), NnError> {
        let il = self.resolve(loss)?;
        let shape = self.nodes[il].value.shape();
        if shape != (1, 1) {
            return Err(NnError::NotScalar(shape));
        }
        let mut adj: Vec<Option<Tensor>> = (0..=il).map(|_| None).collect();
        adj[il] = Some(Tensor::scalar(1.0));

        for i in (0..=il).rev() {
            let Some(up) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let send = |j: usize, g: Tensor, adj: &mut Vec<Option<Tensor>>| {
                if !self.nodes[j].requires_grad {
                    return;
                }
                match &mut adj[j] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            };
            match &node.op {
                Op::Leaf => {
                    match &mut self.grads[i] {
                        Some(acc) => acc.add_assign(&up),
                        slot @ None => *slot = Some(up),
                    }
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    if self.nodes[*a].requires_grad {
                        send(*a, up.matmul_t_unchecked(vb), &mut adj);
                    }
                    if self.nodes[*b].requires_grad {
                        send(*b, va.t_matmul_unchecked(&up), &mut adj);
                    }
                }
                Op::Add(a, b) => {
                    send(*a, up.clone(), &mut adj);
                    send(*b, up, &mut adj);
                }
                Op::Relu(a) => {
                    let out = &node.value;
                    let g = out
                        .data()
                        .iter()
                        .zip(up.data())
                        .map(|(&y, &d)| if y > 0.0 { d } else { 0.0 })
                        .collect();
                    send(*a, Tensor::from_parts(out.rows(), out.cols(), g), &mut adj);
                }
                Op::MaskApply(a, mask) => {
                    let g = up.data().iter().zip(mask.data()).map(|(d, m)| d * m).collect();
                    send(*a, Tensor::from_parts(up.rows(), up.cols(), g), &mut adj);
                }
                Op::ConcatCols(parts) => {
                    let rows = up.rows();
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.nodes[p].value.cols();
                        let mut g = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            g.extend_from_slice(&up.row(r)[offset..offset + w]);
                        }
                        offset += w;
                        send(p, Tensor::from_parts(rows, w, g), &mut adj);
                    }
                }
                Op::SpMM(m, a) => {
                    send(*a, m.spmm_transposed(&up)?, &mut adj);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut g = vec![0.0; y.rows() * y.cols()];
                    for r in 0..y.rows() {
                        let (yr, dr) = (y.row(r), up.row(r));
                        let dot: f64 = yr.iter().zip(dr).map(|(a, b)| a * b).sum();
                        for c in 0..y.cols() {
                            g[r * y.cols() + c] = yr[c] * (dr[c] - dot);
                        }
                    }
                    send(*a, Tensor::from_parts(y.rows(), y.cols(), g), &mut adj);
                }
                Op::CrossEntropyMasked {
                    logits,
                    probs,
                    labels,
                    mask,
                } => {
                    let scale = up.get(0, 0) / mask.len() as f64;
                    let mut g = Tensor::zeros(probs.rows(), probs.cols());
                    for &u in mask {
                        for c in 0..probs.cols() {
                            let target = if labels[u] as usize == c { 1.0 } else { 0.0 };
                            g.set(u, c, g.get(u, c) + scale * (probs.get(u, c) - target));
                        }
                    }
                    send(*logits, g, &mut adj);
                }
                Op::Sum(a) => {
                    let (r, c) = self.nodes[*a].value.shape();
                    send(*a, Tensor::filled(r, c, up.get(0, 0)), &mut adj);
                }
            }
        }
        Ok(())
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(z: &Tensor) -> Tensor {
    let mut out = Vec::with_capacity(z.rows() * z.cols());
    for r in 0..z.rows() {
        let row = z.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        out.extend(row.iter().map(|x| (x - max).exp()));
        let total: f64 = out[start..].iter().sum();
        for v in &mut out[start..] {
            *v /= total;
        }
    }
    Tensor::from_parts(z.rows(), z.cols(), out)
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`.
pub fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut Rng) -> Tensor {
    if rate <= 0.0 {
        return Tensor::filled(rows, cols, 1.0);
    }
    let keep = 1.0 / (1.0 - rate);
    let data = (0..rows * cols)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    Tensor::from_parts(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn softmax_of_zero_row_is_uniform() {
        let mut tape = Tape::new();
        let z = tape.constant(t(&[vec![0.0, 0.0]])).unwrap();
        let p = tape.softmax_rows(z).unwrap();
        assert_eq!(tape.value(p).unwrap().data(), &[0.5, 0.5]);
    }

    #[test]
    fn cross_entropy_closed_forms() {
        let mut tape = Tape::new();
        let z = tape.constant(t(&[vec![0.0, 0.0], vec![-40.0, 40.0]])).unwrap();
        let half = tape.cross_entropy_masked(z, &[1, 1], &[0]).unwrap();
        assert_abs_diff_eq!(
            tape.value(half).unwrap().get(0, 0),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        let sure = tape.cross_entropy_masked(z, &[1, 1], &[1]).unwrap();
        assert!(tape.value(sure).unwrap().get(0, 0) < 1e-30);
    }

    #[test]
    fn cross_entropy_errors() {
        let mut tape = Tape::new();
        let z = tape.constant(t(&[vec![0.0, 0.0]])).unwrap();
        assert_eq!(
            tape.cross_entropy_masked(z, &[0], &[]).unwrap_err(),
            NnError::EmptyMask
        );
        assert!(tape.cross_entropy_masked(z, &[0, 1], &[0]).is_err());
    }

    #[test]
    fn relu_clamps() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[vec![-1.0, 2.0]])).unwrap();
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).unwrap().data(), &[0.0, 2.0]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(2, 3)).unwrap();
        let b = tape.constant(Tensor::zeros(2, 3)).unwrap();
        let err = tape.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            NnError::ShapeMismatch {
                op: "matmul",
                left: (2, 3),
                right: (2, 3)
            }
        );
        assert!(err.to_string().contains("(2, 3)"));
    }

    #[test]
    fn sum_gradient_is_ones_and_accumulates() {
        let mut tape = Tape::new();
        let w = tape.param(t(&[vec![1.0, -2.0], vec![3.0, 4.0]])).unwrap();
        let s = tape.sum(w).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(w).unwrap().unwrap().data(), &[1.0; 4]);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(w).unwrap().unwrap().data(), &[2.0; 4]);
        tape.zero_grad();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(w).unwrap().unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn backward_needs_scalar_and_live_var() {
        let mut tape = Tape::new();
        let w = tape.param(Tensor::zeros(2, 2)).unwrap();
        assert_eq!(tape.backward(w).unwrap_err(), NnError::NotScalar((2, 2)));
        let s = tape.sum(w).unwrap();
        tape.reset();
        assert_eq!(tape.backward(s).unwrap_err(), NnError::UnknownVar);
        let other = Tape::new();
        let mut other = other;
        assert_eq!(other.backward(s).unwrap_err(), NnError::UnknownVar);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[vec![1.0, 2.0]])).unwrap();
        let w = tape.param(t(&[vec![0.5], vec![-0.5]])).unwrap();
        let y = tape.matmul(x, w).unwrap();
        let s = tape.sum(y).unwrap();
        tape.backward(s).unwrap();
        assert!(tape.grad(x).unwrap().is_none());
        assert_eq!(tape.grad(w).unwrap().unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn dropout_mask_is_seeded_and_scaled() {
        let a = dropout_mask(10, 10, 0.5, &mut crate::seed::rng_from(3));
        let b = dropout_mask(10, 10, 0.5, &mut crate::seed::rng_from(3));
        assert_eq!(a, b);
        assert!(a.data().iter().all(|&m| m == 0.0 || m == 2.0));
        assert!(dropout_mask(2, 2, 0.0, &mut crate::seed::rng_from(0))
            .data()
            .iter()
            .all(|&m| m == 1.0));
    }
}
