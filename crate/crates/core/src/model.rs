//! Rank-constrained linear model: hidden vector as the weighted average
//! of embedding rows, with full-softmax and hierarchical-softmax losses
//! and the per-example SGD step.
//!
//! Matrices are shared mutable state under the hogwild contract: workers
//! update rows without locks and torn reads are tolerated as noise. The
//! math is generic over the float type; training uses `f32`, the
//! gradient-check harness instantiates the same code with `f64`.

use std::cell::UnsafeCell;
use std::ops::AddAssign;

use num_traits::Float;
use rand::Rng;

use crate::dictionary::FeatureVector;
use crate::huffman::HuffmanTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    FullSoftmax,
    HierarchicalSoftmax,
}

/// Row-major matrix with interior mutability for hogwild updates.
///
/// `row_mut` hands out overlapping mutable rows across threads by
/// design; see the trainer's concurrency contract.
pub struct Matrix<F> {
    data: UnsafeCell<Box<[F]>>,
    rows: usize,
    cols: usize,
}

unsafe impl<F: Send> Sync for Matrix<F> {}

impl<F: Float> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Matrix<F> {
        Matrix {
            data: UnsafeCell::new(vec![F::zero(); rows * cols].into_boxed_slice()),
            rows,
            cols,
        }
    }

    /// Uniform init in [-scale, scale], driven by the caller's rng.
    pub fn uniform<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Matrix<F> {
        let data: Vec<F> = (0..rows * cols)
            .map(|_| F::from(rng.gen_range(-scale..=scale)).unwrap())
            .collect();
        Matrix {
            data: UnsafeCell::new(data.into_boxed_slice()),
            rows,
            cols,
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Matrix<F> {
        assert_eq!(data.len(), rows * cols);
        Matrix {
            data: UnsafeCell::new(data.into_boxed_slice()),
            rows,
            cols,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[F] {
        assert!(i < self.rows);
        unsafe {
            let base = (*self.data.get()).as_ptr();
            std::slice::from_raw_parts(base.add(i * self.cols), self.cols)
        }
    }

    /// Hogwild row access: may alias concurrent reads and writes.
    #[allow(clippy::mut_from_ref)]
    pub fn row_mut(&self, i: usize) -> &mut [F] {
        assert!(i < self.rows);
        unsafe {
            let base = (*self.data.get()).as_mut_ptr();
            std::slice::from_raw_parts_mut(base.add(i * self.cols), self.cols)
        }
    }

    pub fn as_slice(&self) -> &[F] {
        unsafe {
            let base = (*self.data.get()).as_ptr();
            std::slice::from_raw_parts(base, self.rows * self.cols)
        }
    }

    /// Whole-buffer counterpart of `row_mut`, with the same aliasing caveat.
    #[allow(clippy::mut_from_ref)]
    pub fn as_slice_mut(&self) -> &mut [F] {
        unsafe {
            let base = (*self.data.get()).as_mut_ptr();
            std::slice::from_raw_parts_mut(base, self.rows * self.cols)
        }
    }
}

/// Per-worker scratch buffers, reused across examples, never shared.
pub struct ScratchState<F> {
    pub hidden: Vec<F>,
    pub grad: Vec<F>,
    pub output: Vec<F>,
}

impl<F: Float> ScratchState<F> {
    pub fn new(dim: usize, nout: usize) -> ScratchState<F> {
        ScratchState {
            hidden: vec![F::zero(); dim],
            grad: vec![F::zero(); dim],
            output: vec![F::zero(); nout],
        }
    }
}

pub struct ModelImpl<F> {
    a: Matrix<F>,
    b: Matrix<F>,
    dim: usize,
    loss: LossKind,
    tree: Option<HuffmanTree>,
}

/// The production model; parameters are stored and updated in f32.
pub type Model = ModelImpl<f32>;

impl<F: Float + AddAssign> ModelImpl<F> {
    /// A uniform in [-1/dim, 1/dim], B all zeros. Zero B makes initial
    /// losses analytically checkable (ln k for full softmax, depth·ln 2
    /// for hierarchical).
    pub fn init<R: Rng>(
        nfeatures: u64,
        nlabels: usize,
        dim: usize,
        loss: LossKind,
        tree: Option<HuffmanTree>,
        rng: &mut R,
    ) -> ModelImpl<F> {
        let nout = match loss {
            LossKind::FullSoftmax => nlabels,
            LossKind::HierarchicalSoftmax => nlabels - 1,
        };
        debug_assert!(matches!(loss, LossKind::FullSoftmax) || tree.is_some());
        ModelImpl {
            a: Matrix::uniform(nfeatures as usize, dim, 1.0 / dim as f64, rng),
            b: Matrix::zeros(nout, dim),
            dim,
            loss,
            tree,
        }
    }

    pub fn from_parts(
        a: Matrix<F>,
        b: Matrix<F>,
        loss: LossKind,
        tree: Option<HuffmanTree>,
    ) -> ModelImpl<F> {
        let dim = a.cols();
        ModelImpl { a, b, dim, loss, tree }
    }

    pub fn a(&self) -> &Matrix<F> {
        &self.a
    }

    pub fn b(&self) -> &Matrix<F> {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
    }

    pub fn tree(&self) -> Option<&HuffmanTree> {
        self.tree.as_ref()
    }

    pub fn num_labels(&self) -> usize {
        match self.loss {
            LossKind::FullSoftmax => self.b.rows(),
            LossKind::HierarchicalSoftmax => self.b.rows() + 1,
        }
    }

    /// hidden = weight · Σ A[i] over the feature ids (A·x_n).
    pub fn compute_hidden(&self, features: &FeatureVector, hidden: &mut [F]) {
        debug_assert!(!features.is_empty(), "caller must skip empty examples");
        for v in hidden.iter_mut() {
            *v = F::zero();
        }
        for &id in &features.ids {
            let row = self.a.row(id as usize);
            for (v, &x) in hidden.iter_mut().zip(row) {
                *v += x;
            }
        }
        let w = F::from(features.weight).unwrap();
        for v in hidden.iter_mut() {
            *v = *v * w;
        }
    }

    /// One SGD step of the flat softmax NLL. Returns the example's loss
    /// before the update.
    pub fn full_softmax_step(
        &self,
        features: &FeatureVector,
        label: u32,
        lr: F,
        scratch: &mut ScratchState<F>,
    ) -> F {
        let nout = self.b.rows();
        self.compute_hidden(features, &mut scratch.hidden);
        for i in 0..nout {
            scratch.output[i] = dot(self.b.row(i), &scratch.hidden);
        }
        softmax_in_place(&mut scratch.output[..nout]);
        let loss = -scratch.output[label as usize].max(F::min_positive_value()).ln();

        for v in scratch.grad.iter_mut() {
            *v = F::zero();
        }
        for i in 0..nout {
            let target = if i == label as usize { F::one() } else { F::zero() };
            let g = lr * (target - scratch.output[i]);
            let row = self.b.row_mut(i);
            // read the pre-update row into the hidden gradient, then update
            for (gv, &bv) in scratch.grad.iter_mut().zip(row.iter()) {
                *gv += g * bv;
            }
            for (bv, &hv) in row.iter_mut().zip(&scratch.hidden) {
                *bv += g * hv;
            }
        }
        self.apply_input_gradient(features, &scratch.grad);
        loss
    }

    /// One SGD step of the hierarchical softmax loss: a binary logistic
    /// decision per internal node on the label's root-to-leaf path. Code
    /// digit 0 means the sigmoid-positive branch (target t = 1 − c).
    pub fn hierarchical_softmax_step(
        &self,
        features: &FeatureVector,
        label: u32,
        lr: F,
        scratch: &mut ScratchState<F>,
    ) -> F {
        let tree = self.tree.as_ref().expect("hierarchical model");
        let k = tree.num_labels();
        self.compute_hidden(features, &mut scratch.hidden);
        for v in scratch.grad.iter_mut() {
            *v = F::zero();
        }
        let mut loss = F::zero();
        let (path, code) = tree.path(label);
        for (&node, &c) in path.iter().zip(code) {
            let row = self.b.row_mut(node as usize - k);
            let s = dot(row, &scratch.hidden);
            let target = if c == 0 { F::one() } else { F::zero() };
            loss += -log_sigmoid(if c == 0 { s } else { -s });
            let g = lr * (target - sigmoid(s));
            for (gv, &bv) in scratch.grad.iter_mut().zip(row.iter()) {
                *gv += g * bv;
            }
            for (bv, &hv) in row.iter_mut().zip(&scratch.hidden) {
                *bv += g * hv;
            }
        }
        self.apply_input_gradient(features, &scratch.grad);
        loss
    }

    fn apply_input_gradient(&self, features: &FeatureVector, grad: &[F]) {
        let w = F::from(features.weight).unwrap();
        for &id in &features.ids {
            let row = self.a.row_mut(id as usize);
            for (av, &gv) in row.iter_mut().zip(grad) {
                *av += w * gv;
            }
        }
    }

    /// Log-probability of a leaf under the hierarchical softmax,
    /// accumulated in f64 regardless of the parameter type.
    pub fn leaf_log_probability(&self, hidden: &[F], label: u32) -> f64 {
        let tree = self.tree.as_ref().expect("hierarchical model");
        let k = tree.num_labels();
        let (path, code) = tree.path(label);
        let mut lp = 0.0f64;
        for (&node, &c) in path.iter().zip(code) {
            let s = dot_f64(self.b.row(node as usize - k), hidden);
            lp += log_sigmoid_f64(if c == 0 { s } else { -s });
        }
        lp
    }

    /// Score of one internal node against a hidden vector, in f64.
    /// Going left multiplies by σ(s), going right by σ(−s).
    pub fn node_score(&self, hidden: &[F], node: u32) -> f64 {
        let k = self.tree.as_ref().expect("hierarchical model").num_labels();
        dot_f64(self.b.row(node as usize - k), hidden)
    }
}

pub fn dot<F: Float + AddAssign>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

fn dot_f64<F: Float>(a: &[F], b: &[F]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| x.to_f64().unwrap() * y.to_f64().unwrap())
        .sum()
}

/// Max-shifted softmax; safe on any finite input.
pub fn softmax_in_place<F: Float + AddAssign>(scores: &mut [F]) {
    let max = scores.iter().cloned().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s = *s / sum;
    }
}

/// Numerically stable branch form of the logistic function.
pub fn sigmoid<F: Float>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

pub fn log_sigmoid<F: Float>(x: F) -> F {
    if x >= F::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn log_sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}
