//! Minimal dense/attention neural-network stack with hand-written
//! backpropagation.
//!
//! Everything is generic over [`Scalar`] so the production path runs at f32
//! while gradient-check tests instantiate the same code at f64. Layers own
//! their parameters and gradient buffers; `forward_train` returns the cache
//! that `backward` consumes; parameter traversal happens through
//! [`ParamRefMut`]/[`ParamView`] lists with stable names and ordering.

mod attention;
mod block;
mod layers;
mod optim;

pub use attention::{AttentionCache, MultiHeadAttention};
pub use block::{BlockCache, TransformerBlock};
pub use layers::{noise_vector, Dense, DenseCache, Embedding, LayerNorm, LayerNormCache};
pub use optim::{clip_global_norm, Optimizer, OptimizerKind};

use ndarray::{Array2, NdFloat};
use num_traits::FromPrimitive;

/// Float element type for all tensors in this crate.
pub trait Scalar: NdFloat + FromPrimitive + std::iter::Sum + Send + Sync + 'static {}
impl Scalar for f32 {}
impl Scalar for f64 {}

/// Lossless-enough cast from f64 sampling space into the working precision.
pub fn cast<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("finite f64 cast")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
}

/// Mutable view of one parameter tensor, flattened.
pub struct ParamRefMut<'a, F> {
    pub name: String,
    pub value: &'a mut [F],
    pub grad: &'a mut [F],
    pub trainable: bool,
}

/// Shared view of one parameter tensor, flattened.
pub struct ParamView<'a, F> {
    pub name: String,
    pub value: &'a [F],
    pub grad: &'a [F],
    pub trainable: bool,
}

/// Row-wise numerically stable softmax, in place.
pub fn softmax_rows<F: Scalar>(m: &mut Array2<F>) {
    for mut row in m.rows_mut() {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
}

/// Mean categorical cross-entropy over rows, from raw logits.
///
/// Returns the mean loss over all rows and the gradient with respect to the
/// logits (already divided by the row count). The loss goes through
/// log-sum-exp, so non-finite logits surface as a non-finite loss instead
/// of being clamped away.
pub fn softmax_cross_entropy<F: Scalar>(logits: &Array2<F>, targets: &[usize]) -> (f64, Array2<F>) {
    let rows = logits.nrows();
    assert_eq!(rows, targets.len(), "one target per logit row");
    let mut loss = 0.0f64;
    for (i, row) in logits.rows().into_iter().enumerate() {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut sum = 0.0f64;
        for &v in row.iter() {
            sum += (v - max).to_f64().unwrap().exp();
        }
        let lse = max.to_f64().unwrap() + sum.ln();
        loss += lse - row[targets[i]].to_f64().unwrap();
    }
    let mut grad = logits.clone();
    softmax_rows(&mut grad);
    let inv_n = F::from_f64(1.0 / rows as f64).unwrap();
    for (i, mut row) in grad.rows_mut().into_iter().enumerate() {
        row[targets[i]] = row[targets[i]] - F::one();
        for v in row.iter_mut() {
            *v = *v * inv_n;
        }
    }
    (loss / rows as f64, grad)
}

/// Fraction of rows whose argmax matches the target (ties resolve to the
/// lowest index, which a linear scan gives for free).
pub fn argmax_accuracy<F: Scalar>(probs: &Array2<F>, targets: &[usize]) -> f64 {
    let mut hits = 0usize;
    for (row, &t) in probs.rows().into_iter().zip(targets) {
        let mut best = 0usize;
        let mut best_v = row[0];
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v > best_v {
                best_v = v;
                best = j;
            }
        }
        if best == t {
            hits += 1;
        }
    }
    hits as f64 / targets.len() as f64
}
