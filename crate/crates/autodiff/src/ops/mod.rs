//! Differentiable operators over `channels × time` tensors.

mod activation;
mod basic;
mod conv;
mod lstm;
mod norm;
mod pool;

pub use activation::{relu, selu, tanh, SELU_ALPHA, SELU_LAMBDA};
pub use basic::{add, concat, dropout, softmax};
pub use conv::{conv1d, ConvSpec};
pub use lstm::{bilstm, LstmWeights};
pub use norm::{
    batch_norm, positionwise_norm, weight_norm, BatchNormMode, RunningStats, BATCH_NORM_EPS,
    POSITIONWISE_EPS,
};
pub use pool::maxpool1d;

/// `dst[i] += a * src[i]`
#[inline]
pub(crate) fn axpy(dst: &mut [f64], a: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorise without reassociation
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in 4 * chunks..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
