//! Dense numeric kernel: row-major matrices, activations and losses,
//! optimizer steps, and a central-difference gradient verifier.
//!
//! All math is `f64`. Every agent graph in this crate has a hand-written
//! backward pass; [`grad_check`] is what certifies them.

mod gradcheck;
mod layers;
mod ops;
mod optim;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, DEFAULT_STEP};
pub use layers::{
    dense_backward, dense_forward, init_dense, init_mlp, mlp_backward, mlp_forward,
    mlp_forward_with, Activation, MlpCache, HEAD_INIT_BOUND,
};
pub(crate) use ops::softmax_unchecked;
pub use ops::{
    argmax, cross_entropy, cross_entropy_grad, sigmoid, softmax, softmax_backward,
    softmax_cross_entropy, PROB_FLOOR,
};
pub use optim::{OptimizerKind, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use tensor::{add_outer, dot, vec_matmul, vec_matmul_t, ParamSet, Tensor2};

/// Row-wise softmax of a matrix.
pub fn softmax_rows(s: &Tensor2) -> Tensor2 {
    let mut out = Tensor2::zeros(s.rows(), s.cols());
    for r in 0..s.rows() {
        let p = softmax_unchecked(s.row(r));
        out.row_mut(r).copy_from_slice(&p);
    }
    out
}

/// Backward of [`softmax_rows`].
pub fn softmax_rows_backward(a: &Tensor2, grad_a: &Tensor2) -> Tensor2 {
    let mut out = Tensor2::zeros(a.rows(), a.cols());
    for r in 0..a.rows() {
        let g = softmax_backward(a.row(r), grad_a.row(r));
        out.row_mut(r).copy_from_slice(&g);
    }
    out
}

/// `tanh'` expressed through the activation value.
pub fn tanh_grad_from_output(y: &Tensor2, upstream: &Tensor2) -> Tensor2 {
    let mut out = upstream.clone();
    for (o, &v) in out.data_mut().iter_mut().zip(y.data()) {
        *o *= 1.0 - v * v;
    }
    out
}

/// Deterministic 64-bit mixer (SplitMix64 finalizer), used to derive
/// independent per-item seeds from a master seed.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
