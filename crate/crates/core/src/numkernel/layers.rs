//! Vector-input dense layers stored in a [`ParamSet`] under a name prefix.
//!
//! `dense`: `x * {p}.w + {p}.b`. `mlp`: `act(x * {p}.w1 + {p}.b1) * {p}.w2 + {p}.b2`
//! with `act` tanh unless another [`Activation`] is asked for.
//! A bias tensor that is absent from the set is treated as a fixed zero.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{add_outer, vec_matmul, vec_matmul_t, ParamSet, Tensor2};

/// Default init range for agent heads. Wider than the encoder's so the
/// multiplicative fusions start with usable gradients.
pub const HEAD_INIT_BOUND: f64 = 0.6;

fn add_bias(p: &ParamSet, name: &str, y: &mut [f64]) {
    if let Some(b) = p.try_get(name) {
        y.iter_mut().zip(b.data()).for_each(|(v, b)| *v += b);
    }
}

fn bias_grad(grads: &mut ParamSet, name: &str, g: &[f64]) {
    if grads.contains(name) {
        let b = grads.get_mut(name);
        b.data_mut().iter_mut().zip(g).for_each(|(b, g)| *b += g);
    }
}

pub fn init_dense<R: Rng>(
    p: &mut ParamSet,
    prefix: &str,
    n_in: usize,
    n_out: usize,
    bound: f64,
    rng: &mut R,
) {
    p.insert(
        format!("{prefix}.w"),
        Tensor2::uniform(n_in, n_out, bound, rng),
    );
    p.insert(
        format!("{prefix}.b"),
        Tensor2::uniform(1, n_out, bound, rng),
    );
}

pub fn dense_forward(p: &ParamSet, prefix: &str, x: &[f64]) -> Vec<f64> {
    let mut y = vec_matmul(x, p.get(&format!("{prefix}.w")));
    add_bias(p, &format!("{prefix}.b"), &mut y);
    y
}

/// Accumulates weight gradients and returns the input gradient.
pub fn dense_backward(
    p: &ParamSet,
    prefix: &str,
    x: &[f64],
    g_out: &[f64],
    grads: &mut ParamSet,
) -> Vec<f64> {
    let w = format!("{prefix}.w");
    add_outer(grads.get_mut(&w), x, g_out);
    bias_grad(grads, &format!("{prefix}.b"), g_out);
    vec_matmul_t(g_out, p.get(&w))
}

pub fn init_mlp<R: Rng>(
    p: &mut ParamSet,
    prefix: &str,
    n_in: usize,
    hidden: usize,
    n_out: usize,
    bound: f64,
    rng: &mut R,
) {
    p.insert(
        format!("{prefix}.w1"),
        Tensor2::uniform(n_in, hidden, bound, rng),
    );
    p.insert(
        format!("{prefix}.b1"),
        Tensor2::uniform(1, hidden, bound, rng),
    );
    p.insert(
        format!("{prefix}.w2"),
        Tensor2::uniform(hidden, n_out, bound, rng),
    );
    p.insert(
        format!("{prefix}.b2"),
        Tensor2::uniform(1, n_out, bound, rng),
    );
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
        }
    }

    /// Slope expressed through the activation's output.
    fn slope_from_output(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Relu => f64::from(u8::from(h > 0.0)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    pub x: Vec<f64>,
    pub hidden: Vec<f64>,
    pub activation: Activation,
}

pub fn mlp_forward(p: &ParamSet, prefix: &str, x: &[f64]) -> (Vec<f64>, MlpCache) {
    mlp_forward_with(p, prefix, x, Activation::Tanh)
}

pub fn mlp_forward_with(
    p: &ParamSet,
    prefix: &str,
    x: &[f64],
    activation: Activation,
) -> (Vec<f64>, MlpCache) {
    let mut h = vec_matmul(x, p.get(&format!("{prefix}.w1")));
    add_bias(p, &format!("{prefix}.b1"), &mut h);
    h.iter_mut().for_each(|v| *v = activation.apply(*v));
    let mut y = vec_matmul(&h, p.get(&format!("{prefix}.w2")));
    add_bias(p, &format!("{prefix}.b2"), &mut y);
    (
        y,
        MlpCache {
            x: x.to_vec(),
            hidden: h,
            activation,
        },
    )
}

pub fn mlp_backward(
    p: &ParamSet,
    prefix: &str,
    cache: &MlpCache,
    g_out: &[f64],
    grads: &mut ParamSet,
) -> Vec<f64> {
    let w2 = format!("{prefix}.w2");
    let w1 = format!("{prefix}.w1");
    add_outer(grads.get_mut(&w2), &cache.hidden, g_out);
    bias_grad(grads, &format!("{prefix}.b2"), g_out);
    let g_h = vec_matmul_t(g_out, p.get(&w2));
    let g_pre: Vec<f64> = g_h
        .iter()
        .zip(&cache.hidden)
        .map(|(g, &h)| g * cache.activation.slope_from_output(h))
        .collect();
    add_outer(grads.get_mut(&w1), &cache.x, &g_pre);
    bias_grad(grads, &format!("{prefix}.b1"), &g_pre);
    vec_matmul_t(&g_pre, p.get(&w1))
}
