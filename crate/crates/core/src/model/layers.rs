//! Building blocks shared by every variant: affine maps, AdaLN modulation,
//! multi-head attention and the sinusoidal time encoding.

use alloc::vec;
use alloc::vec::Vec;

use super::params::{AttnProj, Linear};
use crate::tensor::{numel, Graph, ParamStore, Tensor, TensorError, Var};

/// Diffusion time is multiplied by this before the sinusoidal encoding.
pub const TIME_SCALE: f64 = 1000.0;
/// Lowest encoding frequency is `1 / MAX_PERIOD`.
pub const MAX_PERIOD: f64 = 10_000.0;

/// `x W + b` over the last axis.
pub fn linear(g: &mut Graph, store: &ParamStore, lin: &Linear, x: Var) -> Result<Var, TensorError> {
    let w = g.param(store, lin.w);
    let b = g.param(store, lin.b);
    let y = g.matmul(x, w)?;
    g.add(y, b)
}

/// `γ ⊙ LN(h) + β`, with `γ`, `β` broadcast into the shape of `h`.
pub fn modulate(g: &mut Graph, h: Var, gamma: Var, beta: Var) -> Result<Var, TensorError> {
    let n = g.layer_norm(h)?;
    let s = g.mul(n, gamma)?;
    g.add(s, beta)
}

/// Interleaved `[sin(τ f_0), cos(τ f_0), sin(τ f_1), ...]` with `τ = 1000 t`
/// and `D/2` geometric frequencies from 1 down to 1/10000.
pub fn sinusoidal_embedding(t: f64, d: usize) -> Vec<f64> {
    let half = d / 2;
    let tau = t * TIME_SCALE;
    let mut out = vec![0.0; d];
    for k in 0..half {
        let freq = if half > 1 {
            libm::pow(MAX_PERIOD, -(k as f64) / (half - 1) as f64)
        } else {
            1.0
        };
        out[2 * k] = libm::sin(tau * freq);
        out[2 * k + 1] = libm::cos(tau * freq);
    }
    out
}

/// Additive mask with `-inf` where `allowed(query, key)` is false.
pub fn attention_mask(nq: usize, nk: usize, allowed: impl Fn(usize, usize) -> bool) -> Tensor {
    let mut m = Tensor::zeros(&[nq, nk]);
    let data = m.data_mut();
    for i in 0..nq {
        for j in 0..nk {
            if !allowed(i, j) {
                data[i * nk + j] = f64::NEG_INFINITY;
            }
        }
    }
    m
}

fn split_heads(g: &mut Graph, x: Var, heads: usize) -> Result<(Var, Vec<usize>), TensorError> {
    let shape = g.shape(x).to_vec();
    let r = shape.len();
    let (n, d) = (shape[r - 2], shape[r - 1]);
    let lead = shape[..r - 2].to_vec();
    let flat = numel(&lead);
    let y = g.reshape(x, &[flat, n, heads, d / heads])?;
    Ok((g.permute(y, &[0, 2, 1, 3])?, lead))
}

/// Scaled dot-product attention over already-projected `q`, `k`, `v`
/// (`[..., N, D]`, identical leading dims), split into `heads` heads.
pub fn attention_core(
    g: &mut Graph,
    q: Var,
    k: Var,
    v: Var,
    heads: usize,
    mask: Option<&Tensor>,
) -> Result<Var, TensorError> {
    let d = *g.shape(q).last().unwrap_or(&0);
    let nq = g.shape(q)[g.shape(q).len() - 2];
    let (qh, lead) = split_heads(g, q, heads)?;
    let (kh, _) = split_heads(g, k, heads)?;
    let (vh, _) = split_heads(g, v, heads)?;
    let scores = g.matmul_nt(qh, kh)?;
    let scores = g.scale(scores, 1.0 / libm::sqrt((d / heads) as f64));
    let scores = match mask {
        Some(m) => {
            let mv = g.constant(m.clone());
            g.add(scores, mv)?
        }
        None => scores,
    };
    let probs = g.softmax(scores)?;
    let out = g.matmul(probs, vh)?;
    let out = g.permute(out, &[0, 2, 1, 3])?;
    let mut shape = lead;
    shape.extend_from_slice(&[nq, d]);
    g.reshape(out, &shape)
}

/// Multi-head attention with queries from `q_in` and keys/values from `kv_in`.
pub fn multi_head_attention(
    g: &mut Graph,
    store: &ParamStore,
    proj: &AttnProj,
    q_in: Var,
    kv_in: Var,
    heads: usize,
    mask: Option<&Tensor>,
) -> Result<Var, TensorError> {
    let q = linear(g, store, &proj.q, q_in)?;
    let k = linear(g, store, &proj.k, kv_in)?;
    let v = linear(g, store, &proj.v, kv_in)?;
    let a = attention_core(g, q, k, v, heads, mask)?;
    linear(g, store, &proj.o, a)
}
