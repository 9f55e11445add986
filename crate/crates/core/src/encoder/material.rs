//! Material branch: view projection, CLS + positional embeddings, pre-norm
//! transformer blocks, CLS readout and output projection.

use super::layers::{
    attention, attention_backward, gelu, gelu_grad, layer_norm, layer_norm_backward, LayerNormCache,
};
use super::params::{BlockParams, EncoderParams};
use crate::error::{Error, Result};
use crate::scalar::{all_finite, norm, Scalar};
use crate::tensor::{add_row_bias, matmul, matmul_acc, matmul_nt, matmul_tn_acc, sum_rows_acc};

struct BlockTrace<T> {
    ln1: LayerNormCache<T>,
    h1: Vec<T>,
    qkv: Vec<T>,
    probs: Vec<T>,
    attn: Vec<T>,
    ln2: LayerNormCache<T>,
    h2: Vec<T>,
    pre_act: Vec<T>,
    act: Vec<T>,
}

/// Everything the backward pass needs from one material forward.
pub struct MaterialTrace<T> {
    views: Vec<T>,
    blocks: Vec<BlockTrace<T>>,
    cls_out: Vec<T>,
    raw_norm: T,
    /// Unit-norm embedding.
    pub embedding: Vec<T>,
}

fn block_forward<T: Scalar>(
    p: &BlockParams<T>,
    x: &mut [T],
    n: usize,
    d: usize,
    heads: usize,
    hidden: usize,
) -> BlockTrace<T> {
    let mut h1 = vec![T::zero(); n * d];
    let ln1 = layer_norm(x, d, p.ln1_gain.data(), p.ln1_bias.data(), &mut h1);
    let mut qkv = vec![T::zero(); n * 3 * d];
    matmul(&h1, p.qkv_weight.data(), n, d, 3 * d, &mut qkv);
    add_row_bias(&mut qkv, p.qkv_bias.data());
    let mut attn = vec![T::zero(); n * d];
    let probs = attention(&qkv, n, d, heads, &mut attn);
    // residual: x += attn · W_o + b_o
    matmul_acc(&attn, p.attn_out_weight.data(), n, d, d, x);
    add_row_bias(x, p.attn_out_bias.data());

    let mut h2 = vec![T::zero(); n * d];
    let ln2 = layer_norm(x, d, p.ln2_gain.data(), p.ln2_bias.data(), &mut h2);
    let mut pre_act = vec![T::zero(); n * hidden];
    matmul(&h2, p.fc1_weight.data(), n, d, hidden, &mut pre_act);
    add_row_bias(&mut pre_act, p.fc1_bias.data());
    let act: Vec<T> = pre_act.iter().map(|&u| gelu(u)).collect();
    matmul_acc(&act, p.fc2_weight.data(), n, hidden, d, x);
    add_row_bias(x, p.fc2_bias.data());

    BlockTrace {
        ln1,
        h1,
        qkv,
        probs,
        attn,
        ln2,
        h2,
        pre_act,
        act,
    }
}

/// Takes `dx` w.r.t. the block output and turns it into `dx` w.r.t. the block input.
#[allow(clippy::too_many_arguments)]
fn block_backward<T: Scalar>(
    p: &BlockParams<T>,
    g: &mut BlockParams<T>,
    tr: &BlockTrace<T>,
    dx: &mut [T],
    n: usize,
    d: usize,
    heads: usize,
    hidden: usize,
) {
    // MLP sub-layer; dx already carries the residual path.
    let dm = dx.to_vec();
    matmul_tn_acc(&tr.act, &dm, n, hidden, d, g.fc2_weight.data_mut());
    sum_rows_acc(&dm, d, g.fc2_bias.data_mut());
    let mut du = vec![T::zero(); n * hidden];
    matmul_nt(&dm, p.fc2_weight.data(), n, d, hidden, &mut du);
    for (v, &u) in du.iter_mut().zip(&tr.pre_act) {
        *v *= gelu_grad(u);
    }
    matmul_tn_acc(&tr.h2, &du, n, d, hidden, g.fc1_weight.data_mut());
    sum_rows_acc(&du, hidden, g.fc1_bias.data_mut());
    let mut dh2 = vec![T::zero(); n * d];
    matmul_nt(&du, p.fc1_weight.data(), n, hidden, d, &mut dh2);
    layer_norm_backward(
        &dh2,
        d,
        &tr.ln2,
        p.ln2_gain.data(),
        g.ln2_gain.data_mut(),
        g.ln2_bias.data_mut(),
        dx,
    );

    // attention sub-layer
    let d_o = dx.to_vec();
    matmul_tn_acc(&tr.attn, &d_o, n, d, d, g.attn_out_weight.data_mut());
    sum_rows_acc(&d_o, d, g.attn_out_bias.data_mut());
    let mut d_attn = vec![T::zero(); n * d];
    matmul_nt(&d_o, p.attn_out_weight.data(), n, d, d, &mut d_attn);
    let mut d_qkv = vec![T::zero(); n * 3 * d];
    attention_backward(&tr.qkv, &tr.probs, &d_attn, n, d, heads, &mut d_qkv);
    matmul_tn_acc(&tr.h1, &d_qkv, n, d, 3 * d, g.qkv_weight.data_mut());
    sum_rows_acc(&d_qkv, 3 * d, g.qkv_bias.data_mut());
    let mut dh1 = vec![T::zero(); n * d];
    matmul_nt(&d_qkv, p.qkv_weight.data(), n, 3 * d, d, &mut dh1);
    layer_norm_backward(
        &dh1,
        d,
        &tr.ln1,
        p.ln1_gain.data(),
        g.ln1_gain.data_mut(),
        g.ln1_bias.data_mut(),
        dx,
    );
}

/// Forward pass over a `n_views × d_in` row-major view matrix.
pub fn material_forward_traced<T: Scalar>(params: &EncoderParams<T>, views: &[T]) -> Result<MaterialTrace<T>> {
    let cfg = params.config;
    let (d_in, d, v) = (cfg.d_in, cfg.d_model, cfg.n_views);
    if views.len() != v * d_in {
        return Err(Error::DimensionMismatch {
            expected: v * d_in,
            got: views.len(),
        });
    }
    let n = v + 1;
    let mut x = vec![T::zero(); n * d];
    x[..d].copy_from_slice(params.cls_token.data());
    matmul(views, params.in_proj_weight.data(), v, d_in, d, &mut x[d..]);
    add_row_bias(&mut x[d..], params.in_proj_bias.data());
    for (a, &b) in x.iter_mut().zip(params.pos_embedding.data()) {
        *a += b;
    }

    let blocks = params
        .blocks
        .iter()
        .map(|b| block_forward(b, &mut x, n, d, cfg.n_heads, cfg.mlp_hidden))
        .collect();

    let cls_out = x[..d].to_vec();
    let mut y = vec![T::zero(); cfg.d_emb];
    matmul(&cls_out, params.out_proj_weight.data(), 1, d, cfg.d_emb, &mut y);
    add_row_bias(&mut y, params.out_proj_bias.data());
    if !all_finite(&y) {
        return Err(Error::NonFiniteActivation("material encoder"));
    }
    let raw_norm = norm(&y);
    if raw_norm.as_f64() <= crate::descriptor::ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    let embedding = y.iter().map(|&v| v / raw_norm).collect();
    Ok(MaterialTrace {
        views: views.to_vec(),
        blocks,
        cls_out,
        raw_norm,
        embedding,
    })
}

/// Accumulates into `grads` the gradient of a scalar whose derivative w.r.t.
/// the unit embedding is `d_emb`.
pub fn material_backward<T: Scalar>(
    params: &EncoderParams<T>,
    trace: &MaterialTrace<T>,
    d_emb: &[T],
    grads: &mut EncoderParams<T>,
) {
    let cfg = params.config;
    let (d_in, d, v, e) = (cfg.d_in, cfg.d_model, cfg.n_views, cfg.d_emb);
    let n = v + 1;

    // through y / ‖y‖
    let emb = &trace.embedding;
    let proj = crate::scalar::dot(emb, d_emb);
    let dy: Vec<T> = d_emb
        .iter()
        .zip(emb)
        .map(|(&g, &u)| (g - u * proj) / trace.raw_norm)
        .collect();

    matmul_tn_acc(&trace.cls_out, &dy, 1, d, e, grads.out_proj_weight.data_mut());
    sum_rows_acc(&dy, e, grads.out_proj_bias.data_mut());
    let mut dx = vec![T::zero(); n * d];
    matmul_nt(&dy, params.out_proj_weight.data(), 1, e, d, &mut dx[..d]);

    for ((p, g), tr) in params
        .blocks
        .iter()
        .zip(grads.blocks.iter_mut())
        .zip(&trace.blocks)
        .rev()
    {
        block_backward(p, g, tr, &mut dx, n, d, cfg.n_heads, cfg.mlp_hidden);
    }

    for (a, &b) in grads.pos_embedding.data_mut().iter_mut().zip(&dx) {
        *a += b;
    }
    for (a, &b) in grads.cls_token.data_mut().iter_mut().zip(&dx[..d]) {
        *a += b;
    }
    matmul_tn_acc(&trace.views, &dx[d..], v, d_in, d, grads.in_proj_weight.data_mut());
    sum_rows_acc(&dx[d..], d, grads.in_proj_bias.data_mut());
}
