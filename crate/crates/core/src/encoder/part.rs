//! Part branch: two-layer GELU MLP over a part descriptor.

use super::layers::{gelu, gelu_grad};
use super::params::EncoderParams;
use crate::error::{Error, Result};
use crate::scalar::{all_finite, dot, norm, Scalar};
use crate::tensor::{add_row_bias, matmul, matmul_nt, matmul_tn_acc, sum_rows_acc};

pub struct PartTrace<T> {
    input: Vec<T>,
    pre_act: Vec<T>,
    act: Vec<T>,
    raw_norm: T,
    pub embedding: Vec<T>,
}

pub fn part_forward_traced<T: Scalar>(params: &EncoderParams<T>, descriptor: &[T]) -> Result<PartTrace<T>> {
    let cfg = params.config;
    if descriptor.len() != cfg.d_in {
        return Err(Error::DimensionMismatch {
            expected: cfg.d_in,
            got: descriptor.len(),
        });
    }
    let mut pre_act = vec![T::zero(); cfg.d_model];
    matmul(descriptor, params.part_fc1_weight.data(), 1, cfg.d_in, cfg.d_model, &mut pre_act);
    add_row_bias(&mut pre_act, params.part_fc1_bias.data());
    let act: Vec<T> = pre_act.iter().map(|&u| gelu(u)).collect();
    let mut y = vec![T::zero(); cfg.d_emb];
    matmul(&act, params.part_fc2_weight.data(), 1, cfg.d_model, cfg.d_emb, &mut y);
    add_row_bias(&mut y, params.part_fc2_bias.data());
    if !all_finite(&y) {
        return Err(Error::NonFiniteActivation("part encoder"));
    }
    let raw_norm = norm(&y);
    if raw_norm.as_f64() <= crate::descriptor::ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    let embedding = y.iter().map(|&v| v / raw_norm).collect();
    Ok(PartTrace {
        input: descriptor.to_vec(),
        pre_act,
        act,
        raw_norm,
        embedding,
    })
}

pub fn part_backward<T: Scalar>(
    params: &EncoderParams<T>,
    trace: &PartTrace<T>,
    d_emb: &[T],
    grads: &mut EncoderParams<T>,
) {
    let cfg = params.config;
    let (d_in, d, e) = (cfg.d_in, cfg.d_model, cfg.d_emb);
    let proj = dot(&trace.embedding, d_emb);
    let dy: Vec<T> = d_emb
        .iter()
        .zip(&trace.embedding)
        .map(|(&g, &u)| (g - u * proj) / trace.raw_norm)
        .collect();
    matmul_tn_acc(&trace.act, &dy, 1, d, e, grads.part_fc2_weight.data_mut());
    sum_rows_acc(&dy, e, grads.part_fc2_bias.data_mut());
    let mut du = vec![T::zero(); d];
    matmul_nt(&dy, params.part_fc2_weight.data(), 1, e, d, &mut du);
    for (v, &u) in du.iter_mut().zip(&trace.pre_act) {
        *v *= gelu_grad(u);
    }
    matmul_tn_acc(&trace.input, &du, 1, d_in, d, grads.part_fc1_weight.data_mut());
    sum_rows_acc(&du, d, grads.part_fc1_bias.data_mut());
}
