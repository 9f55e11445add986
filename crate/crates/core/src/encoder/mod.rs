//! The two learnable encoders and their joint contrastive gradient.
//!
//! `material_forward` pools a material's view sequence through a small
//! transformer (CLS readout); `part_forward` maps a part descriptor through an
//! MLP. Both end in an L2 normalisation so cosine similarity is a dot product.
//! Backward passes are written by hand and checked against finite differences
//! in the test suite.

mod layers;
mod material;
mod params;
mod part;

pub use material::{material_backward, material_forward_traced, MaterialTrace};
pub use params::{init_params, initial_logit_scale, BlockParams, EncoderConfig, EncoderParams};
pub use part::{part_backward, part_forward_traced, PartTrace};

use crate::dataset::{MaterialViewSet, PartSample};
use crate::error::{Error, Result};
use crate::loss::{info_nce, info_nce_grads};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Unit-norm material embedding of a `n_views × d_in` view matrix.
pub fn material_forward<T: Scalar>(params: &EncoderParams<T>, views: &[T]) -> Result<Vec<T>> {
    material_forward_traced(params, views).map(|t| t.embedding)
}

/// Unit-norm part embedding of a `d_in` descriptor.
pub fn part_forward<T: Scalar>(params: &EncoderParams<T>, descriptor: &[T]) -> Result<Vec<T>> {
    part_forward_traced(params, descriptor).map(|t| t.embedding)
}

fn convert<T: Scalar>(v: &[f32]) -> Vec<T> {
    v.iter().map(|&x| T::from_f32_lossless(x)).collect()
}

fn check_views<T: Scalar>(params: &EncoderParams<T>, set: &MaterialViewSet) -> Result<()> {
    if set.d_in != params.config.d_in {
        return Err(Error::DimensionMismatch {
            expected: params.config.d_in,
            got: set.d_in,
        });
    }
    if set.n_views() != params.config.n_views {
        return Err(Error::DimensionMismatch {
            expected: params.config.n_views,
            got: set.n_views(),
        });
    }
    Ok(())
}

pub fn embed_material<T: Scalar>(params: &EncoderParams<T>, set: &MaterialViewSet) -> Result<Vec<T>> {
    check_views(params, set)?;
    material_forward(params, &convert::<T>(&set.views))
}

pub fn embed_part<T: Scalar>(params: &EncoderParams<T>, sample: &PartSample) -> Result<Vec<T>> {
    part_forward(params, &convert::<T>(&sample.descriptor))
}

/// Paired training inputs, already converted to the working scalar type.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    /// One `n_views × d_in` matrix per pair.
    pub views: Vec<Vec<T>>,
    /// One `d_in` descriptor per pair.
    pub descriptors: Vec<Vec<T>>,
}

impl<T: Scalar> Batch<T> {
    pub fn from_samples(
        params: &EncoderParams<T>,
        materials: &[&MaterialViewSet],
        parts: &[&PartSample],
    ) -> Result<Self> {
        if materials.len() != parts.len() {
            return Err(Error::LengthMismatch(format!(
                "{} materials vs {} parts",
                materials.len(),
                parts.len()
            )));
        }
        for m in materials {
            check_views(params, m)?;
        }
        Ok(Self {
            views: materials.iter().map(|m| convert(&m.views)).collect(),
            descriptors: parts.iter().map(|p| convert(&p.descriptor)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }
}

fn embed_batch<T: Scalar>(
    params: &EncoderParams<T>,
    batch: &Batch<T>,
) -> Result<(Vec<MaterialTrace<T>>, Vec<PartTrace<T>>, Tensor<T>, Tensor<T>)> {
    let b = batch.len();
    if b == 0 || batch.descriptors.len() != b {
        return Err(Error::LengthMismatch(format!(
            "batch has {} materials and {} parts",
            b,
            batch.descriptors.len()
        )));
    }
    let e = params.config.d_emb;
    let mats = batch
        .views
        .iter()
        .map(|v| material_forward_traced(params, v))
        .collect::<Result<Vec<_>>>()?;
    let parts = batch
        .descriptors
        .iter()
        .map(|d| part_forward_traced(params, d))
        .collect::<Result<Vec<_>>>()?;
    let m = Tensor::from_vec(&[b, e], mats.iter().flat_map(|t| t.embedding.clone()).collect())?;
    let p = Tensor::from_vec(&[b, e], parts.iter().flat_map(|t| t.embedding.clone()).collect())?;
    Ok((mats, parts, m, p))
}

/// Contrastive loss of a batch (forward only).
pub fn batch_loss<T: Scalar>(params: &EncoderParams<T>, batch: &Batch<T>) -> Result<T> {
    let (_, _, m, p) = embed_batch(params, batch)?;
    info_nce(&m, &p, params.logit_scale())
}

/// Loss and exact gradient with respect to every parameter, including the logit scale.
pub fn batch_forward_backward_raw<T: Scalar>(
    params: &EncoderParams<T>,
    batch: &Batch<T>,
) -> Result<(T, EncoderParams<T>)> {
    let (mat_traces, part_traces, m, p) = embed_batch(params, batch)?;
    let g = info_nce_grads(&m, &p, params.logit_scale())?;
    let mut grads = params.zeros_like();
    for (i, tr) in mat_traces.iter().enumerate() {
        material_backward(params, tr, g.d_mat.row(i), &mut grads);
    }
    for (i, tr) in part_traces.iter().enumerate() {
        part_backward(params, tr, g.d_part.row(i), &mut grads);
    }
    grads.logit_scale.data_mut()[0] = g.d_logit_scale;
    Ok((g.loss, grads))
}

/// [`batch_forward_backward_raw`] over dataset records; part `i` pairs with material `i`.
pub fn batch_forward_backward<T: Scalar>(
    params: &EncoderParams<T>,
    materials: &[&MaterialViewSet],
    parts: &[&PartSample],
) -> Result<(T, EncoderParams<T>)> {
    let batch = Batch::from_samples(params, materials, parts)?;
    batch_forward_backward_raw(params, &batch)
}
