//! Encoder checkpoints in the `MCPT` container.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::encoder::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::format::{decode_tensors, encode_tensors, write_atomic};
use crate::tensor::Tensor;

const CONFIG_TENSOR: &str = "encoder.config";

fn config_tensor(c: &EncoderConfig) -> Tensor<f32> {
    let dims = [
        c.d_in, c.d_model, c.d_emb, c.n_heads, c.n_layers, c.n_views, c.mlp_hidden,
    ];
    Tensor::from_vec(&[dims.len()], dims.iter().map(|&d| d as f32).collect()).expect("rank-1")
}

fn config_from_tensor(t: &Tensor<f32>) -> Result<EncoderConfig> {
    let v = t.data();
    if v.len() != 7 || v.iter().any(|x| x.fract() != 0.0 || *x < 0.0 || *x > 16_777_216.0) {
        return Err(Error::SchemaError("malformed encoder.config tensor".into()));
    }
    let d = |i: usize| v[i] as usize;
    let config = EncoderConfig {
        d_in: d(0),
        d_model: d(1),
        d_emb: d(2),
        n_heads: d(3),
        n_layers: d(4),
        n_views: d(5),
        mlp_hidden: d(6),
    };
    config.validate()?;
    Ok(config)
}

/// Named tensors for `params`, config first.
pub fn params_to_tensors(params: &EncoderParams<f32>) -> Vec<(String, Tensor<f32>)> {
    let mut out = vec![(CONFIG_TENSOR.to_string(), config_tensor(&params.config))];
    out.extend(
        params
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.clone())),
    );
    out
}

/// Rebuilds parameters from a tensor map, removing the consumed entries.
/// `prefix` is prepended to every parameter name (the config tensor included).
pub fn params_from_tensors(
    tensors: &mut HashMap<String, Tensor<f32>>,
    prefix: &str,
    config: Option<EncoderConfig>,
) -> Result<EncoderParams<f32>> {
    let config = match config {
        Some(c) => c,
        None => {
            let t = tensors
                .remove(&format!("{prefix}{CONFIG_TENSOR}"))
                .ok_or_else(|| Error::SchemaError("checkpoint lacks encoder.config".into()))?;
            config_from_tensor(&t)?
        }
    };
    let mut params = EncoderParams::<f32>::zeros(config)?;
    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    for (dst, name) in params.tensors_mut().into_iter().zip(names) {
        let key = format!("{prefix}{name}");
        let src = tensors
            .remove(&key)
            .ok_or_else(|| Error::SchemaError(format!("checkpoint lacks tensor {key}")))?;
        if src.shape() != dst.shape() {
            return Err(Error::ShapeMismatch(format!(
                "tensor {key}: expected {:?}, found {:?}",
                dst.shape(),
                src.shape()
            )));
        }
        *dst = src;
    }
    Ok(params)
}

pub fn encode_checkpoint(params: &EncoderParams<f32>) -> Vec<u8> {
    encode_tensors(&params_to_tensors(params))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<EncoderParams<f32>> {
    let mut map: HashMap<String, Tensor<f32>> = decode_tensors(bytes)?.into_iter().collect();
    params_from_tensors(&mut map, "", None)
}

pub fn save_checkpoint(params: &EncoderParams<f32>, path: &Path) -> Result<()> {
    write_atomic(path, &encode_checkpoint(params))
}

/// Loads encoder parameters. Extra tensors (e.g. optimizer state) are ignored.
pub fn load_checkpoint(path: &Path) -> Result<EncoderParams<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode_checkpoint(&bytes)
}
