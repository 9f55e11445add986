use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Architecture of both encoder branches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Width of the raw view / part feature vectors.
    pub d_in: usize,
    pub d_model: usize,
    /// Width of the shared embedding space.
    pub d_emb: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    /// Views per material (`n_env × n_shapes`).
    pub n_views: usize,
    /// Hidden width of each transformer block's MLP.
    pub mlp_hidden: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_in: 32,
            d_model: 64,
            d_emb: 32,
            n_heads: 4,
            n_layers: 2,
            n_views: 42,
            mlp_hidden: 128,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_in", self.d_in),
            ("d_model", self.d_model),
            ("d_emb", self.d_emb),
            ("n_heads", self.n_heads),
            ("n_views", self.n_views),
            ("mlp_hidden", self.mlp_hidden),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive")));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Sequence length seen by the material transformer (CLS + views).
    pub fn tokens(&self) -> usize {
        self.n_views + 1
    }
}

/// Weights of one pre-norm transformer block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams<T> {
    pub ln1_gain: Tensor<T>,
    pub ln1_bias: Tensor<T>,
    /// `d_model × 3·d_model`, columns ordered `[Q | K | V]`.
    pub qkv_weight: Tensor<T>,
    pub qkv_bias: Tensor<T>,
    pub attn_out_weight: Tensor<T>,
    pub attn_out_bias: Tensor<T>,
    pub ln2_gain: Tensor<T>,
    pub ln2_bias: Tensor<T>,
    pub fc1_weight: Tensor<T>,
    pub fc1_bias: Tensor<T>,
    pub fc2_weight: Tensor<T>,
    pub fc2_bias: Tensor<T>,
}

/// All learnable weights of the material encoder, the part encoder and the
/// logit scale. Weight matrices are stored `in × out` (row-vector convention).
///
/// Gradients and optimizer moments reuse this type.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams<T> {
    pub config: EncoderConfig,
    pub in_proj_weight: Tensor<T>,
    pub in_proj_bias: Tensor<T>,
    pub cls_token: Tensor<T>,
    /// `(n_views + 1) × d_model`; row 0 belongs to the CLS token.
    pub pos_embedding: Tensor<T>,
    pub blocks: Vec<BlockParams<T>>,
    pub out_proj_weight: Tensor<T>,
    pub out_proj_bias: Tensor<T>,
    pub part_fc1_weight: Tensor<T>,
    pub part_fc1_bias: Tensor<T>,
    pub part_fc2_weight: Tensor<T>,
    pub part_fc2_bias: Tensor<T>,
    /// Scalar `t`; the effective temperature is `e^t`.
    pub logit_scale: Tensor<T>,
}

impl<T: Scalar> EncoderParams<T> {
    /// All-zero parameters with the shapes implied by `config`.
    pub fn zeros(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let EncoderConfig {
            d_in,
            d_model: d,
            d_emb,
            mlp_hidden: h,
            ..
        } = config;
        let block = || BlockParams {
            ln1_gain: Tensor::zeros(&[d]),
            ln1_bias: Tensor::zeros(&[d]),
            qkv_weight: Tensor::zeros(&[d, 3 * d]),
            qkv_bias: Tensor::zeros(&[3 * d]),
            attn_out_weight: Tensor::zeros(&[d, d]),
            attn_out_bias: Tensor::zeros(&[d]),
            ln2_gain: Tensor::zeros(&[d]),
            ln2_bias: Tensor::zeros(&[d]),
            fc1_weight: Tensor::zeros(&[d, h]),
            fc1_bias: Tensor::zeros(&[h]),
            fc2_weight: Tensor::zeros(&[h, d]),
            fc2_bias: Tensor::zeros(&[d]),
        };
        Ok(Self {
            config,
            in_proj_weight: Tensor::zeros(&[d_in, d]),
            in_proj_bias: Tensor::zeros(&[d]),
            cls_token: Tensor::zeros(&[d]),
            pos_embedding: Tensor::zeros(&[config.tokens(), d]),
            blocks: (0..config.n_layers).map(|_| block()).collect(),
            out_proj_weight: Tensor::zeros(&[d, d_emb]),
            out_proj_bias: Tensor::zeros(&[d_emb]),
            part_fc1_weight: Tensor::zeros(&[d_in, d]),
            part_fc1_bias: Tensor::zeros(&[d]),
            part_fc2_weight: Tensor::zeros(&[d, d_emb]),
            part_fc2_bias: Tensor::zeros(&[d_emb]),
            logit_scale: Tensor::zeros(&[1]),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config).expect("config validated at construction")
    }

    pub fn logit_scale(&self) -> T {
        self.logit_scale.data()[0]
    }

    /// Every tensor with its stable checkpoint name, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = vec![
            ("material.in_proj.weight".into(), &self.in_proj_weight),
            ("material.in_proj.bias".into(), &self.in_proj_bias),
            ("material.cls_token".into(), &self.cls_token),
            ("material.pos_embedding".into(), &self.pos_embedding),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            let p = |s: &str| format!("material.block{i}.{s}");
            out.extend([
                (p("ln1.gain"), &b.ln1_gain),
                (p("ln1.bias"), &b.ln1_bias),
                (p("attn.qkv.weight"), &b.qkv_weight),
                (p("attn.qkv.bias"), &b.qkv_bias),
                (p("attn.out.weight"), &b.attn_out_weight),
                (p("attn.out.bias"), &b.attn_out_bias),
                (p("ln2.gain"), &b.ln2_gain),
                (p("ln2.bias"), &b.ln2_bias),
                (p("mlp.fc1.weight"), &b.fc1_weight),
                (p("mlp.fc1.bias"), &b.fc1_bias),
                (p("mlp.fc2.weight"), &b.fc2_weight),
                (p("mlp.fc2.bias"), &b.fc2_bias),
            ]);
        }
        out.extend([
            ("material.out_proj.weight".into(), &self.out_proj_weight),
            ("material.out_proj.bias".into(), &self.out_proj_bias),
            ("part.fc1.weight".into(), &self.part_fc1_weight),
            ("part.fc1.bias".into(), &self.part_fc1_bias),
            ("part.fc2.weight".into(), &self.part_fc2_weight),
            ("part.fc2.bias".into(), &self.part_fc2_bias),
            ("logit_scale".into(), &self.logit_scale),
        ]);
        out
    }

    /// Mutable tensors in the same order as [`Self::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = vec![
            &mut self.in_proj_weight,
            &mut self.in_proj_bias,
            &mut self.cls_token,
            &mut self.pos_embedding,
        ];
        for b in &mut self.blocks {
            out.extend([
                &mut b.ln1_gain,
                &mut b.ln1_bias,
                &mut b.qkv_weight,
                &mut b.qkv_bias,
                &mut b.attn_out_weight,
                &mut b.attn_out_bias,
                &mut b.ln2_gain,
                &mut b.ln2_bias,
                &mut b.fc1_weight,
                &mut b.fc1_bias,
                &mut b.fc2_weight,
                &mut b.fc2_bias,
            ]);
        }
        out.extend([
            &mut self.out_proj_weight,
            &mut self.out_proj_bias,
            &mut self.part_fc1_weight,
            &mut self.part_fc1_bias,
            &mut self.part_fc2_weight,
            &mut self.part_fc2_bias,
            &mut self.logit_scale,
        ]);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> EncoderParams<U> {
        let mut out = EncoderParams::<U>::zeros(self.config).expect("validated config");
        for (dst, (_, src)) in out.tensors_mut().into_iter().zip(self.named_tensors()) {
            *dst = src.cast();
        }
        out
    }
}

/// Initial logit scale `t = ln(1 / 0.07)`.
pub fn initial_logit_scale() -> f64 {
    (1.0f64 / 0.07).ln()
}

/// Deterministic initialisation: weights and biases `~ U(±1/√fan_in)`, layer
/// norms at identity, CLS and positional embeddings `~ U(±1/√d_model)`.
pub fn init_params<T: Scalar>(config: EncoderConfig, seed: u64) -> Result<EncoderParams<T>> {
    let mut params = EncoderParams::<T>::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |t: &mut Tensor<T>, fan_in: usize| {
        let a = 1.0 / (fan_in as f64).sqrt();
        for v in t.data_mut() {
            *v = T::lit(rng.random_range(-a..a));
        }
    };
    let EncoderConfig {
        d_in,
        d_model: d,
        mlp_hidden: h,
        ..
    } = config;

    uniform(&mut params.in_proj_weight, d_in);
    uniform(&mut params.in_proj_bias, d_in);
    uniform(&mut params.cls_token, d);
    uniform(&mut params.pos_embedding, d);
    for b in &mut params.blocks {
        b.ln1_gain.fill(T::one());
        b.ln2_gain.fill(T::one());
        uniform(&mut b.qkv_weight, d);
        uniform(&mut b.qkv_bias, d);
        uniform(&mut b.attn_out_weight, d);
        uniform(&mut b.attn_out_bias, d);
        uniform(&mut b.fc1_weight, d);
        uniform(&mut b.fc1_bias, d);
        uniform(&mut b.fc2_weight, h);
        uniform(&mut b.fc2_bias, h);
    }
    uniform(&mut params.out_proj_weight, d);
    uniform(&mut params.out_proj_bias, d);
    uniform(&mut params.part_fc1_weight, d_in);
    uniform(&mut params.part_fc1_bias, d_in);
    uniform(&mut params.part_fc2_weight, d);
    uniform(&mut params.part_fc2_bias, d);
    params.logit_scale.data_mut()[0] = T::lit(initial_logit_scale());
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = EncoderConfig::default();
        let a = init_params::<f32>(cfg, 7).unwrap();
        let b = init_params::<f32>(cfg, 7).unwrap();
        assert_eq!(a, b);
        let c = init_params::<f32>(cfg, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn logit_scale_starts_at_clip_temperature() {
        let p = init_params::<f64>(EncoderConfig::default(), 0).unwrap();
        assert!((p.logit_scale().exp() - 14.2857).abs() < 1e-4);
    }

    #[test]
    fn indivisible_heads_rejected() {
        let cfg = EncoderConfig {
            d_model: 17,
            n_heads: 4,
            ..Default::default()
        };
        assert!(matches!(
            init_params::<f32>(cfg, 0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn names_and_mut_views_line_up() {
        let mut p = init_params::<f32>(EncoderConfig::default(), 1).unwrap();
        let shapes: Vec<Vec<usize>> = p.named_tensors().iter().map(|(_, t)| t.shape().to_vec()).collect();
        let names: Vec<String> = p.named_tensors().into_iter().map(|(n, _)| n).collect();
        let mut uniq = names.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), names.len());
        let mut_shapes: Vec<Vec<usize>> = p.tensors_mut().iter().map(|t| t.shape().to_vec()).collect();
        assert_eq!(shapes, mut_shapes);
        assert_eq!(names.len(), 4 + 12 * 2 + 7);
    }
}
