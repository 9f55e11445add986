//! AdamW over [`EncoderParams`], with moments stored in the same layout.

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderParams;
use crate::loss::MAX_LOGIT_SCALE;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled weight decay.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1.0e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Scalar Adam step on slices; `step` is 1-based.
pub fn adam_update<T: Scalar>(
    cfg: &AdamConfig,
    step: u64,
    params: &mut [T],
    grads: &[T],
    m: &mut [T],
    v: &mut [T],
) {
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let lr = T::lit(cfg.learning_rate);
    let eps = T::lit(cfg.epsilon);
    let wd = T::lit(cfg.weight_decay);
    let bc1 = T::one() - b1.powi(step as i32);
    let bc2 = T::one() - b2.powi(step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (T::one() - b1) * g;
        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * params[i]);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    /// Completed update count.
    pub step: u64,
    pub m: EncoderParams<T>,
    pub v: EncoderParams<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &EncoderParams<T>) -> Self {
        Self {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// One update. The logit scale is clamped afterwards so `e^t ≤ 100`.
    pub fn update(&mut self, params: &mut EncoderParams<T>, grads: &EncoderParams<T>) {
        self.step += 1;
        let grads = grads.named_tensors();
        for (((p, (_, g)), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            adam_update(
                &self.config,
                self.step,
                p.data_mut(),
                g.data(),
                m.data_mut(),
                v.data_mut(),
            );
        }
        let cap = T::lit(MAX_LOGIT_SCALE.ln());
        let t = &mut params.logit_scale.data_mut()[0];
        if *t > cap {
            *t = cap;
        }
    }
}
