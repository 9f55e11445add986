//! Symmetric InfoNCE over paired embedding batches.
//!
//! With `s = e^t` and logits `L = s · M Pᵀ`, the loss is the mean of the
//! row-wise (material → part) and column-wise (part → material) softmax
//! cross-entropies against the identity pairing.

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};
use crate::tensor::Tensor;

/// Upper bound on the effective logit scale `e^t`.
pub const MAX_LOGIT_SCALE: f64 = 100.0;

/// Returns `(e^t, de^t/dt)` with `e^t` clamped to [`MAX_LOGIT_SCALE`].
pub fn effective_scale<T: Scalar>(t: T) -> (T, T) {
    let cap = T::lit(MAX_LOGIT_SCALE.ln());
    if t >= cap {
        (T::lit(MAX_LOGIT_SCALE), T::zero())
    } else {
        let s = t.exp();
        (s, s)
    }
}

#[derive(Clone, Debug)]
pub struct InfoNceGrads<T> {
    pub loss: T,
    pub d_mat: Tensor<T>,
    pub d_part: Tensor<T>,
    pub d_logit_scale: T,
}

fn check_batches<T: Scalar>(mat: &Tensor<T>, part: &Tensor<T>) -> Result<(usize, usize)> {
    let (b, d) = (mat.rows(), mat.cols());
    if b == 0 || mat.is_empty() {
        return Err(Error::LengthMismatch("empty embedding batch".into()));
    }
    if part.rows() != b {
        return Err(Error::DimensionMismatch {
            expected: b,
            got: part.rows(),
        });
    }
    if part.cols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: part.cols(),
        });
    }
    Ok((b, d))
}

/// Cosine logits `M Pᵀ` (unscaled), `B × B`.
fn similarity<T: Scalar>(mat: &Tensor<T>, part: &Tensor<T>, b: usize) -> Vec<T> {
    let mut sim = vec![T::zero(); b * b];
    for i in 0..b {
        for j in 0..b {
            sim[i * b + j] = dot(mat.row(i), part.row(j));
        }
    }
    sim
}

/// Softmax over row `i` (or column `i`) of the `b × b` logits; returns the log-sum-exp.
fn softmax_line<T: Scalar>(
    logits: &[T],
    b: usize,
    i: usize,
    row_major: bool,
    out: &mut [T],
) -> T {
    let at = |j: usize| {
        if row_major {
            logits[i * b + j]
        } else {
            logits[j * b + i]
        }
    };
    let mut m = T::neg_infinity();
    for j in 0..b {
        m = m.max(at(j));
    }
    let mut z = T::zero();
    for (j, o) in out.iter_mut().enumerate().take(b) {
        *o = (at(j) - m).exp();
        z += *o;
    }
    for o in out.iter_mut().take(b) {
        *o /= z;
    }
    m + z.ln()
}

pub fn info_nce<T: Scalar>(mat: &Tensor<T>, part: &Tensor<T>, logit_scale: T) -> Result<T> {
    let (b, _) = check_batches(mat, part)?;
    let (s, _) = effective_scale(logit_scale);
    let logits: Vec<T> = similarity(mat, part, b).into_iter().map(|v| v * s).collect();
    let mut probs = vec![T::zero(); b];
    let mut total = T::zero();
    for i in 0..b {
        let lse_row = softmax_line(&logits, b, i, true, &mut probs);
        let lse_col = softmax_line(&logits, b, i, false, &mut probs);
        total += (lse_row - logits[i * b + i]) + (lse_col - logits[i * b + i]);
    }
    Ok(total / T::lit(2.0 * b as f64))
}

/// Loss plus exact gradients with respect to both batches and the logit-scale parameter `t`.
pub fn info_nce_grads<T: Scalar>(
    mat: &Tensor<T>,
    part: &Tensor<T>,
    logit_scale: T,
) -> Result<InfoNceGrads<T>> {
    let (b, d) = check_batches(mat, part)?;
    let (s, ds_dt) = effective_scale(logit_scale);
    let sim = similarity(mat, part, b);
    let logits: Vec<T> = sim.iter().map(|&v| v * s).collect();

    // dLoss/dLogits = ((softmax_rows - I) + (softmax_cols - I)) / (2B)
    let inv = T::one() / T::lit(2.0 * b as f64);
    let mut g = vec![T::zero(); b * b];
    let mut probs = vec![T::zero(); b];
    let mut total = T::zero();
    for i in 0..b {
        let lse_row = softmax_line(&logits, b, i, true, &mut probs);
        for j in 0..b {
            g[i * b + j] += probs[j] * inv;
        }
        let lse_col = softmax_line(&logits, b, i, false, &mut probs);
        for j in 0..b {
            g[j * b + i] += probs[j] * inv;
        }
        g[i * b + i] -= inv + inv;
        total += (lse_row - logits[i * b + i]) + (lse_col - logits[i * b + i]);
    }
    let loss = total * inv;

    let mut d_mat = Tensor::zeros(&[b, d]);
    let mut d_part = Tensor::zeros(&[b, d]);
    let mut d_s = T::zero();
    for i in 0..b {
        for j in 0..b {
            let gij = g[i * b + j];
            d_s += gij * sim[i * b + j];
            let w = gij * s;
            for (o, &p) in d_mat.row_mut(i).iter_mut().zip(part.row(j)) {
                *o += w * p;
            }
            for (o, &m) in d_part.row_mut(j).iter_mut().zip(mat.row(i)) {
                *o += w * m;
            }
        }
    }
    Ok(InfoNceGrads {
        loss,
        d_mat,
        d_part,
        d_logit_scale: d_s * ds_dt,
    })
}
