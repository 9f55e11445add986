//! Layer norm, GELU and multi-head self-attention with hand-written backward passes.

use crate::scalar::Scalar;

pub(crate) const LN_EPS: f64 = 1e-5;

pub(crate) struct LayerNormCache<T> {
    pub xhat: Vec<T>,
    pub rstd: Vec<T>,
}

/// Row-wise layer norm of an `rows × d` matrix into `out`.
pub(crate) fn layer_norm<T: Scalar>(
    x: &[T],
    d: usize,
    gain: &[T],
    bias: &[T],
    out: &mut [T],
) -> LayerNormCache<T> {
    let rows = x.len() / d;
    let inv_d = T::one() / T::lit(d as f64);
    let eps = T::lit(LN_EPS);
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let rs = T::one() / (var + eps).sqrt();
        rstd[r] = rs;
        for c in 0..d {
            let h = (row[c] - mean) * rs;
            xhat[r * d + c] = h;
            out[r * d + c] = h * gain[c] + bias[c];
        }
    }
    LayerNormCache { xhat, rstd }
}

/// Accumulates parameter grads and adds the input grad into `dx`.
pub(crate) fn layer_norm_backward<T: Scalar>(
    dy: &[T],
    d: usize,
    cache: &LayerNormCache<T>,
    gain: &[T],
    d_gain: &mut [T],
    d_bias: &mut [T],
    dx: &mut [T],
) {
    let rows = dy.len() / d;
    let inv_d = T::one() / T::lit(d as f64);
    let mut dxhat = vec![T::zero(); d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let mut mean_dxhat = T::zero();
        let mut mean_dxhat_xhat = T::zero();
        for c in 0..d {
            d_gain[c] += dyr[c] * xh[c];
            d_bias[c] += dyr[c];
            dxhat[c] = dyr[c] * gain[c];
            mean_dxhat += dxhat[c];
            mean_dxhat_xhat += dxhat[c] * xh[c];
        }
        mean_dxhat *= inv_d;
        mean_dxhat_xhat *= inv_d;
        let rs = cache.rstd[r];
        for c in 0..d {
            dx[r * d + c] += rs * (dxhat[c] - mean_dxhat - xh[c] * mean_dxhat_xhat);
        }
    }
}

// tanh approximation
const GELU_C: f64 = 0.044_715;

#[inline]
pub(crate) fn gelu<T: Scalar>(x: T) -> T {
    let k = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let inner = k * (x + T::lit(GELU_C) * x * x * x);
    T::lit(0.5) * x * (T::one() + inner.tanh())
}

#[inline]
pub(crate) fn gelu_grad<T: Scalar>(x: T) -> T {
    let k = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let c = T::lit(GELU_C);
    let th = (k * (x + c * x * x * x)).tanh();
    let half = T::lit(0.5);
    half * (T::one() + th) + half * x * (T::one() - th * th) * k * (T::one() + T::lit(3.0) * c * x * x)
}

/// Scaled dot-product attention for all heads.
///
/// `qkv` is `n × 3d` with columns `[Q | K | V]`; writes the concatenated head
/// outputs (`n × d`) into `out` and returns the attention probabilities
/// (`heads × n × n`).
pub(crate) fn attention<T: Scalar>(qkv: &[T], n: usize, d: usize, heads: usize, out: &mut [T]) -> Vec<T> {
    let dh = d / heads;
    let scale = T::one() / T::lit(dh as f64).sqrt();
    let stride = 3 * d;
    let mut probs = vec![T::zero(); heads * n * n];
    out[..n * d].iter_mut().for_each(|v| *v = T::zero());
    for h in 0..heads {
        let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
        let p = &mut probs[h * n * n..(h + 1) * n * n];
        for i in 0..n {
            let q = &qkv[i * stride + qo..i * stride + qo + dh];
            let row = &mut p[i * n..(i + 1) * n];
            let mut m = T::neg_infinity();
            for (j, s) in row.iter_mut().enumerate() {
                let k = &qkv[j * stride + ko..j * stride + ko + dh];
                *s = crate::scalar::dot(q, k) * scale;
                m = m.max(*s);
            }
            let mut z = T::zero();
            for s in row.iter_mut() {
                *s = (*s - m).exp();
                z += *s;
            }
            for s in row.iter_mut() {
                *s /= z;
            }
            let o = &mut out[i * d + h * dh..i * d + (h + 1) * dh];
            for (j, &pij) in row.iter().enumerate() {
                let v = &qkv[j * stride + vo..j * stride + vo + dh];
                for (a, &b) in o.iter_mut().zip(v) {
                    *a += pij * b;
                }
            }
        }
    }
    probs
}

/// Backward of [`attention`]: writes `d qkv` (`n × 3d`, overwritten).
pub(crate) fn attention_backward<T: Scalar>(
    qkv: &[T],
    probs: &[T],
    d_out: &[T],
    n: usize,
    d: usize,
    heads: usize,
    d_qkv: &mut [T],
) {
    let dh = d / heads;
    let scale = T::one() / T::lit(dh as f64).sqrt();
    let stride = 3 * d;
    d_qkv[..n * stride].iter_mut().for_each(|v| *v = T::zero());
    let mut dp = vec![T::zero(); n];
    for h in 0..heads {
        let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
        let p = &probs[h * n * n..(h + 1) * n * n];
        for i in 0..n {
            let da = &d_out[i * d + h * dh..i * d + (h + 1) * dh];
            let prow = &p[i * n..(i + 1) * n];
            // dP_ij = dA_i · V_j ; dV_j += P_ij dA_i
            let mut weighted = T::zero();
            for j in 0..n {
                let v = &qkv[j * stride + vo..j * stride + vo + dh];
                dp[j] = crate::scalar::dot(da, v);
                weighted += dp[j] * prow[j];
                let dv = &mut d_qkv[j * stride + vo..j * stride + vo + dh];
                for (g, &a) in dv.iter_mut().zip(da) {
                    *g += prow[j] * a;
                }
            }
            // softmax backward, then through the scaled dot products
            for j in 0..n {
                let ds = prow[j] * (dp[j] - weighted) * scale;
                if ds == T::zero() {
                    continue;
                }
                for c in 0..dh {
                    let kj = qkv[j * stride + ko + c];
                    let qi = qkv[i * stride + qo + c];
                    d_qkv[i * stride + qo + c] += ds * kj;
                    d_qkv[j * stride + ko + c] += ds * qi;
                }
            }
        }
    }
}
