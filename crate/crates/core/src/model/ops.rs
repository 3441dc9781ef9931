//! Dense building blocks: masked softmax attention, layer norm, pooling.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::ModelError;

pub const LN_EPS: f64 = 1e-5;

/// Row softmax of `scores` where key column `j` takes part only if
/// `key_mask[j]`. Masked columns get weight exactly zero.
pub fn masked_softmax(scores: &Array2<f64>, key_mask: &[bool]) -> Array2<f64> {
    let mut out = Array2::zeros(scores.raw_dim());
    for (src, mut dst) in scores.outer_iter().zip(out.outer_iter_mut()) {
        let max = src
            .iter()
            .zip(key_mask)
            .filter(|(_, &m)| m)
            .map(|(&s, _)| s)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for ((&s, &m), d) in src.iter().zip(key_mask).zip(dst.iter_mut()) {
            if m {
                *d = (s - max).exp();
                sum += *d;
            }
        }
        dst.mapv_inplace(|x| x / sum);
    }
    out
}

/// Attention weights `softmax(Q K^T / sqrt(d_k))` with masked keys removed
/// and masked query rows zeroed.
pub fn attention_weights(
    q: ArrayView2<f64>,
    k: ArrayView2<f64>,
    mask: &[bool],
) -> Result<Array2<f64>, ModelError> {
    let n = q.nrows();
    if k.nrows() != n || mask.len() != n || q.ncols() != k.ncols() {
        return Err(ModelError::Shape(format!(
            "attention: q {:?}, k {:?}, mask {}",
            q.dim(),
            k.dim(),
            mask.len()
        )));
    }
    if !mask.iter().any(|&m| m) {
        return Err(ModelError::AllMasked);
    }
    let scale = 1.0 / (q.ncols() as f64).sqrt();
    let scores = q.dot(&k.t()) * scale;
    let mut p = masked_softmax(&scores, mask);
    for (mut row, &m) in p.outer_iter_mut().zip(mask) {
        if !m {
            row.fill(0.0);
        }
    }
    Ok(p)
}

/// Scaled dot-product attention for one head.
pub fn attention(
    q: ArrayView2<f64>,
    k: ArrayView2<f64>,
    v: ArrayView2<f64>,
    mask: &[bool],
) -> Result<Array2<f64>, ModelError> {
    if v.nrows() != q.nrows() {
        return Err(ModelError::Shape(format!(
            "attention: v has {} rows, q has {}",
            v.nrows(),
            q.nrows()
        )));
    }
    Ok(attention_weights(q, k, mask)?.dot(&v))
}

/// Gradients of `O = P V` with `P = softmax(Q K^T * scale)` (all rows
/// unmasked). Returns `(dQ, dK, dV)`.
pub fn attention_backward(
    q: ArrayView2<f64>,
    k: ArrayView2<f64>,
    v: ArrayView2<f64>,
    p: &Array2<f64>,
    d_out: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let scale = 1.0 / (q.ncols() as f64).sqrt();
    let dv = p.t().dot(&d_out);
    let dp = d_out.dot(&v.t());
    let row_dot = (&dp * p).sum_axis(Axis(1)).insert_axis(Axis(1));
    let ds = p * &(&dp - &row_dot) * scale;
    let dq = ds.dot(&k);
    let dk = ds.t().dot(&q);
    (dq, dk, dv)
}

pub struct LnCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
}

/// Row-wise layer norm.
pub fn layer_norm(
    x: &Array2<f64>,
    gamma: &Array1<f64>,
    beta: &Array1<f64>,
) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mean = x.sum_axis(Axis(1)) / d;
    let centered = x - &mean.view().insert_axis(Axis(1));
    let var = centered.mapv(|c| c * c).sum_axis(Axis(1)) / d;
    let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    let xhat = &centered * &inv_std.view().insert_axis(Axis(1));
    let y = &xhat * gamma + beta;
    (y, LnCache { xhat, inv_std })
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn layer_norm_backward(
    dy: &Array2<f64>,
    gamma: &Array1<f64>,
    cache: &LnCache,
) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let d = dy.ncols() as f64;
    let dgamma = (dy * &cache.xhat).sum_axis(Axis(0));
    let dbeta = dy.sum_axis(Axis(0));
    let dxhat = dy * gamma;
    let mean_dxhat = (dxhat.sum_axis(Axis(1)) / d).insert_axis(Axis(1));
    let mean_dxhat_xhat = ((&dxhat * &cache.xhat).sum_axis(Axis(1)) / d).insert_axis(Axis(1));
    let dx = (&dxhat - &mean_dxhat - &cache.xhat * &mean_dxhat_xhat)
        * cache.inv_std.view().insert_axis(Axis(1));
    (dx, dgamma, dbeta)
}

/// Mean over the rows whose mask bit is set.
pub fn masked_average_pool(x: &Array2<f64>, mask: &[bool]) -> Result<Array1<f64>, ModelError> {
    if mask.len() != x.nrows() {
        return Err(ModelError::Shape(format!(
            "pool: mask {} for {} rows",
            mask.len(),
            x.nrows()
        )));
    }
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(ModelError::AllMasked);
    }
    let mut acc = Array1::zeros(x.ncols());
    for (row, _) in x.outer_iter().zip(mask).filter(|(_, &m)| m) {
        acc += &row;
    }
    Ok(acc / n as f64)
}
