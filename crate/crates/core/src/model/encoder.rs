//! Stacked self-attention encoder over a ragged batch.
//!
//! Masked rows never act as keys and never reach the pooled output, so an
//! encoder over a padded matrix is exactly an encoder over its valid rows.
//! Calls are stacked row-wise and the dense products run once per batch;
//! attention itself runs per call segment.

use ndarray::{s, Array1, Array2, Axis};

use super::ops::{attention_backward, attention_weights, layer_norm, layer_norm_backward, LnCache};
use super::params::{BlockParams, EncoderParams, MhsaConfig};
use super::ModelError;
use crate::embedding::EmbeddingMatrix;

/// `(first_row, len)` of each call in a stacked matrix.
pub(crate) type Segments = Vec<(usize, usize)>;

pub(crate) struct BlockCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    a: Array2<f64>,
    ln1: LnCache,
    y1: Array2<f64>,
    z: Array2<f64>,
    ln2: LnCache,
}

fn block_forward(
    x: Array2<f64>,
    segs: &[(usize, usize)],
    b: &BlockParams,
    heads: usize,
) -> Result<(Array2<f64>, BlockCache), ModelError> {
    let d = x.ncols();
    let dk = d / heads;
    let q = x.dot(&b.wq);
    let k = x.dot(&b.wk);
    let v = x.dot(&b.wv);
    let mut a = Array2::zeros(x.raw_dim());
    for &(start, len) in segs {
        let mask = vec![true; len];
        for h in 0..heads {
            let cols = s![start..start + len, h * dk..(h + 1) * dk];
            let p = attention_weights(q.slice(cols), k.slice(cols), &mask)?;
            a.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
        }
    }
    let r1 = &x + &a.dot(&b.wo);
    let (y1, ln1) = layer_norm(&r1, &b.ln1_gamma, &b.ln1_beta);
    let z = y1.dot(&b.w1) + &b.b1;
    let hidden = z.mapv(|t| t.max(0.0));
    let r2 = &y1 + &(hidden.dot(&b.w2) + &b.b2);
    let (y2, ln2) = layer_norm(&r2, &b.ln2_gamma, &b.ln2_beta);
    Ok((
        y2,
        BlockCache {
            x,
            q,
            k,
            v,
            a,
            ln1,
            y1,
            z,
            ln2,
        },
    ))
}

/// Accumulates parameter gradients into `g` and returns the input gradient.
fn block_backward(
    dy2: &Array2<f64>,
    c: &BlockCache,
    segs: &[(usize, usize)],
    b: &BlockParams,
    g: &mut BlockParams,
    heads: usize,
) -> Result<Array2<f64>, ModelError> {
    let (dr2, dgamma2, dbeta2) = layer_norm_backward(dy2, &b.ln2_gamma, &c.ln2);
    g.ln2_gamma += &dgamma2;
    g.ln2_beta += &dbeta2;

    let hidden = c.z.mapv(|t| t.max(0.0));
    g.w2 += &hidden.t().dot(&dr2);
    g.b2 += &dr2.sum_axis(Axis(0));
    let mut dz = dr2.dot(&b.w2.t());
    dz.zip_mut_with(&c.z, |d, &z| {
        if z <= 0.0 {
            *d = 0.0
        }
    });
    g.w1 += &c.y1.t().dot(&dz);
    g.b1 += &dz.sum_axis(Axis(0));
    let dy1 = &dr2 + &dz.dot(&b.w1.t());

    let (dr1, dgamma1, dbeta1) = layer_norm_backward(&dy1, &b.ln1_gamma, &c.ln1);
    g.ln1_gamma += &dgamma1;
    g.ln1_beta += &dbeta1;

    g.wo += &c.a.t().dot(&dr1);
    let da = dr1.dot(&b.wo.t());
    let dk_cols = c.x.ncols() / heads;
    let mut dq = Array2::zeros(c.q.raw_dim());
    let mut dk = Array2::zeros(c.k.raw_dim());
    let mut dv = Array2::zeros(c.v.raw_dim());
    for &(start, len) in segs {
        let mask = vec![true; len];
        for h in 0..heads {
            let cols = s![start..start + len, h * dk_cols..(h + 1) * dk_cols];
            let (q, k, v) = (c.q.slice(cols), c.k.slice(cols), c.v.slice(cols));
            // recomputed rather than cached: len x len per head per call adds up
            let p = attention_weights(q, k, &mask)?;
            let (gq, gk, gv) = attention_backward(q, k, v, &p, da.slice(cols));
            dq.slice_mut(cols).assign(&gq);
            dk.slice_mut(cols).assign(&gk);
            dv.slice_mut(cols).assign(&gv);
        }
    }
    g.wq += &c.x.t().dot(&dq);
    g.wk += &c.x.t().dot(&dk);
    g.wv += &c.x.t().dot(&dv);
    Ok(dr1 + dq.dot(&b.wq.t()) + dk.dot(&b.wk.t()) + dv.dot(&b.wv.t()))
}

fn check_input(
    x: &Array2<f64>,
    segs: &[(usize, usize)],
    cfg: &MhsaConfig,
) -> Result<(), ModelError> {
    if x.ncols() != cfg.model_dim {
        return Err(ModelError::Shape(format!(
            "encoder input has {} columns, model_dim is {}",
            x.ncols(),
            cfg.model_dim
        )));
    }
    if segs.iter().any(|&(_, len)| len == 0) {
        return Err(ModelError::AllMasked);
    }
    Ok(())
}

/// Runs every block; returns the final activations and per-block caches.
pub(crate) fn forward_stacked(
    x: Array2<f64>,
    segs: &[(usize, usize)],
    p: &EncoderParams,
    cfg: &MhsaConfig,
) -> Result<(Array2<f64>, Vec<BlockCache>), ModelError> {
    check_input(&x, segs, cfg)?;
    let mut caches = Vec::with_capacity(p.blocks.len());
    let mut h = x;
    for b in &p.blocks {
        let (out, cache) = block_forward(h, segs, b, cfg.num_heads)?;
        caches.push(cache);
        h = out;
    }
    Ok((h, caches))
}

/// Forward without keeping caches.
fn forward_only(
    x: Array2<f64>,
    segs: &[(usize, usize)],
    p: &EncoderParams,
    cfg: &MhsaConfig,
) -> Result<Array2<f64>, ModelError> {
    check_input(&x, segs, cfg)?;
    let mut h = x;
    for b in &p.blocks {
        h = block_forward(h, segs, b, cfg.num_heads)?.0;
    }
    Ok(h)
}

pub(crate) fn backward_stacked(
    d_out: Array2<f64>,
    caches: &[BlockCache],
    segs: &[(usize, usize)],
    p: &EncoderParams,
    g: &mut EncoderParams,
    cfg: &MhsaConfig,
) -> Result<(), ModelError> {
    let mut d = d_out;
    for ((cache, b), gb) in caches.iter().zip(&p.blocks).zip(g.blocks.iter_mut()).rev() {
        d = block_backward(&d, cache, segs, b, gb, cfg.num_heads)?;
    }
    Ok(())
}

/// Mean of each segment's rows, one output row per segment.
pub(crate) fn pool_segments(y: &Array2<f64>, segs: &[(usize, usize)]) -> Array2<f64> {
    let mut out = Array2::zeros((segs.len(), y.ncols()));
    for (mut row, &(start, len)) in out.outer_iter_mut().zip(segs) {
        row.assign(&y.slice(s![start..start + len, ..]).sum_axis(Axis(0)));
        row /= len as f64;
    }
    out
}

/// Inverse of [`pool_segments`] for gradients.
pub(crate) fn unpool_segments(
    d_pooled: &Array2<f64>,
    segs: &[(usize, usize)],
    rows: usize,
) -> Array2<f64> {
    let mut out = Array2::zeros((rows, d_pooled.ncols()));
    for (g, &(start, len)) in d_pooled.outer_iter().zip(segs) {
        let share = &g / len as f64;
        for mut r in out.slice_mut(s![start..start + len, ..]).outer_iter_mut() {
            r.assign(&share);
        }
    }
    out
}

/// Encoder output for one padded matrix: `rows x model_dim`, with masked
/// rows left at zero.
pub fn mhsa_forward(
    x: &EmbeddingMatrix,
    params: &EncoderParams,
    cfg: &MhsaConfig,
) -> Result<Array2<f64>, ModelError> {
    if x.cols() != cfg.model_dim {
        return Err(ModelError::Shape(format!(
            "matrix has {} columns, model_dim is {}",
            x.cols(),
            cfg.model_dim
        )));
    }
    let valid = x.valid_rows();
    if valid == 0 {
        return Err(ModelError::AllMasked);
    }
    let compact = Array2::from_shape_vec(
        (valid, x.cols()),
        x.iter_valid().flatten().map(|&v| v as f64).collect(),
    )
    .map_err(|e| ModelError::Shape(e.to_string()))?;
    let y = forward_only(compact, &[(0, valid)], params, cfg)?;
    let mut out = Array2::zeros((x.rows(), x.cols()));
    let positions = x
        .mask()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| i);
    for (src, dst) in y.outer_iter().zip(positions) {
        out.row_mut(dst).assign(&src);
    }
    Ok(out)
}

/// Encode the valid rows of one call and average-pool them.
pub fn encode_pooled(
    rows: &Array2<f64>,
    params: &EncoderParams,
    cfg: &MhsaConfig,
) -> Result<Array1<f64>, ModelError> {
    let segs = [(0, rows.nrows())];
    let y = forward_only(rows.clone(), &segs, params, cfg)?;
    Ok(pool_segments(&y, &segs).row(0).to_owned())
}
