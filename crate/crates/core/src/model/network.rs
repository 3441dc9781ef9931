//! Fusion, regression head, loss and the full backward pass.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;

use super::encoder::{backward_stacked, forward_stacked, pool_segments, unpool_segments, Segments};
use super::params::{
    EncoderParams, FusionParams, HeadParams, MhsaConfig, ModelConfig, ModelParams,
};
use super::ModelError;

/// Features of one call. Sequence inputs hold only the valid rows; `None`
/// disables that encoder and feeds a zero vector into the fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct CallInput {
    pub audio: Option<Array2<f64>>,
    pub text: Option<Array2<f64>>,
    /// Pre-computed text embeddings in fusion order.
    pub extras: Vec<Array1<f64>>,
}

/// Fusion inputs where `None` drops the term altogether.
#[derive(Debug, Clone, Copy)]
pub struct FusionTerms<'a> {
    pub audio: Option<ArrayView1<'a, f64>>,
    pub text: Option<ArrayView1<'a, f64>>,
    pub extras: &'a [Option<ArrayView1<'a, f64>>],
}

fn check_len(what: &str, got: usize, want: usize) -> Result<(), ModelError> {
    if got != want {
        return Err(ModelError::Shape(format!(
            "{what}: got {got}, expected {want}"
        )));
    }
    Ok(())
}

/// `w0 + Σ term · W`, skipping absent terms.
pub fn fuse(terms: &FusionTerms, p: &FusionParams) -> Result<Array1<f64>, ModelError> {
    check_len("extra feature count", terms.extras.len(), p.extras.len())?;
    let mut e = p.bias.clone();
    let pairs = [
        (terms.audio, &p.audio, "audio"),
        (terms.text, &p.text, "text"),
    ]
    .into_iter()
    .chain(
        terms
            .extras
            .iter()
            .zip(&p.extras)
            .map(|(t, w)| (*t, w, "extra")),
    );
    for (t, w, name) in pairs {
        if let Some(t) = t {
            check_len(name, t.len(), w.nrows())?;
            e += &t.dot(w);
        }
    }
    Ok(e)
}

fn head_forward(e: &Array2<f64>, h: &HeadParams) -> (Array2<f64>, Array1<f64>) {
    let z1 = e.dot(&h.fc1_w) + &h.fc1_b;
    let y = z1.mapv(|t| t.max(0.0)).dot(&h.fc2_w) + &h.fc2_b;
    (z1, y.column(0).to_owned())
}

fn check_input(input: &CallInput, c: &ModelConfig) -> Result<(), ModelError> {
    check_len(
        "extra feature count",
        input.extras.len(),
        c.extra_dims.len(),
    )?;
    for (x, &d) in input.extras.iter().zip(&c.extra_dims) {
        check_len("extra feature", x.len(), d)?;
    }
    Ok(())
}

/// Stack the present sequences of one modality.
fn stack(seqs: &[Option<&Array2<f64>>], dim: usize) -> Result<(Array2<f64>, Segments), ModelError> {
    let mut segs = Vec::new();
    let mut views = Vec::new();
    let mut start = 0;
    for s in seqs.iter().flatten() {
        check_len("sequence width", s.ncols(), dim)?;
        if s.nrows() == 0 {
            return Err(ModelError::AllMasked);
        }
        segs.push((start, s.nrows()));
        start += s.nrows();
        views.push(s.view());
    }
    let x = if views.is_empty() {
        Array2::zeros((0, dim))
    } else {
        ndarray::concatenate(Axis(0), &views).map_err(|e| ModelError::Shape(e.to_string()))?
    };
    Ok((x, segs))
}

struct Branch {
    present: Vec<usize>,
    segs: Segments,
    caches: Vec<super::encoder::BlockCache>,
    rows: usize,
    pooled: Array2<f64>,
}

fn encode_branch(
    seqs: &[Option<&Array2<f64>>],
    p: &EncoderParams,
    c: &MhsaConfig,
) -> Result<Branch, ModelError> {
    let (x, segs) = stack(seqs, c.model_dim)?;
    let present: Vec<usize> = seqs
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_some())
        .map(|(i, _)| i)
        .collect();
    let mut pooled = Array2::zeros((seqs.len(), c.model_dim));
    let rows = x.nrows();
    let caches = if present.is_empty() {
        Vec::new()
    } else {
        let (y, caches) = forward_stacked(x, &segs, p, c)?;
        let pooled_present = pool_segments(&y, &segs);
        for (row, &i) in pooled_present.outer_iter().zip(&present) {
            pooled.row_mut(i).assign(&row);
        }
        caches
    };
    Ok(Branch {
        present,
        segs,
        caches,
        rows,
        pooled,
    })
}

struct Forward {
    audio: Branch,
    text: Branch,
    extras: Vec<Array2<f64>>,
    e: Array2<f64>,
    z1: Array2<f64>,
    y: Array1<f64>,
}

fn forward(p: &ModelParams, c: &ModelConfig, batch: &[&CallInput]) -> Result<Forward, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    for b in batch {
        check_input(b, c)?;
    }
    let audio_seqs: Vec<_> = batch.iter().map(|b| b.audio.as_ref()).collect();
    let text_seqs: Vec<_> = batch.iter().map(|b| b.text.as_ref()).collect();
    let audio = encode_branch(&audio_seqs, &p.audio, &c.audio)?;
    let text = encode_branch(&text_seqs, &p.text, &c.text)?;
    let extras: Vec<Array2<f64>> = (0..c.extra_dims.len())
        .map(|j| {
            let mut m = Array2::zeros((batch.len(), c.extra_dims[j]));
            for (mut row, b) in m.outer_iter_mut().zip(batch) {
                row.assign(&b.extras[j]);
            }
            m
        })
        .collect();
    let f = &p.fusion;
    let mut e = audio.pooled.dot(&f.audio) + &text.pooled.dot(&f.text) + &f.bias;
    for (x, w) in extras.iter().zip(&f.extras) {
        e += &x.dot(w);
    }
    let (z1, y) = head_forward(&e, &p.head);
    Ok(Forward {
        audio,
        text,
        extras,
        e,
        z1,
        y,
    })
}

/// Prediction for a single call.
pub fn predict(p: &ModelParams, c: &ModelConfig, input: &CallInput) -> Result<f64, ModelError> {
    Ok(forward(p, c, &[input])?.y[0])
}

/// Calls per batched forward pass in [`predict_batch`]. Fixed so results
/// never depend on the thread count.
const PREDICT_CHUNK: usize = 16;

/// Predictions for many calls in input order. Chunks of calls share one
/// pass over the weights and run in parallel.
pub fn predict_batch(
    p: &ModelParams,
    c: &ModelConfig,
    inputs: &[&CallInput],
) -> Result<Vec<f64>, ModelError> {
    let chunks: Vec<Vec<f64>> = inputs
        .par_chunks(PREDICT_CHUNK)
        .map(|ch| forward(p, c, ch).map(|f| f.y.to_vec()))
        .collect::<Result<_, _>>()?;
    Ok(chunks.concat())
}

/// Batch-mean squared error.
pub fn loss(predicted: &[f64], target: &[f64]) -> Result<f64, ModelError> {
    if predicted.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    check_len("targets", target.len(), predicted.len())?;
    let sum: f64 = predicted
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / predicted.len() as f64)
}

fn branch_backward(
    br: &Branch,
    d_pooled_all: &Array2<f64>,
    p: &EncoderParams,
    g: &mut EncoderParams,
    c: &MhsaConfig,
) -> Result<(), ModelError> {
    if br.present.is_empty() || p.blocks.is_empty() {
        return Ok(());
    }
    let d_pooled = d_pooled_all.select(Axis(0), &br.present);
    let d_out = unpool_segments(&d_pooled, &br.segs, br.rows);
    backward_stacked(d_out, &br.caches, &br.segs, p, g, c)
}

/// Batch loss and its exact gradient with respect to every parameter.
pub fn loss_and_grad(
    p: &ModelParams,
    c: &ModelConfig,
    batch: &[&CallInput],
    targets: &[f64],
) -> Result<(f64, ModelParams), ModelError> {
    let mut g = p.zeros_like();
    let l = loss_and_grad_into(p, c, batch, targets, &mut g)?;
    Ok((l, g))
}

/// [`loss_and_grad`] writing into a reusable gradient buffer shaped like `p`.
pub fn loss_and_grad_into(
    p: &ModelParams,
    c: &ModelConfig,
    batch: &[&CallInput],
    targets: &[f64],
    g: &mut ModelParams,
) -> Result<f64, ModelError> {
    check_len("targets", targets.len(), batch.len())?;
    let fw = forward(p, c, batch)?;
    let pred = fw.y.as_slice().expect("contiguous predictions");
    let l = loss(pred, targets)?;
    if !l.is_finite() {
        return Err(ModelError::NonFinite {
            path: "loss".into(),
        });
    }
    let n = batch.len() as f64;
    for b in g.audio.blocks.iter_mut().chain(g.text.blocks.iter_mut()) {
        for t in [
            &mut b.wq, &mut b.wk, &mut b.wv, &mut b.wo, &mut b.w1, &mut b.w2,
        ] {
            t.fill(0.0);
        }
        for t in [
            &mut b.ln1_gamma,
            &mut b.ln1_beta,
            &mut b.b1,
            &mut b.b2,
            &mut b.ln2_gamma,
            &mut b.ln2_beta,
        ] {
            t.fill(0.0);
        }
    }

    let dy = Array1::from_iter(pred.iter().zip(targets).map(|(p, t)| 2.0 * (p - t) / n))
        .insert_axis(Axis(1));
    let hidden = fw.z1.mapv(|t| t.max(0.0));
    g.head.fc2_w.assign(&hidden.t().dot(&dy));
    g.head.fc2_b.assign(&dy.sum_axis(Axis(0)));
    let mut dz1 = dy.dot(&p.head.fc2_w.t());
    dz1.zip_mut_with(&fw.z1, |d, &z| {
        if z <= 0.0 {
            *d = 0.0
        }
    });
    g.head.fc1_w.assign(&fw.e.t().dot(&dz1));
    g.head.fc1_b.assign(&dz1.sum_axis(Axis(0)));
    let de = dz1.dot(&p.head.fc1_w.t());

    g.fusion.bias.assign(&de.sum_axis(Axis(0)));
    g.fusion.audio.assign(&fw.audio.pooled.t().dot(&de));
    g.fusion.text.assign(&fw.text.pooled.t().dot(&de));
    for (gw, x) in g.fusion.extras.iter_mut().zip(&fw.extras) {
        gw.assign(&x.t().dot(&de));
    }

    let d_audio = de.dot(&p.fusion.audio.t());
    let d_text = de.dot(&p.fusion.text.t());
    branch_backward(&fw.audio, &d_audio, &p.audio, &mut g.audio, &c.audio)?;
    branch_backward(&fw.text, &d_text, &p.text, &mut g.text, &c.text)?;

    if let Some(path) = g.first_non_finite() {
        return Err(ModelError::NonFinite { path });
    }
    Ok(l)
}
