//! Acceptance runner: one PASS/FAIL line per criterion, non-zero exit if
//! any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use eccvol_core::corpus::temporal_split;
use eccvol_core::embedding::{
    decode, encode, read_embedding_file, write_embedding_file, EmbeddingMatrix,
};
use eccvol_core::eval::{AblationConfig, CallFeatures, ResultTable};
use eccvol_core::focus::{retrieve, VectorIndex};
use eccvol_core::labels::{compute_returns, compute_volatility, DailyReturn, ReturnSeries};
use eccvol_core::model::{
    attention, attention_weights, encode_pooled, fit_until, fuse, loss, loss_and_grad,
    masked_average_pool, mhsa_forward, predict, predict_batch, AdamConfig, CallInput, FitOptions,
    FusionTerms, HistorySplit, MhsaConfig, ModelConfig, ModelParams, Sample,
};
use eccvol_core::pipeline::valid_rows;
use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed > limit {
        return Err(format!("took {elapsed:.1?}, limit {limit:?}"));
    }
    Ok(())
}

fn volatility_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst = 0.0f64;
    for w in 0..100 {
        let tau = [3u32, 7, 15, 30][w % 4].min(rng.gen_range(1..=40));
        let n = tau as usize + 2 + rng.gen_range(0..10);
        let series = random_prices(&mut rng, "W", n);
        let returns = compute_returns(&series).map_err(|e| e.to_string())?;
        let anchor = returns.returns.last().unwrap().date;
        let got = compute_volatility(&returns, anchor, tau).map_err(|e| e.to_string())?;
        let prices: Vec<f64> = series.observations.iter().map(|o| o.adj_close).collect();
        let want = exact_log_volatility(&prices, tau as usize);
        worst = worst.max((got - want).abs());
    }
    let elapsed = t0.elapsed();
    ensure!(worst <= 1e-12, "max abs error {worst:e} > 1e-12");
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!(
        "100 windows, max abs error {worst:.1e}, {elapsed:.2?}"
    ))
}

fn volatility_scale_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let tau = rng.gen_range(1..=30u32);
        let series = random_prices(&mut rng, "S", tau as usize + 5);
        let base = compute_returns(&series).map_err(|e| e.to_string())?;
        let anchor = base.returns.last().unwrap().date;
        let v = compute_volatility(&base, anchor, tau).map_err(|e| e.to_string())?;
        for k in [2.0f64, 10.0] {
            let scaled = ReturnSeries {
                ticker: base.ticker.clone(),
                returns: base
                    .returns
                    .iter()
                    .map(|r| DailyReturn {
                        date: r.date,
                        r: r.r * k,
                    })
                    .collect(),
            };
            let vk = compute_volatility(&scaled, anchor, tau).map_err(|e| e.to_string())?;
            worst = worst.max((vk - v - k.ln()).abs());
        }
    }
    ensure!(worst <= 1e-10, "max deviation from ln(k) shift {worst:e}");
    Ok(format!(
        "k in {{2, 10}} over 100 windows, max deviation {worst:.1e}"
    ))
}

fn tiny_config() -> ModelConfig {
    let enc = MhsaConfig {
        num_blocks: 1,
        num_heads: 2,
        model_dim: 4,
        ffn_hidden: 8,
    };
    ModelConfig {
        audio: enc,
        text: enc,
        extra_dims: vec![4, 4],
        fused_dim: 4,
        head_hidden: 4,
    }
}

fn gradient_check() -> Outcome {
    let t0 = Instant::now();
    let c = tiny_config();
    let mut p = ModelParams::init(&c, 31).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for t in p.tensors_mut() {
        // move off the zero/one defaults so every tensor carries signal
        t.iter_mut().for_each(|v| *v += rng.gen_range(-0.2..0.2));
    }
    let xs: Vec<CallInput> = (0..3)
        .map(|_| CallInput {
            audio: Some(Array2::from_shape_fn((3, 4), |_| rng.gen_range(-1.0..1.0))),
            text: Some(Array2::from_shape_fn((3, 4), |_| rng.gen_range(-1.0..1.0))),
            extras: (0..2)
                .map(|_| Array1::from_shape_fn(4, |_| rng.gen_range(-1.0..1.0)))
                .collect(),
        })
        .collect();
    let refs: Vec<&CallInput> = xs.iter().collect();
    let y = [0.3, -1.2, 0.8];
    let (_, g) = loss_and_grad(&p, &c, &refs, &y).map_err(|e| e.to_string())?;
    let analytic: Vec<(String, Vec<f64>)> = g
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.to_vec()))
        .collect();
    let h = 1e-5;
    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    for (ti, (name, grad)) in analytic.iter().enumerate() {
        for (i, &a) in grad.iter().enumerate() {
            let mut probe = |delta: f64| {
                let orig = p.tensors_mut()[ti][i];
                p.tensors_mut()[ti][i] = orig + delta;
                let l = loss_and_grad(&p, &c, &refs, &y).map(|r| r.0);
                p.tensors_mut()[ti][i] = orig;
                l
            };
            let numeric = (probe(h).map_err(|e| e.to_string())?
                - probe(-h).map_err(|e| e.to_string())?)
                / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{i}]"));
            }
            checked += 1;
        }
    }
    let elapsed = t0.elapsed();
    ensure!(
        worst.0 < 1e-4,
        "relative error {:.2e} at {}",
        worst.0,
        worst.1
    );
    within(elapsed, Duration::from_secs(30))?;
    Ok(format!(
        "{checked} scalars in {} tensors, worst relative error {:.1e}, {elapsed:.2?}",
        analytic.len(),
        worst.0
    ))
}

fn random_mask(rng: &mut ChaCha8Rng, n: usize) -> Vec<bool> {
    let mut m: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.6)).collect();
    let keep = rng.gen_range(0..n);
    m[keep] = true;
    m
}

fn embed_padded(
    rng: &mut ChaCha8Rng,
    rows: &Array2<f64>,
    capacity: usize,
    scatter: bool,
) -> EmbeddingMatrix {
    let n = rows.nrows();
    let mut positions: Vec<usize> = (0..capacity).collect();
    if scatter {
        positions.shuffle(rng);
        positions.truncate(n);
        positions.sort_unstable();
    } else {
        positions.truncate(n);
    }
    let cols = rows.ncols();
    let mut data = vec![0.0f32; capacity * cols];
    let mut mask = vec![false; capacity];
    for (src, &dst) in positions.iter().enumerate() {
        mask[dst] = true;
        for c in 0..cols {
            data[dst * cols + c] = rows[[src, c]] as f32;
        }
    }
    EmbeddingMatrix::new(capacity, cols, data, mask).unwrap()
}

fn attention_masking() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let (mut worst_sum, mut worst_masked, mut worst_leak) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let n = rng.gen_range(1..=16);
        let dk = rng.gen_range(1..=8);
        let mask = random_mask(&mut rng, n);
        let q = Array2::from_shape_fn((n, dk), |_| rng.gen_range(-5.0..5.0));
        let k = Array2::from_shape_fn((n, dk), |_| rng.gen_range(-5.0..5.0));
        let v = Array2::from_shape_fn((n, dk), |_| rng.gen_range(-5.0..5.0));
        let p = attention_weights(q.view(), k.view(), &mask).map_err(|e| e.to_string())?;
        for (i, row) in p.outer_iter().enumerate() {
            if mask[i] {
                worst_sum = worst_sum.max((row.sum() - 1.0).abs());
            }
            for (j, &w) in row.iter().enumerate() {
                if !mask[j] {
                    worst_masked = worst_masked.max(w.abs());
                }
            }
        }
        // masked rows filled with garbage must not change the valid outputs
        let keep: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
        let out = attention(q.view(), k.view(), v.view(), &mask).map_err(|e| e.to_string())?;
        let sel = |a: &Array2<f64>| a.select(ndarray::Axis(0), &keep);
        let compact = attention(
            sel(&q).view(),
            sel(&k).view(),
            sel(&v).view(),
            &vec![true; keep.len()],
        )
        .map_err(|e| e.to_string())?;
        let diff = (&sel(&out) - &compact)
            .mapv(f64::abs)
            .fold(0.0f64, |a, &b| a.max(b));
        worst_leak = worst_leak.max(diff);
    }
    ensure!(worst_sum <= 1e-6, "softmax row sum off by {worst_sum:e}");
    ensure!(worst_masked < 1e-12, "masked key weight {worst_masked:e}");
    ensure!(
        worst_leak < 1e-12,
        "masked rows leak into attention output by {worst_leak:e}"
    );

    // prediction-level padding invariance on a small model
    let c = ModelConfig {
        audio: MhsaConfig {
            num_blocks: 2,
            num_heads: 2,
            model_dim: 8,
            ffn_hidden: 16,
        },
        text: MhsaConfig {
            num_blocks: 2,
            num_heads: 3,
            model_dim: 6,
            ffn_hidden: 12,
        },
        extra_dims: vec![5, 5],
        fused_dim: 6,
        head_hidden: 4,
    };
    let p = ModelParams::init(&c, 1004).map_err(|e| e.to_string())?;
    let mut worst_pred = 0.0f64;
    for _ in 0..20 {
        let n_a = rng.gen_range(1..=12);
        let n_t = rng.gen_range(1..=12);
        // f32-representable so the padded copies carry identical values
        let audio = Array2::from_shape_fn((n_a, 8), |_| rng.gen_range(-1.0f32..1.0) as f64);
        let text = Array2::from_shape_fn((n_t, 6), |_| rng.gen_range(-1.0f32..1.0) as f64);
        let extras: Vec<Array1<f64>> = (0..2)
            .map(|_| Array1::from_shape_fn(5, |_| rng.gen_range(-1.0..1.0)))
            .collect();
        let bare = predict(
            &p,
            &c,
            &CallInput {
                audio: Some(audio.clone()),
                text: Some(text.clone()),
                extras: extras.clone(),
            },
        )
        .map_err(|e| e.to_string())?;
        for (cap, scatter) in [(520, false), (n_a.max(n_t) + 9, true)] {
            let pa = embed_padded(&mut rng, &audio, cap, scatter);
            let pt = embed_padded(&mut rng, &text, cap, scatter);
            let y = predict(
                &p,
                &c,
                &CallInput {
                    audio: Some(valid_rows(&pa).map_err(|e| e.to_string())?),
                    text: Some(valid_rows(&pt).map_err(|e| e.to_string())?),
                    extras: extras.clone(),
                },
            )
            .map_err(|e| e.to_string())?;
            worst_pred = worst_pred.max((y - bare).abs());
            // the padded-matrix encoder path pools to the same vector
            let full = mhsa_forward(&pa, &p.audio, &c.audio).map_err(|e| e.to_string())?;
            let pooled = masked_average_pool(&full, pa.mask()).map_err(|e| e.to_string())?;
            let direct = encode_pooled(&audio, &p.audio, &c.audio).map_err(|e| e.to_string())?;
            let d = (&pooled - &direct)
                .mapv(f64::abs)
                .fold(0.0f64, |a, &b| a.max(b));
            worst_pred = worst_pred.max(d);
        }
    }
    ensure!(
        worst_pred < 1e-6,
        "padding changes the prediction by {worst_pred:e}"
    );
    Ok(format!(
        "row-sum error {worst_sum:.1e}, masked weight {worst_masked:.1e}, padding effect {worst_pred:.1e} over 20 calls"
    ))
}

fn retrieval_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    let mut ties = 0;
    for case in 0..100 {
        let n = rng.gen_range(1..=64);
        let dim = rng.gen_range(2..=24);
        let mut vectors: Vec<Vec<f32>> = Vec::with_capacity(n);
        for _ in 0..n {
            if !vectors.is_empty() && rng.gen_bool(0.2) {
                // exact duplicate, and a positive multiple of an earlier one
                let src = vectors[rng.gen_range(0..vectors.len())].clone();
                vectors.push(src);
                ties += 1;
            } else {
                let mut v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
                v[0] += 2.0;
                vectors.push(v);
            }
        }
        let query: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let k = rng.gen_range(1..=n + 3);
        let index = VectorIndex::from_vectors(vectors.iter().cloned().enumerate().collect())
            .map_err(|e| e.to_string())?;
        let got = retrieve(&index, &query, k).map_err(|e| e.to_string())?;
        let want = brute_force_top_k(&vectors, &query, k);
        ensure!(got == want, "case {case}: {got:?} != {want:?}");
    }
    Ok(format!(
        "100 indices of size <= 64, {ties} duplicated vectors"
    ))
}

fn deterministic_end_to_end() -> Outcome {
    let t0 = Instant::now();
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = fixture_copy();
        run_steps(dir.path());
        outputs.push(fs::read(dir.path().join("out/results.csv")).map_err(|e| e.to_string())?);
    }
    let elapsed = t0.elapsed();
    ensure!(outputs[0] == outputs[1], "results.csv differs between runs");
    let table = ResultTable::read_csv(outputs[0].as_slice()).map_err(|e| e.to_string())?;
    ensure!(
        table.rows.len() == 1,
        "expected one result row, got {}",
        table.rows.len()
    );
    within(elapsed, Duration::from_secs(120))?;
    Ok(format!(
        "{} identical bytes, two runs in {elapsed:.1?}",
        outputs[0].len()
    ))
}

fn synthetic_learnability() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1007);
    let (samples, design) = linear_corpus(64, 4, 7, &mut rng);
    let y: Vec<f64> = samples.iter().map(|s| s.target).collect();

    // least-squares oracle: an exact linear fit of the targets exists
    let x = DMatrix::from_row_slice(design.nrows(), design.ncols(), design.as_slice().unwrap());
    let yv = nalgebra::DVector::from_column_slice(&y);
    let w = x
        .clone()
        .svd(true, true)
        .solve(&yv, 1e-12)
        .map_err(|e| e.to_string())?;
    let ls_mse = (&x * &w - &yv).norm_squared() / y.len() as f64;
    ensure!(
        ls_mse < 1e-20,
        "least-squares residual {ls_mse:e}: no exact linear fit"
    );

    let c = ModelConfig::headline().with_encoders(1, 8, 64);
    let train: Vec<&Sample> = samples.iter().collect();
    let inputs: Vec<&CallInput> = samples.iter().map(|s| &s.input).collect();
    let opts = FitOptions {
        batch_size: 16,
        learning_rate: 1e-3,
        epochs: 200,
        seed: 7,
        adam: AdamConfig::default(),
    };
    let mut reached = None;
    let (_, history) = fit_until(&c, &train, &[], &opts, |p, h| {
        // exact full-set MSE once the running loss is in range
        if h.last().is_some_and(|e| e.loss < 1e-1) {
            let mse = predict_batch(p, &c, &inputs).and_then(|pr| loss(&pr, &y));
            if let Ok(m) = mse {
                if m < 1e-2 {
                    reached = Some((h.len(), m));
                    return true;
                }
            }
        }
        false
    })
    .map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();
    let (epoch, mse) =
        reached.ok_or_else(|| format!("train MSE still >= 1e-2 after {} epochs", history.len()))?;

    // non-increasing after epoch 5, smoothed over 5-epoch windows
    let train_loss: Vec<f64> = history
        .iter()
        .filter(|h| h.split == HistorySplit::Train)
        .map(|h| h.loss)
        .collect();
    let windows: Vec<f64> = train_loss
        .get(5..)
        .unwrap_or_default()
        .chunks(5)
        .map(|w| w.iter().sum::<f64>() / w.len() as f64)
        .collect();
    let rises: Vec<usize> = (1..windows.len())
        .filter(|&i| windows[i] > windows[i - 1])
        .collect();
    ensure!(
        rises.is_empty(),
        "smoothed loss rises at windows {rises:?}: {windows:?}"
    );
    within(elapsed, Duration::from_secs(120))?;
    Ok(format!(
        "least-squares residual {ls_mse:.1e}, train MSE {mse:.2e} at epoch {epoch}, {elapsed:.1?}"
    ))
}

fn ablation_shape() -> Outcome {
    let dir = fixture_copy();
    for step in ["ingest", "label", "embed", "analyze"] {
        eccvol_ok(dir.path(), &[step]);
    }
    let out = eccvol_ok(dir.path(), &["ablate", "--format", "csv"]);
    let table = ResultTable::read_csv(out.stdout.as_slice()).map_err(|e| e.to_string())?;
    let names: Vec<String> = table.rows.iter().map(|r| r.config.clone()).collect();
    let want: Vec<String> = AblationConfig::presets()
        .into_iter()
        .map(|c| c.name)
        .collect();
    ensure!(names == want, "rows {names:?}");
    for r in &table.rows {
        ensure!(r.mse_mean.is_finite(), "{}: non-finite mean", r.config);
        let mean = r.per_tau().iter().sum::<f64>() / 4.0;
        ensure!(
            (mean - r.mse_mean).abs() <= 1e-9,
            "{}: mean {} vs {}",
            r.config,
            r.mse_mean,
            mean
        );
    }
    let on_disk = ResultTable::read_csv(
        fs::read(dir.path().join("out/ablation.csv"))
            .map_err(|e| e.to_string())?
            .as_slice(),
    )
    .map_err(|e| e.to_string())?;
    ensure!(on_disk == table, "ablation.csv differs from stdout");

    // zeroed features against dropped fusion terms
    let mut rng = ChaCha8Rng::seed_from_u64(1008);
    let c = ModelConfig {
        extra_dims: vec![6, 6, 6],
        ..tiny_config()
    };
    let p = ModelParams::init(&c, 8).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let feats = CallFeatures {
            call_id: "z".into(),
            date: date("2024-01-02"),
            audio: Array2::from_shape_fn((3, 4), |_| rng.gen_range(-1.0..1.0)),
            text: Array2::from_shape_fn((2, 4), |_| rng.gen_range(-1.0..1.0)),
            summary: Array1::from_shape_fn(6, |_| rng.gen_range(-1.0..1.0)),
            focus: Array1::from_shape_fn(6, |_| rng.gen_range(-1.0..1.0)),
            overall: Array1::from_shape_fn(6, |_| rng.gen_range(-1.0..1.0)),
            chunks: Array1::from_shape_fn(6, |_| rng.gen_range(-1.0..1.0)),
        };
        let pooled_a =
            encode_pooled(&feats.audio, &p.audio, &c.audio).map_err(|e| e.to_string())?;
        let pooled_t = encode_pooled(&feats.text, &p.text, &c.text).map_err(|e| e.to_string())?;
        for ac in AblationConfig::presets() {
            let x = ac.input(&feats);
            let zeroed: Vec<Option<ArrayView1<f64>>> =
                x.extras.iter().map(|e| Some(e.view())).collect();
            let zero_a = Array1::zeros(4);
            let zero_t = Array1::zeros(4);
            let with_zeros = fuse(
                &FusionTerms {
                    audio: Some(if ac.use_audio {
                        pooled_a.view()
                    } else {
                        zero_a.view()
                    }),
                    text: Some(if ac.use_text {
                        pooled_t.view()
                    } else {
                        zero_t.view()
                    }),
                    extras: &zeroed,
                },
                &p.fusion,
            )
            .map_err(|e| e.to_string())?;
            let kept = [
                (ac.use_eos, &feats.overall),
                (ac.use_ecs, &feats.chunks),
                (ac.use_efo, &feats.focus),
            ];
            let dropped_extras: Vec<Option<ArrayView1<f64>>> =
                kept.iter().map(|(on, v)| on.then(|| v.view())).collect();
            let dropped = fuse(
                &FusionTerms {
                    audio: ac.use_audio.then(|| pooled_a.view()),
                    text: ac.use_text.then(|| pooled_t.view()),
                    extras: &dropped_extras,
                },
                &p.fusion,
            )
            .map_err(|e| e.to_string())?;
            worst = worst.max(
                (&with_zeros - &dropped)
                    .mapv(f64::abs)
                    .fold(0.0f64, |a, &b| a.max(b)),
            );
            // and the network's own handling of a disabled feature
            let through_net = predict(&p, &c, &x).map_err(|e| e.to_string())?;
            let explicit = predict(
                &p,
                &c,
                &CallInput {
                    audio: x.audio.clone(),
                    text: x.text.clone(),
                    extras: x.extras.iter().map(|e| e.mapv(|v| v + 0.0)).collect(),
                },
            )
            .map_err(|e| e.to_string())?;
            worst = worst.max((through_net - explicit).abs());
        }
    }
    ensure!(worst <= 1e-12, "zero vs dropped differs by {worst:e}");
    Ok(format!(
        "7 preset rows with consistent means, zero vs dropped {worst:.1e}"
    ))
}

fn split_integrity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1009);
    let calls = random_calls(&mut rng, 572);
    let split = temporal_split(&calls, 0.8).map_err(|e| e.to_string())?;
    ensure!(
        split.train_ids.len() == 457 && split.test_ids.len() == 115,
        "{}/{}",
        split.train_ids.len(),
        split.test_ids.len()
    );
    let by_id: std::collections::HashMap<&str, _> = calls
        .iter()
        .map(|c| (c.call_id.as_str(), c.call_date))
        .collect();
    let last_train = split
        .train_ids
        .iter()
        .map(|id| by_id[id.as_str()])
        .max()
        .unwrap();
    let first_test = split
        .test_ids
        .iter()
        .map(|id| by_id[id.as_str()])
        .min()
        .unwrap();
    ensure!(
        last_train <= first_test,
        "train reaches {last_train}, test starts {first_test}"
    );
    let train: BTreeSet<&String> = split.train_ids.iter().collect();
    let test: BTreeSet<&String> = split.test_ids.iter().collect();
    ensure!(train.is_disjoint(&test), "train and test overlap");
    ensure!(
        train.len() + test.len() == calls.len(),
        "split does not cover the corpus"
    );
    Ok(format!(
        "457/115, last train date {last_train} <= first test date {first_test}"
    ))
}

fn embedding_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for i in 0..50 {
        let rows = rng.gen_range(1..=40);
        let cols = rng.gen_range(1..=48);
        let mask = match i % 5 {
            0 => vec![true; rows],
            1 => {
                let mut m = vec![false; rows];
                m[rng.gen_range(0..rows)] = true;
                m
            }
            _ => (0..rows).map(|_| rng.gen_bool(0.5)).collect(),
        };
        let m = random_matrix(&mut rng, mask, cols);
        let path = dir.path().join(format!("m{i}.ecce"));
        write_embedding_file(&m, &path).map_err(|e| e.to_string())?;
        let first = fs::read(&path).map_err(|e| e.to_string())?;
        let back = read_embedding_file(&path).map_err(|e| e.to_string())?;
        ensure!(back == m, "matrix {i} changed on read");
        write_embedding_file(&back, &path).map_err(|e| e.to_string())?;
        let second = fs::read(&path).map_err(|e| e.to_string())?;
        ensure!(first == second, "matrix {i}: rewrite is not byte-identical");
        ensure!(
            decode(&encode(&back)).map_err(|e| e.to_string())? == m,
            "matrix {i}: in-memory round trip"
        );
    }
    let full = EmbeddingMatrix::zeros(520, 512);
    ensure!(
        encode(&full).len() == 1_065_499,
        "520x512 file is {} bytes",
        encode(&full).len()
    );
    Ok("50 matrices including all-true and single-true masks".into())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("volatility oracle", volatility_oracle),
        ("volatility scale law", volatility_scale_law),
        ("gradient check", gradient_check),
        ("attention normalization and masking", attention_masking),
        ("retrieval oracle", retrieval_oracle),
        ("deterministic end-to-end", deterministic_end_to_end),
        ("synthetic learnability", synthetic_learnability),
        ("ablation table shape", ablation_shape),
        ("split integrity", split_integrity),
        ("embedding file round-trip", embedding_round_trip),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        match result {
            Ok(detail) => println!("PASS  {name}: {detail} [{:.2?}]", t0.elapsed()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{:.2?}]", t0.elapsed());
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
