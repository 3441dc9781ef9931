mod common;

use chrono::Days;
use common::date;
use eccvol_core::eval::{run_ablation, AblationConfig, CallFeatures, LabelMap, REPORT_TAUS};
use eccvol_core::model::{MhsaConfig, ModelConfig, TrainConfig};
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every feature carries part of the target, so no single feature can
/// explain it alone.
#[test]
fn full_configuration_beats_every_single_feature() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let dim = 4;
    let weights: Vec<Array1<f64>> = (0..5)
        .map(|_| Array1::from_shape_fn(dim, |_| rng.gen_range(-1.0..1.0)))
        .collect();
    let calls: Vec<CallFeatures> = (0..80)
        .map(|i| {
            let mut v = || Array1::from_shape_fn(dim, |_| rng.gen_range(-1.0..1.0));
            let (overall, chunks, focus) = (v(), v(), v());
            let audio = Array2::from_shape_fn((3, dim), |_| rng.gen_range(-1.0..1.0));
            let text = Array2::from_shape_fn((2, dim), |_| rng.gen_range(-1.0..1.0));
            CallFeatures {
                call_id: format!("S{i:03}"),
                date: date("2020-01-01") + Days::new(i),
                summary: &overall + &chunks,
                audio,
                text,
                focus,
                overall,
                chunks,
            }
        })
        .collect();
    let mut labels = LabelMap::new();
    for c in &calls {
        let parts = [
            c.audio.mean_axis(Axis(0)).unwrap(),
            c.text.mean_axis(Axis(0)).unwrap(),
            c.overall.clone(),
            c.chunks.clone(),
            c.focus.clone(),
        ];
        let y: f64 = parts.iter().zip(&weights).map(|(x, w)| x.dot(w)).sum();
        for tau in REPORT_TAUS {
            labels.insert((c.call_id.clone(), tau), y);
        }
    }
    let (train, test) = calls.split_at(64);
    let train: Vec<&CallFeatures> = train.iter().collect();
    let test: Vec<&CallFeatures> = test.iter().collect();
    let enc = MhsaConfig {
        num_blocks: 1,
        num_heads: 2,
        model_dim: dim,
        ffn_hidden: 8,
    };
    let base = ModelConfig {
        audio: enc,
        text: enc,
        extra_dims: vec![dim; 2],
        fused_dim: 16,
        head_hidden: 16,
    };
    let cfg = TrainConfig {
        batch_sizes: vec![8],
        learning_rates: vec![1e-2, 3e-3],
        epochs: 150,
        seed: 3,
        ..TrainConfig::default()
    };
    let names = ["audio", "text", "eos", "ecs", "efo"];
    let mut configs: Vec<AblationConfig> = (0..5)
        .map(|i| {
            let mut flags = [false; 5];
            flags[i] = true;
            AblationConfig::new(names[i], flags).unwrap()
        })
        .collect();
    configs.push(AblationConfig::new("full", [true; 5]).unwrap());
    let report = run_ablation(&base, &train, &test, &labels, &configs, &cfg);
    assert!(report.failures.is_empty(), "{:?}", report.failures);
    let full = report.table.rows.last().unwrap().mse_mean;
    for row in &report.table.rows[..5] {
        assert!(
            full <= row.mse_mean,
            "full {full} vs {} {}",
            row.config,
            row.mse_mean
        );
    }
}
