//! Per-horizon evaluation, the feature-ablation matrix and result tables.

mod ablation;
mod table;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::labels::VolatilityLabel;
use crate::model::{
    loss, train, CallInput, ModelConfig, ModelError, Sample, TrainConfig, TrainOutcome,
    TrainedModel,
};

pub use ablation::{
    ablation_model_config, run_ablation, AblationConfig, AblationReport, ConfigFailure,
};
pub use table::{ResultRow, ResultTable, REPORT_TAUS};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no label for call {call_id} at tau {tau}")]
    MissingLabel { call_id: String, tau: u32 },
    #[error("no trained model for tau {0}")]
    MissingModel(u32),
    #[error("no labelled training calls for tau {0}")]
    NoTrainingData(u32),
    #[error("empty test split")]
    EmptyTest,
    #[error("invalid ablation config {0}: at least one feature must be enabled")]
    EmptyAblation(String),
    #[error("results csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Everything the network consumes for one call. Sequence features hold the
/// valid rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct CallFeatures {
    pub call_id: String,
    pub date: NaiveDate,
    pub audio: Array2<f64>,
    pub text: Array2<f64>,
    /// Embedding of the overall summary followed by the chunk summaries.
    pub summary: Array1<f64>,
    pub focus: Array1<f64>,
    /// Overall summary embedded alone.
    pub overall: Array1<f64>,
    /// Chunk summaries embedded alone.
    pub chunks: Array1<f64>,
}

impl CallFeatures {
    /// Audio, sentences, summary and focus.
    pub fn headline_input(&self) -> CallInput {
        CallInput {
            audio: Some(self.audio.clone()),
            text: Some(self.text.clone()),
            extras: vec![self.summary.clone(), self.focus.clone()],
        }
    }
}

pub type LabelMap = BTreeMap<(String, u32), f64>;

pub fn label_map(labels: &[VolatilityLabel]) -> LabelMap {
    labels
        .iter()
        .map(|l| ((l.call_id.clone(), l.tau), l.value))
        .collect()
}

/// Train one model per reported horizon. Calls without a label at a
/// horizon are left out of that horizon's training set.
pub fn train_per_tau(
    config: &ModelConfig,
    train_calls: &[&CallFeatures],
    labels: &LabelMap,
    train_cfg: &TrainConfig,
    input: &(dyn Fn(&CallFeatures) -> CallInput + Sync),
) -> Result<BTreeMap<u32, TrainOutcome>, EvalError> {
    let mut out = BTreeMap::new();
    for tau in REPORT_TAUS {
        let samples: Vec<Sample> = train_calls
            .iter()
            .filter_map(|c| {
                labels.get(&(c.call_id.clone(), tau)).map(|&target| Sample {
                    call_id: c.call_id.clone(),
                    date: c.date,
                    input: input(c),
                    target,
                })
            })
            .collect();
        if samples.len() < train_calls.len() {
            log::warn!(
                "tau {tau}: {} training calls have no label",
                train_calls.len() - samples.len()
            );
        }
        if samples.is_empty() {
            return Err(EvalError::NoTrainingData(tau));
        }
        let cfg = TrainConfig {
            target_tau: tau,
            ..train_cfg.clone()
        };
        out.insert(tau, train(config, &samples, &cfg)?);
    }
    Ok(out)
}

/// Test-split MSE at each horizon and their mean.
pub fn evaluate(
    name: &str,
    models: &BTreeMap<u32, TrainedModel>,
    test_calls: &[&CallFeatures],
    labels: &LabelMap,
    input: &(dyn Fn(&CallFeatures) -> CallInput + Sync),
) -> Result<ResultRow, EvalError> {
    if test_calls.is_empty() {
        return Err(EvalError::EmptyTest);
    }
    let inputs: Vec<CallInput> = test_calls.iter().map(|c| input(c)).collect();
    let refs: Vec<&CallInput> = inputs.iter().collect();
    let mut per_tau = [0.0; 4];
    for (slot, tau) in per_tau.iter_mut().zip(REPORT_TAUS) {
        let model = models.get(&tau).ok_or(EvalError::MissingModel(tau))?;
        let targets = test_calls
            .iter()
            .map(|c| {
                labels
                    .get(&(c.call_id.clone(), tau))
                    .copied()
                    .ok_or_else(|| EvalError::MissingLabel {
                        call_id: c.call_id.clone(),
                        tau,
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        *slot = loss(&model.predict_batch(&refs)?, &targets)?;
    }
    Ok(ResultRow::new(name, per_tau))
}

/// [`evaluate`] for arbitrary predictors, keyed by horizon.
pub fn evaluate_predictions(
    name: &str,
    predictions: &BTreeMap<u32, Vec<f64>>,
    test_ids: &[&str],
    labels: &LabelMap,
) -> Result<ResultRow, EvalError> {
    if test_ids.is_empty() {
        return Err(EvalError::EmptyTest);
    }
    let mut per_tau = [0.0; 4];
    for (slot, tau) in per_tau.iter_mut().zip(REPORT_TAUS) {
        let pred = predictions.get(&tau).ok_or(EvalError::MissingModel(tau))?;
        let targets = test_ids
            .iter()
            .map(|id| {
                labels
                    .get(&(id.to_string(), tau))
                    .copied()
                    .ok_or_else(|| EvalError::MissingLabel {
                        call_id: id.to_string(),
                        tau,
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        *slot = loss(pred, &targets)?;
    }
    Ok(ResultRow::new(name, per_tau))
}
