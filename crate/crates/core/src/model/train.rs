//! Mini-batch training with a grid search over batch size and learning rate.

use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::network::{loss, loss_and_grad_into, predict, predict_batch, CallInput};
use super::params::{ModelConfig, ModelParams};
use super::ModelError;

pub const BATCH_SIZES: [usize; 4] = [2, 4, 8, 16];
pub const LEARNING_RATES: [f64; 4] = [1e-3, 1e-5, 1e-6, 1e-7];

/// One labelled call ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub call_id: String,
    pub date: NaiveDate,
    pub input: CallInput,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_sizes: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub epochs: usize,
    pub seed: u64,
    pub target_tau: u32,
    pub adam: AdamConfig,
    /// Trailing share of the training calls, by date, held out for selection.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_sizes: BATCH_SIZES.to_vec(),
            learning_rates: LEARNING_RATES.to_vec(),
            epochs: 50,
            seed: 0,
            target_tau: 3,
            adam: AdamConfig::default(),
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistorySplit {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub split: HistorySplit,
    pub loss: f64,
}

/// Result of one grid cell. Exactly one of `validation_mse` / `error` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub selection_mse: Option<f64>,
    pub error: Option<String>,
}

/// Parameters plus the shape they belong to; read-only after training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub target_tau: u32,
}

impl TrainedModel {
    pub fn predict(&self, input: &CallInput) -> Result<f64, ModelError> {
        predict(&self.params, &self.config, input)
    }

    pub fn predict_batch(&self, inputs: &[&CallInput]) -> Result<Vec<f64>, ModelError> {
        predict_batch(&self.params, &self.config, inputs)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    /// Per-epoch losses of the final run on the whole training split.
    pub history: Vec<EpochLoss>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub cells: Vec<CellOutcome>,
    /// True when no validation calls existed and cells were ranked by
    /// training loss.
    pub selected_on_train: bool,
}

fn dataset_mse(p: &ModelParams, c: &ModelConfig, set: &[&Sample]) -> Result<f64, ModelError> {
    let inputs: Vec<&CallInput> = set.iter().map(|s| &s.input).collect();
    let targets: Vec<f64> = set.iter().map(|s| s.target).collect();
    loss(&predict_batch(p, c, &inputs)?, &targets)
}

/// Hyper-parameters of a single training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

/// Train one configuration from a fresh seeded initialisation. Records the
/// mean mini-batch training loss of every epoch, and the validation MSE
/// after the epoch when `validation` is non-empty.
pub fn fit(
    config: &ModelConfig,
    train: &[&Sample],
    validation: &[&Sample],
    opts: &FitOptions,
) -> Result<(ModelParams, Vec<EpochLoss>), ModelError> {
    fit_until(config, train, validation, opts, |_, _| false)
}

/// [`fit`] that calls `stop` after every epoch and ends early once it
/// returns true. The trajectory up to that point is the same as [`fit`]'s.
pub fn fit_until(
    config: &ModelConfig,
    train: &[&Sample],
    validation: &[&Sample],
    opts: &FitOptions,
    mut stop: impl FnMut(&ModelParams, &[EpochLoss]) -> bool,
) -> Result<(ModelParams, Vec<EpochLoss>), ModelError> {
    let FitOptions {
        batch_size,
        learning_rate,
        epochs,
        seed,
        ref adam,
    } = *opts;
    if train.is_empty() {
        return Err(ModelError::NoData("empty training set".into()));
    }
    if batch_size == 0 {
        return Err(ModelError::Config("batch size must be positive".into()));
    }
    let mut params = ModelParams::init(config, seed)?;
    let mut state = AdamState::new(&params);
    let mut grads = params.zeros_like();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x05ee_d0f0_dde5);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    for epoch in 1..=epochs {
        order.shuffle(&mut rng);
        // size-weighted mean of the mini-batch losses seen during the epoch
        let mut running = 0.0;
        for idx in order.chunks(batch_size) {
            let batch: Vec<&CallInput> = idx.iter().map(|&i| &train[i].input).collect();
            let targets: Vec<f64> = idx.iter().map(|&i| train[i].target).collect();
            let l = match loss_and_grad_into(&params, config, &batch, &targets, &mut grads) {
                Ok(l) => l,
                Err(ModelError::NonFinite { .. }) => {
                    return Err(ModelError::Diverged {
                        epoch,
                        loss: f64::NAN,
                    })
                }
                Err(e) => return Err(e),
            };
            running += l * idx.len() as f64;
            adam_step(&mut params, &grads, &mut state, learning_rate, adam)?;
        }
        let train_loss = running / train.len() as f64;
        if !train_loss.is_finite() {
            return Err(ModelError::Diverged {
                epoch,
                loss: train_loss,
            });
        }
        history.push(EpochLoss {
            epoch,
            split: HistorySplit::Train,
            loss: train_loss,
        });
        if !validation.is_empty() {
            let val = dataset_mse(&params, config, validation)?;
            if !val.is_finite() {
                return Err(ModelError::Diverged { epoch, loss: val });
            }
            history.push(EpochLoss {
                epoch,
                split: HistorySplit::Validation,
                loss: val,
            });
        }
        if stop(&params, &history) {
            break;
        }
    }
    Ok((params, history))
}

fn last_loss(history: &[EpochLoss], split: HistorySplit) -> Option<f64> {
    history
        .iter()
        .rev()
        .find(|h| h.split == split)
        .map(|h| h.loss)
}

/// Grid search, then a final run of the chosen cell on every training call.
/// Samples are ordered by date (then call id) before the holdout is cut.
pub fn train(
    config: &ModelConfig,
    samples: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    if samples.is_empty() {
        return Err(ModelError::NoData("empty training split".into()));
    }
    let mut ordered: Vec<&Sample> = samples.iter().collect();
    ordered.sort_by(|a, b| (a.date, &a.call_id).cmp(&(b.date, &b.call_id)));
    let n = ordered.len();
    let n_fit = ((n as f64 * (1.0 - cfg.validation_fraction)).floor() as usize).clamp(1, n);
    let (fit_set, val_set) = ordered.split_at(n_fit);
    let selected_on_train = val_set.is_empty();

    let grid: Vec<(usize, f64)> = cfg
        .batch_sizes
        .iter()
        .flat_map(|&b| cfg.learning_rates.iter().map(move |&lr| (b, lr)))
        .collect();
    if grid.is_empty() {
        return Err(ModelError::Config("empty hyperparameter grid".into()));
    }
    let cells: Vec<CellOutcome> = grid
        .par_iter()
        .map(|&(b, lr)| {
            let opts = FitOptions {
                batch_size: b,
                learning_rate: lr,
                epochs: cfg.epochs,
                seed: cfg.seed,
                adam: cfg.adam,
            };
            let run = fit(config, fit_set, val_set, &opts);
            let (selection_mse, error) = match run {
                Ok((_, h)) => {
                    let split = if selected_on_train {
                        HistorySplit::Train
                    } else {
                        HistorySplit::Validation
                    };
                    match last_loss(&h, split) {
                        Some(l) => (Some(l), None),
                        None => (None, Some("no epochs run".to_string())),
                    }
                }
                Err(e) => (None, Some(e.to_string())),
            };
            if let Some(e) = &error {
                log::warn!("grid cell batch={b} lr={lr} failed: {e}");
            }
            CellOutcome {
                batch_size: b,
                learning_rate: lr,
                selection_mse,
                error,
            }
        })
        .collect();

    let best = cells
        .iter()
        .filter_map(|c| c.selection_mse.map(|m| (c, m)))
        .fold(None::<(&CellOutcome, f64)>, |acc, (c, m)| match acc {
            Some((_, bm)) if bm <= m => acc,
            _ => Some((c, m)),
        })
        .ok_or(ModelError::AllCellsFailed)?
        .0;
    let (batch_size, learning_rate) = (best.batch_size, best.learning_rate);
    let opts = FitOptions {
        batch_size,
        learning_rate,
        epochs: cfg.epochs,
        seed: cfg.seed,
        adam: cfg.adam,
    };
    let (params, history) = fit(config, &ordered, &[], &opts)?;
    Ok(TrainOutcome {
        model: TrainedModel {
            config: config.clone(),
            params,
            target_tau: cfg.target_tau,
        },
        history,
        batch_size,
        learning_rate,
        cells,
        selected_on_train,
    })
}

pub fn write_history(path: &Path, history: &[EpochLoss]) -> Result<(), ModelError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| ModelError::History(e.to_string()))?;
    for row in history {
        w.serialize(row)
            .map_err(|e| ModelError::History(e.to_string()))?;
    }
    w.flush().map_err(|e| ModelError::History(e.to_string()))
}

pub fn read_history(path: &Path) -> Result<Vec<EpochLoss>, ModelError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| ModelError::History(e.to_string()))?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| ModelError::History(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::MhsaConfig;
    use ndarray::{Array1, Array2};
    use rand::Rng;

    fn config() -> ModelConfig {
        let enc = MhsaConfig {
            num_blocks: 1,
            num_heads: 1,
            model_dim: 2,
            ffn_hidden: 2,
        };
        ModelConfig {
            audio: enc,
            text: enc,
            extra_dims: vec![3],
            fused_dim: 4,
            head_hidden: 4,
        }
    }

    fn samples(n: usize) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        (0..n)
            .map(|i| {
                let extra = Array1::from_shape_fn(3, |_| rng.gen_range(-1.0..1.0));
                let target = extra.sum();
                Sample {
                    call_id: format!("c{i:03}"),
                    date: d0 + chrono::Days::new(i as u64),
                    input: CallInput {
                        audio: Some(Array2::from_shape_fn((2, 2), |_| rng.gen_range(-1.0..1.0))),
                        text: None,
                        extras: vec![extra],
                    },
                    target,
                }
            })
            .collect()
    }

    #[test]
    fn default_grid_has_sixteen_cells() {
        let c = TrainConfig::default();
        assert_eq!(c.batch_sizes.len() * c.learning_rates.len(), 16);
        assert_eq!(c.batch_sizes, [2, 4, 8, 16]);
        assert_eq!(c.learning_rates, [1e-3, 1e-5, 1e-6, 1e-7]);
    }

    #[test]
    fn grid_search_is_deterministic() {
        let data = samples(20);
        let cfg = TrainConfig {
            batch_sizes: vec![2, 8],
            learning_rates: vec![1e-3, 1e-5],
            epochs: 3,
            seed: 9,
            ..TrainConfig::default()
        };
        let a = train(&config(), &data, &cfg).unwrap();
        let b = train(&config(), &data, &cfg).unwrap();
        assert_eq!(a.cells.len(), 4);
        assert_eq!(
            (a.batch_size, a.learning_rate),
            (b.batch_size, b.learning_rate)
        );
        assert_eq!(a.model.params, b.model.params);
        assert_eq!(a.history, b.history);
        assert!(!a.selected_on_train);
    }

    #[test]
    fn training_reduces_loss() {
        let data = samples(24);
        let refs: Vec<&Sample> = data.iter().collect();
        let opts = FitOptions {
            batch_size: 4,
            learning_rate: 1e-2,
            epochs: 30,
            seed: 1,
            adam: AdamConfig::default(),
        };
        let (_, h) = fit(&config(), &refs, &[], &opts).unwrap();
        assert!(h.last().unwrap().loss < h[0].loss);
    }

    #[test]
    fn early_stop_is_a_prefix_of_the_full_run() {
        let data = samples(12);
        let refs: Vec<&Sample> = data.iter().collect();
        let opts = FitOptions {
            batch_size: 4,
            learning_rate: 1e-2,
            epochs: 8,
            seed: 3,
            adam: AdamConfig::default(),
        };
        let (_, full) = fit(&config(), &refs, &[], &opts).unwrap();
        let (p5, h5) = fit_until(&config(), &refs, &[], &opts, |_, h| h.len() == 5).unwrap();
        assert_eq!(h5[..], full[..5]);
        let (p5b, _) = fit(&config(), &refs, &[], &FitOptions { epochs: 5, ..opts }).unwrap();
        assert_eq!(p5, p5b);
    }

    #[test]
    fn diverging_cell_is_recorded_and_others_continue() {
        let mut data = samples(10);
        let cfg = TrainConfig {
            batch_sizes: vec![2],
            learning_rates: vec![1e-3, 1e300],
            epochs: 2,
            ..TrainConfig::default()
        };
        data[0].target = 1e200;
        let out = train(&config(), &data, &cfg);
        // the huge target overflows every cell's squared error
        assert!(matches!(out, Err(ModelError::AllCellsFailed)));

        let data = samples(10);
        let out = train(&config(), &data, &cfg).unwrap();
        assert!(out.cells[1].error.is_some() || out.cells[1].selection_mse.is_some());
        assert_eq!(out.learning_rate, 1e-3);
    }

    #[test]
    fn single_sample_selects_on_training_loss() {
        let data = samples(1);
        let cfg = TrainConfig {
            batch_sizes: vec![2],
            learning_rates: vec![1e-3],
            epochs: 1,
            ..TrainConfig::default()
        };
        let out = train(&config(), &data, &cfg).unwrap();
        assert!(out.selected_on_train);
    }

    #[test]
    fn history_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        let h = vec![
            EpochLoss {
                epoch: 1,
                split: HistorySplit::Train,
                loss: 0.5,
            },
            EpochLoss {
                epoch: 1,
                split: HistorySplit::Validation,
                loss: 0.25,
            },
        ];
        write_history(&path, &h).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("epoch,split,loss\n1,train,0.5\n"));
        assert_eq!(read_history(&path).unwrap(), h);
    }
}
