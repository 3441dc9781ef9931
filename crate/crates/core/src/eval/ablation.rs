use std::collections::BTreeMap;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, train_per_tau, CallFeatures, EvalError, LabelMap, ResultTable};
use crate::model::{CallInput, ModelConfig, TrainConfig};

/// Which features reach the fusion layer. The summary is split into the
/// overall-summary embedding and the chunk-summaries embedding, each with its
/// own projection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub name: String,
    pub use_audio: bool,
    pub use_text: bool,
    pub use_eos: bool,
    pub use_ecs: bool,
    pub use_efo: bool,
}

impl AblationConfig {
    pub fn new(name: &str, flags: [bool; 5]) -> Result<Self, EvalError> {
        if !flags.iter().any(|&f| f) {
            return Err(EvalError::EmptyAblation(name.into()));
        }
        let [use_audio, use_text, use_eos, use_ecs, use_efo] = flags;
        Ok(Self {
            name: name.into(),
            use_audio,
            use_text,
            use_eos,
            use_ecs,
            use_efo,
        })
    }

    /// The seven standard feature combinations, in report order.
    pub fn presets() -> Vec<Self> {
        [
            ("Audio+Text", [true, true, false, false, false]),
            ("Audio+Text+E_os", [true, true, true, false, false]),
            ("Audio+Text+E_cs", [true, true, false, true, false]),
            ("Audio+Text+E_os+E_cs", [true, true, true, true, false]),
            ("Audio+Text+E_fo", [true, true, false, false, true]),
            ("E_os+E_cs+E_fo", [false, false, true, true, true]),
            ("Audio+Text+E_os+E_cs+E_fo", [true, true, true, true, true]),
        ]
        .into_iter()
        .map(|(n, f)| Self::new(n, f).expect("presets enable a feature"))
        .collect()
    }

    /// Network input with every disabled feature replaced by zeros. A
    /// disabled sequence feature skips its encoder and pools to zero.
    pub fn input(&self, f: &CallFeatures) -> CallInput {
        let keep = |on: bool, v: &Array1<f64>| {
            if on {
                v.clone()
            } else {
                Array1::zeros(v.len())
            }
        };
        CallInput {
            audio: self.use_audio.then(|| f.audio.clone()),
            text: self.use_text.then(|| f.text.clone()),
            extras: vec![
                keep(self.use_eos, &f.overall),
                keep(self.use_ecs, &f.chunks),
                keep(self.use_efo, &f.focus),
            ],
        }
    }
}

/// The headline shape with three text-embedding projections
/// (overall summary, chunk summaries, focus).
pub fn ablation_model_config(base: &ModelConfig, text_dim: usize) -> ModelConfig {
    ModelConfig {
        extra_dims: vec![text_dim; 3],
        ..base.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFailure {
    pub config: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub table: ResultTable,
    pub failures: Vec<ConfigFailure>,
}

/// Separate training run per configuration and horizon; configurations run
/// in parallel and rows come back in input order. A failing configuration is
/// recorded and left out of the table.
pub fn run_ablation(
    base: &ModelConfig,
    train_calls: &[&CallFeatures],
    test_calls: &[&CallFeatures],
    labels: &LabelMap,
    configs: &[AblationConfig],
    train_cfg: &TrainConfig,
) -> AblationReport {
    let text_dim = train_calls.first().map_or(0, |c| c.focus.len());
    let model_cfg = ablation_model_config(base, text_dim);
    let results: Vec<Result<_, EvalError>> = configs
        .par_iter()
        .map(|ac| {
            let input = |f: &CallFeatures| ac.input(f);
            let trained = train_per_tau(&model_cfg, train_calls, labels, train_cfg, &input)?;
            let models: BTreeMap<_, _> = trained.into_iter().map(|(t, o)| (t, o.model)).collect();
            evaluate(&ac.name, &models, test_calls, labels, &input)
        })
        .collect();
    let mut report = AblationReport {
        table: ResultTable::default(),
        failures: Vec::new(),
    };
    for (ac, r) in configs.iter().zip(results) {
        match r {
            Ok(row) => report.table.rows.push(row),
            Err(e) => {
                log::warn!("ablation {}: {e}", ac.name);
                report.failures.push(ConfigFailure {
                    config: ac.name.clone(),
                    error: e.to_string(),
                })
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use ndarray::Array2;

    fn features() -> CallFeatures {
        CallFeatures {
            call_id: "x".into(),
            date: NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
            audio: Array2::ones((2, 4)),
            text: Array2::ones((3, 4)),
            summary: Array1::ones(3),
            focus: Array1::from_elem(3, 2.0),
            overall: Array1::from_elem(3, 3.0),
            chunks: Array1::from_elem(3, 4.0),
        }
    }

    #[test]
    fn seven_named_presets() {
        let names: Vec<String> = AblationConfig::presets()
            .into_iter()
            .map(|c| c.name)
            .collect();
        assert_eq!(
            names,
            [
                "Audio+Text",
                "Audio+Text+E_os",
                "Audio+Text+E_cs",
                "Audio+Text+E_os+E_cs",
                "Audio+Text+E_fo",
                "E_os+E_cs+E_fo",
                "Audio+Text+E_os+E_cs+E_fo"
            ]
        );
    }

    #[test]
    fn all_disabled_is_rejected() {
        assert!(AblationConfig::new("none", [false; 5]).is_err());
    }

    #[test]
    fn audio_only_zeroes_everything_else() {
        let ac = AblationConfig::new("audio", [true, false, false, false, false]).unwrap();
        let x = ac.input(&features());
        assert!(x.audio.is_some());
        assert!(x.text.is_none());
        assert_eq!(x.extras.len(), 3);
        assert!(x
            .extras
            .iter()
            .all(|e| e.iter().all(|&v| v == 0.0) && e.len() == 3));
    }

    #[test]
    fn full_preset_keeps_every_feature() {
        let ac = AblationConfig::presets().pop().unwrap();
        let f = features();
        let x = ac.input(&f);
        assert_eq!(
            x.extras,
            vec![f.overall.clone(), f.chunks.clone(), f.focus.clone()]
        );
    }
}
