//! File-backed pipeline behind the `eccvol` binary: every step reads the
//! artifacts of the previous ones from a working directory.
//!
//! ```text
//! <workdir>/corpus/{transcripts.jsonl, prices.csv, split.json}
//! <workdir>/labels.csv
//! <workdir>/embeddings/<call>.{audio,sentences}.ecce
//! <workdir>/analysis/<call>.{summary.json, focus_bundle.json, ts.ecce, tf.ecce, eos.ecce, ecs.ecce}
//! <workdir>/models/tau<n>.{eccm, history.csv}, selection.json
//! <workdir>/results.{csv,txt}, ablation.{csv,txt}
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    load_prices, load_transcripts, temporal_split, write_prices, write_transcripts, CorpusError,
    DatasetSplit, EccCall,
};
use crate::embedding::{
    pad_to_capacity, read_embedding_file, write_embedding_file, EmbeddingError, EmbeddingMatrix,
    EmbeddingProvider, FileProvider, ProviderError, RemoteEmbeddingProvider, StubProvider,
    TextEmbedding, SEQ_CAPACITY,
};
use crate::eval::{
    evaluate, label_map, run_ablation, train_per_tau, AblationConfig, AblationReport, CallFeatures,
    EvalError, ResultTable, REPORT_TAUS,
};
use crate::focus::{
    build_index, focus_embedding, run_question_bank, FocusBundle, FocusError, QuestionBank,
};
use crate::http::RemoteConfig;
use crate::labels::{build_labels, read_labels_csv, write_labels_csv, LabelError, DEFAULT_TAUS};
use crate::llm::{
    chunk_summaries_text, chunk_text, summarize_transcript, summary_embedding, LlmClient, LlmError,
    MockClient, PromptRegistry, RemoteChatClient, SummaryBundle,
};
use crate::model::{
    read_checkpoint, write_checkpoint, write_history, ModelConfig, ModelError, TrainConfig,
    TrainedModel,
};

/// Name of the headline row in `results.csv`.
pub const HEADLINE_ROW: &str = "Audio+Text+T_s+T_f";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing artifact {0}; run the earlier pipeline steps first")]
    Missing(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Focus(#[from] FocusError),
}

impl PipelineError {
    /// 1 usage or configuration, 2 data, 3 provider or client.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Provider(_) | PipelineError::Llm(_) => 3,
            PipelineError::Focus(FocusError::Bank(_)) => 1,
            PipelineError::Focus(_) => 3,
            _ => 2,
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub transcripts: PathBuf,
    pub prices: PathBuf,
    #[serde(default = "default_workdir")]
    pub workdir: PathBuf,
    /// Overrides the built-in prompt templates.
    #[serde(default)]
    pub prompts: Option<PathBuf>,
    /// Overrides the built-in question bank.
    #[serde(default)]
    pub question_bank: Option<PathBuf>,
}

fn default_workdir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Stub,
    Files,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    #[serde(default = "default_provider")]
    pub kind: ProviderKind,
    /// Seed of the stub provider.
    #[serde(default)]
    pub seed: u64,
    /// Directory holding `index.jsonl` for the file provider.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub remote: Option<RemoteConfig>,
}

fn default_provider() -> ProviderKind {
    ProviderKind::Stub
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Stub,
            seed: 0,
            dir: None,
            remote: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmKind {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    #[serde(default = "default_llm")]
    pub kind: LlmKind,
    #[serde(default)]
    pub remote: Option<RemoteConfig>,
}

fn default_llm() -> LlmKind {
    LlmKind::Mock
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            kind: LlmKind::Mock,
            remote: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChunkingConfig {
    pub max_chars: usize,
    pub overlap_chars: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            max_chars: crate::llm::DEFAULT_MAX_CHARS,
            overlap_chars: crate::llm::DEFAULT_OVERLAP_CHARS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalConfig {
    pub top_k: usize,
    pub in_flight: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            top_k: crate::focus::DEFAULT_TOP_K,
            in_flight: crate::llm::DEFAULT_IN_FLIGHT,
        }
    }
}

/// Encoder size. Unset fields keep the standard six blocks, eight heads and
/// a 4x feed-forward expansion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSizeConfig {
    pub num_blocks: Option<usize>,
    pub num_heads: Option<usize>,
    pub ffn_hidden: Option<usize>,
}

impl ModelSizeConfig {
    pub fn headline(&self) -> ModelConfig {
        let mut c = ModelConfig::headline();
        for e in [&mut c.audio, &mut c.text] {
            if let Some(b) = self.num_blocks {
                e.num_blocks = b;
            }
            if let Some(h) = self.num_heads {
                e.num_heads = h;
            }
            if let Some(f) = self.ffn_hidden {
                e.ffn_hidden = f;
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch_sizes: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub epochs: usize,
    pub validation_fraction: f64,
    pub train_ratio: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            batch_sizes: t.batch_sizes,
            learning_rates: t.learning_rates,
            epochs: t.epochs,
            validation_fraction: t.validation_fraction,
            train_ratio: 0.8,
        }
    }
}

/// Contents of `config.toml`. Relative paths resolve against the file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub provider: ProviderConfig,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub chunking: ChunkingConfig,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub model: ModelSizeConfig,
    #[serde(default)]
    pub train: TrainSection,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.into()));
        if self.chunking.max_chars <= self.chunking.overlap_chars {
            return bad("chunking.max_chars must exceed overlap_chars");
        }
        if self.retrieval.top_k == 0 || self.retrieval.in_flight == 0 {
            return bad("retrieval.top_k and in_flight must be positive");
        }
        if self.train.batch_sizes.is_empty() || self.train.learning_rates.is_empty() {
            return bad("train grid must not be empty");
        }
        if !(self.train.train_ratio > 0.0 && self.train.train_ratio < 1.0) {
            return bad("train.train_ratio must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.train.validation_fraction) {
            return bad("train.validation_fraction must lie in [0, 1)");
        }
        self.model
            .headline()
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_sizes: self.train.batch_sizes.clone(),
            learning_rates: self.train.learning_rates.clone(),
            epochs: self.train.epochs,
            seed: self.seed,
            validation_fraction: self.train.validation_fraction,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: PipelineConfig,
    root: PathBuf,
}

/// Per-horizon record of the grid search written next to the checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub tau: u32,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub selected_on_train: bool,
    pub failed_cells: Vec<String>,
}

impl Pipeline {
    pub fn load(config_path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(config_path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", config_path.display())))?;
        let config = PipelineConfig::from_toml(&text)?;
        let root = config_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Ok(Self { config, root })
    }

    pub fn new(config: PipelineConfig, root: &Path) -> Result<Self, PipelineError> {
        config.validate()?;
        Ok(Self {
            config,
            root: root.to_path_buf(),
        })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn workdir(&self) -> PathBuf {
        self.resolve(&self.config.paths.workdir)
    }

    fn dir(&self, name: &str) -> Result<PathBuf, PipelineError> {
        let d = self.workdir().join(name);
        fs::create_dir_all(&d).map_err(io(&d))?;
        Ok(d)
    }

    fn require(path: PathBuf) -> Result<PathBuf, PipelineError> {
        if path.exists() {
            Ok(path)
        } else {
            Err(PipelineError::Missing(path.display().to_string()))
        }
    }

    fn corpus_dir(&self) -> PathBuf {
        self.workdir().join("corpus")
    }

    // ---- corpus store -------------------------------------------------

    /// Validate the raw inputs and write the corpus store and the split.
    pub fn ingest(&self) -> Result<DatasetSplit, PipelineError> {
        let calls = load_transcripts(&self.resolve(&self.config.paths.transcripts))?;
        let prices = load_prices(&self.resolve(&self.config.paths.prices))?;
        let split = temporal_split(&calls, self.config.train.train_ratio)?;
        let dir = self.dir("corpus")?;
        write_transcripts(&calls, &dir.join("transcripts.jsonl"))?;
        write_prices(&prices, &dir.join("prices.csv"))?;
        let path = dir.join("split.json");
        let body = serde_json::to_string_pretty(&split).expect("split serializes");
        fs::write(&path, body + "\n").map_err(io(&path))?;
        log::info!(
            "ingested {} calls ({} train, {} test)",
            calls.len(),
            split.train_ids.len(),
            split.test_ids.len()
        );
        Ok(split)
    }

    pub fn calls(&self) -> Result<Vec<EccCall>, PipelineError> {
        Ok(load_transcripts(&Self::require(
            self.corpus_dir().join("transcripts.jsonl"),
        )?)?)
    }

    pub fn split(&self) -> Result<DatasetSplit, PipelineError> {
        let path = Self::require(self.corpus_dir().join("split.json"))?;
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("split.json: {e}")))
    }

    // ---- labels -------------------------------------------------------

    /// Returns the number of labels written and the number of calls or
    /// horizons that could not be labelled.
    pub fn label(&self) -> Result<(usize, usize), PipelineError> {
        let calls = self.calls()?;
        let prices = load_prices(&Self::require(self.corpus_dir().join("prices.csv"))?)?;
        let report = build_labels(&calls, &prices, &DEFAULT_TAUS)?;
        for issue in &report.issues {
            log::warn!("{} tau {}: {}", issue.call_id, issue.tau, issue.error);
        }
        let path = self.workdir().join("labels.csv");
        let file = fs::File::create(&path).map_err(io(&path))?;
        write_labels_csv(&report.labels, file)?;
        Ok((report.labels.len(), report.issues.len()))
    }

    fn labels(&self) -> Result<crate::eval::LabelMap, PipelineError> {
        let path = Self::require(self.workdir().join("labels.csv"))?;
        let file = fs::File::open(&path).map_err(io(&path))?;
        Ok(label_map(&read_labels_csv(file)?))
    }

    // ---- providers ----------------------------------------------------

    pub fn provider(
        &self,
        kind: ProviderKind,
        seed: u64,
    ) -> Result<Box<dyn EmbeddingProvider>, PipelineError> {
        let p = &self.config.provider;
        Ok(match kind {
            ProviderKind::Stub => Box::new(StubProvider::new(seed)),
            ProviderKind::Files => {
                let dir = p.dir.as_ref().ok_or_else(|| {
                    PipelineError::Config("provider.dir is required for files".into())
                })?;
                Box::new(FileProvider::open(&self.resolve(dir))?)
            }
            ProviderKind::Remote => {
                let r = p.remote.clone().ok_or_else(|| {
                    PipelineError::Config("[provider.remote] is required for remote".into())
                })?;
                Box::new(RemoteEmbeddingProvider::new(r)?)
            }
        })
    }

    pub fn default_provider(&self) -> Result<Box<dyn EmbeddingProvider>, PipelineError> {
        self.provider(self.config.provider.kind, self.config.provider.seed)
    }

    pub fn client(&self) -> Result<Box<dyn LlmClient>, PipelineError> {
        Ok(match self.config.llm.kind {
            LlmKind::Mock => Box::new(MockClient::echo()),
            LlmKind::Remote => {
                let r = self.config.llm.remote.clone().ok_or_else(|| {
                    PipelineError::Config("[llm.remote] is required for remote".into())
                })?;
                Box::new(RemoteChatClient::new(r)?)
            }
        })
    }

    // ---- sequence embeddings ------------------------------------------

    fn embeddings_dir(&self) -> PathBuf {
        self.workdir().join("embeddings")
    }

    /// Write the padded audio and sentence matrices of every call.
    pub fn embed(&self, provider: &dyn EmbeddingProvider) -> Result<usize, PipelineError> {
        let calls = self.calls()?;
        let dir = self.dir("embeddings")?;
        for call in &calls {
            let audio = provider.embed_audio_frames(&call.audio_clip_ids())?;
            let texts: Vec<String> = call.sentences.iter().map(|s| s.text.clone()).collect();
            let sentences = provider.embed_sentences(&texts)?;
            for (vectors, file) in [
                (audio, &call.audio_embedding_ref),
                (sentences, &call.sentence_embedding_ref),
            ] {
                let padded = pad_to_capacity(&vectors, SEQ_CAPACITY)?;
                if padded.truncated > 0 {
                    log::warn!(
                        "{}: dropped {} rows beyond capacity",
                        call.call_id,
                        padded.truncated
                    );
                }
                write_embedding_file(&padded.matrix, &dir.join(file))?;
            }
        }
        Ok(calls.len())
    }

    // ---- summaries and focus ------------------------------------------

    fn analysis_dir(&self) -> PathBuf {
        self.workdir().join("analysis")
    }

    fn prompts(&self) -> Result<PromptRegistry, PipelineError> {
        match &self.config.paths.prompts {
            Some(p) => Ok(PromptRegistry::load(&self.resolve(p))?),
            None => Ok(PromptRegistry::default()),
        }
    }

    fn bank(&self) -> Result<QuestionBank, PipelineError> {
        match &self.config.paths.question_bank {
            Some(p) => Ok(QuestionBank::load(&self.resolve(p))?),
            None => Ok(QuestionBank::default()),
        }
    }

    /// Summaries, focus extraction and the four text embeddings per call.
    pub fn analyze(
        &self,
        client: &dyn LlmClient,
        provider: &dyn EmbeddingProvider,
    ) -> Result<usize, PipelineError> {
        let calls = self.calls()?;
        let prompts = self.prompts()?;
        let bank = self.bank()?;
        let dir = self.dir("analysis")?;
        let (ck, rt) = (&self.config.chunking, &self.config.retrieval);
        for call in &calls {
            let id = &call.call_id;
            let chunks = chunk_text(&call.transcript_text(), ck.max_chars, ck.overlap_chars);
            let summary = summarize_transcript(client, &prompts, &chunks, rt.in_flight)?;
            let index = build_index(provider, &chunks)?;
            let focus = match run_question_bank(
                client,
                &prompts,
                provider,
                &index,
                &chunks,
                &bank,
                rt.top_k,
                rt.in_flight,
            ) {
                Ok(f) => f,
                Err(FocusError::Questions { failures, partial }) => {
                    write_json(
                        &dir.join(format!("{id}.focus_bundle.json")),
                        &partial.to_json(),
                    )?;
                    return Err(FocusError::Questions { failures, partial }.into());
                }
                Err(e) => return Err(e.into()),
            };
            let summary_json = serde_json::to_string_pretty(&summary).expect("summary serializes");
            write_json(&dir.join(format!("{id}.summary.json")), &summary_json)?;
            write_json(
                &dir.join(format!("{id}.focus_bundle.json")),
                &focus.to_json(),
            )?;

            let ts = summary_embedding(provider, &summary)?;
            let tf = focus_embedding(provider, &focus)?;
            let eos = provider.embed_text(summary.overall_summary())?;
            let ecs = provider.embed_text(&chunk_summaries_text(&summary))?;
            for (e, ext) in [(ts, "ts"), (tf, "tf"), (eos, "eos"), (ecs, "ecs")] {
                write_embedding_file(&e.to_matrix(), &dir.join(format!("{id}.{ext}.ecce")))?;
            }
        }
        Ok(calls.len())
    }

    pub fn summary(&self, call_id: &str) -> Result<SummaryBundle, PipelineError> {
        let path = Self::require(self.analysis_dir().join(format!("{call_id}.summary.json")))?;
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn focus_bundle(&self, call_id: &str) -> Result<FocusBundle, PipelineError> {
        let path = Self::require(
            self.analysis_dir()
                .join(format!("{call_id}.focus_bundle.json")),
        )?;
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        Ok(FocusBundle::from_json(&text)?)
    }

    // ---- features -----------------------------------------------------

    fn read_sequence(path: PathBuf) -> Result<Array2<f64>, PipelineError> {
        let m = read_embedding_file(&Self::require(path)?)?;
        valid_rows(&m)
    }

    fn read_vector(path: PathBuf) -> Result<Array1<f64>, PipelineError> {
        let m = read_embedding_file(&Self::require(path)?)?;
        let e = TextEmbedding::from_matrix(&m)?;
        Ok(e.as_slice().iter().map(|&v| v as f64).collect())
    }

    pub fn features(&self, call: &EccCall) -> Result<CallFeatures, PipelineError> {
        let (emb, ana) = (self.embeddings_dir(), self.analysis_dir());
        let id = &call.call_id;
        Ok(CallFeatures {
            call_id: id.clone(),
            date: call.call_date,
            audio: Self::read_sequence(emb.join(&call.audio_embedding_ref))?,
            text: Self::read_sequence(emb.join(&call.sentence_embedding_ref))?,
            summary: Self::read_vector(ana.join(format!("{id}.ts.ecce")))?,
            focus: Self::read_vector(ana.join(format!("{id}.tf.ecce")))?,
            overall: Self::read_vector(ana.join(format!("{id}.eos.ecce")))?,
            chunks: Self::read_vector(ana.join(format!("{id}.ecs.ecce")))?,
        })
    }

    /// Features of the train and test calls, each in date order.
    pub fn split_features(&self) -> Result<(Vec<CallFeatures>, Vec<CallFeatures>), PipelineError> {
        let calls = self.calls()?;
        let split = self.split()?;
        let by_id: BTreeMap<&str, &EccCall> =
            calls.iter().map(|c| (c.call_id.as_str(), c)).collect();
        let load = |ids: &[String]| {
            ids.iter()
                .map(|id| {
                    let call = by_id
                        .get(id.as_str())
                        .ok_or_else(|| PipelineError::Missing(format!("call {id} in corpus")))?;
                    self.features(call)
                })
                .collect::<Result<Vec<_>, _>>()
        };
        Ok((load(&split.train_ids)?, load(&split.test_ids)?))
    }

    // ---- training and evaluation --------------------------------------

    fn models_dir(&self) -> PathBuf {
        self.workdir().join("models")
    }

    /// Grid search per horizon; writes a checkpoint and history per horizon.
    pub fn train(&self) -> Result<Vec<Selection>, PipelineError> {
        let (train, _) = self.split_features()?;
        let labels = self.labels()?;
        let refs: Vec<&CallFeatures> = train.iter().collect();
        let model_cfg = self.config.model.headline();
        let outcomes = train_per_tau(
            &model_cfg,
            &refs,
            &labels,
            &self.config.train_config(),
            &CallFeatures::headline_input,
        )?;
        let dir = self.dir("models")?;
        let mut selections = Vec::new();
        for (tau, out) in outcomes {
            write_checkpoint(
                &dir.join(format!("tau{tau}.eccm")),
                &out.model.config,
                &out.model.params,
            )?;
            write_history(&dir.join(format!("tau{tau}.history.csv")), &out.history)?;
            selections.push(Selection {
                tau,
                batch_size: out.batch_size,
                learning_rate: out.learning_rate,
                selected_on_train: out.selected_on_train,
                failed_cells: out
                    .cells
                    .iter()
                    .filter_map(|c| {
                        c.error
                            .as_ref()
                            .map(|e| format!("batch={} lr={}: {e}", c.batch_size, c.learning_rate))
                    })
                    .collect(),
            });
        }
        let path = dir.join("selection.json");
        write_json(
            &path,
            &serde_json::to_string_pretty(&selections).expect("selection serializes"),
        )?;
        Ok(selections)
    }

    pub fn load_models(&self) -> Result<BTreeMap<u32, TrainedModel>, PipelineError> {
        REPORT_TAUS
            .iter()
            .map(|&tau| {
                let path = Self::require(self.models_dir().join(format!("tau{tau}.eccm")))?;
                let (config, params) = read_checkpoint(&path)?;
                Ok((
                    tau,
                    TrainedModel {
                        config,
                        params,
                        target_tau: tau,
                    },
                ))
            })
            .collect()
    }

    /// Test-split MSE of the saved models; writes `results.csv` and
    /// `results.txt`.
    pub fn eval(&self) -> Result<ResultTable, PipelineError> {
        let (_, test) = self.split_features()?;
        let labels = self.labels()?;
        let models = self.load_models()?;
        let refs: Vec<&CallFeatures> = test.iter().collect();
        let row = evaluate(
            HEADLINE_ROW,
            &models,
            &refs,
            &labels,
            &CallFeatures::headline_input,
        )?;
        let table = ResultTable { rows: vec![row] };
        self.write_table(&table, "results")?;
        Ok(table)
    }

    /// The seven feature combinations; writes `ablation.csv` and
    /// `ablation.txt`.
    pub fn ablate(&self) -> Result<AblationReport, PipelineError> {
        let (train, test) = self.split_features()?;
        let labels = self.labels()?;
        let train_refs: Vec<&CallFeatures> = train.iter().collect();
        let test_refs: Vec<&CallFeatures> = test.iter().collect();
        let report = run_ablation(
            &self.config.model.headline(),
            &train_refs,
            &test_refs,
            &labels,
            &AblationConfig::presets(),
            &self.config.train_config(),
        );
        self.write_table(&report.table, "ablation")?;
        Ok(report)
    }

    fn write_table(&self, table: &ResultTable, stem: &str) -> Result<(), PipelineError> {
        let dir = self.workdir();
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        let csv_path = dir.join(format!("{stem}.csv"));
        fs::write(&csv_path, table.to_csv_string()).map_err(io(&csv_path))?;
        let txt_path = dir.join(format!("{stem}.txt"));
        fs::write(&txt_path, table.render()).map_err(io(&txt_path))
    }

    /// Every step in order with the configured provider and client.
    pub fn run_all(&self) -> Result<ResultTable, PipelineError> {
        self.ingest()?;
        self.label()?;
        let provider = self.default_provider()?;
        self.embed(provider.as_ref())?;
        let client = self.client()?;
        self.analyze(client.as_ref(), provider.as_ref())?;
        self.train()?;
        self.eval()
    }
}

fn write_json(path: &Path, body: &str) -> Result<(), PipelineError> {
    fs::write(path, format!("{body}\n")).map_err(io(path))
}

/// Valid rows of a padded matrix as f64.
pub fn valid_rows(m: &EmbeddingMatrix) -> Result<Array2<f64>, PipelineError> {
    let n = m.valid_rows();
    Array2::from_shape_vec(
        (n, m.cols()),
        m.iter_valid().flatten().map(|&v| v as f64).collect(),
    )
    .map_err(|e| PipelineError::Config(e.to_string()))
}

/// Summary of one embedding file for `inspect`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingStats {
    pub version: u16,
    pub rows: usize,
    pub cols: usize,
    pub valid_rows: usize,
    pub file_bytes: usize,
    pub min: f32,
    pub max: f32,
    pub mean: f64,
    pub mean_row_norm: f64,
}

pub fn inspect_embedding(path: &Path) -> Result<EmbeddingStats, PipelineError> {
    let bytes = fs::read(path).map_err(io(path))?;
    let header = crate::embedding::decode_header(&bytes)?;
    let m = crate::embedding::decode(&bytes)?;
    let values: Vec<f32> = m.iter_valid().flatten().copied().collect();
    let norms: Vec<f64> = m
        .iter_valid()
        .map(|r| {
            r.iter()
                .map(|&v| (v as f64) * (v as f64))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mean_of = |xs: &[f64]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    let as_f64: Vec<f64> = values.iter().map(|&v| v as f64).collect();
    Ok(EmbeddingStats {
        version: header.version,
        rows: m.rows(),
        cols: m.cols(),
        valid_rows: m.valid_rows(),
        file_bytes: bytes.len(),
        min: values.iter().copied().fold(f32::INFINITY, f32::min),
        max: values.iter().copied().fold(f32::NEG_INFINITY, f32::max),
        mean: mean_of(&as_f64),
        mean_row_norm: mean_of(&norms),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[paths]
transcripts = "t.jsonl"
prices = "p.csv"
"#;

    #[test]
    fn defaults_follow_the_standard_setup() {
        let c = PipelineConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.paths.workdir, PathBuf::from("out"));
        assert_eq!(c.provider.kind, ProviderKind::Stub);
        assert_eq!(c.llm.kind, LlmKind::Mock);
        assert_eq!(c.chunking.max_chars, 4000);
        assert_eq!(c.chunking.overlap_chars, 200);
        assert_eq!(c.retrieval.top_k, 4);
        assert_eq!(c.train.train_ratio, 0.8);
        assert_eq!(c.model.headline(), ModelConfig::headline());
        assert_eq!(c.train_config().batch_sizes, [2, 4, 8, 16]);
    }

    #[test]
    fn size_overrides_apply_to_both_encoders() {
        let c = PipelineConfig::from_toml(&format!(
            "{MINIMAL}\n[model]\nnum_blocks = 1\nffn_hidden = 32\n"
        ))
        .unwrap();
        let m = c.model.headline();
        assert_eq!((m.audio.num_blocks, m.text.num_blocks), (1, 1));
        assert_eq!((m.audio.ffn_hidden, m.text.ffn_hidden), (32, 32));
        assert_eq!(m.audio.num_heads, 8);
    }

    #[test]
    fn invalid_configs_are_usage_errors() {
        for extra in [
            "[chunking]\nmax_chars = 10\noverlap_chars = 10\n",
            "[model]\nnum_heads = 7\n",
            "[train]\nbatch_sizes = []\n",
            "[bogus]\nx = 1\n",
        ] {
            let err = PipelineConfig::from_toml(&format!("{MINIMAL}\n{extra}")).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{extra}");
        }
    }
}
