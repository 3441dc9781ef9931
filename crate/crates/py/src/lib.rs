//! Python bindings: embedding files, labels, the temporal split, providers,
//! chunking, retrieval and the pipeline driver.

use std::path::PathBuf;

use chrono::NaiveDate;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use eccvol_core::corpus::{
    temporal_split as split_calls, EccCall, PriceObservation, PriceSeries, Sentence,
};
use eccvol_core::embedding::{self as emb, EmbeddingProvider};
use eccvol_core::eval::ResultRow;
use eccvol_core::focus::{retrieve, VectorIndex};
use eccvol_core::labels;
use eccvol_core::llm;
use eccvol_core::pipeline;

create_exception!(eccvol, EccvolError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    EccvolError::new_err(e.to_string())
}

/// Row-padded matrix with a validity mask, stored as `ECCE` files.
#[pyclass(
    name = "EmbeddingMatrix",
    module = "eccvol",
    frozen,
    skip_from_py_object
)]
#[derive(Clone)]
struct PyEmbeddingMatrix {
    inner: emb::EmbeddingMatrix,
}

#[pymethods]
impl PyEmbeddingMatrix {
    #[new]
    fn new(rows: usize, cols: usize, data: Vec<f32>, mask: Vec<bool>) -> PyResult<Self> {
        let inner = emb::EmbeddingMatrix::new(rows, cols, data, mask).map_err(err)?;
        Ok(Self { inner })
    }

    /// Stack vectors into a `capacity`-row matrix; extra rows are dropped.
    #[staticmethod]
    #[pyo3(signature = (vectors, capacity = emb::SEQ_CAPACITY))]
    fn padded(vectors: Vec<Vec<f32>>, capacity: usize) -> PyResult<Self> {
        let p = emb::pad_to_capacity(&vectors, capacity).map_err(err)?;
        Ok(Self { inner: p.matrix })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: emb::read_embedding_file(&path).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: emb::decode(data).map_err(err)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        emb::write_embedding_file(&self.inner, &path).map_err(err)
    }

    fn to_bytes(&self) -> Vec<u8> {
        emb::encode(&self.inner)
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.cols()
    }

    #[getter]
    fn mask(&self) -> Vec<bool> {
        self.inner.mask().to_vec()
    }

    #[getter]
    fn data(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    fn valid_rows(&self) -> usize {
        self.inner.valid_rows()
    }

    fn row(&self, r: usize) -> PyResult<Vec<f32>> {
        if r >= self.inner.rows() {
            return Err(PyValueError::new_err(format!("row {r} out of range")));
        }
        Ok(self.inner.row(r).to_vec())
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "EmbeddingMatrix(rows={}, cols={}, valid={})",
            self.inner.rows(),
            self.inner.cols(),
            self.inner.valid_rows()
        )
    }
}

/// Size in bytes of an `ECCE` file with the given shape.
#[pyfunction]
fn embedding_file_len(rows: usize, cols: usize) -> usize {
    emb::file_len(rows, cols)
}

fn parse_date(s: &str) -> PyResult<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| PyValueError::new_err(format!("{s}: {e}")))
}

/// n-day log-volatility from the `tau + 2` or more prices ending at the
/// anchor day (the last price).
#[pyfunction]
fn log_volatility(prices: Vec<f64>, tau: u32) -> PyResult<f64> {
    let start = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
    let series = PriceSeries {
        ticker: "_".into(),
        observations: prices
            .iter()
            .enumerate()
            .map(|(i, &adj_close)| PriceObservation {
                date: start + chrono::Days::new(i as u64),
                adj_close,
            })
            .collect(),
    };
    let returns = labels::compute_returns(&series).map_err(err)?;
    let anchor = returns.returns.last().expect("at least one return").date;
    labels::compute_volatility(&returns, anchor, tau).map_err(err)
}

/// Chronological split of `(call_id, "YYYY-MM-DD")` pairs.
#[pyfunction]
#[pyo3(signature = (calls, ratio = 0.8))]
fn temporal_split(
    calls: Vec<(String, String)>,
    ratio: f64,
) -> PyResult<(Vec<String>, Vec<String>)> {
    let calls = calls
        .into_iter()
        .map(|(id, d)| {
            Ok(EccCall {
                call_id: id,
                ticker: String::new(),
                call_date: parse_date(&d)?,
                sentences: vec![Sentence {
                    speaker: String::new(),
                    text: String::new(),
                }],
                audio_embedding_ref: String::new(),
                sentence_embedding_ref: String::new(),
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let s = split_calls(&calls, ratio).map_err(err)?;
    Ok((s.train_ids, s.test_ids))
}

/// Deterministic offline embeddings.
#[pyclass(name = "StubProvider", module = "eccvol", frozen)]
struct PyStubProvider {
    inner: emb::StubProvider,
}

/// Embeddings exported to a directory of `ECCE` files plus `index.jsonl`.
#[pyclass(name = "FileProvider", module = "eccvol", frozen)]
struct PyFileProvider {
    inner: emb::FileProvider,
}

macro_rules! provider_class {
    ($ty:ty, $ctor:item) => {
        #[pymethods]
        impl $ty {
            $ctor

            fn embed_audio_frames(&self, clips: Vec<String>) -> PyResult<Vec<Vec<f32>>> {
                self.inner.embed_audio_frames(&clips).map_err(err)
            }

            fn embed_sentences(&self, texts: Vec<String>) -> PyResult<Vec<Vec<f32>>> {
                self.inner.embed_sentences(&texts).map_err(err)
            }

            fn embed_text(&self, text: &str) -> PyResult<Vec<f32>> {
                Ok(self.inner.embed_text(text).map_err(err)?.as_slice().to_vec())
            }
        }
    };
}

provider_class!(
    PyStubProvider,
    #[new]
    #[pyo3(signature = (seed = 0))]
    fn new(seed: u64) -> Self {
        Self {
            inner: emb::StubProvider::new(seed),
        }
    }
);

provider_class!(
    PyFileProvider,
    #[new]
    fn open(dir: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: emb::FileProvider::open(&dir).map_err(err)?,
        })
    }
);

/// Hex SHA-256 key under which the file provider stores an input.
#[pyfunction]
fn content_key(input: &str) -> String {
    emb::content_key(input)
}

/// Overlapping chunks of `text`, snapped to sentence ends where possible.
#[pyfunction]
#[pyo3(signature = (text, max_chars = llm::DEFAULT_MAX_CHARS, overlap_chars = llm::DEFAULT_OVERLAP_CHARS))]
fn chunk_text(text: &str, max_chars: usize, overlap_chars: usize) -> PyResult<Vec<String>> {
    if max_chars <= overlap_chars {
        return Err(PyValueError::new_err("max_chars must exceed overlap_chars"));
    }
    Ok(llm::chunk_text(text, max_chars, overlap_chars)
        .into_iter()
        .map(|c| c.text)
        .collect())
}

/// Top-`k` `(index, cosine)` pairs, best first, ties to the lower index.
#[pyfunction]
fn top_k(vectors: Vec<Vec<f32>>, query: Vec<f32>, k: usize) -> PyResult<Vec<(usize, f64)>> {
    let index =
        VectorIndex::from_vectors(vectors.into_iter().enumerate().collect()).map_err(err)?;
    retrieve(&index, &query, k).map_err(err)
}

type Row = (String, f64, f64, f64, f64, f64);

fn rows(table: &[ResultRow]) -> Vec<Row> {
    table
        .iter()
        .map(|r| {
            (
                r.config.clone(),
                r.mse_mean,
                r.mse_3,
                r.mse_7,
                r.mse_15,
                r.mse_30,
            )
        })
        .collect()
}

/// The batch pipeline driven by a `config.toml`.
#[pyclass(name = "Pipeline", module = "eccvol", frozen)]
struct PyPipeline {
    inner: pipeline::Pipeline,
}

#[pymethods]
impl PyPipeline {
    #[new]
    fn new(config_path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: pipeline::Pipeline::load(&config_path).map_err(err)?,
        })
    }

    #[getter]
    fn workdir(&self) -> PathBuf {
        self.inner.workdir()
    }

    /// Returns `(n_train, n_test)`.
    fn ingest(&self, py: Python<'_>) -> PyResult<(usize, usize)> {
        let s = py.detach(|| self.inner.ingest()).map_err(err)?;
        Ok((s.train_ids.len(), s.test_ids.len()))
    }

    /// Returns `(labels_written, unlabelled_pairs)`.
    fn label(&self, py: Python<'_>) -> PyResult<(usize, usize)> {
        py.detach(|| self.inner.label()).map_err(err)
    }

    fn embed(&self, py: Python<'_>) -> PyResult<usize> {
        py.detach(|| {
            let p = self.inner.default_provider()?;
            self.inner.embed(p.as_ref())
        })
        .map_err(err)
    }

    fn analyze(&self, py: Python<'_>) -> PyResult<usize> {
        py.detach(|| {
            let p = self.inner.default_provider()?;
            let c = self.inner.client()?;
            self.inner.analyze(c.as_ref(), p.as_ref())
        })
        .map_err(err)
    }

    /// Chosen `(tau, batch_size, learning_rate)` per horizon.
    fn train(&self, py: Python<'_>) -> PyResult<Vec<(u32, usize, f64)>> {
        let sel = py.detach(|| self.inner.train()).map_err(err)?;
        Ok(sel
            .into_iter()
            .map(|s| (s.tau, s.batch_size, s.learning_rate))
            .collect())
    }

    /// Rows of `(config, mse_mean, mse_3, mse_7, mse_15, mse_30)`.
    fn eval(&self, py: Python<'_>) -> PyResult<Vec<Row>> {
        let t = py.detach(|| self.inner.eval()).map_err(err)?;
        Ok(rows(&t.rows))
    }

    fn ablate(&self, py: Python<'_>) -> PyResult<Vec<Row>> {
        let r = py.detach(|| self.inner.ablate()).map_err(err)?;
        Ok(rows(&r.table.rows))
    }

    fn run(&self, py: Python<'_>) -> PyResult<Vec<Row>> {
        let t = py.detach(|| self.inner.run_all()).map_err(err)?;
        Ok(rows(&t.rows))
    }
}

#[pymodule]
fn eccvol(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("EccvolError", m.py().get_type::<EccvolError>())?;
    m.add("SEQ_CAPACITY", emb::SEQ_CAPACITY)?;
    m.add("AUDIO_DIM", emb::AUDIO_DIM)?;
    m.add("SENTENCE_DIM", emb::SENTENCE_DIM)?;
    m.add("TEXT_DIM", emb::TEXT_DIM)?;
    m.add_class::<PyEmbeddingMatrix>()?;
    m.add_class::<PyStubProvider>()?;
    m.add_class::<PyFileProvider>()?;
    m.add_class::<PyPipeline>()?;
    m.add_function(wrap_pyfunction!(embedding_file_len, m)?)?;
    m.add_function(wrap_pyfunction!(log_volatility, m)?)?;
    m.add_function(wrap_pyfunction!(temporal_split, m)?)?;
    m.add_function(wrap_pyfunction!(content_key, m)?)?;
    m.add_function(wrap_pyfunction!(chunk_text, m)?)?;
    m.add_function(wrap_pyfunction!(top_k, m)?)?;
    Ok(())
}
