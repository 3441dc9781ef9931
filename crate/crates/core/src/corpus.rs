//! Transcript, price and split handling for the earnings-call corpus.
//!
//! Transcripts arrive as JSON lines, one sentence per record, and prices as a
//! `ticker,date,adj_close` CSV. Both loaders validate eagerly and report the
//! offending line so that bad rows never reach label construction.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: duplicate record for call `{call_id}` sentence_index {index}")]
    DuplicateSentence {
        line: usize,
        call_id: String,
        index: u64,
    },
    #[error("line {line}: call `{call_id}` has inconsistent {field}")]
    InconsistentCall {
        line: usize,
        call_id: String,
        field: &'static str,
    },
    #[error("line {line}: non-positive adj_close {value} for {ticker}")]
    NonPositivePrice {
        line: usize,
        ticker: String,
        value: f64,
    },
    #[error("line {line}: unparseable date `{value}`")]
    BadDate { line: usize, value: String },
    #[error("line {line}: date {date} for {ticker} is duplicated or out of order")]
    DateOrder {
        line: usize,
        ticker: String,
        date: NaiveDate,
    },
    #[error("split ratio {0} must lie strictly inside (0, 1)")]
    BadRatio(f64),
    #[error("cannot split an empty corpus")]
    EmptyCorpus,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub speaker: String,
    pub text: String,
}

/// One earnings call: the ordered transcript plus references to the
/// per-call embedding matrices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EccCall {
    pub call_id: String,
    pub ticker: String,
    pub call_date: NaiveDate,
    pub sentences: Vec<Sentence>,
    pub audio_embedding_ref: String,
    pub sentence_embedding_ref: String,
}

impl EccCall {
    /// Default embedding file names, relative to an embedding directory.
    pub fn default_refs(call_id: &str) -> (String, String) {
        (
            format!("{call_id}.audio.ecce"),
            format!("{call_id}.sentences.ecce"),
        )
    }

    /// Full transcript text with sentences separated by single spaces.
    pub fn transcript_text(&self) -> String {
        self.sentences
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Audio clip identifiers. Audio arrives pre-embedded, so a clip is named
    /// by its call and position.
    pub fn audio_clip_ids(&self) -> Vec<String> {
        (0..self.sentences.len())
            .map(|i| format!("{}/clip/{i}", self.call_id))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceObservation {
    pub date: NaiveDate,
    pub adj_close: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub ticker: String,
    pub observations: Vec<PriceObservation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// One line of `transcripts.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub call_id: String,
    pub ticker: String,
    pub date: String,
    pub sentence_index: u64,
    #[serde(default)]
    pub speaker: String,
    pub text: String,
}

fn parse_date(line: usize, value: &str) -> Result<NaiveDate, CorpusError> {
    NaiveDate::parse_from_str(value.trim(), "%Y-%m-%d").map_err(|_| CorpusError::BadDate {
        line,
        value: value.to_string(),
    })
}

fn parse_record(line_no: usize, line: &str) -> Result<TranscriptRecord, CorpusError> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
    let obj = value.as_object().ok_or_else(|| CorpusError::Malformed {
        line: line_no,
        message: "expected a JSON object".into(),
    })?;
    for field in ["call_id", "ticker", "date", "sentence_index", "text"] {
        if !obj.contains_key(field) {
            return Err(CorpusError::MissingField {
                line: line_no,
                field,
            });
        }
    }
    let record: TranscriptRecord =
        serde_json::from_value(value).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
    if record.text.is_empty() {
        return Err(CorpusError::Malformed {
            line: line_no,
            message: "text must be non-empty".into(),
        });
    }
    Ok(record)
}

/// Parse transcript records from any reader. Blank lines are skipped.
pub fn read_transcripts<R: BufRead>(reader: R) -> Result<Vec<EccCall>, CorpusError> {
    struct Pending {
        ticker: String,
        date: NaiveDate,
        first_line: usize,
        sentences: BTreeMap<u64, Sentence>,
    }
    let mut calls: HashMap<String, Pending> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_record(line_no, &line)?;
        let date = parse_date(line_no, &rec.date)?;
        let entry = calls.entry(rec.call_id.clone()).or_insert_with(|| Pending {
            ticker: rec.ticker.clone(),
            date,
            first_line: line_no,
            sentences: BTreeMap::new(),
        });
        if entry.ticker != rec.ticker {
            return Err(CorpusError::InconsistentCall {
                line: line_no,
                call_id: rec.call_id,
                field: "ticker",
            });
        }
        if entry.date != date {
            return Err(CorpusError::InconsistentCall {
                line: line_no,
                call_id: rec.call_id,
                field: "date",
            });
        }
        if entry.sentences.contains_key(&rec.sentence_index) {
            return Err(CorpusError::DuplicateSentence {
                line: line_no,
                call_id: rec.call_id,
                index: rec.sentence_index,
            });
        }
        entry.sentences.insert(
            rec.sentence_index,
            Sentence {
                speaker: rec.speaker,
                text: rec.text,
            },
        );
    }
    let mut out: Vec<(usize, EccCall)> = calls
        .into_iter()
        .map(|(call_id, p)| {
            let (audio, sent) = EccCall::default_refs(&call_id);
            (
                p.first_line,
                EccCall {
                    call_id,
                    ticker: p.ticker,
                    call_date: p.date,
                    sentences: p.sentences.into_values().collect(),
                    audio_embedding_ref: audio,
                    sentence_embedding_ref: sent,
                },
            )
        })
        .collect();
    out.sort_by(|(_, a), (_, b)| {
        a.call_date
            .cmp(&b.call_date)
            .then_with(|| a.call_id.cmp(&b.call_id))
    });
    Ok(out.into_iter().map(|(_, c)| c).collect())
}

/// Load `transcripts.jsonl`, grouping sentences into calls sorted by
/// `(call_date, call_id)`.
pub fn load_transcripts(path: &Path) -> Result<Vec<EccCall>, CorpusError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_transcripts(BufReader::new(file))
}

/// Write calls back out in the canonical record layout.
pub fn write_transcripts(calls: &[EccCall], path: &Path) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for call in calls {
        for (i, s) in call.sentences.iter().enumerate() {
            let rec = TranscriptRecord {
                call_id: call.call_id.clone(),
                ticker: call.ticker.clone(),
                date: call.call_date.format("%Y-%m-%d").to_string(),
                sentence_index: i as u64,
                speaker: s.speaker.clone(),
                text: s.text.clone(),
            };
            let line = serde_json::to_string(&rec).expect("record serializes");
            writeln!(w, "{line}").map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Serialize, Deserialize)]
struct PriceRow {
    ticker: String,
    date: String,
    adj_close: f64,
}

/// Parse a price CSV. Rows for one ticker may be interleaved with other
/// tickers but must appear in strictly increasing date order.
pub fn read_prices<R: std::io::Read>(
    reader: R,
) -> Result<BTreeMap<String, PriceSeries>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out: BTreeMap<String, PriceSeries> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<PriceRow>().enumerate() {
        // header is line 1
        let line = i + 2;
        let row = row.map_err(|e| CorpusError::Malformed {
            line,
            message: e.to_string(),
        })?;
        let date = parse_date(line, &row.date)?;
        if row.adj_close <= 0.0 || !row.adj_close.is_finite() {
            return Err(CorpusError::NonPositivePrice {
                line,
                ticker: row.ticker,
                value: row.adj_close,
            });
        }
        let series = out
            .entry(row.ticker.clone())
            .or_insert_with(|| PriceSeries {
                ticker: row.ticker.clone(),
                observations: Vec::new(),
            });
        if let Some(last) = series.observations.last() {
            if date <= last.date {
                return Err(CorpusError::DateOrder {
                    line,
                    ticker: row.ticker,
                    date,
                });
            }
        }
        series.observations.push(PriceObservation {
            date,
            adj_close: row.adj_close,
        });
    }
    Ok(out)
}

/// Write every series as `ticker,date,adj_close`, tickers in map order.
pub fn write_prices(
    prices: &BTreeMap<String, PriceSeries>,
    path: &Path,
) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for series in prices.values() {
        for o in &series.observations {
            w.serialize(PriceRow {
                ticker: series.ticker.clone(),
                date: o.date.format("%Y-%m-%d").to_string(),
                adj_close: o.adj_close,
            })
            .map_err(|e| CorpusError::Malformed {
                line: 0,
                message: e.to_string(),
            })?;
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn load_prices(path: &Path) -> Result<BTreeMap<String, PriceSeries>, CorpusError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_prices(BufReader::new(file))
}

/// Chronological split: calls are ordered by `(call_date, call_id)` and the
/// first `floor(ratio * n)` go to training.
pub fn temporal_split(calls: &[EccCall], ratio: f64) -> Result<DatasetSplit, CorpusError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CorpusError::BadRatio(ratio));
    }
    if calls.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut order: Vec<&EccCall> = calls.iter().collect();
    order.sort_by(|a, b| {
        a.call_date
            .cmp(&b.call_date)
            .then_with(|| a.call_id.cmp(&b.call_id))
    });
    let cut = (ratio * order.len() as f64).floor() as usize;
    let ids: Vec<String> = order.iter().map(|c| c.call_id.clone()).collect();
    let (train, test) = ids.split_at(cut);
    Ok(DatasetSplit {
        train_ids: train.to_vec(),
        test_ids: test.to_vec(),
    })
}
