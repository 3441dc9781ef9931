//! Daily returns, n-day log-volatility labels and the MSE metric.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{EccCall, PriceSeries};

/// Label horizons, in trading days.
pub const DEFAULT_TAUS: [u32; 4] = [3, 7, 15, 30];

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LabelError {
    #[error("{ticker}: need at least 2 prices to form a return, got {len}")]
    TooFewPrices { ticker: String, len: usize },
    #[error("tau must be at least 1")]
    BadTau,
    #[error("{ticker}: anchor {anchor} is not a trading date in the return series")]
    UnknownAnchor { ticker: String, anchor: NaiveDate },
    #[error("{ticker}: {needed} returns needed ending at {anchor}, only {available} available")]
    InsufficientHistory {
        ticker: String,
        anchor: NaiveDate,
        needed: usize,
        available: usize,
    },
    #[error("{ticker}: no trading date after {call_date}")]
    NoAnchor {
        ticker: String,
        call_date: NaiveDate,
    },
    #[error("{ticker}: all returns in the window ending {anchor} are identical")]
    ZeroVolatility { ticker: String, anchor: NaiveDate },
    #[error("no price series for ticker {0}")]
    MissingTicker(String),
    #[error("length mismatch: {0} predictions vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("labels csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolatilityLabel {
    pub call_id: String,
    pub tau: u32,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyReturn {
    pub date: NaiveDate,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub ticker: String,
    pub returns: Vec<DailyReturn>,
}

/// Simple returns `(p_i - p_{i-1}) / p_{i-1}`, dated at day `i`.
pub fn compute_returns(series: &PriceSeries) -> Result<ReturnSeries, LabelError> {
    let obs = &series.observations;
    if obs.len() < 2 {
        return Err(LabelError::TooFewPrices {
            ticker: series.ticker.clone(),
            len: obs.len(),
        });
    }
    let returns = obs
        .windows(2)
        .map(|w| DailyReturn {
            date: w[1].date,
            r: (w[1].adj_close - w[0].adj_close) / w[0].adj_close,
        })
        .collect();
    Ok(ReturnSeries {
        ticker: series.ticker.clone(),
        returns,
    })
}

/// `ln(sqrt(sum_{i=0..tau} (r_{d-i} - mean)^2 / tau))` over the `tau + 1`
/// returns ending at `window`'s last element.
pub fn log_volatility(window: &[f64]) -> Option<f64> {
    let tau = window.len().checked_sub(1).filter(|&t| t > 0)?;
    let mean = window.iter().sum::<f64>() / window.len() as f64;
    let ss: f64 = window.iter().map(|r| (r - mean) * (r - mean)).sum();
    if ss == 0.0 {
        return None;
    }
    Some(0.5 * (ss / tau as f64).ln())
}

/// n-day log-volatility for the window `[d - tau, d]` with `d = anchor`.
pub fn compute_volatility(
    returns: &ReturnSeries,
    anchor: NaiveDate,
    tau: u32,
) -> Result<f64, LabelError> {
    if tau < 1 {
        return Err(LabelError::BadTau);
    }
    let pos = returns
        .returns
        .binary_search_by(|r| r.date.cmp(&anchor))
        .map_err(|_| LabelError::UnknownAnchor {
            ticker: returns.ticker.clone(),
            anchor,
        })?;
    let needed = tau as usize + 1;
    if pos + 1 < needed {
        return Err(LabelError::InsufficientHistory {
            ticker: returns.ticker.clone(),
            anchor,
            needed,
            available: pos + 1,
        });
    }
    let window: Vec<f64> = returns.returns[pos + 1 - needed..=pos]
        .iter()
        .map(|r| r.r)
        .collect();
    log_volatility(&window).ok_or_else(|| LabelError::ZeroVolatility {
        ticker: returns.ticker.clone(),
        anchor,
    })
}

/// First trading date strictly after `call_date`.
pub fn anchor_date(series: &PriceSeries, call_date: NaiveDate) -> Option<NaiveDate> {
    let idx = series.observations.partition_point(|o| o.date <= call_date);
    series.observations.get(idx).map(|o| o.date)
}

/// A call that could not be labelled for one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelIssue {
    pub call_id: String,
    pub tau: u32,
    pub error: LabelError,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelReport {
    pub labels: Vec<VolatilityLabel>,
    pub issues: Vec<LabelIssue>,
}

/// One label per `(call, tau)`. Calls whose window cannot be formed are
/// collected in `issues`; a missing ticker is a hard error.
pub fn build_labels(
    calls: &[EccCall],
    prices: &BTreeMap<String, PriceSeries>,
    taus: &[u32],
) -> Result<LabelReport, LabelError> {
    let mut returns_cache: BTreeMap<&str, ReturnSeries> = BTreeMap::new();
    let mut report = LabelReport::default();
    for call in calls {
        let series = prices
            .get(&call.ticker)
            .ok_or_else(|| LabelError::MissingTicker(call.ticker.clone()))?;
        if !returns_cache.contains_key(call.ticker.as_str()) {
            match compute_returns(series) {
                Ok(r) => {
                    returns_cache.insert(call.ticker.as_str(), r);
                }
                Err(e) => {
                    for &tau in taus {
                        report.issues.push(LabelIssue {
                            call_id: call.call_id.clone(),
                            tau,
                            error: e.clone(),
                        });
                    }
                    continue;
                }
            }
        }
        let returns = &returns_cache[call.ticker.as_str()];
        let Some(anchor) = anchor_date(series, call.call_date) else {
            for &tau in taus {
                report.issues.push(LabelIssue {
                    call_id: call.call_id.clone(),
                    tau,
                    error: LabelError::NoAnchor {
                        ticker: call.ticker.clone(),
                        call_date: call.call_date,
                    },
                });
            }
            continue;
        };
        for &tau in taus {
            match compute_volatility(returns, anchor, tau) {
                Ok(value) => report.labels.push(VolatilityLabel {
                    call_id: call.call_id.clone(),
                    tau,
                    value,
                }),
                Err(error) => report.issues.push(LabelIssue {
                    call_id: call.call_id.clone(),
                    tau,
                    error,
                }),
            }
        }
    }
    Ok(report)
}

/// `sum (y_i - yhat_i)^2 / n`.
pub fn mse(predicted: &[f64], actual: &[f64]) -> Result<f64, LabelError> {
    if predicted.len() != actual.len() {
        return Err(LabelError::LengthMismatch(predicted.len(), actual.len()));
    }
    if predicted.is_empty() {
        return Err(LabelError::Empty);
    }
    let ss: f64 = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (a - p) * (a - p))
        .sum();
    Ok(ss / predicted.len() as f64)
}

#[derive(Serialize, Deserialize)]
struct LabelRow {
    call_id: String,
    tau: u32,
    volatility: f64,
}

/// `call_id,tau,volatility`
pub fn write_labels_csv<W: Write>(labels: &[VolatilityLabel], out: W) -> Result<(), LabelError> {
    let mut w = csv::Writer::from_writer(out);
    for l in labels {
        w.serialize(LabelRow {
            call_id: l.call_id.clone(),
            tau: l.tau,
            volatility: l.value,
        })
        .map_err(|e| LabelError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| LabelError::Csv(e.to_string()))
}

pub fn read_labels_csv<R: Read>(input: R) -> Result<Vec<VolatilityLabel>, LabelError> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize::<LabelRow>()
        .map(|row| {
            row.map(|row| VolatilityLabel {
                call_id: row.call_id,
                tau: row.tau,
                value: row.volatility,
            })
            .map_err(|e| LabelError::Csv(e.to_string()))
        })
        .collect()
}
