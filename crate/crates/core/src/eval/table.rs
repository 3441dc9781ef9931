use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Horizons reported in every row, in column order.
pub const REPORT_TAUS: [u32; 4] = [3, 7, 15, 30];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub config: String,
    pub mse_mean: f64,
    pub mse_3: f64,
    pub mse_7: f64,
    pub mse_15: f64,
    pub mse_30: f64,
}

impl ResultRow {
    /// Row whose mean is computed from the four horizons.
    pub fn new(config: impl Into<String>, per_tau: [f64; 4]) -> Self {
        let [mse_3, mse_7, mse_15, mse_30] = per_tau;
        Self {
            config: config.into(),
            mse_mean: per_tau.iter().sum::<f64>() / 4.0,
            mse_3,
            mse_7,
            mse_15,
            mse_30,
        }
    }

    pub fn per_tau(&self) -> [f64; 4] {
        [self.mse_3, self.mse_7, self.mse_15, self.mse_30]
    }

    /// Stored mean agrees with the horizons to 1e-9 and every entry is finite.
    pub fn is_consistent(&self) -> bool {
        let mean = self.per_tau().iter().sum::<f64>() / 4.0;
        self.per_tau().iter().all(|v| v.is_finite()) && (mean - self.mse_mean).abs() <= 1e-9
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r).map_err(|e| EvalError::Csv(e.to_string()))?;
        }
        w.flush().map_err(|e| EvalError::Csv(e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, EvalError> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r
            .headers()
            .map_err(|e| EvalError::Csv(e.to_string()))?
            .clone();
        let want = ["config", "mse_mean", "mse_3", "mse_7", "mse_15", "mse_30"];
        if headers.iter().ne(want) {
            return Err(EvalError::Csv(format!("unexpected header {headers:?}")));
        }
        let rows = r
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(|e| EvalError::Csv(e.to_string()))?;
        Ok(Self { rows })
    }

    /// Plain-text table, three decimals, one row per configuration.
    pub fn render(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.config.chars().count())
            .chain(["Model".len()])
            .max()
            .unwrap_or(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}",
            "Model", "MSE_mean", "MSE_3", "MSE_7", "MSE_15", "MSE_30"
        );
        let _ = writeln!(out, "{}", "-".repeat(width + 5 * 10));
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>8.3}  {:>8.3}  {:>8.3}  {:>8.3}  {:>8.3}",
                r.config, r.mse_mean, r.mse_3, r.mse_7, r.mse_15, r.mse_30
            );
        }
        out
    }
}
