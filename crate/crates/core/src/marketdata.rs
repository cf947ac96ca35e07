//! Price ingestion and log-return panels.
//!
//! Input is a wide CSV of daily prices (`date,<id1>,...,<idN>`). Prices are
//! converted to log returns and one column is designated the hedge target.
//! Missing or non-positive prices are hard errors: silently imputing values
//! would corrupt every covariance estimate downstream. Log returns are the
//! only return convention in this crate. Dates are validated as ISO-8601 on
//! ingest and treated as opaque ordered labels afterwards.

use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use crate::error::{HedgeError, Result};

/// Aligned panel of strictly positive prices, rows sorted by date ascending.
#[derive(Debug, Clone)]
pub struct PricePanel {
    pub dates: Vec<String>,
    pub columns: Vec<String>,
    /// rows = dates ascending, cols = instruments
    pub prices: DMatrix<f64>,
}

/// Panel of log returns with one designated target series.
#[derive(Debug, Clone)]
pub struct ReturnPanel {
    pub dates: Vec<String>,
    pub target_name: String,
    pub y: DVector<f64>,
    /// k x N instrument log returns
    pub x: DMatrix<f64>,
    pub instrument_names: Vec<String>,
}

impl PricePanel {
    /// Validates the panel invariants: ascending unique dates, positive
    /// prices, at least two rows.
    pub fn new(dates: Vec<String>, columns: Vec<String>, prices: DMatrix<f64>) -> Result<Self> {
        if dates.len() < 2 {
            return Err(HedgeError::FewerThanTwoRows);
        }
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(HedgeError::DuplicateDate {
                    date: w[1].clone(),
                });
            }
        }
        for r in 0..prices.nrows() {
            for c in 0..prices.ncols() {
                let v = prices[(r, c)];
                if !(v > 0.0) || !v.is_finite() {
                    return Err(HedgeError::NonPositivePrice {
                        row: dates[r].clone(),
                        column: columns[c].clone(),
                        value: v,
                    });
                }
            }
        }
        Ok(Self {
            dates,
            columns,
            prices,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }
}

impl ReturnPanel {
    /// Validates lengths, finiteness and that the target is not duplicated
    /// among the instruments.
    pub fn new(
        dates: Vec<String>,
        target_name: String,
        y: DVector<f64>,
        x: DMatrix<f64>,
        instrument_names: Vec<String>,
    ) -> Result<Self> {
        if x.ncols() == 0 {
            return Err(HedgeError::ZeroInstruments);
        }
        if y.len() != x.nrows() || y.len() != dates.len() {
            return Err(HedgeError::LengthMismatch {
                left: y.len(),
                right: x.nrows(),
            });
        }
        if instrument_names.len() != x.ncols() {
            return Err(HedgeError::LengthMismatch {
                left: instrument_names.len(),
                right: x.ncols(),
            });
        }
        if instrument_names.iter().any(|n| *n == target_name) {
            return Err(HedgeError::UnknownTarget {
                name: target_name.clone(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
            return Err(HedgeError::MalformedCsv {
                line: 0,
                message: "non-finite return".into(),
            });
        }
        Ok(Self {
            dates,
            target_name,
            y,
            x,
            instrument_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_instruments(&self) -> usize {
        self.x.ncols()
    }

    /// Target and instrument returns side by side (`[y | x]`), the joint
    /// matrix used by decay calibration.
    pub fn joint_matrix(&self) -> DMatrix<f64> {
        let k = self.n_rows();
        let n = self.n_instruments();
        DMatrix::from_fn(k, n + 1, |r, c| {
            if c == 0 {
                self.y[r]
            } else {
                self.x[(r, c - 1)]
            }
        })
    }
}

fn parse_iso_date(s: &str, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| HedgeError::MalformedCsv {
        line,
        message: format!("date `{s}` is not ISO-8601 (YYYY-MM-DD)"),
    })
}

/// Loads a wide price CSV. Rows are sorted ascending by date; any missing,
/// unparseable or non-positive price aborts the load.
pub fn load_price_csv<P: AsRef<Path>>(path: P) -> Result<PricePanel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path.as_ref())
        .map_err(|e| HedgeError::MalformedCsv {
            line: 0,
            message: e.to_string(),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| HedgeError::MalformedCsv {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.len() < 2 || &headers[0] != "date" {
        return Err(HedgeError::MalformedCsv {
            line: 1,
            message: "header must be `date,<id1>,...,<idN>`".into(),
        });
    }
    let columns: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
    for (i, c) in columns.iter().enumerate() {
        if columns[..i].contains(c) {
            return Err(HedgeError::MalformedCsv {
                line: 1,
                message: format!("duplicate column identifier `{c}`"),
            });
        }
    }

    let n = columns.len();
    let mut rows: Vec<(NaiveDate, String, Vec<f64>)> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // 1-based, after header
        let record = record.map_err(|e| HedgeError::MalformedCsv {
            line,
            message: e.to_string(),
        })?;
        if record.len() != n + 1 {
            return Err(HedgeError::MalformedCsv {
                line,
                message: format!("expected {} fields, got {}", n + 1, record.len()),
            });
        }
        let date_str = record[0].to_string();
        let date = parse_iso_date(&date_str, line)?;
        let mut vals = Vec::with_capacity(n);
        for (j, field) in record.iter().skip(1).enumerate() {
            let v: f64 = field.parse().map_err(|_| HedgeError::MalformedCsv {
                line,
                message: format!("missing or unparseable price `{field}` in column {}", columns[j]),
            })?;
            if !v.is_finite() {
                return Err(HedgeError::MalformedCsv {
                    line,
                    message: format!("non-finite price in column {}", columns[j]),
                });
            }
            if v <= 0.0 {
                return Err(HedgeError::NonPositivePrice {
                    row: date_str.clone(),
                    column: columns[j].clone(),
                    value: v,
                });
            }
            vals.push(v);
        }
        rows.push((date, date_str, vals));
    }

    if rows.len() < 2 {
        return Err(HedgeError::FewerThanTwoRows);
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(HedgeError::DuplicateDate {
                date: w[1].1.clone(),
            });
        }
    }

    let k = rows.len();
    let prices = DMatrix::from_fn(k, n, |r, c| rows[r].2[c]);
    let dates = rows.into_iter().map(|(_, s, _)| s).collect();
    PricePanel::new(dates, columns, prices)
}

/// Converts prices to log returns, extracting `target` into `y`.
///
/// Entry `(t, j)` is `ln(price[t+1, j] / price[t, j])`; the output has one
/// fewer row than the input and is dated by the later observation.
pub fn to_returns(panel: &PricePanel, target: &str) -> Result<ReturnPanel> {
    let Some(target_idx) = panel.columns.iter().position(|c| c == target) else {
        return Err(HedgeError::UnknownTarget {
            name: target.to_string(),
        });
    };
    if panel.columns.len() < 2 {
        return Err(HedgeError::DegeneratePanel);
    }

    let k = panel.n_rows() - 1;
    let n = panel.columns.len() - 1;
    let mut y = DVector::zeros(k);
    let mut x = DMatrix::zeros(k, n);
    let mut instrument_names = Vec::with_capacity(n);
    for (c, name) in panel.columns.iter().enumerate() {
        if c != target_idx {
            instrument_names.push(name.clone());
        }
    }
    for t in 0..k {
        let mut xi = 0;
        for c in 0..panel.columns.len() {
            let r = (panel.prices[(t + 1, c)] / panel.prices[(t, c)]).ln();
            if c == target_idx {
                y[t] = r;
            } else {
                x[(t, xi)] = r;
                xi += 1;
            }
        }
    }
    let dates = panel.dates[1..].to_vec();
    ReturnPanel::new(dates, target.to_string(), y, x, instrument_names)
}
