//! Return panels: CSV loading, validation and serial demeaning.
//!
//! A panel holds `N` assets (rows) by `M + 1` observations (columns), oldest
//! observation first. Missing values are rejected outright.

use std::collections::HashSet;
use std::io::Read;

use nalgebra::DMatrix;

use crate::error::{CovError, Result};

/// Tokens treated as a missing observation.
const MISSING_TOKENS: &[&str] = &["", "na", "n/a", "nan", "null", "none", "#n/a"];

/// Layout of a panel CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PanelFormat {
    /// When true the first row is a header and the first column holds asset
    /// ids. When false every cell is numeric and ids are synthesized as
    /// `A0001`, `A0002`, ...
    pub has_header: bool,
}

impl Default for PanelFormat {
    fn default() -> Self {
        Self { has_header: true }
    }
}

/// Validated `N x (M+1)` table of asset returns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    returns: DMatrix<f64>,
    asset_ids: Vec<String>,
}

impl ReturnsPanel {
    pub fn new(returns: DMatrix<f64>, asset_ids: Vec<String>) -> Result<Self> {
        let (n, t) = returns.shape();
        if asset_ids.len() != n {
            return Err(CovError::DimensionMismatch {
                context: "asset ids",
                expected: n,
                actual: asset_ids.len(),
            });
        }
        if n < 2 {
            return Err(CovError::TooFewAssets(n));
        }
        if t < 2 {
            return Err(CovError::TooFewObservations(t));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &asset_ids {
            if !seen.insert(id.as_str()) {
                return Err(CovError::DuplicateAssetId(id.clone()));
            }
        }
        for i in 0..n {
            for s in 0..t {
                if !returns[(i, s)].is_finite() {
                    return Err(CovError::MissingValue {
                        asset: asset_ids[i].clone(),
                        observation: s,
                    });
                }
            }
        }
        Ok(Self { returns, asset_ids })
    }

    /// Builds a panel with synthesized ids `A0001`, `A0002`, ...
    pub fn with_synthetic_ids(returns: DMatrix<f64>) -> Result<Self> {
        let ids = synthetic_ids(returns.nrows());
        Self::new(returns, ids)
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn n_assets(&self) -> usize {
        self.returns.nrows()
    }

    /// Number of observations, `M + 1`.
    pub fn n_obs(&self) -> usize {
        self.returns.ncols()
    }

    /// Contiguous block of observations `[start, start + len)`.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.n_obs() {
            return Err(CovError::DimensionMismatch {
                context: "observation window",
                expected: self.n_obs(),
                actual: start + len,
            });
        }
        let block = self.returns.columns(start, len).into_owned();
        Self::new(block, self.asset_ids.clone())
    }

    /// Reorders assets: row `i` of the result is row `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let n = self.n_assets();
        if order.len() != n {
            return Err(CovError::DimensionMismatch {
                context: "permutation",
                expected: n,
                actual: order.len(),
            });
        }
        let returns = DMatrix::from_fn(n, self.n_obs(), |i, s| self.returns[(order[i], s)]);
        let ids = order.iter().map(|&i| self.asset_ids[i].clone()).collect();
        Self::new(returns, ids)
    }
}

/// Serially demeaned returns `X_is = R_is - mean_s(R_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemeanedPanel {
    x: DMatrix<f64>,
    means: Vec<f64>,
}

impl DemeanedPanel {
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// The per-asset time-series means that were subtracted.
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn n_assets(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_obs(&self) -> usize {
        self.x.ncols()
    }
}

pub fn synthetic_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("A{i:04}")).collect()
}

/// Reads a panel from CSV text.
pub fn load_panel<R: Read>(source: R, format: PanelFormat) -> Result<ReturnsPanel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let mut ids = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut width: Option<usize> = None;
    let mut header_seen = !format.has_header;

    for (idx, record) in reader.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| CovError::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let expected = width.get_or_insert(record.len());
        if record.len() != *expected {
            return Err(CovError::Parse {
                line,
                message: format!("expected {} fields, found {}", expected, record.len()),
            });
        }
        if !header_seen {
            header_seen = true;
            continue;
        }

        let (id, cells) = if format.has_header {
            (record[0].to_string(), 1)
        } else {
            (format!("A{:04}", ids.len() + 1), 0)
        };
        for (s, cell) in record.iter().skip(cells).enumerate() {
            values.push(parse_cell(cell, &id, s, line)?);
        }
        ids.push(id);
    }

    let n = ids.len();
    let t = match (width, format.has_header) {
        (Some(w), true) => w.saturating_sub(1),
        (Some(w), false) => w,
        (None, _) => 0,
    };
    if n < 2 {
        return Err(CovError::TooFewAssets(n));
    }
    if t < 2 {
        return Err(CovError::TooFewObservations(t));
    }
    ReturnsPanel::new(DMatrix::from_row_slice(n, t, &values), ids)
}

fn parse_cell(cell: &str, asset: &str, observation: usize, line: usize) -> Result<f64> {
    if MISSING_TOKENS.contains(&cell.to_ascii_lowercase().as_str()) {
        return Err(CovError::MissingValue {
            asset: asset.to_string(),
            observation,
        });
    }
    let v: f64 = cell.parse().map_err(|_| CovError::Parse {
        line,
        message: format!("cell '{cell}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(CovError::Parse {
            line,
            message: format!("cell '{cell}' is not finite"),
        });
    }
    Ok(v)
}

/// Subtracts each asset's time-series mean.
pub fn demean(panel: &ReturnsPanel) -> DemeanedPanel {
    let r = panel.returns();
    let (n, t) = r.shape();
    let mut x = r.clone();
    let mut means = Vec::with_capacity(n);
    for i in 0..n {
        let row = r.row(i);
        let first = row[0];
        // Constant rows come out exactly zero; the generic path can leave
        // rounding residue in the mean.
        let mean = if row.iter().all(|&v| v == first) {
            first
        } else {
            let mean = row.sum() / t as f64;
            // one refinement pass on the residual sum
            mean + row.iter().map(|&v| v - mean).sum::<f64>() / t as f64
        };
        for s in 0..t {
            x[(i, s)] -= mean;
        }
        means.push(mean);
    }
    DemeanedPanel { x, means }
}
