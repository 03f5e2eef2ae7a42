//! Serialization: dense matrix CSV and JSON documents for matrices, spectra
//! and factor models.

use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::{SampleCovariance, SpectralDecomposition};
use crate::error::{CovError, Result};
use crate::factor::FactorModel;
use crate::regularize::{ShrunkFactorModel, TruncatedPcModel};

/// Formats like C's `%.12g`, with negative zero printed as `0`.
pub fn format_g12(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    const DIGITS: i32 = 12;
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{v:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_fraction(mantissa), sign, exp.abs())
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Dense headerless CSV, 12 significant digits, one row per line.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|&v| format_g12(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn vector_to_csv(v: &DVector<f64>) -> String {
    v.iter().map(|&x| format_g12(x) + "\n").collect()
}

/// Reads a headerless dense numeric CSV.
pub fn read_matrix_csv<R: Read>(source: R) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| CovError::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(CovError::Parse {
                line,
                message: format!("expected {w} fields, found {}", record.len()),
            });
        }
        for cell in record.iter() {
            let v: f64 = cell.parse().map_err(|_| CovError::Parse {
                line,
                message: format!("cell '{cell}' is not a number"),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, width.unwrap_or(0), &values))
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// `{n, m?, data}` with `data` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub m: Option<usize>,
    pub data: Vec<f64>,
}

impl MatrixJson {
    pub fn from_matrix(c: &DMatrix<f64>) -> Self {
        Self {
            n: c.nrows(),
            m: None,
            data: row_major(c),
        }
    }

    pub fn from_scm(scm: &SampleCovariance) -> Self {
        Self {
            m: scm.n_obs_minus_one(),
            ..Self::from_matrix(scm.matrix())
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.n * self.n {
            return Err(CovError::DimensionMismatch {
                context: "matrix data length",
                expected: self.n * self.n,
                actual: self.data.len(),
            });
        }
        Ok(DMatrix::from_row_slice(self.n, self.n, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralJson {
    pub n: usize,
    pub f: usize,
    pub quasi_null_threshold: f64,
    pub eigenvalues: Vec<f64>,
    /// One principal component (length `n`) per eigenvalue.
    pub components: Vec<Vec<f64>>,
}

impl SpectralJson {
    pub fn from_spectral(sd: &SpectralDecomposition) -> Self {
        Self {
            n: sd.n_assets(),
            f: sd.n_positive(),
            quasi_null_threshold: sd.quasi_null_threshold(),
            eigenvalues: sd.eigenvalues().to_vec(),
            components: sd
                .components()
                .column_iter()
                .map(|c| c.iter().copied().collect())
                .collect(),
        }
    }
}

/// `{n, k, xi, omega, phi}` with `omega` (`n x k`) and `phi` (`k x k`) row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModelJson {
    pub n: usize,
    pub k: usize,
    pub xi: Vec<f64>,
    pub omega: Vec<f64>,
    pub phi: Vec<f64>,
}

impl FactorModelJson {
    pub fn from_model(model: &FactorModel) -> Self {
        Self {
            n: model.n_assets(),
            k: model.n_factors(),
            xi: model.specific_risk().iter().copied().collect(),
            omega: row_major(model.loadings()),
            phi: row_major(model.fcm()),
        }
    }

    pub fn to_model(&self) -> Result<FactorModel> {
        let (n, k) = (self.n, self.k);
        for (context, expected, actual) in [
            ("xi length", n, self.xi.len()),
            ("omega length", n * k, self.omega.len()),
            ("phi length", k * k, self.phi.len()),
        ] {
            if expected != actual {
                return Err(CovError::DimensionMismatch {
                    context,
                    expected,
                    actual,
                });
            }
        }
        FactorModel::new(
            DVector::from_column_slice(&self.xi),
            DMatrix::from_row_slice(n, k, &self.omega),
            DMatrix::from_row_slice(k, k, &self.phi),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrunkModelJson {
    #[serde(flatten)]
    pub model: FactorModelJson,
    pub q: f64,
    /// Number of leading factors taken from the target.
    pub k_target: usize,
}

impl ShrunkModelJson {
    pub fn from_shrunk(m: &ShrunkFactorModel) -> Self {
        Self {
            model: FactorModelJson::from_model(m.base()),
            q: m.q(),
            k_target: m.n_target_factors(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedModelJson {
    #[serde(flatten)]
    pub model: FactorModelJson,
    pub f_hat: usize,
    pub nu: Vec<f64>,
    pub k_target: usize,
}

impl TruncatedModelJson {
    pub fn from_truncated(m: &TruncatedPcModel) -> Self {
        Self {
            model: FactorModelJson::from_model(m.base()),
            f_hat: m.f_hat(),
            nu: m.nu().iter().copied().collect(),
            k_target: m.n_target_factors(),
        }
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
