//! Sample covariance and its spectral decomposition.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{CovError, Result};
use crate::ingest::DemeanedPanel;

/// Relative cutoff below which eigenvalues are treated as rounding noise.
pub const QUASI_NULL_RELATIVE: f64 = 1e-10;

/// Relative asymmetry tolerated when importing an external matrix.
const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Symmetric `N x N` sample covariance matrix `C = X X^T / M`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCovariance {
    c: DMatrix<f64>,
    n_obs_minus_one: Option<usize>,
}

impl SampleCovariance {
    /// Wraps an externally supplied covariance matrix. The upper triangle is
    /// mirrored after checking the input is symmetric to within rounding.
    pub fn from_matrix(mut c: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = c.shape();
        if rows != cols {
            return Err(CovError::DimensionMismatch {
                context: "covariance matrix columns",
                expected: rows,
                actual: cols,
            });
        }
        if rows == 0 {
            return Err(CovError::TooFewAssets(0));
        }
        if let Some(bad) = c.iter().find(|v| !v.is_finite()) {
            return Err(CovError::InvalidParameter(format!(
                "covariance entry {bad} is not finite"
            )));
        }
        let scale = c.amax().max(f64::MIN_POSITIVE);
        for i in 0..rows {
            if c[(i, i)] < 0.0 {
                return Err(CovError::NegativeEigenvalue {
                    value: c[(i, i)],
                    threshold: 0.0,
                });
            }
            for j in (i + 1)..rows {
                let gap = (c[(i, j)] - c[(j, i)]).abs();
                if gap > SYMMETRY_TOLERANCE * scale {
                    return Err(CovError::NotSymmetric { row: i, col: j, gap });
                }
                c[(j, i)] = c[(i, j)];
            }
        }
        Ok(Self {
            c,
            n_obs_minus_one: None,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.c
    }

    pub fn n_assets(&self) -> usize {
        self.c.nrows()
    }

    /// The denominator `M`, when the matrix was built from a panel.
    pub fn n_obs_minus_one(&self) -> Option<usize> {
        self.n_obs_minus_one
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.c[(i, i)]
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.c.diagonal()
    }

    /// Errors on the first asset with zero variance.
    pub fn require_positive_diagonal(&self) -> Result<()> {
        match (0..self.n_assets()).find(|&i| self.c[(i, i)] <= 0.0) {
            Some(index) => Err(CovError::ZeroVarianceAsset { index }),
            None => Ok(()),
        }
    }
}

/// Builds `C_ij = (1/M) sum_s X_is X_js` with `M` = observations - 1.
pub fn sample_covariance(panel: &DemeanedPanel) -> Result<SampleCovariance> {
    let t = panel.n_obs();
    if t < 2 {
        return Err(CovError::TooFewObservations(t));
    }
    let m = t - 1;
    let x = panel.x();
    let mut c = (x * x.transpose()) / m as f64;
    let n = c.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            c[(j, i)] = c[(i, j)];
        }
    }
    let scm = SampleCovariance {
        c,
        n_obs_minus_one: Some(m),
    };
    scm.require_positive_diagonal()?;
    Ok(scm)
}

/// Positive part of the spectrum of a covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    /// `N x F`, column `a` is the principal component for `eigenvalues[a]`.
    components: DMatrix<f64>,
    quasi_null_threshold: f64,
}

impl SpectralDecomposition {
    /// Positive eigenvalues, sorted descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn component(&self, a: usize) -> DVector<f64> {
        self.components.column(a).into_owned()
    }

    /// `F`, the number of eigenvalues kept.
    pub fn n_positive(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_assets(&self) -> usize {
        self.components.nrows()
    }

    pub fn quasi_null_threshold(&self) -> f64 {
        self.quasi_null_threshold
    }

    /// `sum_{a < count} lambda_a V_a V_a^T`.
    pub fn partial_sum(&self, count: usize) -> DMatrix<f64> {
        let count = count.min(self.n_positive());
        let v = self.components.columns(0, count);
        let scaled = DMatrix::from_fn(self.n_assets(), count, |i, a| {
            v[(i, a)] * self.eigenvalues[a]
        });
        &scaled * v.transpose()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.partial_sum(self.n_positive())
    }
}

/// Symmetric eigendecomposition with quasi-null eigenvalues dropped.
///
/// Eigenvalues within `1e-10 * lambda_max` of zero are rounded to zero and
/// excluded; anything more negative than that is an error. Each component is
/// signed so that its largest-magnitude entry is positive.
pub fn spectral_decompose(scm: &SampleCovariance) -> Result<SpectralDecomposition> {
    decompose_symmetric(scm.matrix())
}

pub(crate) fn decompose_symmetric(c: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    let n = c.nrows();
    let eig = SymmetricEigen::new(c.clone());
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()));
    let threshold = QUASI_NULL_RELATIVE * scale;

    if let Some(&value) = eig.eigenvalues.iter().find(|&&v| v < -threshold) {
        return Err(CovError::NegativeEigenvalue { value, threshold });
    }

    let mut order: Vec<usize> = (0..n).filter(|&a| eig.eigenvalues[a] > threshold).collect();
    // stable: ties keep the solver's order
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let eigenvalues: Vec<f64> = order.iter().map(|&a| eig.eigenvalues[a]).collect();
    let mut components = DMatrix::zeros(n, order.len());
    for (k, &a) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(a);
        let mut pivot = 0;
        for i in 1..n {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            components[(i, k)] = sign * col[i];
        }
    }

    Ok(SpectralDecomposition {
        eigenvalues,
        components,
        quasi_null_threshold: threshold,
    })
}
