//! Factor covariance models `diag(xi^2) + Omega Phi Omega^T`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::covariance::QUASI_NULL_RELATIVE;
use crate::error::{CovError, Result};

/// Condition estimate above which the inner `K x K` system is refused.
pub const MAX_INNER_CONDITION: f64 = 1e12;

/// `K`-factor covariance model.
///
/// `specific_risk` holds `xi_i` (not squared). `K = 0` is a pure diagonal
/// model with empty loadings and factor covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    specific_risk: DVector<f64>,
    loadings: DMatrix<f64>,
    fcm: DMatrix<f64>,
}

impl FactorModel {
    pub fn new(specific_risk: DVector<f64>, loadings: DMatrix<f64>, fcm: DMatrix<f64>) -> Result<Self> {
        let n = specific_risk.len();
        let k = loadings.ncols();
        if loadings.nrows() != n {
            return Err(CovError::DimensionMismatch {
                context: "loadings rows",
                expected: n,
                actual: loadings.nrows(),
            });
        }
        if fcm.nrows() != k || fcm.ncols() != k {
            return Err(CovError::DimensionMismatch {
                context: "factor covariance size",
                expected: k,
                actual: if fcm.nrows() != k { fcm.nrows() } else { fcm.ncols() },
            });
        }
        for (index, &value) in specific_risk.iter().enumerate() {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(CovError::NegativeSpecificRisk { index, value });
            }
        }
        if loadings.iter().chain(fcm.iter()).any(|v| !v.is_finite()) {
            return Err(CovError::InvalidParameter("non-finite loading or factor covariance".into()));
        }
        let fcm = validated_fcm(fcm)?;
        Ok(Self {
            specific_risk,
            loadings,
            fcm,
        })
    }

    /// `K = 0` model with the given specific risks.
    pub fn diagonal(specific_risk: DVector<f64>) -> Result<Self> {
        let n = specific_risk.len();
        Self::new(specific_risk, DMatrix::zeros(n, 0), DMatrix::zeros(0, 0))
    }

    /// For internally assembled models whose factor covariance is PSD by
    /// construction (block-diagonal with PSD blocks).
    pub(crate) fn from_psd_parts(
        specific_risk: DVector<f64>,
        loadings: DMatrix<f64>,
        fcm: DMatrix<f64>,
    ) -> Self {
        debug_assert_eq!(loadings.nrows(), specific_risk.len());
        debug_assert_eq!(loadings.ncols(), fcm.nrows());
        Self {
            specific_risk,
            loadings,
            fcm,
        }
    }

    pub fn into_parts(self) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        (self.specific_risk, self.loadings, self.fcm)
    }

    pub fn specific_risk(&self) -> &DVector<f64> {
        &self.specific_risk
    }

    pub fn specific_variance(&self) -> DVector<f64> {
        self.specific_risk.map(|x| x * x)
    }

    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }

    pub fn fcm(&self) -> &DMatrix<f64> {
        &self.fcm
    }

    pub fn n_assets(&self) -> usize {
        self.specific_risk.len()
    }

    pub fn n_factors(&self) -> usize {
        self.loadings.ncols()
    }

    /// Diagonal of the dense form, without assembling it.
    pub fn dense_diagonal(&self) -> DVector<f64> {
        let common = &self.loadings * &self.fcm;
        DVector::from_fn(self.n_assets(), |i, _| {
            self.specific_risk[i].powi(2) + common.row(i).dot(&self.loadings.row(i))
        })
    }
}

fn validated_fcm(mut fcm: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = fcm.nrows();
    if k == 0 {
        return Ok(fcm);
    }
    let scale = fcm.amax().max(f64::MIN_POSITIVE);
    for i in 0..k {
        for j in (i + 1)..k {
            let gap = (fcm[(i, j)] - fcm[(j, i)]).abs();
            if gap > 1e-12 * scale {
                return Err(CovError::NotSymmetric { row: i, col: j, gap });
            }
            fcm[(j, i)] = fcm[(i, j)];
        }
    }
    let eig = SymmetricEigen::new(fcm.clone());
    let top = eig.eigenvalues.amax();
    if let Some(&bad) = eig
        .eigenvalues
        .iter()
        .find(|&&v| v < -QUASI_NULL_RELATIVE * top)
    {
        return Err(CovError::FcmNotPsd(bad));
    }
    Ok(fcm)
}

/// Block-diagonal factor covariance; off-block entries are zero by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagonalFcm {
    blocks: Vec<DMatrix<f64>>,
}

impl BlockDiagonalFcm {
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Self {
        Self { blocks }
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn size(&self) -> usize {
        self.blocks.iter().map(|b| b.nrows()).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let size = self.size();
        let mut out = DMatrix::zeros(size, size);
        let mut offset = 0;
        for b in &self.blocks {
            let k = b.nrows();
            out.view_mut((offset, offset), (k, k)).copy_from(b);
            offset += k;
        }
        out
    }
}

/// Assembles `diag(xi^2) + Omega Phi Omega^T`.
pub fn dense(model: &FactorModel) -> DMatrix<f64> {
    let n = model.n_assets();
    let mut out = if model.n_factors() == 0 {
        DMatrix::zeros(n, n)
    } else {
        &model.loadings * &model.fcm * model.loadings.transpose()
    };
    for i in 0..n {
        for j in (i + 1)..n {
            out[(j, i)] = out[(i, j)];
        }
        out[(i, i)] += model.specific_risk[i].powi(2);
    }
    out
}

/// Low-rank representation of `(D + Omega Phi Omega^T)^-1`.
///
/// With `Phi = L L^T` and `B = Omega L`, the inverse is
/// `D^-1 - D^-1 B (I + B^T D^-1 B)^-1 B^T D^-1`. Only the `K x K` inner
/// matrix is factorized.
#[derive(Debug, Clone)]
pub struct WoodburyInverse {
    d_inv: DVector<f64>,
    d_inv_b: DMatrix<f64>,
    inner: Cholesky<f64, nalgebra::Dyn>,
    condition: f64,
}

impl WoodburyInverse {
    pub fn new(model: &FactorModel) -> Result<Self> {
        if let Some(index) = model.specific_risk.iter().position(|&x| x <= 0.0) {
            return Err(CovError::SingularSpecificRisk { index });
        }
        let d_inv = model.specific_risk.map(|x| 1.0 / (x * x));
        let k = model.n_factors();

        let b = if k == 0 {
            DMatrix::zeros(model.n_assets(), 0)
        } else {
            let eig = SymmetricEigen::new(model.fcm.clone());
            let root = DMatrix::from_fn(k, k, |r, c| {
                eig.eigenvectors[(r, c)] * eig.eigenvalues[c].max(0.0).sqrt()
            });
            &model.loadings * root
        };
        let mut d_inv_b = b.clone();
        for (i, mut row) in d_inv_b.row_iter_mut().enumerate() {
            row *= d_inv[i];
        }
        let inner = DMatrix::identity(k, k) + b.transpose() * &d_inv_b;

        let condition = if k == 0 {
            1.0
        } else {
            let ev = SymmetricEigen::new(inner.clone()).eigenvalues;
            let lo = ev.min();
            if lo <= 0.0 {
                f64::INFINITY
            } else {
                ev.max() / lo
            }
        };
        if condition.is_nan() || condition > MAX_INNER_CONDITION {
            return Err(CovError::IllConditioned { condition });
        }
        let inner = Cholesky::new(inner).ok_or(CovError::IllConditioned { condition })?;
        Ok(Self {
            d_inv,
            d_inv_b,
            inner,
            condition,
        })
    }

    /// Condition estimate of the inner `K x K` system.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Solves `Delta w = v` in `O(N K)` after setup.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let dv = self.d_inv.component_mul(v);
        if self.d_inv_b.ncols() == 0 {
            return dv;
        }
        let t = self.inner.solve(&(self.d_inv_b.transpose() * v));
        dv - &self.d_inv_b * t
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.d_inv.len();
        let mut out = if self.d_inv_b.ncols() == 0 {
            DMatrix::zeros(n, n)
        } else {
            let t = self.inner.solve(&self.d_inv_b.transpose());
            -(&self.d_inv_b * t)
        };
        for i in 0..n {
            for j in (i + 1)..n {
                out[(j, i)] = out[(i, j)];
            }
            out[(i, i)] += self.d_inv[i];
        }
        out
    }
}

/// Dense inverse of the model's covariance via the low-rank identity.
pub fn invert(model: &FactorModel) -> Result<DMatrix<f64>> {
    Ok(WoodburyInverse::new(model)?.to_dense())
}

/// Fully invested minimum-variance weights `Delta^-1 1 / (1^T Delta^-1 1)`.
pub fn min_variance_weights(model: &FactorModel) -> Result<DVector<f64>> {
    let inv = WoodburyInverse::new(model)?;
    let raw = inv.solve(&DVector::repeat(model.n_assets(), 1.0));
    let total = raw.sum();
    if !(total.is_finite() && total != 0.0) {
        return Err(CovError::IllConditioned { condition: f64::INFINITY });
    }
    Ok(raw / total)
}
