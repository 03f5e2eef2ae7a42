//! Shrinkage targets, linear shrinkage, the exact factor-model form of a
//! shrunk covariance, and the truncated principal-component regularizer.

use nalgebra::{DMatrix, DVector};

use crate::covariance::{SampleCovariance, SpectralDecomposition};
use crate::error::{CovError, Result};
use crate::factor::{dense, BlockDiagonalFcm, FactorModel};

/// Relative tolerance for `Delta_ii == C_ii`.
pub const DIAGONAL_MATCH_TOLERANCE: f64 = 1e-10;

/// Relative Frobenius tolerance for the dense-vs-factor-form check.
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-8;

/// Upper clamp for the estimated uniform correlation.
pub const MAX_ESTIMATED_RHO: f64 = 0.999;

/// `Delta_ij = C_ii delta_ij`.
pub fn diagonal_target(scm: &SampleCovariance) -> Result<FactorModel> {
    scm.require_positive_diagonal()?;
    FactorModel::diagonal(scm.diagonal().map(f64::sqrt))
}

/// Uniform-correlation target written as a one-factor model:
/// `xi_i^2 = (1 - rho) sigma_i^2`, `Omega_i = sqrt(rho) sigma_i`, `Phi = [1]`.
pub fn constant_correlation_target(scm: &SampleCovariance, rho: f64) -> Result<FactorModel> {
    if !(0.0..1.0).contains(&rho) {
        return Err(CovError::RhoOutOfRange(rho));
    }
    scm.require_positive_diagonal()?;
    let sigma = scm.diagonal().map(f64::sqrt);
    let n = sigma.len();
    let xi = sigma.map(|s| (1.0 - rho).sqrt() * s);
    let loadings = DMatrix::from_fn(n, 1, |i, _| rho.sqrt() * sigma[i]);
    FactorModel::new(xi, loadings, DMatrix::identity(1, 1))
}

/// A general `K`-factor target whose specific risk is chosen so that the
/// dense diagonal equals `C_ii`: `xi_i^2 = C_ii - (Omega Phi Omega^T)_ii`.
pub fn matched_factor_target(
    scm: &SampleCovariance,
    loadings: DMatrix<f64>,
    fcm: DMatrix<f64>,
) -> Result<FactorModel> {
    scm.require_positive_diagonal()?;
    let n = scm.n_assets();
    let common = FactorModel::new(DVector::zeros(n), loadings, fcm)?;
    let common_diag = common.dense_diagonal();
    let mut xi = DVector::zeros(n);
    for i in 0..n {
        let c = scm.variance(i);
        let resid = c - common_diag[i];
        if resid < -DIAGONAL_MATCH_TOLERANCE * c {
            return Err(CovError::NegativeSpecificRisk { index: i, value: resid });
        }
        xi[i] = resid.max(0.0).sqrt();
    }
    let (_, loadings, fcm) = common.into_parts();
    FactorModel::new(xi, loadings, fcm)
}

/// Mean pairwise sample correlation, clamped to `[0, 0.999]`.
pub fn estimate_rho(scm: &SampleCovariance) -> Result<f64> {
    scm.require_positive_diagonal()?;
    let n = scm.n_assets();
    if n < 2 {
        return Err(CovError::TooFewAssets(n));
    }
    let c = scm.matrix();
    let sigma: Vec<f64> = (0..n).map(|i| c[(i, i)].sqrt()).collect();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += c[(i, j)] / (sigma[i] * sigma[j]);
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok((total / pairs).clamp(0.0, MAX_ESTIMATED_RHO))
}

/// How the uniform correlation of a constant-correlation target is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoChoice {
    /// Use [`estimate_rho`] on the covariance being regularized.
    Auto,
    Fixed(f64),
}

/// Shrinkage target families that can be built from a covariance alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetKind {
    Diagonal,
    ConstantCorrelation(RhoChoice),
}

impl TargetKind {
    pub fn build(self, scm: &SampleCovariance) -> Result<FactorModel> {
        match self {
            TargetKind::Diagonal => diagonal_target(scm),
            TargetKind::ConstantCorrelation(RhoChoice::Fixed(rho)) => {
                constant_correlation_target(scm, rho)
            }
            TargetKind::ConstantCorrelation(RhoChoice::Auto) => {
                constant_correlation_target(scm, estimate_rho(scm)?)
            }
        }
    }

    pub fn label(self) -> String {
        match self {
            TargetKind::Diagonal => "diagonal".to_string(),
            TargetKind::ConstantCorrelation(RhoChoice::Auto) => "constcorr(auto)".to_string(),
            TargetKind::ConstantCorrelation(RhoChoice::Fixed(r)) => format!("constcorr({r})"),
        }
    }
}

fn check_target_diagonal(scm: &SampleCovariance, target: &FactorModel) -> Result<()> {
    if target.n_assets() != scm.n_assets() {
        return Err(CovError::DimensionMismatch {
            context: "target assets",
            expected: scm.n_assets(),
            actual: target.n_assets(),
        });
    }
    let diag = target.dense_diagonal();
    for i in 0..scm.n_assets() {
        let c = scm.variance(i);
        if (diag[i] - c).abs() > DIAGONAL_MATCH_TOLERANCE * c.abs() {
            return Err(CovError::DiagonalMismatch {
                index: i,
                target: diag[i],
                covariance: c,
            });
        }
    }
    Ok(())
}

/// Shrinkage constant plus a target whose diagonal matches the covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageSpec {
    q: f64,
    target: FactorModel,
}

impl ShrinkageSpec {
    pub fn new(scm: &SampleCovariance, q: f64, target: FactorModel) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(CovError::InvalidShrinkage(q));
        }
        check_target_diagonal(scm, &target)?;
        Ok(Self { q, target })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn target(&self) -> &FactorModel {
        &self.target
    }
}

/// `q Delta + (1 - q) C`, elementwise.
pub fn shrink_dense(scm: &SampleCovariance, spec: &ShrinkageSpec) -> Result<DMatrix<f64>> {
    check_target_diagonal(scm, &spec.target)?;
    let q = spec.q;
    let delta = dense(&spec.target);
    Ok(delta.zip_map(scm.matrix(), |d, c| q * d + (1.0 - q) * c))
}

/// A shrunk covariance written as a `(K + F)`-factor model.
///
/// The first `K` loading columns are the target's, the remaining `F` are
/// principal components. Factor covariance is `blockdiag(q Phi, (1-q) diag(lambda))`
/// and specific variance is `q xi^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrunkFactorModel {
    base: FactorModel,
    blocks: BlockDiagonalFcm,
    q: f64,
}

impl ShrunkFactorModel {
    pub fn base(&self) -> &FactorModel {
        &self.base
    }

    pub fn block_structure(&self) -> &BlockDiagonalFcm {
        &self.blocks
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// `K`, the number of factors carried over from the target.
    pub fn n_target_factors(&self) -> usize {
        self.blocks.blocks()[0].nrows()
    }

    pub fn dense(&self) -> DMatrix<f64> {
        dense(&self.base)
    }
}

pub fn shrink_as_factor_model(
    spectral: &SpectralDecomposition,
    spec: &ShrinkageSpec,
) -> Result<ShrunkFactorModel> {
    let target = &spec.target;
    let n = target.n_assets();
    if spectral.n_assets() != n {
        return Err(CovError::DimensionMismatch {
            context: "spectral decomposition assets",
            expected: n,
            actual: spectral.n_assets(),
        });
    }
    let q = spec.q;
    let k = target.n_factors();
    let f = spectral.n_positive();

    let xi = target.specific_risk().map(|x| q.sqrt() * x);
    let mut loadings = DMatrix::zeros(n, k + f);
    loadings.columns_mut(0, k).copy_from(target.loadings());
    loadings.columns_mut(k, f).copy_from(spectral.components());

    let blocks = BlockDiagonalFcm::new(vec![
        target.fcm() * q,
        DMatrix::from_diagonal(&DVector::from_iterator(
            f,
            spectral.eigenvalues().iter().map(|&l| (1.0 - q) * l),
        )),
    ]);
    let base = FactorModel::from_psd_parts(xi, loadings, blocks.to_dense());
    Ok(ShrunkFactorModel { base, blocks, q })
}

/// Relative Frobenius gap between the factor form and `shrink_dense`,
/// normalized by `||C||_F`. Errors when it exceeds `1e-8`.
pub fn verify_equivalence(
    scm: &SampleCovariance,
    spec: &ShrinkageSpec,
    shrunk: &ShrunkFactorModel,
) -> Result<f64> {
    let direct = shrink_dense(scm, spec)?;
    let gap = (shrunk.dense() - direct).norm() / scm.matrix().norm();
    if gap > EQUIVALENCE_TOLERANCE {
        return Err(CovError::EquivalenceFailed(gap));
    }
    Ok(gap)
}

/// `nu_i nu_j Delta_ij + sum_{a < F_hat} lambda_a V_a V_a^T` in factor form.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedPcModel {
    base: FactorModel,
    nu: DVector<f64>,
    f_hat: usize,
    n_target_factors: usize,
}

impl TruncatedPcModel {
    pub fn base(&self) -> &FactorModel {
        &self.base
    }

    /// Non-negative rescaling coefficients.
    pub fn nu(&self) -> &DVector<f64> {
        &self.nu
    }

    pub fn f_hat(&self) -> usize {
        self.f_hat
    }

    pub fn n_target_factors(&self) -> usize {
        self.n_target_factors
    }

    pub fn dense(&self) -> DMatrix<f64> {
        dense(&self.base)
    }
}

/// Keeps the first `f_hat` principal components and rescales the target by
/// `nu_i`, where `nu_i^2 C_ii` is the variance carried by the discarded
/// components. The dense diagonal then equals `C_ii`.
pub fn truncated_pc_model(
    scm: &SampleCovariance,
    spectral: &SpectralDecomposition,
    target: &FactorModel,
    f_hat: usize,
) -> Result<TruncatedPcModel> {
    scm.require_positive_diagonal()?;
    let n = scm.n_assets();
    if spectral.n_assets() != n {
        return Err(CovError::DimensionMismatch {
            context: "spectral decomposition assets",
            expected: n,
            actual: spectral.n_assets(),
        });
    }
    let f = spectral.n_positive();
    if f_hat > f {
        return Err(CovError::FhatOutOfRange { f_hat, max: f });
    }
    check_target_diagonal(scm, target)?;

    let lambda = spectral.eigenvalues();
    let v = spectral.components();
    let nu = DVector::from_fn(n, |i, _| {
        let resid: f64 = (f_hat..f).map(|a| lambda[a] * v[(i, a)] * v[(i, a)]).sum();
        (resid / scm.variance(i)).sqrt()
    });

    let k = target.n_factors();
    let xi = target.specific_risk().component_mul(&nu);
    let mut loadings = DMatrix::zeros(n, k + f_hat);
    for i in 0..n {
        for a in 0..k {
            loadings[(i, a)] = nu[i] * target.loadings()[(i, a)];
        }
        for a in 0..f_hat {
            loadings[(i, k + a)] = v[(i, a)];
        }
    }
    let fcm = BlockDiagonalFcm::new(vec![
        target.fcm().clone(),
        DMatrix::from_diagonal(&DVector::from_column_slice(&lambda[..f_hat])),
    ])
    .to_dense();

    Ok(TruncatedPcModel {
        base: FactorModel::from_psd_parts(xi, loadings, fcm),
        nu,
        f_hat,
        n_target_factors: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::spectral_decompose;

    fn scm(data: &[f64]) -> SampleCovariance {
        let n = (data.len() as f64).sqrt() as usize;
        SampleCovariance::from_matrix(DMatrix::from_row_slice(n, n, data)).unwrap()
    }

    #[test]
    fn diagonal_target_examples() {
        let t = diagonal_target(&scm(&[1.0, -1.0, -1.0, 1.0])).unwrap();
        assert_eq!(t.specific_risk().as_slice(), &[1.0, 1.0]);
        assert_eq!(t.n_factors(), 0);
        let t = diagonal_target(&scm(&[4.0, 0.0, 0.0, 9.0])).unwrap();
        assert_eq!(t.specific_risk().as_slice(), &[2.0, 3.0]);
        let d = dense(&diagonal_target(&scm(&[2.0, 0.7, 0.7, 3.0])).unwrap());
        assert_eq!(d[(0, 1)], 0.0);
        assert_eq!(d[(1, 0)], 0.0);
    }

    #[test]
    fn constant_correlation_examples() {
        let c = scm(&[1.0, 0.0, 0.0, 4.0]);
        let d = dense(&constant_correlation_target(&c, 0.5).unwrap());
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 4.0]);
        assert!((d - expected).amax() < 1e-15);

        let zero = constant_correlation_target(&c, 0.0).unwrap();
        assert_eq!(dense(&zero), dense(&diagonal_target(&c).unwrap()));

        assert!(matches!(
            constant_correlation_target(&c, -0.1),
            Err(CovError::RhoOutOfRange(_))
        ));
        assert!(matches!(
            constant_correlation_target(&c, 1.0),
            Err(CovError::RhoOutOfRange(_))
        ));
    }

    #[test]
    fn constant_correlation_is_pd() {
        let c = SampleCovariance::from_matrix(DMatrix::identity(3, 3)).unwrap();
        let d = dense(&constant_correlation_target(&c, 0.3).unwrap());
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.3 };
                assert!((d[(i, j)] - want).abs() < 1e-15);
            }
        }
        // eigenvalues of the 3x3 uniform-correlation matrix are 1.6, 0.7, 0.7
        let ev = nalgebra::SymmetricEigen::new(d).eigenvalues;
        assert!((ev.min() - 0.7).abs() < 1e-12 && (ev.max() - 1.6).abs() < 1e-12);
    }

    #[test]
    fn estimate_rho_examples() {
        let id = SampleCovariance::from_matrix(DMatrix::identity(4, 4)).unwrap();
        assert_eq!(estimate_rho(&id).unwrap(), 0.0);
        assert_eq!(estimate_rho(&scm(&[1.0, 0.5, 0.5, 1.0])).unwrap(), 0.5);
        // negative mean correlation clamps to zero
        assert_eq!(estimate_rho(&scm(&[1.0, -0.5, -0.5, 1.0])).unwrap(), 0.0);
    }

    #[test]
    fn shrink_dense_examples() {
        let c = scm(&[1.0, -1.0, -1.0, 1.0]);
        let target = diagonal_target(&c).unwrap();

        let s0 = ShrinkageSpec::new(&c, 0.0, target.clone()).unwrap();
        assert_eq!(&shrink_dense(&c, &s0).unwrap(), c.matrix());

        let s1 = ShrinkageSpec::new(&c, 1.0, target.clone()).unwrap();
        assert_eq!(shrink_dense(&c, &s1).unwrap(), dense(&target));

        let half = ShrinkageSpec::new(&c, 0.5, target).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]);
        assert_eq!(shrink_dense(&c, &half).unwrap(), expected);
    }

    #[test]
    fn spec_validation() {
        let c = scm(&[1.0, 0.2, 0.2, 2.0]);
        let t = diagonal_target(&c).unwrap();
        assert!(matches!(
            ShrinkageSpec::new(&c, 1.5, t.clone()),
            Err(CovError::InvalidShrinkage(_))
        ));
        let wrong = FactorModel::diagonal(DVector::from_column_slice(&[1.0, 1.0])).unwrap();
        assert!(matches!(
            ShrinkageSpec::new(&c, 0.5, wrong),
            Err(CovError::DiagonalMismatch { index: 1, .. })
        ));
        // a spec built for one matrix cannot shrink another
        let spec = ShrinkageSpec::new(&c, 0.5, t).unwrap();
        let other = scm(&[3.0, 0.0, 0.0, 2.0]);
        assert!(matches!(
            shrink_dense(&other, &spec),
            Err(CovError::DiagonalMismatch { index: 0, .. })
        ));
    }

    #[test]
    fn factor_form_two_by_two() {
        let c = scm(&[1.0, -1.0, -1.0, 1.0]);
        let sd = spectral_decompose(&c).unwrap();
        let spec = ShrinkageSpec::new(&c, 0.5, diagonal_target(&c).unwrap()).unwrap();
        let shrunk = shrink_as_factor_model(&sd, &spec).unwrap();

        assert_eq!(shrunk.base().n_factors(), 1);
        assert!((shrunk.base().fcm()[(0, 0)] - 1.0).abs() < 1e-14);
        let xi2 = shrunk.base().specific_variance();
        assert!((xi2[0] - 0.5).abs() < 1e-15 && (xi2[1] - 0.5).abs() < 1e-15);

        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]);
        assert!((shrunk.dense() - &expected).amax() < 1e-14);
        assert!(verify_equivalence(&c, &spec, &shrunk).unwrap() < 1e-14);
    }

    #[test]
    fn factor_form_endpoints() {
        let c = scm(&[2.0, 0.3, -0.4, 0.3, 1.0, 0.1, -0.4, 0.1, 1.5]);
        let sd = spectral_decompose(&c).unwrap();
        let target = constant_correlation_target(&c, 0.2).unwrap();

        let s1 = ShrinkageSpec::new(&c, 1.0, target.clone()).unwrap();
        let m1 = shrink_as_factor_model(&sd, &s1).unwrap();
        assert_eq!(m1.base().specific_risk(), target.specific_risk());
        assert!(m1.block_structure().blocks()[1].iter().all(|&x| x == 0.0));
        assert!((m1.dense() - dense(&target)).amax() < 1e-14);

        let d = diagonal_target(&c).unwrap();
        let s0 = ShrinkageSpec::new(&c, 0.0, d).unwrap();
        let m0 = shrink_as_factor_model(&sd, &s0).unwrap();
        assert!(m0.base().specific_risk().iter().all(|&x| x == 0.0));
        assert!((m0.dense() - c.matrix()).amax() < 1e-14);
    }

    #[test]
    fn block_structure_zero_cross_terms() {
        let c = scm(&[2.0, 0.3, -0.4, 0.3, 1.0, 0.1, -0.4, 0.1, 1.5]);
        let sd = spectral_decompose(&c).unwrap();
        let target = constant_correlation_target(&c, 0.2).unwrap();
        let spec = ShrinkageSpec::new(&c, 0.3, target).unwrap();
        let m = shrink_as_factor_model(&sd, &spec).unwrap();
        let phi = m.base().fcm();
        assert_eq!(m.n_target_factors(), 1);
        assert_eq!(phi.nrows(), 1 + sd.n_positive());
        for a in 1..phi.nrows() {
            assert_eq!(phi[(0, a)], 0.0);
            assert_eq!(phi[(a, 0)], 0.0);
        }
        assert!((phi[(0, 0)] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn truncated_endpoints() {
        let c = scm(&[2.0, 0.3, -0.4, 0.3, 1.0, 0.1, -0.4, 0.1, 1.5]);
        let sd = spectral_decompose(&c).unwrap();
        let target = diagonal_target(&c).unwrap();

        let full = truncated_pc_model(&c, &sd, &target, sd.n_positive()).unwrap();
        assert!(full.nu().iter().all(|&x| x == 0.0));
        assert!((full.dense() - c.matrix()).amax() < 1e-14);

        let none = truncated_pc_model(&c, &sd, &target, 0).unwrap();
        assert!(none.nu().iter().all(|&x| (x - 1.0).abs() < 1e-12));
        assert!((none.dense() - dense(&target)).amax() < 1e-13);

        assert!(matches!(
            truncated_pc_model(&c, &sd, &target, 4),
            Err(CovError::FhatOutOfRange { f_hat: 4, max: 3 })
        ));
    }

    #[test]
    fn matched_target_rejects_excess_loading() {
        let c = scm(&[1.0, 0.0, 0.0, 1.0]);
        let err = matched_factor_target(
            &c,
            DMatrix::from_column_slice(2, 1, &[2.0, 0.1]),
            DMatrix::identity(1, 1),
        )
        .unwrap_err();
        assert!(matches!(err, CovError::NegativeSpecificRisk { index: 0, .. }));
    }
}
