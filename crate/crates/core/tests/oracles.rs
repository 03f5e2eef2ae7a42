mod common;

use common::*;
use covreg::{
    dense, demean, diagonal_target, invert, min_variance_weights, sample_covariance,
    shrink_as_factor_model, shrink_dense, spectral_decompose, truncated_pc_model, ShrinkageSpec,
};
use nalgebra::{DMatrix, DVector};

#[test]
fn scm_matches_loop_oracle_5x21() {
    let panel = random_panel(5, 21, 101);
    let scm = sample_covariance(&demean(&panel)).unwrap();
    let oracle = oracle_scm(panel.returns());
    assert!((scm.matrix() - &oracle).amax() <= 1e-12 * oracle.amax().max(1.0));
    // exact symmetry by construction
    assert_eq!(scm.matrix(), &scm.matrix().transpose());
}

#[test]
fn scm_single_row_formula() {
    // variance of [-1, 0, 1] with denominator M = 2
    let x = DMatrix::from_row_slice(1, 3, &[-1.0, 0.0, 1.0]);
    assert_eq!(oracle_scm(&x)[(0, 0)], 1.0);
}

#[test]
fn dense_matches_triple_loop_n6_k2() {
    let m = random_model(6, 2, 7);
    let oracle = oracle_dense(m.specific_risk().as_slice(), m.loadings(), m.fcm());
    assert!((dense(&m) - &oracle).amax() <= 1e-12);
    // diagonal-only assembly agrees too
    let diag = m.dense_diagonal();
    for i in 0..6 {
        assert!((diag[i] - oracle[(i, i)]).abs() <= 1e-12);
    }
}

#[test]
fn diagonal_model_round_trip_is_exact() {
    let xi = DVector::from_column_slice(&[0.3, 1.7, 2.0, 0.01]);
    let m = covreg::FactorModel::diagonal(xi.clone()).unwrap();
    let d = dense(&m);
    for i in 0..4 {
        assert_eq!(d[(i, i)], xi[i] * xi[i]);
    }
}

#[test]
fn invert_is_inverse_n8_k3() {
    let m = random_model(8, 3, 99);
    let d = dense(&m);
    let inv = invert(&m).unwrap();
    let eye = DMatrix::<f64>::identity(8, 8);
    assert!((&d * &inv - &eye).amax() <= 1e-8);
    let oracle = oracle_solve(&d, &eye);
    assert!((inv - oracle).amax() <= 1e-8);
}

#[test]
fn min_variance_matches_dense_solve() {
    for seed in 0..5 {
        let m = random_model(9, 2, 300 + seed);
        let raw = oracle_solve(&dense(&m), &DMatrix::from_element(9, 1, 1.0));
        let expected = &raw / raw.sum();
        let w = min_variance_weights(&m).unwrap();
        assert!((w.sum() - 1.0).abs() < 1e-12);
        for i in 0..9 {
            assert!((w[i] - expected[(i, 0)]).abs() <= 1e-8);
        }
    }
}

/// Two-asset shrinkage through both routes, checked against hand values.
#[test]
fn two_asset_factor_form_against_hand_values() {
    let panel = covreg::ReturnsPanel::with_synthetic_ids(DMatrix::from_row_slice(
        2,
        3,
        &[1.0, 2.0, 3.0, 3.0, 2.0, 1.0],
    ))
    .unwrap();
    let scm = sample_covariance(&demean(&panel)).unwrap();
    let sd = spectral_decompose(&scm).unwrap();
    let spec = ShrinkageSpec::new(&scm, 0.5, diagonal_target(&scm).unwrap()).unwrap();
    let model = shrink_as_factor_model(&sd, &spec).unwrap();
    // single PC with lambda = 2, FCM entry (1 - q) lambda = 1
    assert_eq!(model.base().n_factors(), 1);
    assert!((model.base().fcm()[(0, 0)] - 1.0).abs() < 1e-14);
    let hand = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]);
    assert!((model.dense() - &hand).amax() < 1e-14);
    assert_eq!(shrink_dense(&scm, &spec).unwrap(), hand);
}

/// Truncated model on a 5-asset panel: diagonal by direct summation over the
/// residual spectrum; off-diagonals differ from both C and the target.
#[test]
fn truncated_diagonal_by_direct_summation() {
    let scm = random_scm(5, 40, 5);
    let sd = spectral_decompose(&scm).unwrap();
    let target = diagonal_target(&scm).unwrap();
    let model = truncated_pc_model(&scm, &sd, &target, 1).unwrap();

    let lambda = sd.eigenvalues();
    let v = sd.components();
    for i in 0..5 {
        let c = scm.variance(i);
        let mut resid = 0.0;
        for a in 1..sd.n_positive() {
            resid += lambda[a] * v[(i, a)] * v[(i, a)];
        }
        let nu2 = resid / c;
        assert!((model.nu()[i].powi(2) - nu2).abs() <= 1e-12 * nu2.max(1e-300));
        let diag = nu2 * c + lambda[0] * v[(i, 0)] * v[(i, 0)];
        assert!((model.dense()[(i, i)] - c).abs() <= 1e-12 * c);
        assert!((diag - c).abs() <= 1e-12 * c);
    }
    let d = model.dense();
    let c = scm.matrix();
    assert!((0..5).any(|i| (0..5).any(|j| i != j && (d[(i, j)] - c[(i, j)]).abs() > 1e-8 * c.amax())));
    assert!((0..5).any(|i| (0..5).any(|j| i != j && d[(i, j)].abs() > 1e-8 * c.amax())));
}
