//! Test-only helpers: random instances and brute-force oracles that share no
//! code path with the library implementations they check.
#![allow(dead_code)]

use covreg::{
    demean, generate_panel, matched_factor_target, sample_covariance, FactorModel, ReturnsPanel,
    SampleCovariance, SyntheticSpec,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian panel with heterogeneous per-asset scales and some common drift.
pub fn random_panel(n: usize, t: usize, seed: u64) -> ReturnsPanel {
    let base = generate_panel(&SyntheticSpec::iid_unit(n, t, seed)).unwrap();
    let mut r = rng(seed ^ 0xABCD);
    let scales: Vec<f64> = (0..n).map(|_| r.random_range(0.005..0.05)).collect();
    let common: Vec<f64> = (0..t).map(|_| r.random_range(-1.0..1.0)).collect();
    let m = DMatrix::from_fn(n, t, |i, s| scales[i] * (base.returns()[(i, s)] + 0.5 * common[s]) + 0.001);
    ReturnsPanel::with_synthetic_ids(m).unwrap()
}

pub fn random_scm(n: usize, t: usize, seed: u64) -> SampleCovariance {
    sample_covariance(&demean(&random_panel(n, t, seed))).unwrap()
}

/// `C_ij = (1/M) sum_s X_is X_js` by explicit loops over a fresh demeaning.
pub fn oracle_scm(r: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, t) = r.shape();
    let mut means = vec![0.0; n];
    for i in 0..n {
        let mut s = 0.0;
        for k in 0..t {
            s += r[(i, k)];
        }
        means[i] = s / t as f64;
    }
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..t {
                acc += (r[(i, k)] - means[i]) * (r[(j, k)] - means[j]);
            }
            c[(i, j)] = acc / (t - 1) as f64;
        }
    }
    c
}

/// `xi_i^2 delta_ij + sum_AB Omega_iA Phi_AB Omega_jB` by explicit loops.
pub fn oracle_dense(xi: &[f64], omega: &DMatrix<f64>, phi: &DMatrix<f64>) -> DMatrix<f64> {
    let n = xi.len();
    let k = omega.ncols();
    DMatrix::from_fn(n, n, |i, j| {
        let mut acc = if i == j { xi[i] * xi[i] } else { 0.0 };
        for a in 0..k {
            for b in 0..k {
                acc += omega[(i, a)] * phi[(a, b)] * omega[(j, b)];
            }
        }
        acc
    })
}

/// Gauss-Jordan elimination with partial pivoting; returns `A^-1 B`.
pub fn oracle_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut aug: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| a[(i, j)]).collect();
            row.extend((0..m).map(|j| b[(i, j)]));
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs()))
            .unwrap();
        aug.swap(col, pivot);
        let p = aug[col][col];
        assert!(p.abs() > 1e-300, "singular oracle system");
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let f = aug[row][col];
                if f != 0.0 {
                    let pivot_row = aug[col].clone();
                    for (x, p) in aug[row].iter_mut().zip(&pivot_row) {
                        *x -= f * p;
                    }
                }
            }
        }
    }
    DMatrix::from_fn(n, m, |i, j| aug[i][n + j])
}

/// Random PD factor model with strictly positive specific risk.
pub fn random_model(n: usize, k: usize, seed: u64) -> FactorModel {
    let mut r = rng(seed);
    let xi = DVector::from_fn(n, |_, _| r.random_range(0.2..1.5));
    let omega = DMatrix::from_fn(n, k, |_, _| r.random_range(-1.0..1.0));
    let g = DMatrix::from_fn(k, k, |_, _| r.random_range(-1.0..1.0));
    let phi = &g * g.transpose() / k.max(1) as f64 + DMatrix::identity(k, k) * 0.1;
    FactorModel::new(xi, omega, phi).unwrap()
}

/// Random `K`-factor target whose dense diagonal matches `C`: each asset's
/// common variance is a random fraction in [0.2, 0.7] of `C_ii`.
pub fn random_matched_target(scm: &SampleCovariance, k: usize, seed: u64) -> FactorModel {
    let n = scm.n_assets();
    let mut r = rng(seed);
    let g = DMatrix::from_fn(k, k, |_, _| r.random_range(-1.0..1.0));
    let phi = &g * g.transpose() + DMatrix::identity(k, k) * 0.1;
    let mut omega = DMatrix::from_fn(n, k, |_, _| r.random_range(-1.0..1.0));
    for i in 0..n {
        let row = omega.row(i).clone_owned();
        let common = (&row * &phi * row.transpose())[(0, 0)];
        let frac: f64 = r.random_range(0.2..0.7);
        let scale = (frac * scm.variance(i) / common).sqrt();
        omega.row_mut(i).scale_mut(scale);
    }
    matched_factor_target(scm, omega, phi).unwrap()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    nalgebra::SymmetricEigen::new(m.clone()).eigenvalues.min()
}

pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>, scale: &DMatrix<f64>) -> f64 {
    (a - b).norm() / scale.norm()
}
