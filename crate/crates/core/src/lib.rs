//! Covariance regularization toolkit.
//!
//! Builds sample covariance matrices from return panels, shrinks them toward
//! structured targets, rewrites a shrunk covariance exactly as a factor model
//! with block-diagonal factor covariance, and provides a truncated
//! principal-component regularizer that preserves the diagonal.
//!
//! Monte Carlo loops in [`harness`] run on rayon when the `parallel` feature
//! is enabled (the default) and sequentially otherwise.

pub mod cli;
pub mod covariance;
pub mod error;
pub mod factor;
pub mod harness;
pub mod ingest;
pub mod io;
pub mod par;
pub mod regularize;

pub use covariance::{sample_covariance, spectral_decompose, SampleCovariance, SpectralDecomposition};
pub use error::{CovError, Result};
pub use factor::{dense, invert, min_variance_weights, BlockDiagonalFcm, FactorModel, WoodburyInverse};
pub use harness::{
    bai_yin_check, generate_panel, grid_search_q, stability_experiment, BaiYinReport, Generator, Method,
    StabilityReport, SyntheticSpec,
};
pub use ingest::{demean, load_panel, DemeanedPanel, PanelFormat, ReturnsPanel};
pub use par::Execution;
pub use regularize::{
    constant_correlation_target, diagonal_target, estimate_rho, matched_factor_target,
    shrink_as_factor_model, shrink_dense, truncated_pc_model, verify_equivalence, RhoChoice,
    ShrinkageSpec, ShrunkFactorModel, TargetKind, TruncatedPcModel,
};
