//! Synthetic panels, Bai-Yin edge checks and train/test stability comparisons.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::covariance::{sample_covariance, spectral_decompose, SampleCovariance, SpectralDecomposition};
use crate::error::{CovError, Result};
use crate::factor::{min_variance_weights, FactorModel};
use crate::ingest::{demean, ReturnsPanel};
use crate::par::{map_range, Execution};
use crate::regularize::{
    shrink_as_factor_model, truncated_pc_model, RhoChoice, ShrinkageSpec, TargetKind,
};

/// Number of leading components compared in the overlap diagnostic.
const OVERLAP_COMPONENTS: usize = 5;

/// Data-generating process for synthetic panels.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// Independent standard normal returns; true covariance is the identity.
    IidUnit,
    /// `r_i = beta_i f + eps_i` with `Var f = factor_variance` and
    /// `Var eps_i = specific_variance[i]`.
    OneFactor {
        beta: Vec<f64>,
        factor_variance: f64,
        specific_variance: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticSpec {
    pub n_assets: usize,
    /// `M + 1`.
    pub n_obs: usize,
    pub generator: Generator,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn iid_unit(n_assets: usize, n_obs: usize, seed: u64) -> Self {
        Self {
            n_assets,
            n_obs,
            generator: Generator::IidUnit,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_assets < 2 {
            return Err(CovError::InvalidSpec(format!("n_assets = {} < 2", self.n_assets)));
        }
        if self.n_obs < 2 {
            return Err(CovError::InvalidSpec(format!("n_obs = {} < 2", self.n_obs)));
        }
        if let Generator::OneFactor {
            beta,
            factor_variance,
            specific_variance,
        } = &self.generator
        {
            if beta.len() != self.n_assets || specific_variance.len() != self.n_assets {
                return Err(CovError::InvalidSpec(
                    "beta and specific_variance must have one entry per asset".into(),
                ));
            }
            if !(*factor_variance >= 0.0 && factor_variance.is_finite()) {
                return Err(CovError::InvalidSpec("factor_variance must be >= 0".into()));
            }
            if specific_variance.iter().any(|v| !(*v >= 0.0 && v.is_finite()))
                || beta.iter().any(|b| !b.is_finite())
            {
                return Err(CovError::InvalidSpec(
                    "specific variances must be >= 0 and betas finite".into(),
                ));
            }
        }
        Ok(())
    }

    /// Covariance of the data-generating process.
    pub fn true_covariance(&self) -> DMatrix<f64> {
        match &self.generator {
            Generator::IidUnit => DMatrix::identity(self.n_assets, self.n_assets),
            Generator::OneFactor {
                beta,
                factor_variance,
                specific_variance,
            } => DMatrix::from_fn(self.n_assets, self.n_assets, |i, j| {
                let common = factor_variance * beta[i] * beta[j];
                if i == j {
                    common + specific_variance[i]
                } else {
                    common
                }
            }),
        }
    }
}

/// Per-run seed derived from a master seed (splitmix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn generate_panel(spec: &SyntheticSpec) -> Result<ReturnsPanel> {
    spec.validate()?;
    let (n, t) = (spec.n_assets, spec.n_obs);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut r = DMatrix::zeros(n, t);
    match &spec.generator {
        Generator::IidUnit => {
            for s in 0..t {
                for i in 0..n {
                    r[(i, s)] = draw();
                }
            }
        }
        Generator::OneFactor {
            beta,
            factor_variance,
            specific_variance,
        } => {
            let f_sd = factor_variance.sqrt();
            let e_sd: Vec<f64> = specific_variance.iter().map(|v| v.sqrt()).collect();
            for s in 0..t {
                let f = f_sd * draw();
                for i in 0..n {
                    r[(i, s)] = beta[i] * f + e_sd[i] * draw();
                }
            }
        }
    }
    ReturnsPanel::with_synthetic_ids(r)
}

/// Observed versus asymptotic extreme eigenvalues of a white-noise SCM.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaiYinReport {
    pub n: usize,
    pub m: usize,
    pub y: f64,
    pub lambda_min_limit: f64,
    pub lambda_max_limit: f64,
    /// Mean over trials of the smallest positive eigenvalue.
    pub observed_min: f64,
    /// Mean over trials of the largest eigenvalue.
    pub observed_max: f64,
    pub n_trials: usize,
    pub trial_min: Vec<f64>,
    pub trial_max: Vec<f64>,
}

impl BaiYinReport {
    pub fn limits(y: f64) -> (f64, f64) {
        let r = y.sqrt();
        ((1.0 - r).powi(2), (1.0 + r).powi(2))
    }

    pub fn relative_error_min(&self) -> f64 {
        relative_gap(self.observed_min, self.lambda_min_limit)
    }

    pub fn relative_error_max(&self) -> f64 {
        relative_gap(self.observed_max, self.lambda_max_limit)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "N = {}, M = {}, y = {:.6}, trials = {}", self.n, self.m, self.y, self.n_trials);
        let _ = writeln!(out, "{:<8} {:>14} {:>14} {:>12}", "edge", "limit", "observed", "rel.err");
        let _ = writeln!(
            out,
            "{:<8} {:>14.6} {:>14.6} {:>12.4e}",
            "min",
            self.lambda_min_limit,
            self.observed_min,
            self.relative_error_min()
        );
        let _ = writeln!(
            out,
            "{:<8} {:>14.6} {:>14.6} {:>12.4e}",
            "max",
            self.lambda_max_limit,
            self.observed_max,
            self.relative_error_max()
        );
        out
    }

    /// One row per trial: `trial,min,max`.
    pub fn to_trial_csv(&self) -> String {
        let mut out = String::from("trial,observed_min,observed_max\n");
        for (t, (lo, hi)) in self.trial_min.iter().zip(&self.trial_max).enumerate() {
            let _ = writeln!(out, "{t},{lo:e},{hi:e}");
        }
        out
    }
}

fn relative_gap(observed: f64, limit: f64) -> f64 {
    if limit == 0.0 {
        observed.abs()
    } else {
        (observed - limit).abs() / limit.abs()
    }
}

/// Monte Carlo check of the Bai-Yin edges for `N = n` assets and `M = m`
/// (panels carry `m + 1` observations so the demeaned SCM divides by `m`).
pub fn bai_yin_check(n: usize, m: usize, trials: usize, seed: u64) -> Result<BaiYinReport> {
    bai_yin_check_with(n, m, trials, seed, Execution::default())
}

pub fn bai_yin_check_with(
    n: usize,
    m: usize,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<BaiYinReport> {
    if n < 2 || m < 2 || trials < 1 {
        return Err(CovError::InvalidSpec(format!(
            "bai-yin check needs n, m >= 2 and trials >= 1 (got n={n}, m={m}, trials={trials})"
        )));
    }
    let edges = map_range(trials, exec, |t| -> Result<(f64, f64)> {
        let spec = SyntheticSpec::iid_unit(n, m + 1, derive_seed(seed, t as u64));
        let scm = sample_covariance(&demean(&generate_panel(&spec)?))?;
        let sd = spectral_decompose(&scm)?;
        let ev = sd.eigenvalues();
        Ok((ev[ev.len() - 1], ev[0]))
    });
    let edges = edges.into_iter().collect::<Result<Vec<_>>>()?;
    let trial_min: Vec<f64> = edges.iter().map(|e| e.0).collect();
    let trial_max: Vec<f64> = edges.iter().map(|e| e.1).collect();
    let y = n as f64 / m as f64;
    let (lambda_min_limit, lambda_max_limit) = BaiYinReport::limits(y);
    Ok(BaiYinReport {
        n,
        m,
        y,
        lambda_min_limit,
        lambda_max_limit,
        observed_min: trial_min.iter().sum::<f64>() / trials as f64,
        observed_max: trial_max.iter().sum::<f64>() / trials as f64,
        n_trials: trials,
        trial_min,
        trial_max,
    })
}

/// A covariance estimator compared by the stability experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// The training-segment SCM itself.
    RawScm,
    /// Near-raw SCM: shrinkage toward the diagonal with a small `q`.
    Ridge { q: f64 },
    Shrink { q: f64, target: TargetKind },
    TruncatedPc { f_hat: usize, target: TargetKind },
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::RawScm => "scm".to_string(),
            Method::Ridge { q } => format!("scm+ridge(q={q})"),
            Method::Shrink { q, target } => format!("shrink(q={q},{})", target.label()),
            Method::TruncatedPc { f_hat, target } => {
                format!("truncated(f_hat={f_hat},{})", target.label())
            }
        }
    }
}

/// Parses `diagonal`, `constcorr`, `constcorr:auto` or `constcorr:<rho>`.
impl FromStr for TargetKind {
    type Err = CovError;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.splitn(2, ':');
        match (parts.next().unwrap_or(""), parts.next()) {
            ("diagonal", None) => Ok(TargetKind::Diagonal),
            ("constcorr", None) | ("constcorr", Some("auto")) => {
                Ok(TargetKind::ConstantCorrelation(RhoChoice::Auto))
            }
            ("constcorr", Some(r)) => r
                .parse()
                .map(|rho| TargetKind::ConstantCorrelation(RhoChoice::Fixed(rho)))
                .map_err(|_| CovError::InvalidParameter(format!("bad rho '{r}'"))),
            _ => Err(CovError::InvalidParameter(format!("unknown target '{s}'"))),
        }
    }
}

/// Parses `scm`, `ridge:<q>`, `shrink:<q>[:<target>]`, `truncated:<f_hat>[:<target>]`.
impl FromStr for Method {
    type Err = CovError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || CovError::InvalidParameter(format!("bad method '{s}'"));
        let mut parts = s.splitn(3, ':');
        let name = parts.next().unwrap_or("");
        let arg = parts.next();
        let target = parts.next().map(str::parse).transpose()?.unwrap_or(TargetKind::Diagonal);
        match (name, arg) {
            ("scm", None) => Ok(Method::RawScm),
            ("ridge", Some(q)) => Ok(Method::Ridge {
                q: q.parse().map_err(|_| bad())?,
            }),
            ("shrink", Some(q)) => Ok(Method::Shrink {
                q: q.parse().map_err(|_| bad())?,
                target,
            }),
            ("truncated", Some(f)) => Ok(Method::TruncatedPc {
                f_hat: f.parse().map_err(|_| bad())?,
                target,
            }),
            _ => Err(bad()),
        }
    }
}

/// Result of one estimator in a stability experiment. Errors are
/// off-diagonal Frobenius distances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodRecord {
    pub method: String,
    /// Distance to the training-segment SCM.
    pub in_sample_error: f64,
    /// Distance to the test-segment SCM.
    pub out_of_sample_error: f64,
    /// Distance to the data-generating covariance, when known.
    pub truth_error: Option<f64>,
    pub invertible: bool,
    /// Variance of static training min-variance weights over the test segment.
    pub realized_variance: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub n_assets: usize,
    pub train_obs: usize,
    pub test_obs: usize,
    pub records: Vec<MethodRecord>,
    /// `|<V_train(a), V_test(a)>|` for the leading components; diagnostic only.
    pub component_overlap: Vec<f64>,
}

impl StabilityReport {
    pub fn record(&self, label: &str) -> Option<&MethodRecord> {
        self.records.iter().find(|r| r.method == label)
    }

    pub fn to_table(&self) -> String {
        let width = self.records.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "N = {}, train obs = {}, test obs = {}",
            self.n_assets, self.train_obs, self.test_obs
        );
        let _ = writeln!(
            out,
            "{:<width$} {:>14} {:>14} {:>14} {:>16}",
            "method", "in-sample", "out-of-sample", "vs-truth", "realized-var"
        );
        for r in &self.records {
            let truth = r.truth_error.map_or("-".to_string(), |e| format!("{e:.6e}"));
            let var = r
                .realized_variance
                .map_or("non-invertible".to_string(), |v| format!("{v:.6e}"));
            let _ = writeln!(
                out,
                "{:<width$} {:>14.6e} {:>14.6e} {:>14} {:>16}",
                r.method, r.in_sample_error, r.out_of_sample_error, truth, var
            );
        }
        if !self.component_overlap.is_empty() {
            let ov: Vec<String> = self.component_overlap.iter().map(|o| format!("{o:.4}")).collect();
            let _ = writeln!(out, "leading component overlap: {}", ov.join(" "));
        }
        out
    }

    /// One row per method.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,in_sample_error,out_of_sample_error,truth_error,invertible,realized_variance\n",
        );
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{},{},{}",
                r.method,
                r.in_sample_error,
                r.out_of_sample_error,
                r.truth_error.map_or(String::new(), |e| format!("{e:e}")),
                r.invertible,
                r.realized_variance.map_or(String::new(), |v| format!("{v:e}")),
            );
        }
        out
    }
}

/// Frobenius norm of the off-diagonal part of `a - b`.
pub fn off_diagonal_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut sum = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                sum += (a[(i, j)] - b[(i, j)]).powi(2);
            }
        }
    }
    sum.sqrt()
}

/// Training-segment quantities shared by every method.
struct Segment {
    scm: SampleCovariance,
    spectral: SpectralDecomposition,
}

impl Segment {
    fn new(panel: &ReturnsPanel) -> Result<Self> {
        let scm = sample_covariance(&demean(panel))?;
        let spectral = spectral_decompose(&scm)?;
        Ok(Self { scm, spectral })
    }
}

enum Estimate {
    Raw,
    Model(FactorModel),
}

fn estimate(train: &Segment, method: &Method) -> Result<(DMatrix<f64>, Estimate)> {
    let shrunk = |q: f64, target: TargetKind| -> Result<(DMatrix<f64>, Estimate)> {
        let spec = ShrinkageSpec::new(&train.scm, q, target.build(&train.scm)?)?;
        let model = shrink_as_factor_model(&train.spectral, &spec)?;
        Ok((model.dense(), Estimate::Model(model.base().clone())))
    };
    match *method {
        Method::RawScm => Ok((train.scm.matrix().clone(), Estimate::Raw)),
        Method::Ridge { q } => shrunk(q, TargetKind::Diagonal),
        Method::Shrink { q, target } => shrunk(q, target),
        Method::TruncatedPc { f_hat, target } => {
            let t = target.build(&train.scm)?;
            let model = truncated_pc_model(&train.scm, &train.spectral, &t, f_hat)?;
            Ok((model.dense(), Estimate::Model(model.base().clone())))
        }
    }
}

fn weights(train: &Segment, est: &Estimate) -> std::result::Result<DVector<f64>, String> {
    match est {
        Estimate::Raw => {
            let sd = &train.spectral;
            let n = sd.n_assets();
            if sd.n_positive() < n {
                return Err(format!("singular: rank {} < {}", sd.n_positive(), n));
            }
            let v = sd.components();
            let ones = DVector::repeat(n, 1.0);
            let proj = v.transpose() * &ones;
            let scaled = DVector::from_fn(n, |a, _| proj[a] / sd.eigenvalues()[a]);
            let raw = v * scaled;
            Ok(&raw / raw.sum())
        }
        Estimate::Model(m) => min_variance_weights(m).map_err(|e| e.to_string()),
    }
}

/// Options for [`stability_experiment_with`].
#[derive(Debug, Clone, Default)]
pub struct StabilityOptions {
    /// Data-generating covariance, reported when known.
    pub truth: Option<DMatrix<f64>>,
    pub exec: Execution,
}

/// Fits each method on the first `split` fraction of observations and scores
/// it against the remainder.
pub fn stability_experiment(
    panel: &ReturnsPanel,
    split: f64,
    methods: &[Method],
) -> Result<StabilityReport> {
    stability_experiment_with(panel, split, methods, &StabilityOptions::default())
}

pub fn split_point(n_obs: usize, split: f64) -> Result<usize> {
    if !(split > 0.0 && split < 1.0) {
        return Err(CovError::InvalidParameter(format!("split {split} is outside (0, 1)")));
    }
    let train = (split * n_obs as f64).floor() as usize;
    let test = n_obs - train;
    if train < 2 || test < 2 {
        return Err(CovError::SplitTooSmall { train, test });
    }
    Ok(train)
}

pub fn stability_experiment_with(
    panel: &ReturnsPanel,
    split: f64,
    methods: &[Method],
    options: &StabilityOptions,
) -> Result<StabilityReport> {
    let train_obs = split_point(panel.n_obs(), split)?;
    let test_obs = panel.n_obs() - train_obs;
    let train = Segment::new(&panel.window(0, train_obs)?)?;
    let test = Segment::new(&panel.window(train_obs, test_obs)?)?;

    let records = map_range(methods.len(), options.exec, |idx| -> Result<MethodRecord> {
        let method = &methods[idx];
        let (fit, est) = estimate(&train, method)?;
        let (realized_variance, note) = match weights(&train, &est) {
            Ok(w) => (Some((test.scm.matrix() * &w).dot(&w)), None),
            Err(why) => (None, Some(why)),
        };
        Ok(MethodRecord {
            method: method.label(),
            in_sample_error: off_diagonal_distance(&fit, train.scm.matrix()),
            out_of_sample_error: off_diagonal_distance(&fit, test.scm.matrix()),
            truth_error: options.truth.as_ref().map(|t| off_diagonal_distance(&fit, t)),
            invertible: realized_variance.is_some(),
            realized_variance,
            note,
        })
    });
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;

    let k = OVERLAP_COMPONENTS
        .min(train.spectral.n_positive())
        .min(test.spectral.n_positive());
    let component_overlap = (0..k)
        .map(|a| {
            train
                .spectral
                .components()
                .column(a)
                .dot(&test.spectral.components().column(a))
                .abs()
        })
        .collect();

    Ok(StabilityReport {
        n_assets: panel.n_assets(),
        train_obs,
        test_obs,
        records,
        component_overlap,
    })
}

/// Runs the stability experiment on `runs` synthetic panels whose seeds are
/// derived from `spec.seed`. Runs are independent and may execute in parallel.
pub fn monte_carlo_stability(
    spec: &SyntheticSpec,
    runs: usize,
    split: f64,
    methods: &[Method],
    exec: Execution,
) -> Result<Vec<StabilityReport>> {
    spec.validate()?;
    let truth = spec.true_covariance();
    let reports = map_range(runs, exec, |r| {
        let run_spec = spec.with_seed(derive_seed(spec.seed, r as u64));
        let panel = generate_panel(&run_spec)?;
        let options = StabilityOptions {
            truth: Some(truth.clone()),
            exec: Execution::Sequential,
        };
        stability_experiment_with(&panel, split, methods, &options)
    });
    reports.into_iter().collect()
}

/// Picks the grid value of `q` with the smallest out-of-sample off-diagonal
/// error; exact ties go to the larger `q`.
pub fn grid_search_q(panel: &ReturnsPanel, target: TargetKind, grid: &[f64], split: f64) -> Result<f64> {
    grid_search_q_with(panel, target, grid, split, Execution::default())
}

pub fn grid_search_q_with(
    panel: &ReturnsPanel,
    target: TargetKind,
    grid: &[f64],
    split: f64,
    exec: Execution,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(CovError::InvalidParameter("empty q grid".into()));
    }
    if let Some(&q) = grid.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(CovError::InvalidShrinkage(q));
    }
    let methods: Vec<Method> = grid.iter().map(|&q| Method::Shrink { q, target }).collect();
    let options = StabilityOptions { truth: None, exec };
    let report = stability_experiment_with(panel, split, &methods, &options)?;
    let mut best = (grid[0], report.records[0].out_of_sample_error);
    for (&q, rec) in grid.iter().zip(&report.records).skip(1) {
        let err = rec.out_of_sample_error;
        if err < best.1 || (err == best.1 && q > best.0) {
            best = (q, err);
        }
    }
    Ok(best.0)
}
