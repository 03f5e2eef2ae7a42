//! Command-line front end. Every subcommand is a thin adapter over the
//! library; no numerical work happens here.

use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::covariance::{sample_covariance, spectral_decompose, SampleCovariance};
use crate::error::{CovError, Result};
use crate::harness::{bai_yin_check, grid_search_q, stability_experiment, Method};
use crate::ingest::{demean, load_panel, PanelFormat, ReturnsPanel};
use crate::io::{
    format_g12, matrix_to_csv, read_matrix_csv, to_json_string, MatrixJson, ShrunkModelJson,
    SpectralJson, TruncatedModelJson,
};
use crate::regularize::{
    shrink_as_factor_model, shrink_dense, truncated_pc_model, verify_equivalence, RhoChoice,
    ShrinkageSpec, TargetKind,
};

/// Environment variable capping harness parallelism.
pub const THREADS_ENV: &str = "COVREG_THREADS";

#[derive(Debug, Parser)]
#[command(name = "covreg", version, about = "Sample covariance, shrinkage and truncated-PC regularization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample covariance of a return panel.
    Scm(ScmArgs),
    /// Eigenvalues and principal components of the sample covariance.
    Spectral(SpectralArgs),
    /// Linear shrinkage toward a target, with its equivalent factor model.
    Shrink(ShrinkArgs),
    /// Truncated principal-component regularizer.
    Truncate(TruncateArgs),
    /// Train/test stability comparison of regularizers.
    Eval(EvalArgs),
    /// Monte Carlo check of the Bai-Yin eigenvalue edges.
    Baiyin(BaiYinArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatrixFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Table,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Diagonal,
    Constcorr,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Panel CSV (assets as rows), or `-` for stdin.
    #[arg(long, short)]
    pub input: PathBuf,
    /// The panel has no header row or id column.
    #[arg(long)]
    pub no_header: bool,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Destination file; stdout when omitted.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MatrixFormat::Csv)]
    pub format: MatrixFormat,
}

#[derive(Debug, Args)]
pub struct ScmArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SpectralArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Input is a headerless dense covariance CSV instead of a panel.
    #[arg(long)]
    pub scm_input: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct TargetArgs {
    #[arg(long, value_enum, default_value_t = TargetArg::Diagonal)]
    pub target: TargetArg,
    /// Uniform correlation for `constcorr`: a number in [0, 1) or `auto`.
    #[arg(long, default_value = "auto")]
    pub rho: String,
}

impl TargetArgs {
    fn kind(&self) -> Result<TargetKind> {
        match self.target {
            TargetArg::Diagonal => Ok(TargetKind::Diagonal),
            TargetArg::Constcorr if self.rho == "auto" => {
                Ok(TargetKind::ConstantCorrelation(RhoChoice::Auto))
            }
            TargetArg::Constcorr => {
                let rho: f64 = self
                    .rho
                    .parse()
                    .map_err(|_| CovError::InvalidParameter(format!("bad --rho '{}'", self.rho)))?;
                if !(0.0..1.0).contains(&rho) {
                    return Err(CovError::RhoOutOfRange(rho));
                }
                Ok(TargetKind::ConstantCorrelation(RhoChoice::Fixed(rho)))
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct ShrinkArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub scm_input: bool,
    /// Shrinkage constant in [0, 1].
    #[arg(long)]
    pub q: f64,
    #[command(flatten)]
    pub target: TargetArgs,
    /// Factor-model JSON destination. Defaults to `<output>.model.json`,
    /// or stdout after the dense matrix.
    #[arg(long)]
    pub model_output: Option<PathBuf>,
    /// Fail unless the factor form reproduces the dense shrunk matrix.
    #[arg(long)]
    pub verify: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct TruncateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub scm_input: bool,
    /// Number of principal components kept.
    #[arg(long)]
    pub f_hat: usize,
    #[command(flatten)]
    pub target: TargetArgs,
    #[arg(long)]
    pub model_output: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Fraction of observations used for estimation.
    #[arg(long, default_value_t = 0.5)]
    pub split: f64,
    /// Comma-separated methods: scm, ridge:<q>, shrink:<q>[:<target>], truncated:<f_hat>[:<target>].
    #[arg(long, default_value = "scm,ridge:0.01,shrink:0.5,truncated:1")]
    pub methods: String,
    /// Comma-separated q grid; when given, also reports the selected q.
    #[arg(long)]
    pub grid: Option<String>,
    /// Target used by the q grid search.
    #[arg(long, default_value = "diagonal")]
    pub grid_target: String,
    /// Per-method CSV rows.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct BaiYinArgs {
    /// Number of assets N.
    #[arg(long)]
    pub n: usize,
    /// Observations minus one, M.
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-trial CSV rows.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub format: ReportFormat,
}

fn open_input(path: &Path) -> Result<Box<dyn Read>> {
    if path.as_os_str() == "-" {
        Ok(Box::new(io::stdin()))
    } else {
        Ok(Box::new(BufReader::new(File::open(path)?)))
    }
}

fn read_panel(args: &InputArgs) -> Result<ReturnsPanel> {
    load_panel(
        open_input(&args.input)?,
        PanelFormat {
            has_header: !args.no_header,
        },
    )
}

fn read_scm(args: &InputArgs, scm_input: bool) -> Result<SampleCovariance> {
    if scm_input {
        SampleCovariance::from_matrix(read_matrix_csv(open_input(&args.input)?)?)
    } else {
        sample_covariance(&demean(&read_panel(args)?))
    }
}

fn emit(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn matrix_text(m: &nalgebra::DMatrix<f64>, scm: Option<&SampleCovariance>, format: MatrixFormat) -> Result<String> {
    match format {
        MatrixFormat::Csv => Ok(matrix_to_csv(m)),
        MatrixFormat::Json => {
            let mut j = MatrixJson::from_matrix(m);
            j.m = scm.and_then(SampleCovariance::n_obs_minus_one);
            to_json_string(&j)
        }
    }
}

/// Writes the model JSON next to the dense output, or after it on stdout.
fn emit_model(
    model_output: Option<&Path>,
    output: Option<&Path>,
    text: &str,
    stdout: &mut dyn Write,
) -> Result<()> {
    let sidecar = output.map(|p| {
        let mut s = p.as_os_str().to_owned();
        s.push(".model.json");
        PathBuf::from(s)
    });
    emit(model_output.or(sidecar.as_deref()), text, stdout)
}

fn check_q(q: f64) -> Result<()> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(CovError::InvalidShrinkage(q))
    }
}

fn check_split(split: f64) -> Result<()> {
    if split > 0.0 && split < 1.0 {
        Ok(())
    } else {
        Err(CovError::InvalidParameter(format!("split {split} is outside (0, 1)")))
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse()
                .map_err(|_| CovError::InvalidParameter(format!("bad {what} '{p}'")))
        })
        .collect()
}

/// Executes one subcommand, writing primary output to `stdout` unless a
/// file destination was given.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Scm(a) => {
            let scm = read_scm(&a.input, false)?;
            let text = matrix_text(scm.matrix(), Some(&scm), a.output.format)?;
            emit(a.output.output.as_deref(), &text, stdout)
        }
        Command::Spectral(a) => {
            let scm = read_scm(&a.input, a.scm_input)?;
            let sd = spectral_decompose(&scm)?;
            let text = match a.output.format {
                MatrixFormat::Json => to_json_string(&SpectralJson::from_spectral(&sd))?,
                MatrixFormat::Csv => {
                    // eigenvalue followed by its component, one per line
                    let mut out = String::new();
                    for (a, &l) in sd.eigenvalues().iter().enumerate() {
                        let mut cells = vec![format_g12(l)];
                        cells.extend(sd.components().column(a).iter().map(|&v| format_g12(v)));
                        out.push_str(&cells.join(","));
                        out.push('\n');
                    }
                    out
                }
            };
            emit(a.output.output.as_deref(), &text, stdout)
        }
        Command::Shrink(a) => {
            check_q(a.q)?;
            let kind = a.target.kind()?;
            let scm = read_scm(&a.input, a.scm_input)?;
            let spec = ShrinkageSpec::new(&scm, a.q, kind.build(&scm)?)?;
            let shrunk_dense = shrink_dense(&scm, &spec)?;
            let sd = spectral_decompose(&scm)?;
            let model = shrink_as_factor_model(&sd, &spec)?;
            if a.verify {
                verify_equivalence(&scm, &spec, &model)?;
            }
            let text = matrix_text(&shrunk_dense, None, a.output.format)?;
            emit(a.output.output.as_deref(), &text, stdout)?;
            let model_text = to_json_string(&ShrunkModelJson::from_shrunk(&model))?;
            emit_model(a.model_output.as_deref(), a.output.output.as_deref(), &model_text, stdout)
        }
        Command::Truncate(a) => {
            let kind = a.target.kind()?;
            let scm = read_scm(&a.input, a.scm_input)?;
            let sd = spectral_decompose(&scm)?;
            let model = truncated_pc_model(&scm, &sd, &kind.build(&scm)?, a.f_hat)?;
            let text = matrix_text(&model.dense(), None, a.output.format)?;
            emit(a.output.output.as_deref(), &text, stdout)?;
            let model_text = to_json_string(&TruncatedModelJson::from_truncated(&model))?;
            emit_model(a.model_output.as_deref(), a.output.output.as_deref(), &model_text, stdout)
        }
        Command::Eval(a) => {
            check_split(a.split)?;
            let methods: Vec<Method> = parse_list(&a.methods, "method")?;
            let grid: Option<Vec<f64>> = a.grid.as_deref().map(|g| parse_list(g, "grid value")).transpose()?;
            if let Some(g) = &grid {
                g.iter().try_for_each(|&q| check_q(q))?;
            }
            let grid_target: TargetKind = a.grid_target.parse()?;
            let panel = read_panel(&a.input)?;

            let report = stability_experiment(&panel, a.split, &methods)?;
            let selected = grid
                .map(|g| grid_search_q(&panel, grid_target, &g, a.split))
                .transpose()?;
            if let Some(path) = &a.csv {
                std::fs::write(path, report.to_csv())?;
            }
            let text = match a.format {
                ReportFormat::Json => to_json_string(&serde_json::json!({
                    "report": report,
                    "selected_q": selected,
                }))?,
                ReportFormat::Table => {
                    let mut t = report.to_table();
                    if let Some(q) = selected {
                        t.push_str(&format!("selected q: {q}\n"));
                    }
                    t
                }
            };
            emit(a.output.as_deref(), &text, stdout)
        }
        Command::Baiyin(a) => {
            let report = bai_yin_check(a.n, a.m, a.trials, a.seed)?;
            if let Some(path) = &a.csv {
                std::fs::write(path, report.to_trial_csv())?;
            }
            let text = match a.format {
                ReportFormat::Json => to_json_string(&report)?,
                ReportFormat::Table => report.to_table(),
            };
            emit(a.output.as_deref(), &text, stdout)
        }
    }
}

/// Thread cap from `COVREG_THREADS`, if set to a positive integer.
pub fn thread_cap_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&t| t > 0)
}
