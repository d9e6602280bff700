//! Command-line front end: fit models on CSV data, predict from a saved fit,
//! run benchmark scenarios, and tune the penalty level.
//!
//! Exit codes: 0 on success, 2 on input/usage errors, 3 on solver failure.

use crate::loss::ExpectileLevel;
use crate::model::{SavedModel, SCHEMA_VERSION};
use crate::penalty::{PenaltyFamily, PenaltySpec, MCP_DEFAULT_B, SCAD_DEFAULT_A};
use crate::sim::{render_table, run_experiment, ErrorDist, ScenarioSpec, SimOptions};
use crate::solver::{two_step_fit, FitResult, SolverConfig};
use crate::spline::{DesignMatrix, KnotRule, SplineSpec};
use crate::tuning::{
    lambda_max, tune_by_cv, tune_by_validation, LambdaGrid, DEFAULT_GRID_EPS, DEFAULT_GRID_LEN,
};
use crate::{Dataset, Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Fixed default seed so runs without `--seed` stay reproducible.
pub const DEFAULT_SEED: u64 = 20240001;

#[derive(Debug, Parser)]
#[command(
    name = "plaer",
    about = "Penalized partially linear additive expectile regression",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model on CSV data and write the fit as JSON.
    Fit(FitArgs),
    /// Predict responses for CSV rows from a saved fit JSON.
    Predict(PredictArgs),
    /// Run a seeded benchmark scenario and report summary tables.
    Simulate(SimulateArgs),
    /// Select the penalty level on CSV data and report the loss curve.
    Tune(TuneArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PenaltyArg {
    Scad,
    Mcp,
    L1,
    None,
}

impl From<PenaltyArg> for PenaltyFamily {
    fn from(p: PenaltyArg) -> Self {
        match p {
            PenaltyArg::Scad => PenaltyFamily::Scad,
            PenaltyArg::Mcp => PenaltyFamily::Mcp,
            PenaltyArg::L1 => PenaltyFamily::L1,
            PenaltyArg::None => PenaltyFamily::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KnotRuleArg {
    Uniform,
    Quantile,
}

#[derive(Debug, Args)]
pub struct ModelFlags {
    /// Expectile level in (0,1).
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Penalty family for the linear coefficients.
    #[arg(long, value_enum, default_value_t = PenaltyArg::Scad)]
    pub penalty: PenaltyArg,
    /// Fixed penalty level; omit it to tune (see --tune).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// SCAD shape parameter.
    #[arg(long, default_value_t = SCAD_DEFAULT_A)]
    pub scad_a: f64,
    /// MCP shape parameter.
    #[arg(long, default_value_t = MCP_DEFAULT_B)]
    pub mcp_b: f64,
    /// B-spline order (degree + 1).
    #[arg(long, default_value_t = 4)]
    pub spline_order: usize,
    /// Number of internal knots per nonparametric covariate.
    #[arg(long, default_value_t = 0)]
    pub knots: usize,
    #[arg(long, value_enum, default_value_t = KnotRuleArg::Uniform)]
    pub knot_rule: KnotRuleArg,
}

impl ModelFlags {
    fn spline(&self) -> SplineSpec {
        SplineSpec {
            order: self.spline_order,
            internal_knots: self.knots,
            knot_rule: match self.knot_rule {
                KnotRuleArg::Uniform => KnotRule::Uniform,
                KnotRuleArg::Quantile => KnotRule::Quantile,
            },
        }
    }

    fn penalty_spec(&self, lambda: f64) -> Result<PenaltySpec> {
        let family: PenaltyFamily = self.penalty.into();
        let shape = match family {
            PenaltyFamily::Scad => self.scad_a,
            PenaltyFamily::Mcp => self.mcp_b,
            _ => 0.0,
        };
        if family == PenaltyFamily::None {
            Ok(PenaltySpec::none())
        } else {
            PenaltySpec::new(family, lambda, shape)
        }
    }
}

#[derive(Debug, Args)]
pub struct CsvColumns {
    /// Response column name.
    #[arg(long)]
    pub y_col: String,
    /// Comma-separated linear covariate column names.
    #[arg(long, value_delimiter = ',')]
    pub x_cols: Vec<String>,
    /// Comma-separated nonparametric covariate column names.
    #[arg(long, value_delimiter = ',')]
    pub z_cols: Vec<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input CSV with a header row.
    pub csv: PathBuf,
    #[command(flatten)]
    pub columns: CsvColumns,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Tuning mode when --lambda is absent: "holdout" (requires --tune-csv)
    /// or "cv:K".
    #[arg(long)]
    pub tune: Option<String>,
    /// Held-out tuning CSV for --tune holdout.
    #[arg(long)]
    pub tune_csv: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_GRID_LEN)]
    pub grid_len: usize,
    #[arg(long, default_value_t = DEFAULT_GRID_EPS)]
    pub grid_eps: f64,
    /// Seed for cross-validation fold assignment.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Output path for the fit JSON (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Fit JSON produced by `plaer fit`.
    pub fit_json: PathBuf,
    /// Input CSV with the model's covariate columns.
    pub csv: PathBuf,
    /// Output CSV of predictions (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario preset: table1-normal, table1-t5, table2-normal, table2-t5.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    /// Error distribution: normal or t5.
    #[arg(long)]
    pub dist: Option<String>,
    /// Homoscedastic errors (the default is heteroscedastic).
    #[arg(long, default_value_t = false)]
    pub homoscedastic: bool,
    #[arg(long)]
    pub hetero_scale: Option<f64>,
    /// Comma-separated expectile levels.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<f64>,
    /// Comma-separated penalized methods (scad, mcp, l1).
    #[arg(long, value_delimiter = ',')]
    pub penalties: Vec<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_GRID_LEN)]
    pub grid_len: usize,
    /// Tuning-set size as a multiple of n.
    #[arg(long, default_value_t = 10)]
    pub tune_factor: usize,
    /// Output path for the JSON report (stdout shows the text table).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional path for the text table.
    #[arg(long)]
    pub table_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    pub csv: PathBuf,
    #[command(flatten)]
    pub columns: CsvColumns,
    #[command(flatten)]
    pub model: ModelFlags,
    /// "holdout" (requires --tune-csv) or "cv:K" (default cv:5).
    #[arg(long, default_value = "cv:5")]
    pub tune: String,
    #[arg(long)]
    pub tune_csv: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_GRID_LEN)]
    pub grid_len: usize,
    #[arg(long, default_value_t = DEFAULT_GRID_EPS)]
    pub grid_eps: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

// --- CSV loading ---------------------------------------------------------------

struct CsvData {
    headers: Vec<String>,
    rows: Vec<Vec<f64>>, // aligned with headers; parsed strictly
}

fn load_csv(path: &Path) -> Result<CsvData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
    let headers: Vec<String> =
        reader.headers().map_err(|e| Error::Io(format!("bad header: {e}")))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Io(format!("row {}: {e}", i + 2)))?;
        let mut row = Vec::with_capacity(headers.len());
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Io(format!(
                    "row {}, column '{}': cannot parse '{}' as a number",
                    i + 2,
                    headers.get(j).map(String::as_str).unwrap_or("?"),
                    field
                ))
            })?;
            row.push(v);
        }
        if row.len() != headers.len() {
            return Err(Error::Io(format!("row {} has {} fields, expected {}", i + 2, row.len(), headers.len())));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Io(format!("{} holds no data rows", path.display())));
    }
    Ok(CsvData { headers, rows })
}

fn column_index(data: &CsvData, name: &str) -> Result<usize> {
    let hits: Vec<usize> = data
        .headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.as_str() == name)
        .map(|(i, _)| i)
        .collect();
    match hits.len() {
        0 => Err(Error::Io(format!("column '{name}' not found in CSV header"))),
        1 => Ok(hits[0]),
        _ => Err(Error::Io(format!("column '{name}' appears more than once"))),
    }
}

fn dataset_from_csv(data: &CsvData, cols: &CsvColumns) -> Result<Dataset> {
    if cols.x_cols.is_empty() {
        return Err(Error::Io("--x-cols must name at least one column".into()));
    }
    if cols.z_cols.is_empty() {
        return Err(Error::Io("--z-cols must name at least one column".into()));
    }
    let yi = column_index(data, &cols.y_col)?;
    let xi: Vec<usize> = cols.x_cols.iter().map(|c| column_index(data, c)).collect::<Result<_>>()?;
    let zi: Vec<usize> = cols.z_cols.iter().map(|c| column_index(data, c)).collect::<Result<_>>()?;
    let n = data.rows.len();
    let y = DVector::from_fn(n, |i, _| data.rows[i][yi]);
    let x = DMatrix::from_fn(n, xi.len(), |i, j| data.rows[i][xi[j]]);
    let z = DMatrix::from_fn(n, zi.len(), |i, j| data.rows[i][zi[j]]);
    Dataset::new(y, x, z)
}

fn write_output(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            std::io::stdout().flush().ok();
            Ok(())
        }
    }
}

// --- fit ------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct TuningEcho {
    pub mode: String,
    pub best_lambda: f64,
    /// `(lambda, loss)` pairs in grid order.
    pub losses: Vec<(f64, f64)>,
}

/// Fit JSON payload: the portable model plus diagnostics.
#[derive(Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub model: SavedModel,
    pub diagnostics: FitDiagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuningEcho>,
    /// In-sample fitted values, evaluated through the saved model.
    pub fitted: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub outer_iters: usize,
    pub converged: bool,
    pub kkt_max_residual: f64,
    pub objective_trace: Vec<f64>,
    pub active_count: usize,
    pub ridge_escalated: bool,
}

fn tune_mode(kind: &str) -> Result<TuneMode> {
    if kind == "holdout" {
        return Ok(TuneMode::Holdout);
    }
    if let Some(k) = kind.strip_prefix("cv:") {
        let k: usize = k
            .parse()
            .map_err(|_| Error::Io(format!("bad --tune value '{kind}': expected cv:K")))?;
        return Ok(TuneMode::Cv(k));
    }
    Err(Error::Io(format!("bad --tune value '{kind}': expected 'holdout' or 'cv:K'")))
}

enum TuneMode {
    Holdout,
    Cv(usize),
}

fn fit_with_args(args: &FitArgs) -> Result<FitReport> {
    let data = load_csv(&args.csv)?;
    let ds = dataset_from_csv(&data, &args.columns)?;
    let spline = args.model.spline();
    let design = DesignMatrix::build(&ds.z, &spline)?;
    let alpha = ExpectileLevel::new(args.model.alpha)?;

    let (fit, tuning): (FitResult, Option<TuningEcho>) = match (args.model.lambda, &args.tune) {
        (Some(lam), _) => {
            let cfg = SolverConfig::new(alpha, args.model.penalty_spec(lam)?);
            (two_step_fit(&ds, &design, &cfg)?, None)
        }
        (None, None) => {
            if args.model.penalty == PenaltyArg::None {
                let cfg = SolverConfig::new(alpha, PenaltySpec::none());
                (two_step_fit(&ds, &design, &cfg)?, None)
            } else {
                return Err(Error::Io(
                    "a penalized fit needs --lambda or --tune {holdout,cv:K}".into(),
                ));
            }
        }
        (None, Some(kind)) => {
            if args.model.penalty == PenaltyArg::None {
                return Err(Error::Io("--tune needs a penalized model".into()));
            }
            let lm = lambda_max(&ds, &design, alpha)?;
            let grid = LambdaGrid::geometric(lm.max(1e-8), args.grid_eps, args.grid_len)?;
            let cfg = SolverConfig::new(alpha, args.model.penalty_spec(lm)?);
            match tune_mode(kind)? {
                TuneMode::Holdout => {
                    let tune_path = args.tune_csv.as_ref().ok_or_else(|| {
                        Error::Io("--tune holdout requires --tune-csv <file>".into())
                    })?;
                    let tune_data = load_csv(tune_path)?;
                    let tune_ds = dataset_from_csv(&tune_data, &args.columns)?;
                    let out = tune_by_validation(&ds, &design, &tune_ds, &grid, &cfg)?;
                    let echo = TuningEcho {
                        mode: "holdout".into(),
                        best_lambda: out.best_lambda,
                        losses: out.losses,
                    };
                    (out.best_fit, Some(echo))
                }
                TuneMode::Cv(k) => {
                    let cv = tune_by_cv(&ds, &spline, k, &grid, &cfg, args.seed)?;
                    let mut final_cfg = cfg.clone();
                    final_cfg.penalty = final_cfg.penalty.with_lambda(cv.best_lambda);
                    let fit = two_step_fit(&ds, &design, &final_cfg)?;
                    let echo = TuningEcho {
                        mode: format!("cv:{k}"),
                        best_lambda: cv.best_lambda,
                        losses: cv.mean_losses,
                    };
                    (fit, Some(echo))
                }
            }
        }
    };

    let lambda_selected = tuning.as_ref().map(|t| t.best_lambda);
    let model = SavedModel::from_fit(
        &fit,
        &design,
        args.columns.y_col.clone(),
        args.columns.x_cols.clone(),
        args.columns.z_cols.clone(),
        lambda_selected,
    )?;
    // fitted values through the saved-model path so that predict on the
    // training rows reproduces them bit for bit
    let mut fitted = Vec::with_capacity(ds.n());
    for i in 0..ds.n() {
        let xr: Vec<f64> = (0..ds.p()).map(|j| ds.x[(i, j)]).collect();
        let zr: Vec<f64> = (0..ds.d()).map(|j| ds.z[(i, j)]).collect();
        fitted.push(model.predict_row(&xr, &zr)?);
    }
    Ok(FitReport {
        schema_version: SCHEMA_VERSION,
        diagnostics: FitDiagnostics {
            outer_iters: fit.outer_iters,
            converged: fit.converged,
            kkt_max_residual: fit.kkt_max_residual,
            objective_trace: fit.objective_trace.clone(),
            active_count: fit.active_set.len(),
            ridge_escalated: fit.ridge_escalated,
        },
        model,
        tuning,
        fitted,
    })
}

pub fn cmd_fit(args: &FitArgs) -> Result<()> {
    let report = fit_with_args(args)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Io(format!("serialization failed: {e}")))?;
    write_output(&args.out, &format!("{json}\n"))
}

// --- predict ----------------------------------------------------------------------

pub fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let raw = std::fs::read_to_string(&args.fit_json)
        .map_err(|e| Error::Io(format!("cannot read {}: {e}", args.fit_json.display())))?;
    let report: FitReport = serde_json::from_str(&raw)
        .map_err(|e| Error::Io(format!("bad fit JSON {}: {e}", args.fit_json.display())))?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(Error::Io(format!(
            "fit JSON schema version {} is not supported (expected {})",
            report.schema_version, SCHEMA_VERSION
        )));
    }
    let model = &report.model;
    let data = load_csv(&args.csv)?;
    let xi: Vec<usize> =
        model.x_columns.iter().map(|c| column_index(&data, c)).collect::<Result<_>>()?;
    let zi: Vec<usize> =
        model.z_columns.iter().map(|c| column_index(&data, c)).collect::<Result<_>>()?;
    let mut out = String::from("prediction\n");
    let mut clamped = 0usize;
    for row in &data.rows {
        let xr: Vec<f64> = xi.iter().map(|&j| row[j]).collect();
        let zr: Vec<f64> = zi.iter().map(|&j| row[j]).collect();
        if model.z_out_of_range(&zr) {
            clamped += 1;
        }
        let pred = model.predict_row(&xr, &zr)?;
        let mut buf = ryu_format(pred);
        buf.push('\n');
        out.push_str(&buf);
    }
    if clamped > 0 {
        eprintln!(
            "warning: {clamped} row(s) had nonparametric covariates outside the training range; values were clamped"
        );
    }
    write_output(&args.out, &out)
}

// serde_json's float formatting, reused so CSV output round-trips exactly
fn ryu_format(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| format!("{v}"))
}

// --- simulate ---------------------------------------------------------------------

fn parse_dist(s: &str) -> Result<ErrorDist> {
    match s {
        "normal" => Ok(ErrorDist::Normal),
        "t5" => Ok(ErrorDist::T5),
        other => Err(Error::Io(format!("unknown error distribution '{other}' (normal|t5)"))),
    }
}

fn parse_penalty_name(s: &str) -> Result<PenaltyFamily> {
    match s {
        "scad" => Ok(PenaltyFamily::Scad),
        "mcp" => Ok(PenaltyFamily::Mcp),
        "l1" | "lasso" => Ok(PenaltyFamily::L1),
        other => Err(Error::Io(format!("unknown penalty '{other}' (scad|mcp|l1)"))),
    }
}

fn scenario_from_args(args: &SimulateArgs) -> Result<(ScenarioSpec, SimOptions)> {
    let mut scenario = ScenarioSpec { base_seed: args.seed, ..Default::default() };
    if let Some(preset) = &args.preset {
        match preset.as_str() {
            "table1-normal" => {
                scenario.p = 400;
                scenario.error_dist = ErrorDist::Normal;
            }
            "table1-t5" => {
                scenario.p = 400;
                scenario.error_dist = ErrorDist::T5;
            }
            "table2-normal" => {
                scenario.p = 600;
                scenario.error_dist = ErrorDist::Normal;
            }
            "table2-t5" => {
                scenario.p = 600;
                scenario.error_dist = ErrorDist::T5;
            }
            other => {
                return Err(Error::Io(format!(
                    "unknown preset '{other}' (table1-normal|table1-t5|table2-normal|table2-t5)"
                )))
            }
        }
    }
    if let Some(n) = args.n {
        scenario.n = n;
    }
    if let Some(p) = args.p {
        scenario.p = p;
    }
    if let Some(dist) = &args.dist {
        scenario.error_dist = parse_dist(dist)?;
    }
    if args.homoscedastic {
        scenario.heteroscedastic = false;
    }
    if let Some(s) = args.hetero_scale {
        scenario.hetero_scale = s;
    }
    if !args.alpha.is_empty() {
        scenario.alphas = args.alpha.clone();
    }
    if !args.penalties.is_empty() {
        scenario.penalties = args
            .penalties
            .iter()
            .map(|s| parse_penalty_name(s))
            .collect::<Result<_>>()?;
    }
    if let Some(r) = args.reps {
        scenario.replications = r;
    }
    let opts = SimOptions {
        grid_len: args.grid_len,
        tune_factor: args.tune_factor,
        ..Default::default()
    };
    Ok((scenario, opts))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let (scenario, opts) = scenario_from_args(args)?;
    let report = run_experiment(&scenario, &opts)?;
    let table = render_table(&report);
    if let Some(path) = &args.table_out {
        std::fs::write(path, &table)
            .map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Io(format!("serialization failed: {e}")))?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, format!("{json}\n"))
                .map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))?;
            print!("{table}");
        }
        None => {
            print!("{table}");
            println!("{json}");
        }
    }
    std::io::stdout().flush().ok();
    Ok(())
}

// --- tune -------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct TuneReport {
    pub schema_version: u32,
    pub mode: String,
    pub alpha: f64,
    pub penalty: PenaltySpec,
    pub best_lambda: f64,
    pub losses: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fold_losses: Option<Vec<Vec<f64>>>,
}

pub fn cmd_tune(args: &TuneArgs) -> Result<()> {
    if args.model.penalty == PenaltyArg::None {
        return Err(Error::Io("--tune needs a penalized model".into()));
    }
    let data = load_csv(&args.csv)?;
    let ds = dataset_from_csv(&data, &args.columns)?;
    let spline = args.model.spline();
    let design = DesignMatrix::build(&ds.z, &spline)?;
    let alpha = ExpectileLevel::new(args.model.alpha)?;
    let lm = lambda_max(&ds, &design, alpha)?;
    let grid = LambdaGrid::geometric(lm.max(1e-8), args.grid_eps, args.grid_len)?;
    let cfg = SolverConfig::new(alpha, args.model.penalty_spec(lm)?);
    let report = match tune_mode(&args.tune)? {
        TuneMode::Holdout => {
            let tune_path = args
                .tune_csv
                .as_ref()
                .ok_or_else(|| Error::Io("--tune holdout requires --tune-csv <file>".into()))?;
            let tune_data = load_csv(tune_path)?;
            let tune_ds = dataset_from_csv(&tune_data, &args.columns)?;
            let out = tune_by_validation(&ds, &design, &tune_ds, &grid, &cfg)?;
            TuneReport {
                schema_version: SCHEMA_VERSION,
                mode: "holdout".into(),
                alpha: args.model.alpha,
                penalty: cfg.penalty.with_lambda(out.best_lambda),
                best_lambda: out.best_lambda,
                losses: out.losses,
                fold_losses: None,
            }
        }
        TuneMode::Cv(k) => {
            let cv = tune_by_cv(&ds, &spline, k, &grid, &cfg, args.seed)?;
            TuneReport {
                schema_version: SCHEMA_VERSION,
                mode: format!("cv:{k}"),
                alpha: args.model.alpha,
                penalty: cfg.penalty.with_lambda(cv.best_lambda),
                best_lambda: cv.best_lambda,
                losses: cv.mean_losses,
                fold_losses: Some(cv.fold_losses),
            }
        }
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Io(format!("serialization failed: {e}")))?;
    write_output(&args.out, &format!("{json}\n"))
}

// --- entry point ------------------------------------------------------------------

/// Exit code for an error: input problems are 2, solver failures are 3.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::NoConvergence { .. } => 3,
        _ => 2,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Tune(args) => cmd_tune(args),
    }
}

/// Parses arguments, runs, prints errors to stderr, and returns the process
/// exit code.
pub fn main_impl() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
