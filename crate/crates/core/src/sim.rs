//! Seeded synthetic-data generator, evaluation metrics, and the replication
//! harness producing mean(sd) summary tables per expectile level and method.
//!
//! The generator draws AR(1)-correlated Gaussian covariates, maps three of
//! them through the normal CDF (one rescaled linear covariate and the two
//! nonparametric covariates), and builds the response from four unit
//! coefficients plus `sin(2*pi*z1) + z2^3` and an error term that is optionally
//! scaled by the first covariate to induce variance heterogeneity.

use crate::loss::ExpectileLevel;
use crate::penalty::{PenaltyFamily, PenaltySpec, MCP_DEFAULT_B, SCAD_DEFAULT_A};
use crate::solver::{FitProblem, FitResult, SolverConfig};
use crate::spline::{DesignMatrix, SplineSpec};
use crate::tuning::{lambda_max, tune_by_validation, LambdaGrid};
use crate::{Dataset, Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Error distribution of the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorDist {
    Normal,
    T5,
}

/// One benchmark scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n: usize,
    pub p: usize,
    pub error_dist: ErrorDist,
    /// Multiply the error by `hetero_scale * x1`.
    pub heteroscedastic: bool,
    pub hetero_scale: f64,
    pub alphas: Vec<f64>,
    /// Penalized methods to compare (the oracle benchmark is always added).
    pub penalties: Vec<PenaltyFamily>,
    pub replications: usize,
    pub base_seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::Invalid(format!("scenario needs n >= 10, got {}", self.n)));
        }
        if self.p < 26 {
            return Err(Error::Invalid(format!(
                "the generator consumes covariate indices up to 26; p = {} is too small",
                self.p
            )));
        }
        if self.replications < 1 {
            return Err(Error::Invalid("need at least one replication".into()));
        }
        if self.alphas.is_empty() {
            return Err(Error::Invalid("need at least one expectile level".into()));
        }
        for &a in &self.alphas {
            ExpectileLevel::new(a)?;
        }
        if self.penalties.contains(&PenaltyFamily::None) {
            return Err(Error::Invalid("penalty list must name penalized methods".into()));
        }
        if !(self.hetero_scale.is_finite() && self.hetero_scale >= 0.0) {
            return Err(Error::Invalid("hetero_scale must be nonnegative".into()));
        }
        Ok(())
    }

    /// 0-based indices of the truly nonzero linear coefficients.
    pub fn true_active() -> [usize; 4] {
        [5, 11, 14, 19]
    }
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n: 300,
            p: 400,
            error_dist: ErrorDist::Normal,
            heteroscedastic: true,
            hetero_scale: 0.70,
            alphas: vec![0.1, 0.5, 0.9],
            penalties: vec![PenaltyFamily::Scad, PenaltyFamily::L1],
            replications: 50,
            base_seed: 20240001,
        }
    }
}

// --- standard normal CDF ----------------------------------------------------

// Rational approximations from W. J. Cody's CALERF (Algorithm 715);
// absolute error below 1e-15 over the real line. The coefficients carry
// the published digits.
#[allow(clippy::excessive_precision)]
const ERF_A: [f64; 5] = [
    3.16112374387056560e0,
    1.13864154151050156e2,
    3.77485237685302021e2,
    3.20937758913846947e3,
    1.85777706184603153e-1,
];
#[allow(clippy::excessive_precision)]
const ERF_B: [f64; 4] = [
    2.36012909523441209e1,
    2.44024637934444173e2,
    1.28261652607737228e3,
    2.84423683343917062e3,
];
#[allow(clippy::excessive_precision)]
const ERF_C: [f64; 9] = [
    5.64188496988670089e-1,
    8.88314979438837594e0,
    6.61191906371416295e1,
    2.98635138197400131e2,
    8.81952221241769090e2,
    1.71204761263407058e3,
    2.05107837782607147e3,
    1.23033935479799725e3,
    2.15311535474403846e-8,
];
#[allow(clippy::excessive_precision)]
const ERF_D: [f64; 8] = [
    1.57449261107098347e1,
    1.17693950891312499e2,
    5.37181101862009858e2,
    1.62138957456669019e3,
    3.29079923573345963e3,
    4.36261909014324716e3,
    3.43936767414372164e3,
    1.23033935480374942e3,
];
#[allow(clippy::excessive_precision)]
const ERF_P: [f64; 6] = [
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
];
#[allow(clippy::excessive_precision)]
const ERF_Q: [f64; 5] = [
    2.56852019228982242e0,
    1.87295284992346047e0,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
];
#[allow(clippy::excessive_precision)]
const ONE_OVER_SQRT_PI: f64 = 5.641_895_835_477_562_9e-1;

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    let ax = x.abs();
    let result = if ax <= 0.46875 {
        let y = ax * ax;
        let mut num = ERF_A[4] * y;
        let mut den = y;
        for i in 0..3 {
            num = (num + ERF_A[i]) * y;
            den = (den + ERF_B[i]) * y;
        }
        return 1.0 - x * (num + ERF_A[3]) / (den + ERF_B[3]);
    } else if ax <= 4.0 {
        let mut num = ERF_C[8] * ax;
        let mut den = ax;
        for i in 0..7 {
            num = (num + ERF_C[i]) * ax;
            den = (den + ERF_D[i]) * ax;
        }
        let frac = (num + ERF_C[7]) / (den + ERF_D[7]);
        scaled_exp(ax) * frac
    } else {
        let y = 1.0 / (ax * ax);
        let mut num = ERF_P[5] * y;
        let mut den = y;
        for i in 0..4 {
            num = (num + ERF_P[i]) * y;
            den = (den + ERF_Q[i]) * y;
        }
        let frac = y * (num + ERF_P[4]) / (den + ERF_Q[4]);
        scaled_exp(ax) * (ONE_OVER_SQRT_PI - frac) / ax
    };
    if x < 0.0 {
        2.0 - result
    } else {
        result
    }
}

// exp(-x^2) split to preserve accuracy for large x
fn scaled_exp(ax: f64) -> f64 {
    let ysq = (ax * 16.0).floor() / 16.0;
    let del = (ax - ysq) * (ax + ysq);
    (-ysq * ysq).exp() * (-del).exp()
}

/// Standard normal CDF via [`erfc`].
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

// --- seeded generation -------------------------------------------------------

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Decorrelated stream seed for (base, replication, purpose).
pub fn derive_seed(base: u64, rep: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(rep ^ splitmix64(stream)))
}

/// Draws one AR(1) Gaussian row with correlation `rho` by the recursion
/// `v_0 = e_0`, `v_k = rho*v_{k-1} + sqrt(1-rho^2)*e_k`; this applies the
/// closed-form Cholesky factor of the AR(1) covariance, so the row has
/// covariance `rho^{|i-j|}` exactly.
fn ar1_row(rng: &mut ChaCha8Rng, len: usize, rho: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), len);
    let scale = (1.0 - rho * rho).sqrt();
    let mut prev = 0.0;
    for (k, slot) in out.iter_mut().enumerate() {
        let e: f64 = StandardNormal.sample(rng);
        let v = if k == 0 { e } else { rho * prev + scale * e };
        *slot = v;
        prev = v;
    }
}

/// Generates the covariates: `x` is `n x p`, `z` is `n x 2`. Column 1 of `x`
/// is `sqrt(12) * Phi(v_1)` (unit standard deviation), `z` columns are
/// `Phi(v_25)` and `Phi(v_26)` of the underlying AR(1) row, and the remaining
/// raw coordinates fill the other `x` columns.
pub fn gen_covariates(n: usize, p: usize, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if p < 26 {
        return Err(Error::Invalid(format!("generator needs p >= 26, got {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, p);
    let mut z = DMatrix::zeros(n, 2);
    let mut row = vec![0.0; p + 2];
    let sqrt12 = 12.0f64.sqrt();
    for i in 0..n {
        ar1_row(&mut rng, p + 2, 0.5, &mut row);
        x[(i, 0)] = sqrt12 * normal_cdf(row[0]);
        for j in 1..24 {
            x[(i, j)] = row[j];
        }
        z[(i, 0)] = normal_cdf(row[24]);
        z[(i, 1)] = normal_cdf(row[25]);
        for j in 24..p {
            x[(i, j)] = row[j + 2];
        }
    }
    Ok((x, z))
}

/// Ground truth stored alongside a generated response.
#[derive(Debug, Clone)]
pub struct SimTruth {
    pub beta_star: DVector<f64>,
    /// Nonparametric signal `sin(2*pi*z1) + z2^3` per row.
    pub g0: DVector<f64>,
}

/// Generates the response for given covariates. Deterministic per seed.
pub fn gen_response(
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    scenario: &ScenarioSpec,
    seed: u64,
) -> Result<(DVector<f64>, SimTruth)> {
    let n = x.nrows();
    if z.nrows() != n || z.ncols() != 2 {
        return Err(Error::Dim("gen_response: z must be n x 2".into()));
    }
    if x.ncols() < 20 {
        return Err(Error::Dim("gen_response: x has too few columns".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t5 = StudentT::new(5.0).expect("valid dof");
    let mut beta_star = DVector::zeros(x.ncols());
    for &j in &ScenarioSpec::true_active() {
        beta_star[j] = 1.0;
    }
    let mut y = DVector::zeros(n);
    let mut g0 = DVector::zeros(n);
    for i in 0..n {
        let noise: f64 = match scenario.error_dist {
            ErrorDist::Normal => StandardNormal.sample(&mut rng),
            ErrorDist::T5 => t5.sample(&mut rng),
        };
        let eps = if scenario.heteroscedastic {
            scenario.hetero_scale * x[(i, 0)] * noise
        } else {
            noise
        };
        let g = (2.0 * std::f64::consts::PI * z[(i, 0)]).sin() + z[(i, 1)].powi(3);
        g0[i] = g;
        let linear: f64 = ScenarioSpec::true_active().iter().map(|&j| x[(i, j)]).sum();
        y[i] = linear + g + eps;
    }
    Ok((y, SimTruth { beta_star, g0 }))
}

// --- metrics ------------------------------------------------------------------

/// Per-replication evaluation of one fitted model. Selection fields are
/// absent for the oracle benchmark, whose support is imposed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepMetrics {
    pub rep: usize,
    pub ae: f64,
    pub se: f64,
    pub ade: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub all_actives: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub has_x1: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

/// Computes the per-replication criteria: total absolute coefficient error,
/// its Euclidean analog, the mean absolute deviation of the nonparametric
/// fit after aligning sample means, model size, and the selection flags.
pub fn compute_metrics(
    fit: &FitResult,
    truth: &SimTruth,
    rep: usize,
    lambda: Option<f64>,
) -> Result<RepMetrics> {
    if fit.beta.len() != truth.beta_star.len() || fit.g_hat.len() != truth.g0.len() {
        return Err(Error::Dim("compute_metrics: fit and truth dimensions differ".into()));
    }
    let diff = &fit.beta - &truth.beta_star;
    let ae = diff.iter().map(|d| d.abs()).sum();
    let se = diff.norm();
    let n = truth.g0.len() as f64;
    // the overall level is not separately identified with uncentered
    // covariates, so compare the deviations around each sample mean
    let ghat_mean = fit.g_hat.sum() / n;
    let g0_mean = truth.g0.sum() / n;
    let ade = fit
        .g_hat
        .iter()
        .zip(truth.g0.iter())
        .map(|(&gh, &g0)| ((gh - ghat_mean) - (g0 - g0_mean)).abs())
        .sum::<f64>()
        / n;
    let restricted = fit.support.is_some();
    let active = &fit.active_set;
    Ok(RepMetrics {
        rep,
        ae,
        se,
        ade,
        size: (!restricted).then_some(active.len()),
        all_actives: (!restricted)
            .then(|| ScenarioSpec::true_active().iter().all(|j| active.contains(j))),
        has_x1: (!restricted).then(|| active.contains(&0)),
        lambda,
    })
}

/// Aggregate of one method at one expectile level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub replications_ok: usize,
    pub failures: usize,
    pub ae_mean: f64,
    pub ae_sd: f64,
    pub se_mean: f64,
    pub se_sd: f64,
    pub ade_mean: f64,
    pub ade_sd: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size_sd: Option<f64>,
    /// Percentage of replications selecting every true active.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_pct: Option<f64>,
    /// Percentage of replications selecting the first covariate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1_pct: Option<f64>,
    pub per_rep: Vec<RepMetrics>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphaBlock {
    pub alpha: f64,
    pub methods: Vec<MethodSummary>,
}

/// Full report of one scenario run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub scenario: ScenarioSpec,
    pub options: SimOptions,
    pub blocks: Vec<AlphaBlock>,
}

/// Harness options: spline configuration, tuning grid, and the solver
/// tolerances used for the replication fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub spline: SplineSpec,
    pub grid_len: usize,
    pub grid_eps: f64,
    /// Tuning-set size as a multiple of `n`.
    pub tune_factor: usize,
    pub include_oracle: bool,
    pub max_outer: usize,
    pub tol_outer: f64,
    pub tol_inner: f64,
    pub scad_a: f64,
    pub mcp_b: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            spline: SplineSpec::default(),
            grid_len: crate::tuning::DEFAULT_GRID_LEN,
            grid_eps: crate::tuning::DEFAULT_GRID_EPS,
            tune_factor: 10,
            include_oracle: true,
            max_outer: 30,
            tol_outer: 1e-5,
            tol_inner: 1e-6,
            scad_a: SCAD_DEFAULT_A,
            mcp_b: MCP_DEFAULT_B,
        }
    }
}

pub fn method_name(family: PenaltyFamily) -> &'static str {
    match family {
        PenaltyFamily::Scad => "E-SCAD",
        PenaltyFamily::Mcp => "E-MCP",
        PenaltyFamily::L1 => "E-Lasso",
        PenaltyFamily::None => "Unpenalized",
    }
}

struct RepOutcome {
    cells: Vec<Vec<Option<RepMetrics>>>,
    failed: bool,
}

fn penalty_spec(family: PenaltyFamily, lambda: f64, opts: &SimOptions) -> Result<PenaltySpec> {
    let shape = match family {
        PenaltyFamily::Scad => opts.scad_a,
        PenaltyFamily::Mcp => opts.mcp_b,
        _ => 0.0,
    };
    PenaltySpec::new(family, lambda, shape)
}

fn run_replication(
    scenario: &ScenarioSpec,
    opts: &SimOptions,
    rep: usize,
) -> Result<Vec<Vec<Option<RepMetrics>>>> {
    let base = scenario.base_seed;
    let r = rep as u64;
    let (x, z) = gen_covariates(scenario.n, scenario.p, derive_seed(base, r, 0))?;
    let (y, truth) = gen_response(&x, &z, scenario, derive_seed(base, r, 1))?;
    let train = Dataset::new(y, x, z)?;
    let m = scenario.n * opts.tune_factor;
    let (xt, zt) = gen_covariates(m, scenario.p, derive_seed(base, r, 2))?;
    let (yt, _) = gen_response(&xt, &zt, scenario, derive_seed(base, r, 3))?;
    let tune = Dataset::new(yt, xt, zt)?;
    let design = DesignMatrix::build(&train.z, &opts.spline)?;

    let n_methods = scenario.penalties.len() + usize::from(opts.include_oracle);
    let mut cells: Vec<Vec<Option<RepMetrics>>> = vec![vec![None; n_methods]; scenario.alphas.len()];
    for (ai, &a) in scenario.alphas.iter().enumerate() {
        let alpha = ExpectileLevel::new(a)?;
        let lm = lambda_max(&train, &design, alpha)?;
        let grid = LambdaGrid::geometric(lm.max(1e-8), opts.grid_eps, opts.grid_len)?;
        for (mi, &family) in scenario.penalties.iter().enumerate() {
            let mut cfg = SolverConfig::new(alpha, penalty_spec(family, lm, opts)?);
            cfg.max_outer = opts.max_outer;
            cfg.tol_outer = opts.tol_outer;
            cfg.tol_inner = opts.tol_inner;
            let tuned = tune_by_validation(&train, &design, &tune, &grid, &cfg)?;
            cells[ai][mi] =
                Some(compute_metrics(&tuned.best_fit, &truth, rep, Some(tuned.best_lambda))?);
        }
        if opts.include_oracle {
            let problem = FitProblem::new(&train, &design)?;
            let fit = problem.oracle_fit(&ScenarioSpec::true_active(), alpha)?;
            cells[ai][scenario.penalties.len()] = Some(compute_metrics(&fit, &truth, rep, None)?);
        }
    }
    Ok(cells)
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Runs the scenario: per replication, fresh seeded data plus a tuning set,
/// each penalized method tuned on it, and the oracle benchmark; aggregates
/// mean(sd) per criterion. Individual replication failures are counted and
/// the run continues. Replications execute in parallel; aggregation is by
/// replication index, so output is deterministic.
pub fn run_experiment(scenario: &ScenarioSpec, opts: &SimOptions) -> Result<MetricsReport> {
    scenario.validate()?;
    let outcomes: Vec<RepOutcome> = (0..scenario.replications)
        .into_par_iter()
        .map(|rep| match run_replication(scenario, opts, rep) {
            Ok(cells) => RepOutcome { cells, failed: false },
            Err(_) => RepOutcome {
                cells: vec![
                    vec![None; scenario.penalties.len() + usize::from(opts.include_oracle)];
                    scenario.alphas.len()
                ],
                failed: true,
            },
        })
        .collect();

    let mut method_names: Vec<String> =
        scenario.penalties.iter().map(|&f| method_name(f).to_string()).collect();
    if opts.include_oracle {
        method_names.push("Oracle".to_string());
    }

    let mut blocks = Vec::with_capacity(scenario.alphas.len());
    for (ai, &alpha) in scenario.alphas.iter().enumerate() {
        let mut methods = Vec::with_capacity(method_names.len());
        for (mi, name) in method_names.iter().enumerate() {
            let per_rep: Vec<RepMetrics> =
                outcomes.iter().filter_map(|o| o.cells[ai][mi].clone()).collect();
            let failures = outcomes.iter().filter(|o| o.failed).count();
            let ok = per_rep.len();
            let (ae_mean, ae_sd) = mean_sd(&per_rep.iter().map(|m| m.ae).collect::<Vec<_>>());
            let (se_mean, se_sd) = mean_sd(&per_rep.iter().map(|m| m.se).collect::<Vec<_>>());
            let (ade_mean, ade_sd) = mean_sd(&per_rep.iter().map(|m| m.ade).collect::<Vec<_>>());
            let sizes: Vec<f64> =
                per_rep.iter().filter_map(|m| m.size.map(|s| s as f64)).collect();
            let selected: Vec<&RepMetrics> = per_rep.iter().filter(|m| m.size.is_some()).collect();
            let (size_mean, size_sd) = if sizes.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_sd(&sizes);
                (Some(m), Some(s))
            };
            let f_pct = (!selected.is_empty()).then(|| {
                100.0 * selected.iter().filter(|m| m.all_actives == Some(true)).count() as f64
                    / selected.len() as f64
            });
            let f1_pct = (!selected.is_empty()).then(|| {
                100.0 * selected.iter().filter(|m| m.has_x1 == Some(true)).count() as f64
                    / selected.len() as f64
            });
            methods.push(MethodSummary {
                method: name.clone(),
                replications_ok: ok,
                failures,
                ae_mean,
                ae_sd,
                se_mean,
                se_sd,
                ade_mean,
                ade_sd,
                size_mean,
                size_sd,
                f_pct,
                f1_pct,
                per_rep,
            });
        }
        blocks.push(AlphaBlock { alpha, methods });
    }
    Ok(MetricsReport {
        schema_version: 1,
        scenario: scenario.clone(),
        options: opts.clone(),
        blocks,
    })
}

/// Renders the report as an aligned plain-text table: criterion rows within
/// each expectile level, one method per column.
pub fn render_table(report: &MetricsReport) -> String {
    let mut out = String::new();
    let w = 16usize;
    let names: Vec<&str> = report
        .blocks
        .first()
        .map(|b| b.methods.iter().map(|m| m.method.as_str()).collect())
        .unwrap_or_default();
    out.push_str(&format!(
        "Scenario: n={}, p={}, errors={:?}{}, {} replications (seed {})\n",
        report.scenario.n,
        report.scenario.p,
        report.scenario.error_dist,
        if report.scenario.heteroscedastic {
            format!(", heteroscedastic (scale {})", report.scenario.hetero_scale)
        } else {
            ", homoscedastic".to_string()
        },
        report.scenario.replications,
        report.scenario.base_seed
    ));
    out.push_str(&format!("{:<14}", "Criteria"));
    for name in &names {
        out.push_str(&format!("{name:>w$}"));
    }
    out.push('\n');
    let fmt_pair = |m: f64, s: f64| format!("{m:.2}({s:.2})");
    for block in &report.blocks {
        out.push_str(&format!("alpha = {:.2}\n", block.alpha));
        for (label, which) in [("AE", 0usize), ("SE", 1), ("ADE", 2), ("Size", 3), ("F,F1", 4)] {
            out.push_str(&format!("  {label:<12}"));
            for m in &block.methods {
                let cell = match which {
                    0 => fmt_pair(m.ae_mean, m.ae_sd),
                    1 => fmt_pair(m.se_mean, m.se_sd),
                    2 => fmt_pair(m.ade_mean, m.ade_sd),
                    3 => match (m.size_mean, m.size_sd) {
                        (Some(mean), Some(sd)) => fmt_pair(mean, sd),
                        _ => "-".to_string(),
                    },
                    _ => match (m.f_pct, m.f1_pct) {
                        (Some(f), Some(f1)) => format!("{f:.0}, {f1:.0}"),
                        _ => "-".to_string(),
                    },
                };
                out.push_str(&format!("{cell:>w$}"));
            }
            out.push('\n');
        }
    }
    let failures: usize = report
        .blocks
        .iter()
        .flat_map(|b| b.methods.iter())
        .map(|m| m.failures)
        .max()
        .unwrap_or(0);
    if failures > 0 {
        out.push_str(&format!("({failures} replication(s) failed and were skipped)\n"));
    }
    out
}
