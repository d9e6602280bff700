//! Python bindings: fit penalized partially linear additive expectile
//! regressions from numpy arrays, predict from the fitted object, and reach
//! the loss/penalty primitives and the benchmark harness.
//!
//! Build the importable module with
//! `cargo build --release -p plaer-py --features extension-module`
//! and expose `libplaer_py.so` on the Python path as `plaer_py.so`.

use numpy::{IntoPyArray, PyArray1, PyReadonlyArray1, PyReadonlyArray2};
use plaer::loss::ExpectileLevel;
use plaer::model::SavedModel;
use plaer::penalty::{PenaltyFamily, PenaltySpec};
use plaer::sim::{run_experiment, ErrorDist, ScenarioSpec, SimOptions};
use plaer::solver::{two_step_fit, SolverConfig};
use plaer::spline::{DesignMatrix, SplineSpec};
use plaer::tuning::{lambda_max, tune_by_cv, LambdaGrid};
use plaer::{Dataset, Error};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::NoConvergence { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix_from(arr: &PyReadonlyArray2<'_, f64>) -> nalgebra::DMatrix<f64> {
    let view = arr.as_array();
    nalgebra::DMatrix::from_fn(view.nrows(), view.ncols(), |i, j| view[(i, j)])
}

fn vector_from(arr: &PyReadonlyArray1<'_, f64>) -> nalgebra::DVector<f64> {
    let view = arr.as_array();
    nalgebra::DVector::from_fn(view.len(), |i, _| view[i])
}

fn penalty_from(name: &str, lambda: f64, scad_a: f64, mcp_b: f64) -> PyResult<PenaltySpec> {
    let spec = match name {
        "scad" => PenaltySpec::new(PenaltyFamily::Scad, lambda, scad_a),
        "mcp" => PenaltySpec::new(PenaltyFamily::Mcp, lambda, mcp_b),
        "l1" | "lasso" => PenaltySpec::new(PenaltyFamily::L1, lambda, 0.0),
        "none" => Ok(PenaltySpec::none()),
        other => Err(Error::Invalid(format!("unknown penalty '{other}' (scad|mcp|l1|none)"))),
    };
    spec.map_err(to_py_err)
}

/// A fitted model: sparse linear coefficients plus the additive components.
#[pyclass(name = "ExpectileFit")]
pub struct ExpectileFit {
    model: SavedModel,
    beta_full: Vec<f64>,
    active_set: Vec<usize>,
    outer_iters: usize,
    converged: bool,
    kkt_max_residual: f64,
    objective_trace: Vec<f64>,
}

#[pymethods]
impl ExpectileFit {
    /// Dense coefficient vector of the linear part.
    #[getter]
    fn beta<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<f64>> {
        self.beta_full.clone().into_pyarray(py)
    }

    /// Indices of the nonzero linear coefficients.
    #[getter]
    fn active_set(&self) -> Vec<usize> {
        self.active_set.clone()
    }

    #[getter]
    fn mu_hat(&self) -> f64 {
        self.model.mu_hat
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.model.alpha
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.model.penalty.lambda
    }

    #[getter]
    fn outer_iters(&self) -> usize {
        self.outer_iters
    }

    #[getter]
    fn converged(&self) -> bool {
        self.converged
    }

    #[getter]
    fn kkt_max_residual(&self) -> f64 {
        self.kkt_max_residual
    }

    #[getter]
    fn objective_trace(&self) -> Vec<f64> {
        self.objective_trace.clone()
    }

    /// Predicted conditional expectiles for new rows.
    fn predict<'py>(
        &self,
        py: Python<'py>,
        x: PyReadonlyArray2<'py, f64>,
        z: PyReadonlyArray2<'py, f64>,
    ) -> PyResult<Bound<'py, PyArray1<f64>>> {
        let x = x.as_array();
        let z = z.as_array();
        if x.nrows() != z.nrows() {
            return Err(PyValueError::new_err("x and z row counts differ"));
        }
        let mut out = Vec::with_capacity(x.nrows());
        for i in 0..x.nrows() {
            let xr: Vec<f64> = (0..x.ncols()).map(|j| x[(i, j)]).collect();
            let zr: Vec<f64> = (0..z.ncols()).map(|j| z[(i, j)]).collect();
            out.push(self.model.predict_row(&xr, &zr).map_err(to_py_err)?);
        }
        Ok(out.into_pyarray(py))
    }

    /// Centered additive component `g_j` evaluated at the given points.
    fn component<'py>(
        &self,
        py: Python<'py>,
        j: usize,
        z: PyReadonlyArray1<'py, f64>,
    ) -> PyResult<Bound<'py, PyArray1<f64>>> {
        if j >= self.model.components.len() {
            return Err(PyValueError::new_err(format!(
                "component index {j} out of range ({} components)",
                self.model.components.len()
            )));
        }
        let z = z.as_array();
        let vals: Vec<f64> = z.iter().map(|&t| self.model.component_value(j, t)).collect();
        Ok(vals.into_pyarray(py))
    }

    /// The portable model as a JSON string.
    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.model)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "ExpectileFit(alpha={}, lambda={}, active={}, converged={})",
            self.model.alpha,
            self.model.penalty.lambda,
            self.active_set.len(),
            self.converged
        )
    }
}

/// Fits the model. `lambda_` fixes the penalty level; `cv` selects it by
/// seeded k-fold cross-validation instead.
#[pyfunction]
#[pyo3(signature = (y, x, z, alpha=0.5, penalty="scad", lambda_=None, cv=None,
                    scad_a=3.7, mcp_b=1.0, spline_order=4, knots=0, seed=20240001))]
#[allow(clippy::too_many_arguments)]
fn fit(
    y: PyReadonlyArray1<'_, f64>,
    x: PyReadonlyArray2<'_, f64>,
    z: PyReadonlyArray2<'_, f64>,
    alpha: f64,
    penalty: &str,
    lambda_: Option<f64>,
    cv: Option<usize>,
    scad_a: f64,
    mcp_b: f64,
    spline_order: usize,
    knots: usize,
    seed: u64,
) -> PyResult<ExpectileFit> {
    let ds = Dataset::new(vector_from(&y), matrix_from(&x), matrix_from(&z)).map_err(to_py_err)?;
    let spline = SplineSpec { order: spline_order, internal_knots: knots, ..Default::default() };
    let design = DesignMatrix::build(&ds.z, &spline).map_err(to_py_err)?;
    let level = ExpectileLevel::new(alpha).map_err(to_py_err)?;

    let (fit, selected) = if penalty == "none" {
        let cfg = SolverConfig::new(level, PenaltySpec::none());
        (two_step_fit(&ds, &design, &cfg).map_err(to_py_err)?, None)
    } else if let Some(lam) = lambda_ {
        let cfg = SolverConfig::new(level, penalty_from(penalty, lam, scad_a, mcp_b)?);
        (two_step_fit(&ds, &design, &cfg).map_err(to_py_err)?, None)
    } else if let Some(k) = cv {
        let lm = lambda_max(&ds, &design, level).map_err(to_py_err)?;
        let grid = LambdaGrid::geometric(lm.max(1e-8), 0.01, 50).map_err(to_py_err)?;
        let cfg = SolverConfig::new(level, penalty_from(penalty, lm, scad_a, mcp_b)?);
        let cv_out = tune_by_cv(&ds, &spline, k, &grid, &cfg, seed).map_err(to_py_err)?;
        let mut final_cfg = cfg.clone();
        final_cfg.penalty = final_cfg.penalty.with_lambda(cv_out.best_lambda);
        (
            two_step_fit(&ds, &design, &final_cfg).map_err(to_py_err)?,
            Some(cv_out.best_lambda),
        )
    } else {
        return Err(PyValueError::new_err(
            "a penalized fit needs lambda_=<value> or cv=<folds>",
        ));
    };

    let p = ds.p();
    let x_names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
    let z_names: Vec<String> = (0..ds.d()).map(|j| format!("z{j}")).collect();
    let model = SavedModel::from_fit(&fit, &design, "y".into(), x_names, z_names, selected)
        .map_err(to_py_err)?;
    Ok(ExpectileFit {
        model,
        beta_full: fit.beta.iter().cloned().collect(),
        active_set: fit.active_set.clone(),
        outer_iters: fit.outer_iters,
        converged: fit.converged,
        kkt_max_residual: fit.kkt_max_residual,
        objective_trace: fit.objective_trace.clone(),
    })
}

/// Asymmetric squares loss `phi_alpha(r)`.
#[pyfunction]
fn expectile_loss(r: f64, alpha: f64) -> PyResult<f64> {
    let level = ExpectileLevel::new(alpha).map_err(to_py_err)?;
    Ok(plaer::loss::expectile_loss(r, level))
}

/// The alpha-expectile of a sample.
#[pyfunction]
fn sample_expectile(values: Vec<f64>, alpha: f64) -> PyResult<f64> {
    let level = ExpectileLevel::new(alpha).map_err(to_py_err)?;
    plaer::loss::sample_expectile(&values, level).map_err(to_py_err)
}

/// Penalty value `P_lambda(theta)`.
#[pyfunction]
#[pyo3(signature = (theta, penalty="scad", lambda_=1.0, scad_a=3.7, mcp_b=1.0))]
fn penalty_value(theta: f64, penalty: &str, lambda_: f64, scad_a: f64, mcp_b: f64) -> PyResult<f64> {
    let spec = penalty_from(penalty, lambda_, scad_a, mcp_b)?;
    Ok(plaer::penalty::penalty_value(theta, &spec))
}

/// Penalty derivative, with the right-limit convention at zero.
#[pyfunction]
#[pyo3(signature = (theta, penalty="scad", lambda_=1.0, scad_a=3.7, mcp_b=1.0))]
fn penalty_deriv(theta: f64, penalty: &str, lambda_: f64, scad_a: f64, mcp_b: f64) -> PyResult<f64> {
    let spec = penalty_from(penalty, lambda_, scad_a, mcp_b)?;
    Ok(plaer::penalty::penalty_deriv(theta, &spec))
}

/// Runs a seeded benchmark scenario; returns the report as a JSON string.
#[pyfunction]
#[pyo3(signature = (n=300, p=400, dist="normal", heteroscedastic=true, alphas=vec![0.5],
                    penalties=vec!["scad".to_string()], reps=5, seed=20240001, grid_len=50,
                    tune_factor=10))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    n: usize,
    p: usize,
    dist: &str,
    heteroscedastic: bool,
    alphas: Vec<f64>,
    penalties: Vec<String>,
    reps: usize,
    seed: u64,
    grid_len: usize,
    tune_factor: usize,
) -> PyResult<String> {
    let error_dist = match dist {
        "normal" => ErrorDist::Normal,
        "t5" => ErrorDist::T5,
        other => return Err(PyValueError::new_err(format!("unknown dist '{other}' (normal|t5)"))),
    };
    let families = penalties
        .iter()
        .map(|s| match s.as_str() {
            "scad" => Ok(PenaltyFamily::Scad),
            "mcp" => Ok(PenaltyFamily::Mcp),
            "l1" | "lasso" => Ok(PenaltyFamily::L1),
            other => Err(PyValueError::new_err(format!("unknown penalty '{other}'"))),
        })
        .collect::<PyResult<Vec<_>>>()?;
    let scenario = ScenarioSpec {
        n,
        p,
        error_dist,
        heteroscedastic,
        alphas,
        penalties: families,
        replications: reps,
        base_seed: seed,
        ..Default::default()
    };
    let opts = SimOptions { grid_len, tune_factor, ..Default::default() };
    let report = run_experiment(&scenario, &opts).map_err(to_py_err)?;
    serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn plaer_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ExpectileFit>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(expectile_loss, m)?)?;
    m.add_function(wrap_pyfunction!(sample_expectile, m)?)?;
    m.add_function(wrap_pyfunction!(penalty_value, m)?)?;
    m.add_function(wrap_pyfunction!(penalty_deriv, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
