//! Penalized partially linear additive expectile regression.
//!
//! Fits models of the form `y = x'beta + mu + sum_j g_j(z_j) + eps`, where
//! `beta` is a sparse high-dimensional coefficient vector selected by a
//! folded-concave penalty (SCAD, MCP) or the L1 penalty, and each `g_j` is a
//! univariate smooth component expanded in a B-spline basis. Estimation
//! targets the conditional `alpha`-expectile of the response, so refitting at
//! several expectile levels exposes variance heterogeneity that mean
//! regression cannot see.
//!
//! The nonconvex problem is solved by a two-step scheme: exact minimization
//! over the spline coefficients given `beta`, then a weighted-L1 expectile
//! regression for `beta` where the weights come from a local linear
//! approximation of the penalty. See [`solver::two_step_fit`].

pub mod cli;
pub mod loss;
pub mod model;
pub mod penalty;
pub mod sim;
pub mod solver;
pub mod spline;
pub mod tuning;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Errors for model construction and fitting.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument or configuration value.
    #[error("invalid argument: {0}")]
    Invalid(String),

    /// Inconsistent dimensions between inputs.
    #[error("dimension mismatch: {0}")]
    Dim(String),

    /// A covariate column carries no information (all values equal).
    #[error("degenerate column {index}: all values equal")]
    DegenerateColumn { index: usize },

    /// An iterative solver ran out of iterations. Carries the last iterate
    /// and the optimality residual it reached.
    #[error("{context}: no convergence after {iters} iterations (residual {residual:.3e})")]
    NoConvergence {
        context: String,
        iters: usize,
        residual: f64,
        last: Vec<f64>,
    },

    /// IO or parse failure surfaced by the CLI layer.
    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Observed data: response `y`, linear covariates `x` (n x p) and
/// nonparametric covariates `z` (n x d).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

impl Dataset {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, z: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n || z.nrows() != n {
            return Err(Error::Dim(format!(
                "y has {} rows, x has {}, z has {}",
                n,
                x.nrows(),
                z.nrows()
            )));
        }
        if n == 0 {
            return Err(Error::Invalid("empty dataset".into()));
        }
        let finite = y.iter().chain(x.iter()).chain(z.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Invalid("non-finite value in dataset".into()));
        }
        Ok(Self { y, x, z })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn d(&self) -> usize {
        self.z.ncols()
    }
}
