//! Folded-concave penalties (SCAD, MCP), the L1 penalty, their derivatives,
//! and the difference-of-convex split `P(theta) = lambda*|theta| - H(theta)`.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Penalty family applied to the linear coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyFamily {
    Scad,
    Mcp,
    L1,
    None,
}

/// A penalty family with its tuning parameter `lambda` and shape parameter
/// (`a > 2` for SCAD, default 3.7; `b > 0` for MCP, default 1; unused
/// otherwise).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub family: PenaltyFamily,
    pub lambda: f64,
    pub shape: f64,
}

pub const SCAD_DEFAULT_A: f64 = 3.7;
pub const MCP_DEFAULT_B: f64 = 1.0;

impl PenaltySpec {
    pub fn new(family: PenaltyFamily, lambda: f64, shape: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Invalid(format!("lambda must be >= 0, got {lambda}")));
        }
        match family {
            PenaltyFamily::Scad if !(shape > 2.0) => {
                return Err(Error::Invalid(format!("SCAD requires a > 2, got {shape}")))
            }
            PenaltyFamily::Mcp if !(shape > 0.0) => {
                return Err(Error::Invalid(format!("MCP requires b > 0, got {shape}")))
            }
            _ => {}
        }
        Ok(Self { family, lambda, shape })
    }

    pub fn scad(lambda: f64) -> Result<Self> {
        Self::new(PenaltyFamily::Scad, lambda, SCAD_DEFAULT_A)
    }

    pub fn mcp(lambda: f64) -> Result<Self> {
        Self::new(PenaltyFamily::Mcp, lambda, MCP_DEFAULT_B)
    }

    pub fn l1(lambda: f64) -> Result<Self> {
        Self::new(PenaltyFamily::L1, lambda, 0.0)
    }

    pub fn none() -> Self {
        Self { family: PenaltyFamily::None, lambda: 0.0, shape: 0.0 }
    }

    /// Same family and shape, different `lambda`. Used along tuning paths.
    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }
}

/// Penalty value `P_lambda(|theta|)`; even, zero at zero, nondecreasing in
/// `|theta|`, constant past `a*lambda` (SCAD) resp. `b*lambda` (MCP).
pub fn penalty_value(theta: f64, spec: &PenaltySpec) -> f64 {
    let t = theta.abs();
    let lam = spec.lambda;
    match spec.family {
        PenaltyFamily::None => 0.0,
        PenaltyFamily::L1 => lam * t,
        PenaltyFamily::Scad => {
            let a = spec.shape;
            if t <= lam {
                lam * t
            } else if t <= a * lam {
                (a * lam * t - 0.5 * (t * t + lam * lam)) / (a - 1.0)
            } else {
                0.5 * (a + 1.0) * lam * lam
            }
        }
        PenaltyFamily::Mcp => {
            let b = spec.shape;
            if t < lam * b {
                lam * t - t * t / (2.0 * b)
            } else {
                0.5 * lam * lam * b
            }
        }
    }
}

/// Derivative of the penalty with respect to `|theta|`, extended to 0 by its
/// right limit `P'(0+) = lambda`. Always in `[0, lambda]`.
pub fn penalty_deriv_abs(t: f64, spec: &PenaltySpec) -> f64 {
    debug_assert!(t >= 0.0);
    let lam = spec.lambda;
    match spec.family {
        PenaltyFamily::None => 0.0,
        PenaltyFamily::L1 => lam,
        PenaltyFamily::Scad => {
            let a = spec.shape;
            if t <= lam {
                lam
            } else {
                (a * lam - t).max(0.0) / (a - 1.0)
            }
        }
        PenaltyFamily::Mcp => {
            let b = spec.shape;
            (lam - t / b).max(0.0)
        }
    }
}

/// Signed penalty derivative. At `theta = 0`, where the derivative is
/// set-valued, returns the right-limit magnitude `lambda`.
pub fn penalty_deriv(theta: f64, spec: &PenaltySpec) -> f64 {
    let mag = penalty_deriv_abs(theta.abs(), spec);
    if theta == 0.0 {
        mag
    } else {
        mag * theta.signum()
    }
}

/// Convex part `H_lambda(theta)` of the SCAD split
/// `P(theta) = lambda*|theta| - H_lambda(theta)`.
pub fn dc_h_value(theta: f64, lambda: f64, a: f64) -> f64 {
    let t = theta.abs();
    if t <= lambda {
        0.0
    } else if t <= a * lambda {
        (t * t - 2.0 * lambda * t + lambda * lambda) / (2.0 * (a - 1.0))
    } else {
        lambda * t - 0.5 * (a + 1.0) * lambda * lambda
    }
}

/// Derivative of [`dc_h_value`]; continuous everywhere, `H'(0) = 0`.
pub fn dc_h_deriv(theta: f64, lambda: f64, a: f64) -> f64 {
    let t = theta.abs();
    let mag = if t <= lambda {
        0.0
    } else if t <= a * lambda {
        (t - lambda) / (a - 1.0)
    } else {
        lambda
    };
    mag * theta.signum()
}

/// MCP analog of [`dc_h_value`].
pub fn dc_h_value_mcp(theta: f64, lambda: f64, b: f64) -> f64 {
    let t = theta.abs();
    if t <= lambda * b {
        t * t / (2.0 * b)
    } else {
        lambda * t - 0.5 * lambda * lambda * b
    }
}

/// MCP analog of [`dc_h_deriv`].
pub fn dc_h_deriv_mcp(theta: f64, lambda: f64, b: f64) -> f64 {
    let t = theta.abs();
    let mag = if t <= lambda * b { t / b } else { lambda };
    mag * theta.signum()
}

/// Local-linear-approximation weights `omega_j = P'_lambda(|beta_j|)`, with
/// the `P'(0+) = lambda` convention, so an all-zero start reduces the first
/// pass to a plain weighted-L1 (lasso-type) problem.
pub fn lla_weights(beta: &[f64], spec: &PenaltySpec) -> Vec<f64> {
    beta.iter().map(|&b| penalty_deriv_abs(b.abs(), spec)).collect()
}
