//! The expectile (asymmetric squares) loss, its derivative and curvature
//! bounds, and sample expectiles.

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Expectile level `alpha` in (0, 1). `alpha = 0.5` recovers squared loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectileLevel(f64);

impl ExpectileLevel {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 0.0 && alpha < 1.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::Invalid(format!(
                "expectile level must lie in (0,1), got {alpha}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Lower curvature bound `c1 = min(alpha, 1 - alpha)`.
    pub fn c1(self) -> f64 {
        self.0.min(1.0 - self.0)
    }

    /// Upper curvature bound `c2 = max(alpha, 1 - alpha)`.
    pub fn c2(self) -> f64 {
        self.0.max(1.0 - self.0)
    }
}

/// Asymmetric squares loss: `alpha*r^2` for `r >= 0`, `(1-alpha)*r^2` below.
#[inline]
pub fn expectile_loss(r: f64, alpha: ExpectileLevel) -> f64 {
    let a = alpha.value();
    if r >= 0.0 {
        a * r * r
    } else {
        (1.0 - a) * r * r
    }
}

/// Derivative of the loss: `2*alpha*r` for `r >= 0`, `2*(1-alpha)*r` below.
#[inline]
pub fn expectile_grad(r: f64, alpha: ExpectileLevel) -> f64 {
    let a = alpha.value();
    if r >= 0.0 {
        2.0 * a * r
    } else {
        2.0 * (1.0 - a) * r
    }
}

/// Pointwise curvature weight `2*|alpha - 1(r<0)|`, used as the IRLS weight.
/// The second derivative does not exist at `r = 0`; we take the right limit
/// `2*alpha` there (any value in `2*[c1,c2]` yields the same fixed point).
#[inline]
pub fn curvature_weight(r: f64, alpha: ExpectileLevel) -> f64 {
    let a = alpha.value();
    if r >= 0.0 {
        2.0 * a
    } else {
        2.0 * (1.0 - a)
    }
}

/// The `alpha`-expectile of a sample: the unique `m` with
/// `sum_i psi_alpha(v_i - m) = 0`.
///
/// Solved by bisection on the strictly decreasing map
/// `m -> sum_i psi_alpha(v_i - m)`, bracketed by the sample range, to an
/// interval width of 1e-12.
pub fn sample_expectile(values: &[f64], alpha: ExpectileLevel) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Invalid("sample_expectile on empty input".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("sample_expectile on non-finite input".into()));
    }
    let mut lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(lo);
    }
    let score = |m: f64| values.iter().map(|&v| expectile_grad(v - m, alpha)).sum::<f64>();
    // score(lo) >= 0 >= score(hi); keep that bracket while halving it
    for _ in 0..200 {
        if hi - lo <= 1e-12 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if score(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Unpenalized empirical loss
/// `(1/n) * sum_i phi_alpha(y_i - x_i'beta - pi_i'xi)`.
pub fn empirical_loss(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    pi: &DMatrix<f64>,
    beta: &DVector<f64>,
    xi: &DVector<f64>,
    alpha: ExpectileLevel,
) -> Result<f64> {
    let n = y.len();
    if x.nrows() != n || pi.nrows() != n {
        return Err(Error::Dim(format!(
            "empirical_loss: y has {} rows, x has {}, pi has {}",
            n,
            x.nrows(),
            pi.nrows()
        )));
    }
    if x.ncols() != beta.len() || pi.ncols() != xi.len() {
        return Err(Error::Dim(format!(
            "empirical_loss: beta len {} vs x cols {}, xi len {} vs pi cols {}",
            beta.len(),
            x.ncols(),
            xi.len(),
            pi.ncols()
        )));
    }
    let fit = x * beta + pi * xi;
    let total: f64 = y
        .iter()
        .zip(fit.iter())
        .map(|(&yi, &fi)| expectile_loss(yi - fi, alpha))
        .sum();
    Ok(total / n as f64)
}
