//! Normalized B-spline bases for the nonparametric covariates, assembly of
//! the design matrix with a global intercept, and the post-fit centering of
//! the additive components.

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Placement rule for internal knots on the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnotRule {
    /// Equally spaced internal knots.
    Uniform,
    /// Internal knots at empirical quantiles of the training values.
    Quantile,
}

/// Per-covariate B-spline configuration.
///
/// `order` is polynomial degree plus one; the default `order = 4` with no
/// internal knots gives each component 3 effective basis functions after the
/// identifiability drop (the full normalized basis sums to one and is
/// collinear with the global intercept, so the first basis function of every
/// covariate block is dropped).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplineSpec {
    pub order: usize,
    pub internal_knots: usize,
    pub knot_rule: KnotRule,
}

impl Default for SplineSpec {
    fn default() -> Self {
        Self { order: 4, internal_knots: 0, knot_rule: KnotRule::Uniform }
    }
}

impl SplineSpec {
    pub fn validate(&self) -> Result<()> {
        if self.order < 2 {
            return Err(Error::Invalid(format!("spline order must be >= 2, got {}", self.order)));
        }
        Ok(())
    }

    /// Raw basis count per covariate before the identifiability drop.
    pub fn raw_basis_count(&self) -> usize {
        self.internal_knots + self.order
    }

    /// Effective basis count per covariate after dropping one function.
    pub fn effective_basis_count(&self) -> usize {
        self.raw_basis_count() - 1
    }
}

/// Empirical quantile with linear interpolation between order statistics.
fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    let pos = prob * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Builds a clamped knot vector on `[0, 1]`: `order` repeated boundary knots
/// on each side and `internal_knots` interior knots placed by the rule.
/// `t_col` holds the covariate values already mapped onto `[0, 1]`.
pub fn make_knots(t_col: &[f64], spec: &SplineSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let k = spec.internal_knots;
    let mut knots = Vec::with_capacity(2 * spec.order + k);
    knots.extend(std::iter::repeat_n(0.0, spec.order));
    match spec.knot_rule {
        KnotRule::Uniform => {
            for i in 1..=k {
                knots.push(i as f64 / (k + 1) as f64);
            }
        }
        KnotRule::Quantile => {
            if k > 0 {
                let mut sorted = t_col.to_vec();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for i in 1..=k {
                    knots.push(quantile_sorted(&sorted, i as f64 / (k + 1) as f64));
                }
            }
        }
    }
    knots.extend(std::iter::repeat_n(1.0, spec.order));
    debug_assert!(knots.windows(2).all(|w| w[0] <= w[1]));
    Ok(knots)
}

/// Knot span index for `t`, i.e. the largest `i` with `knots[i] <= t` among
/// spans of nonzero length.
fn find_span(t: f64, knots: &[f64], order: usize, n_basis: usize) -> usize {
    let degree = order - 1;
    if t >= knots[n_basis] {
        return n_basis - 1;
    }
    if t <= knots[degree] {
        return degree;
    }
    let mut lo = degree;
    let mut hi = n_basis;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if t < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Evaluates all raw normalized B-spline basis functions at `t` (clamped to
/// `[0, 1]`) by the Cox-de Boor recursion. The returned vector has length
/// `knots.len() - order`; entries are nonnegative, sum to one, and at most
/// `order` of them are nonzero.
pub fn basis_eval(t: f64, knots: &[f64], order: usize) -> Vec<f64> {
    let n_basis = knots.len() - order;
    let degree = order - 1;
    let t = t.clamp(knots[0], knots[knots.len() - 1]);
    let span = find_span(t, knots, order, n_basis);

    // triangular scheme: after step j, vals[0..=j] hold the degree-j values
    let mut vals = vec![0.0; order];
    let mut left = vec![0.0; order];
    let mut right = vec![0.0; order];
    vals[0] = 1.0;
    for j in 1..=degree {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = vals[r] / (right[r + 1] + left[j - r]);
            vals[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        vals[j] = saved;
    }

    let mut out = vec![0.0; n_basis];
    out[span - degree..=span].copy_from_slice(&vals);
    out
}

/// Affine map of a covariate's observed training range onto `[0, 1]`.
/// Out-of-range values at prediction time are clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeTransform {
    pub lo: f64,
    pub hi: f64,
}

impl RangeTransform {
    pub fn apply(&self, z: f64) -> f64 {
        ((z - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }

    /// True when `z` falls outside the training range.
    pub fn out_of_range(&self, z: f64) -> bool {
        z < self.lo || z > self.hi
    }
}

/// One covariate's basis: its knot vector, order, and domain transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateBasis {
    pub knots: Vec<f64>,
    pub order: usize,
    pub transform: RangeTransform,
}

impl CovariateBasis {
    fn from_column(col: &[f64], index: usize, spec: &SplineSpec) -> Result<Self> {
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return Err(Error::DegenerateColumn { index });
        }
        let transform = RangeTransform { lo, hi };
        let transformed: Vec<f64> = col.iter().map(|&z| transform.apply(z)).collect();
        let knots = make_knots(&transformed, spec)?;
        Ok(Self { knots, order: spec.order, transform })
    }

    /// Raw basis values at a covariate value on the original scale.
    pub fn eval_raw(&self, z: f64) -> Vec<f64> {
        basis_eval(self.transform.apply(z), &self.knots, self.order)
    }

    /// Basis values with the first function dropped for identifiability.
    pub fn eval(&self, z: f64) -> Vec<f64> {
        let mut raw = self.eval_raw(z);
        raw.remove(0);
        raw
    }
}

/// The assembled `n x D_n` spline design matrix: a leading all-ones intercept
/// column followed by one dropped-basis block per nonparametric covariate.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub pi: DMatrix<f64>,
    pub bases: Vec<CovariateBasis>,
    j_eff: usize,
}

impl DesignMatrix {
    /// Builds the design from the raw `n x d` nonparametric covariate matrix.
    pub fn build(z: &DMatrix<f64>, spec: &SplineSpec) -> Result<Self> {
        spec.validate()?;
        let (n, d) = (z.nrows(), z.ncols());
        if d == 0 {
            return Err(Error::Invalid("need at least one nonparametric covariate".into()));
        }
        if n < 2 {
            return Err(Error::Invalid("need at least two rows to place knots".into()));
        }
        let j_eff = spec.effective_basis_count();
        let dn = 1 + d * j_eff;
        let mut bases = Vec::with_capacity(d);
        let mut pi = DMatrix::zeros(n, dn);
        for i in 0..n {
            pi[(i, 0)] = 1.0;
        }
        for j in 0..d {
            let col: Vec<f64> = (0..n).map(|i| z[(i, j)]).collect();
            let basis = CovariateBasis::from_column(&col, j, spec)?;
            for i in 0..n {
                let vals = basis.eval(col[i]);
                for (k, v) in vals.iter().enumerate() {
                    pi[(i, 1 + j * j_eff + k)] = *v;
                }
            }
            bases.push(basis);
        }
        Ok(Self { pi, bases, j_eff })
    }

    pub fn n(&self) -> usize {
        self.pi.nrows()
    }

    pub fn d(&self) -> usize {
        self.bases.len()
    }

    /// Total column count `D_n = 1 + d * J`.
    pub fn dn(&self) -> usize {
        self.pi.ncols()
    }

    /// Effective basis functions per covariate.
    pub fn j_effective(&self) -> usize {
        self.j_eff
    }

    /// Evaluates the design row for a new observation `z_row` (original
    /// scale, clamped into the training range).
    pub fn eval_row(&self, z_row: &[f64]) -> Result<DVector<f64>> {
        if z_row.len() != self.d() {
            return Err(Error::Dim(format!(
                "eval_row: expected {} covariates, got {}",
                self.d(),
                z_row.len()
            )));
        }
        let mut out = DVector::zeros(self.dn());
        out[0] = 1.0;
        for (j, basis) in self.bases.iter().enumerate() {
            let vals = basis.eval(z_row[j]);
            for (k, v) in vals.iter().enumerate() {
                out[1 + j * self.j_eff + k] = *v;
            }
        }
        Ok(out)
    }

    /// Builds the design rows for new data using the training bases and
    /// transforms (out-of-range values clamp to the training range).
    pub fn eval_matrix(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if z.ncols() != self.d() {
            return Err(Error::Dim(format!(
                "eval_matrix: expected {} covariates, got {}",
                self.d(),
                z.ncols()
            )));
        }
        let n = z.nrows();
        let mut pi = DMatrix::zeros(n, self.dn());
        for i in 0..n {
            pi[(i, 0)] = 1.0;
            for (j, basis) in self.bases.iter().enumerate() {
                let vals = basis.eval(z[(i, j)]);
                for (k, v) in vals.iter().enumerate() {
                    pi[(i, 1 + j * self.j_eff + k)] = *v;
                }
            }
        }
        Ok(pi)
    }

    /// Numerical rank of the design via singular values.
    pub fn rank(&self) -> usize {
        let svd = self.pi.clone().svd(false, false);
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let tol = smax * (self.n().max(self.dn()) as f64) * f64::EPSILON;
        svd.singular_values.iter().filter(|&&s| s > tol).count()
    }
}

/// Centered decomposition of a fitted spline coefficient vector: the overall
/// level plus per-covariate component values with exact zero sample means.
#[derive(Debug, Clone)]
pub struct CenteredFit {
    pub mu_hat: f64,
    /// `n x d` matrix of centered component values `g_j(z_ij)`.
    pub g_components: DMatrix<f64>,
    /// Per-covariate sample means removed from the raw block fits; needed to
    /// evaluate the centered components at new points.
    pub component_means: Vec<f64>,
    /// Total nonparametric fit `mu_hat + sum_j g_j(z_ij)` per row.
    pub g_hat: DVector<f64>,
}

/// Splits `pi * xi` into an overall level `mu_hat` and mean-zero additive
/// components, so that `mu_hat + sum_j g_j(z_ij)` reproduces `pi_i'xi`
/// exactly for every row.
pub fn center_fit(xi: &DVector<f64>, design: &DesignMatrix) -> Result<CenteredFit> {
    if xi.len() != design.dn() {
        return Err(Error::Dim(format!(
            "center_fit: xi has {} entries, design has {} columns",
            xi.len(),
            design.dn()
        )));
    }
    let n = design.n();
    let d = design.d();
    let j_eff = design.j_effective();
    let mut g = DMatrix::zeros(n, d);
    let mut means = Vec::with_capacity(d);
    let mut mu = xi[0];
    for j in 0..d {
        let cols = 1 + j * j_eff..1 + (j + 1) * j_eff;
        let block = design.pi.columns(cols.start, j_eff);
        let coef = xi.rows(cols.start, j_eff);
        let fitted = block * coef;
        let mean = fitted.sum() / n as f64;
        for i in 0..n {
            g[(i, j)] = fitted[i] - mean;
        }
        means.push(mean);
        mu += mean;
    }
    let mut g_hat = DVector::from_element(n, mu);
    for i in 0..n {
        for j in 0..d {
            g_hat[i] += g[(i, j)];
        }
    }
    Ok(CenteredFit { mu_hat: mu, g_components: g, component_means: means, g_hat })
}
