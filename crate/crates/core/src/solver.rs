//! The two-step alternating solver: exact minimization over the spline
//! coefficients given the linear part, then a weighted-L1 expectile
//! regression for the linear part with local-linear-approximation weights.
//! Also hosts the support-restricted (oracle) fitter and the stationarity
//! diagnostics.

use crate::loss::{curvature_weight, expectile_grad, expectile_loss, ExpectileLevel};
use crate::penalty::{lla_weights, penalty_deriv_abs, penalty_value, PenaltySpec};
use crate::spline::{center_fit, DesignMatrix};
use crate::{Dataset, Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Starting point for the linear coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// All zeros.
    Zero,
    /// L1-penalized expectile regression of `y` on `x` alone (no spline
    /// part), at the same `lambda`.
    Elasso,
    /// Caller-supplied coefficients.
    User(Vec<f64>),
}

/// Solver configuration; `alpha` and `penalty` are the statistical choices,
/// the rest controls the iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub alpha: ExpectileLevel,
    pub penalty: PenaltySpec,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Outer stopping: max-norm change in `beta` and relative objective
    /// change both below this.
    pub tol_outer: f64,
    /// Inner stopping: max-norm stationarity residual.
    pub tol_inner: f64,
    /// Tikhonov term added to inner normal systems.
    pub ridge_eps: f64,
    pub init: Init,
    /// Weight updates per outer iteration.
    pub lla_passes: usize,
}

impl SolverConfig {
    pub fn new(alpha: ExpectileLevel, penalty: PenaltySpec) -> Self {
        Self {
            alpha,
            penalty,
            max_outer: 50,
            max_inner: 2000,
            tol_outer: 1e-6,
            tol_inner: 1e-8,
            ridge_eps: 1e-10,
            init: Init::Elasso,
            lla_passes: 1,
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        if !(self.tol_outer > 0.0 && self.tol_inner > 0.0) {
            return Err(Error::Invalid("tolerances must be positive".into()));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::Invalid("iteration limits must be >= 1".into()));
        }
        if self.lla_passes == 0 {
            return Err(Error::Invalid("lla_passes must be >= 1".into()));
        }
        if let Init::User(v) = &self.init {
            if v.len() != p {
                return Err(Error::Dim(format!(
                    "user init has {} entries, expected {}",
                    v.len(),
                    p
                )));
            }
        }
        Ok(())
    }
}

/// Result of a full fit: coefficients, centered nonparametric components and
/// diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta: DVector<f64>,
    pub xi: DVector<f64>,
    pub mu_hat: f64,
    /// `n x d` centered component values `g_j(z_ij)`.
    pub g_components: DMatrix<f64>,
    /// Per-covariate means removed during centering.
    pub component_means: Vec<f64>,
    /// `mu_hat + sum_j g_j(z_ij)` per training row.
    pub g_hat: DVector<f64>,
    /// Full objective after each half-step (spline step, then linear step).
    pub objective_trace: Vec<f64>,
    pub outer_iters: usize,
    /// False when the outer loop hit `max_outer` without meeting tolerances.
    pub converged: bool,
    pub kkt_max_residual: f64,
    /// Indices with nonzero linear coefficients.
    pub active_set: Vec<usize>,
    /// For support-restricted fits, the imposed support.
    pub support: Option<Vec<usize>>,
    /// True when an inner normal system needed a larger ridge than
    /// `ridge_eps` to factor.
    pub ridge_escalated: bool,
    pub config: SolverConfig,
}

impl FitResult {
    /// In-sample fitted values `x'beta + mu_hat + sum_j g_j(z_j)`.
    pub fn fitted(&self, ds: &Dataset) -> DVector<f64> {
        &ds.x * &self.beta + &self.g_hat
    }

    /// Predicted conditional expectiles for new rows; `design` must be the
    /// training design (its bases and range transforms are reused).
    pub fn predict(
        &self,
        design: &DesignMatrix,
        x_new: &DMatrix<f64>,
        z_new: &DMatrix<f64>,
    ) -> Result<DVector<f64>> {
        if x_new.ncols() != self.beta.len() {
            return Err(Error::Dim(format!(
                "predict: x has {} columns, model has {}",
                x_new.ncols(),
                self.beta.len()
            )));
        }
        if x_new.nrows() != z_new.nrows() {
            return Err(Error::Dim("predict: x and z row counts differ".into()));
        }
        let pi = design.eval_matrix(z_new)?;
        Ok(x_new * &self.beta + pi * &self.xi)
    }
}

/// Outcome of one inner convex solve.
#[derive(Debug, Clone)]
pub struct InnerSolve {
    pub coef: DVector<f64>,
    pub kkt_residual: f64,
    pub iters: usize,
    pub ridge_escalated: bool,
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Largest eigenvalue of `x'x` by power iteration (deterministic start).
pub(crate) fn xtx_operator_norm(x: &DMatrix<f64>) -> f64 {
    let p = x.ncols();
    if p == 0 || x.nrows() == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(p, |j, _| 1.0 + (j as f64 + 1.0) / (p as f64 + 1.0));
    let norm = v.norm();
    v /= norm;
    let mut rho = 0.0;
    for _ in 0..1000 {
        let u = x * &v;
        let w = x.transpose() * &u;
        let wnorm = w.norm();
        if wnorm == 0.0 {
            return 0.0;
        }
        let rho_new = u.norm_squared();
        let done = (rho_new - rho).abs() <= 1e-9 * rho_new.max(1e-300);
        rho = rho_new;
        v = w / wnorm;
        if done {
            break;
        }
    }
    rho
}

/// Stationarity residual of the weighted-L1 problem at `beta`:
/// for nonzero coordinates `|s_j + w_j sign(beta_j)|`, for zero coordinates
/// `max(|s_j| - w_j, 0)`, where `s` is the smooth-part gradient.
fn weighted_l1_residual(s: &DVector<f64>, beta: &DVector<f64>, weights: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..beta.len() {
        let r = if beta[j] != 0.0 {
            (s[j] + weights[j] * beta[j].signum()).abs()
        } else {
            (s[j].abs() - weights[j]).max(0.0)
        };
        worst = worst.max(r);
    }
    worst
}

/// Weighted-L1 penalized expectile regression
/// `min_beta (1/n) sum phi_alpha(u_i - x_i'beta) + sum_j w_j |beta_j|`
/// by proximal gradient (accelerated, with a monotone safeguard), plus a
/// Newton refinement on the current support once it stabilizes. Produces
/// exact zeros.
#[allow(clippy::too_many_arguments)]
fn prox_weighted_l1(
    u: &DVector<f64>,
    x: &DMatrix<f64>,
    weights: &[f64],
    warm: &DVector<f64>,
    alpha: ExpectileLevel,
    xtx_norm: f64,
    max_inner: usize,
    tol: f64,
    ridge_eps: f64,
) -> Result<InnerSolve> {
    let n = u.len();
    let p = x.ncols();
    debug_assert_eq!(warm.len(), p);
    debug_assert_eq!(weights.len(), p);
    if p == 0 {
        return Ok(InnerSolve { coef: DVector::zeros(0), kkt_residual: 0.0, iters: 0, ridge_escalated: false });
    }
    let nf = n as f64;
    let smooth = |r: &DVector<f64>| -> f64 {
        r.iter().map(|&ri| expectile_loss(ri, alpha)).sum::<f64>() / nf
    };
    let pen = |b: &DVector<f64>| -> f64 {
        b.iter().zip(weights).map(|(&bj, &wj)| wj * bj.abs()).sum()
    };
    let grad = |r: &DVector<f64>| -> DVector<f64> {
        let psi = DVector::from_fn(n, |i, _| expectile_grad(r[i], alpha));
        -(x.transpose() * psi) / nf
    };

    let lip = (2.0 * alpha.c2() / nf * xtx_norm).max(1e-12);
    let step0 = 1.0 / lip;

    let mut beta = warm.clone();
    let mut r_beta = u - x * &beta;
    let mut f_beta = smooth(&r_beta);
    let mut obj = f_beta + pen(&beta);
    let mut s = grad(&r_beta);
    let mut kkt = weighted_l1_residual(&s, &beta, weights);
    if kkt <= tol {
        return Ok(InnerSolve { coef: beta, kkt_residual: kkt, iters: 0, ridge_escalated: false });
    }

    let mut theta = beta.clone();
    let mut r_theta = r_beta.clone();
    let mut f_theta = f_beta;
    let mut momentum = 1.0f64;
    let mut step = step0;
    let mut ridge_escalated = false;

    for iter in 1..=max_inner {
        let g = grad(&r_theta);
        // backtracking on the quadratic model at theta
        let mut cand;
        let mut r_cand;
        let mut f_cand;
        loop {
            cand = DVector::from_fn(p, |j, _| soft_threshold(theta[j] - step * g[j], step * weights[j]));
            r_cand = u - x * &cand;
            f_cand = smooth(&r_cand);
            let diff = &cand - &theta;
            let quad = f_theta + g.dot(&diff) + diff.norm_squared() / (2.0 * step);
            if f_cand <= quad + 1e-12 * (1.0 + f_cand.abs()) || step < 1e-18 * step0 {
                break;
            }
            step *= 0.5;
        }
        let obj_cand = f_cand + pen(&cand);

        if obj_cand > obj + 1e-12 * (1.0 + obj.abs()) {
            // momentum overshot: restart extrapolation at the current point
            theta = beta.clone();
            r_theta = r_beta.clone();
            f_theta = f_beta;
            momentum = 1.0;
            continue;
        }

        let prev = beta.clone();
        beta = cand;
        r_beta = r_cand;
        f_beta = f_cand;
        obj = obj_cand;

        s = grad(&r_beta);
        kkt = weighted_l1_residual(&s, &beta, weights);
        if kkt <= tol {
            return Ok(InnerSolve { coef: beta, kkt_residual: kkt, iters: iter, ridge_escalated });
        }

        // Newton refinement on the fixed support; cheap when sparse
        if iter % 4 == 0 {
            if let Some(escalated) = newton_polish(
                u, x, weights, alpha, ridge_eps, &mut beta, &mut r_beta, &mut f_beta, &mut obj,
            ) {
                ridge_escalated |= escalated;
                s = grad(&r_beta);
                kkt = weighted_l1_residual(&s, &beta, weights);
                if kkt <= tol {
                    return Ok(InnerSolve { coef: beta, kkt_residual: kkt, iters: iter, ridge_escalated });
                }
            }
        }

        let momentum_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let gamma = (momentum - 1.0) / momentum_next;
        momentum = momentum_next;
        theta = &beta + (&beta - &prev) * gamma;
        r_theta = u - x * &theta;
        f_theta = smooth(&r_theta);
        step = (step * 1.5).min(step0);
    }

    Err(Error::NoConvergence {
        context: "weighted-L1 expectile regression".into(),
        iters: max_inner,
        residual: kkt,
        last: beta.iter().cloned().collect(),
    })
}

/// Newton steps on the nonzero coordinates with their signs held fixed.
/// Returns `Some(ridge_escalated)` when the refinement was applied.
#[allow(clippy::too_many_arguments)]
fn newton_polish(
    u: &DVector<f64>,
    x: &DMatrix<f64>,
    weights: &[f64],
    alpha: ExpectileLevel,
    ridge_eps: f64,
    beta: &mut DVector<f64>,
    r: &mut DVector<f64>,
    f_val: &mut f64,
    obj: &mut f64,
) -> Option<bool> {
    let n = u.len();
    let nf = n as f64;
    let active: Vec<usize> = (0..beta.len())
        .filter(|&j| beta[j] != 0.0 || weights[j] == 0.0)
        .collect();
    let q = active.len();
    if q == 0 || q > 400 || q > n {
        return None;
    }
    let signs: Vec<f64> = active.iter().map(|&j| if beta[j] == 0.0 { 0.0 } else { beta[j].signum() }).collect();
    let xa = {
        let mut m = DMatrix::zeros(n, q);
        for (c, &j) in active.iter().enumerate() {
            m.set_column(c, &x.column(j));
        }
        m
    };
    let mut ba = DVector::from_fn(q, |c, _| beta[active[c]]);
    let mut ra = r.clone();
    let mut escalated = false;
    // reduced objective: smooth part plus the penalty linearized on fixed signs
    let mut fa = ra.iter().map(|&ri| expectile_loss(ri, alpha)).sum::<f64>() / nf
        + (0..q).map(|c| weights[active[c]] * signs[c] * ba[c]).sum::<f64>();
    let mut improved = false;

    for _ in 0..30 {
        let psi = DVector::from_fn(n, |i, _| expectile_grad(ra[i], alpha));
        let mut g = -(xa.transpose() * &psi) / nf;
        for c in 0..q {
            g[c] += weights[active[c]] * signs[c];
        }
        if g.amax() <= 1e-13 {
            break;
        }
        let w = DVector::from_fn(n, |i, _| curvature_weight(ra[i], alpha));
        let xw = {
            let mut m = xa.clone();
            for i in 0..n {
                for c in 0..q {
                    m[(i, c)] *= w[i];
                }
            }
            m
        };
        let h = (xa.transpose() * xw) / nf;
        let mut ridge = ridge_eps;
        let dir = loop {
            let mut hr = h.clone();
            for c in 0..q {
                hr[(c, c)] += ridge;
            }
            if let Some(ch) = hr.cholesky() {
                break ch.solve(&(-&g));
            }
            ridge *= 100.0;
            escalated = true;
            if ridge > 1e6 {
                return if improved { Some(escalated) } else { None };
            }
        };
        // keep signs: shrink toward the current point if a coordinate crosses zero
        let mut s_len = 1.0f64;
        for c in 0..q {
            if weights[active[c]] > 0.0 && signs[c] != 0.0 && dir[c] != 0.0 {
                let candv = ba[c] + dir[c];
                if candv * signs[c] < 0.0 {
                    let allowed = -ba[c] / dir[c];
                    if allowed > 0.0 {
                        s_len = s_len.min(0.99 * allowed);
                    }
                }
            }
        }
        let g_dot_d = g.dot(&dir);
        let mut stepped = false;
        while s_len > 1e-12 {
            let cand = &ba + &dir * s_len;
            let rc = &ra - &xa * (&dir * s_len);
            let mut fc = rc.iter().map(|&ri| expectile_loss(ri, alpha)).sum::<f64>() / nf;
            for c in 0..q {
                fc += weights[active[c]] * signs[c] * cand[c];
            }
            if fc <= fa + 1e-4 * s_len * g_dot_d + 1e-15 * (1.0 + fa.abs()) {
                ba = cand;
                ra = rc;
                fa = fc;
                stepped = true;
                improved = true;
                break;
            }
            s_len *= 0.5;
        }
        if !stepped {
            break;
        }
    }

    if !improved {
        return None;
    }
    let mut new_beta = beta.clone();
    for (c, &j) in active.iter().enumerate() {
        new_beta[j] = ba[c];
    }
    let new_f = ra.iter().map(|&ri| expectile_loss(ri, alpha)).sum::<f64>() / nf;
    let new_obj = new_f
        + new_beta
            .iter()
            .zip(weights)
            .map(|(&bj, &wj)| wj * bj.abs())
            .sum::<f64>();
    if new_obj <= *obj + 1e-14 * (1.0 + obj.abs()) {
        *beta = new_beta;
        *r = ra;
        *f_val = new_f;
        *obj = new_obj;
        Some(escalated)
    } else {
        None
    }
}

/// Unpenalized expectile regression of `target` on the columns of `m`:
/// damped Newton (iteratively reweighted least squares with an Armijo line
/// search on the convex objective).
fn fit_unpenalized(
    target: &DVector<f64>,
    m: &DMatrix<f64>,
    alpha: ExpectileLevel,
    warm: Option<&DVector<f64>>,
    max_iter: usize,
    tol: f64,
    ridge_eps: f64,
) -> Result<InnerSolve> {
    let n = target.len();
    let k = m.ncols();
    let nf = n as f64;
    let mut coef = match warm {
        Some(w) if w.len() == k => w.clone(),
        _ => DVector::zeros(k),
    };
    let mut r = target - m * &coef;
    let mut f = r.iter().map(|&ri| expectile_loss(ri, alpha)).sum::<f64>() / nf;
    let mut escalated = false;
    let mut residual = f64::INFINITY;

    for iter in 0..=max_iter {
        let psi = DVector::from_fn(n, |i, _| expectile_grad(r[i], alpha));
        let g = -(m.transpose() * &psi) / nf;
        residual = g.amax();
        if residual <= tol {
            return Ok(InnerSolve { coef, kkt_residual: residual, iters: iter, ridge_escalated: escalated });
        }
        if iter == max_iter {
            break;
        }
        let w = DVector::from_fn(n, |i, _| curvature_weight(r[i], alpha));
        let mut xw = m.clone();
        for i in 0..n {
            for c in 0..k {
                xw[(i, c)] *= w[i];
            }
        }
        let h = (m.transpose() * xw) / nf;
        let mut ridge = ridge_eps;
        let dir = loop {
            let mut hr = h.clone();
            for c in 0..k {
                hr[(c, c)] += ridge;
            }
            if let Some(ch) = hr.cholesky() {
                break ch.solve(&(-&g));
            }
            ridge *= 100.0;
            escalated = true;
            if ridge > 1e6 {
                return Err(Error::NoConvergence {
                    context: "unpenalized expectile regression: singular system".into(),
                    iters: iter,
                    residual,
                    last: coef.iter().cloned().collect(),
                });
            }
        };
        let g_dot_d = g.dot(&dir);
        let mut s_len = 1.0f64;
        loop {
            let cand = &coef + &dir * s_len;
            let rc = target - m * &cand;
            let fc = rc.iter().map(|&ri| expectile_loss(ri, alpha)).sum::<f64>() / nf;
            if fc <= f + 1e-4 * s_len * g_dot_d + 1e-15 * (1.0 + f.abs()) {
                coef = cand;
                r = rc;
                f = fc;
                break;
            }
            s_len *= 0.5;
            if s_len < 1e-14 {
                break;
            }
        }
    }

    Err(Error::NoConvergence {
        context: "unpenalized expectile regression".into(),
        iters: max_iter,
        residual,
        last: coef.iter().cloned().collect(),
    })
}

/// Step (a): minimizes the empirical loss over the spline coefficients with
/// the linear coefficients held fixed.
pub fn fit_nonparametric(
    ds: &Dataset,
    design: &DesignMatrix,
    beta: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<InnerSolve> {
    fit_nonparametric_warm(ds, design, beta, cfg, None)
}

fn fit_nonparametric_warm(
    ds: &Dataset,
    design: &DesignMatrix,
    beta: &DVector<f64>,
    cfg: &SolverConfig,
    warm: Option<&DVector<f64>>,
) -> Result<InnerSolve> {
    if beta.len() != ds.p() {
        return Err(Error::Dim(format!(
            "beta has {} entries, expected {}",
            beta.len(),
            ds.p()
        )));
    }
    let target = if beta.iter().all(|&b| b == 0.0) {
        ds.y.clone()
    } else {
        &ds.y - &ds.x * beta
    };
    fit_unpenalized(&target, &design.pi, cfg.alpha, warm, cfg.max_inner, cfg.tol_inner, cfg.ridge_eps)
}

/// Step (b): solves the weighted-L1 expectile regression for the linear
/// coefficients with the spline coefficients held fixed.
pub fn fit_linear_lla(
    ds: &Dataset,
    design: &DesignMatrix,
    xi: &DVector<f64>,
    weights: &[f64],
    warm: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<InnerSolve> {
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::Invalid("LLA weights must be nonnegative".into()));
    }
    let u = &ds.y - &design.pi * xi;
    let xtx = xtx_operator_norm(&ds.x);
    prox_weighted_l1(&u, &ds.x, weights, warm, cfg.alpha, xtx, cfg.max_inner, cfg.tol_inner, cfg.ridge_eps)
}

/// A dataset/design pair with cached quantities shared across fits.
pub struct FitProblem<'a> {
    pub ds: &'a Dataset,
    pub design: &'a DesignMatrix,
    xtx_norm: f64,
}

impl<'a> FitProblem<'a> {
    pub fn new(ds: &'a Dataset, design: &'a DesignMatrix) -> Result<Self> {
        if design.n() != ds.n() {
            return Err(Error::Dim(format!(
                "design has {} rows, dataset has {}",
                design.n(),
                ds.n()
            )));
        }
        let xtx_norm = xtx_operator_norm(&ds.x);
        Ok(Self { ds, design, xtx_norm })
    }

    /// Full two-step fit under the configured penalty.
    pub fn fit(&self, cfg: &SolverConfig) -> Result<FitResult> {
        self.fit_warm(cfg, None)
    }

    /// Two-step fit that reuses a previous solution as the starting point
    /// (used along tuning paths). Overrides `cfg.init`.
    pub fn fit_warm(&self, cfg: &SolverConfig, warm: Option<&FitResult>) -> Result<FitResult> {
        let ds = self.ds;
        let design = self.design;
        let n = ds.n();
        let p = ds.p();
        cfg.validate(p)?;
        if design.dn() >= n {
            return Err(Error::Invalid(format!(
                "spline design has {} columns for only {} rows",
                design.dn(),
                n
            )));
        }

        let mut beta = match (warm, &cfg.init) {
            (Some(prev), _) => prev.beta.clone(),
            (None, Init::Zero) => DVector::zeros(p),
            (None, Init::User(v)) => DVector::from_vec(v.clone()),
            (None, Init::Elasso) => {
                let weights = vec![cfg.penalty.lambda; p];
                let zero = DVector::zeros(p);
                prox_weighted_l1(
                    &ds.y, &ds.x, &weights, &zero, cfg.alpha, self.xtx_norm,
                    cfg.max_inner, cfg.tol_inner, cfg.ridge_eps,
                )
                .map_err(|e| wrap_iter_context(e, "outer init (linear-only L1)"))?
                .coef
            }
        };

        let pen_total = |b: &DVector<f64>| -> f64 {
            b.iter().map(|&bj| penalty_value(bj, &cfg.penalty)).sum()
        };

        let mut xi: Option<DVector<f64>> = warm.map(|w| w.xi.clone());
        let mut trace = Vec::new();
        let mut prev_obj = f64::INFINITY;
        let mut outer_iters = 0;
        let mut converged = false;
        let mut ridge_escalated = false;
        let mut inner_kkt: f64 = 0.0;

        for t in 1..=cfg.max_outer {
            outer_iters = t;
            let xi_solve = fit_nonparametric_warm(ds, design, &beta, cfg, xi.as_ref())
                .map_err(|e| wrap_iter_context(e, &format!("outer iteration {t}, spline step")))?;
            ridge_escalated |= xi_solve.ridge_escalated;
            inner_kkt = inner_kkt.max(xi_solve.kkt_residual);
            let xi_t = xi_solve.coef;
            let u = &ds.y - &design.pi * &xi_t;
            let obj_a = smooth_mean(&u, &ds.x, &beta, cfg.alpha) + pen_total(&beta);
            trace.push(obj_a);

            let mut beta_new = beta.clone();
            for _ in 0..cfg.lla_passes {
                let weights = lla_weights(beta_new.as_slice(), &cfg.penalty);
                let solve = prox_weighted_l1(
                    &u, &ds.x, &weights, &beta_new, cfg.alpha, self.xtx_norm,
                    cfg.max_inner, cfg.tol_inner, cfg.ridge_eps,
                )
                .map_err(|e| wrap_iter_context(e, &format!("outer iteration {t}, linear step")))?;
                ridge_escalated |= solve.ridge_escalated;
                inner_kkt = inner_kkt.max(solve.kkt_residual);
                beta_new = solve.coef;
            }
            let obj_b = smooth_mean(&u, &ds.x, &beta_new, cfg.alpha) + pen_total(&beta_new);
            trace.push(obj_b);

            let delta = (&beta_new - &beta).amax();
            let rel = (prev_obj - obj_b).abs() / prev_obj.abs().max(1.0);
            beta = beta_new;
            xi = Some(xi_t);
            if delta < cfg.tol_outer && rel < cfg.tol_outer {
                converged = true;
                break;
            }
            prev_obj = obj_b;
        }

        // refresh the spline coefficients for the final linear part
        let xi_final = fit_nonparametric_warm(ds, design, &beta, cfg, xi.as_ref())
            .map_err(|e| wrap_iter_context(e, "final spline refresh"))?;
        ridge_escalated |= xi_final.ridge_escalated;
        inner_kkt = inner_kkt.max(xi_final.kkt_residual);
        let xi = xi_final.coef;
        let u = &ds.y - &design.pi * &xi;
        trace.push(smooth_mean(&u, &ds.x, &beta, cfg.alpha) + pen_total(&beta));

        let mut fit =
            self.package(beta, xi, trace, outer_iters, converged, ridge_escalated, None, cfg.clone())?;
        fit.kkt_max_residual = fit.kkt_max_residual.max(inner_kkt);
        Ok(fit)
    }

    /// Unpenalized joint fit restricted to a fixed support: the benchmark
    /// estimator computed as if the true active set were known.
    pub fn oracle_fit(&self, active: &[usize], alpha: ExpectileLevel) -> Result<FitResult> {
        let ds = self.ds;
        let design = self.design;
        let n = ds.n();
        let p = ds.p();
        let q = active.len();
        let mut seen = vec![false; p];
        for &j in active {
            if j >= p {
                return Err(Error::Invalid(format!("active index {j} out of range (p={p})")));
            }
            if seen[j] {
                return Err(Error::Invalid(format!("duplicate active index {j}")));
            }
            seen[j] = true;
        }
        if q + design.dn() >= n {
            return Err(Error::Invalid(format!(
                "support size {} plus spline columns {} must stay below n={}",
                q,
                design.dn(),
                n
            )));
        }
        let cfg = SolverConfig::new(alpha, PenaltySpec::none());
        let mut m = DMatrix::zeros(n, q + design.dn());
        for (c, &j) in active.iter().enumerate() {
            m.set_column(c, &ds.x.column(j));
        }
        for c in 0..design.dn() {
            m.set_column(q + c, &design.pi.column(c));
        }
        let solve = fit_unpenalized(&ds.y, &m, alpha, None, cfg.max_inner, cfg.tol_inner, cfg.ridge_eps)?;
        let mut beta = DVector::zeros(p);
        for (c, &j) in active.iter().enumerate() {
            beta[j] = solve.coef[c];
        }
        let xi = DVector::from_fn(design.dn(), |c, _| solve.coef[q + c]);
        let u = &ds.y - &design.pi * &xi;
        let trace = vec![smooth_mean(&u, &ds.x, &beta, alpha)];
        self.package(
            beta,
            xi,
            trace,
            solve.iters,
            true,
            solve.ridge_escalated,
            Some(active.to_vec()),
            cfg,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn package(
        &self,
        beta: DVector<f64>,
        xi: DVector<f64>,
        trace: Vec<f64>,
        outer_iters: usize,
        converged: bool,
        ridge_escalated: bool,
        support: Option<Vec<usize>>,
        config: SolverConfig,
    ) -> Result<FitResult> {
        let centered = center_fit(&xi, self.design)?;
        let active_set: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
        let mut fit = FitResult {
            beta,
            xi,
            mu_hat: centered.mu_hat,
            g_components: centered.g_components,
            component_means: centered.component_means,
            g_hat: centered.g_hat,
            objective_trace: trace,
            outer_iters,
            converged,
            kkt_max_residual: 0.0,
            active_set,
            support,
            ridge_escalated,
            config,
        };
        let report = kkt_report(&fit, self.ds, self.design, fit.config.tol_inner)?;
        fit.kkt_max_residual = report.max_residual;
        Ok(fit)
    }
}

fn smooth_mean(u: &DVector<f64>, x: &DMatrix<f64>, beta: &DVector<f64>, alpha: ExpectileLevel) -> f64 {
    let r = if beta.iter().all(|&b| b == 0.0) {
        u.clone()
    } else {
        u - x * beta
    };
    r.iter().map(|&ri| expectile_loss(ri, alpha)).sum::<f64>() / u.len() as f64
}

fn wrap_iter_context(e: Error, ctx: &str) -> Error {
    match e {
        Error::NoConvergence { context, iters, residual, last } => Error::NoConvergence {
            context: format!("{ctx}: {context}"),
            iters,
            residual,
            last,
        },
        other => other,
    }
}

/// Convenience wrapper around [`FitProblem::fit`].
pub fn two_step_fit(ds: &Dataset, design: &DesignMatrix, cfg: &SolverConfig) -> Result<FitResult> {
    FitProblem::new(ds, design)?.fit(cfg)
}

/// Convenience wrapper around [`FitProblem::oracle_fit`].
pub fn oracle_fit(
    ds: &Dataset,
    design: &DesignMatrix,
    active: &[usize],
    alpha: ExpectileLevel,
) -> Result<FitResult> {
    FitProblem::new(ds, design)?.oracle_fit(active, alpha)
}

/// Gradient of the empirical loss at `(beta, xi)`: the per-coordinate
/// derivatives with respect to the linear and spline coefficients.
pub fn empirical_grad(
    ds: &Dataset,
    design: &DesignMatrix,
    beta: &DVector<f64>,
    xi: &DVector<f64>,
    alpha: ExpectileLevel,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if beta.len() != ds.p() || xi.len() != design.dn() {
        return Err(Error::Dim("empirical_grad: coefficient lengths do not match".into()));
    }
    let n = ds.n() as f64;
    let r = &ds.y - &ds.x * beta - &design.pi * xi;
    let psi = DVector::from_fn(ds.n(), |i, _| expectile_grad(r[i], alpha));
    let gb = -(ds.x.transpose() * &psi) / n;
    let gx = -(design.pi.transpose() * &psi) / n;
    Ok((gb, gx))
}

/// Per-coordinate stationarity classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordStatus {
    /// Nonzero coefficient with a vanishing penalized gradient.
    ActiveStationary,
    /// Zero coefficient whose gradient lies inside the subdifferential bound.
    ZeroStationary,
    /// Outside the tolerance.
    Violating,
    /// Held at zero by an imposed support; not a stationarity claim.
    OffSupport,
}

/// Stationarity report at a fitted point.
#[derive(Debug, Clone)]
pub struct KktReport {
    /// Smooth-part gradient per linear coordinate.
    pub grad_beta: Vec<f64>,
    /// Smooth-part gradient per spline coordinate.
    pub grad_xi: Vec<f64>,
    /// Violation measure per linear coordinate (0 on the off-support set).
    pub beta_residuals: Vec<f64>,
    pub beta_status: Vec<CoordStatus>,
    pub xi_residuals: Vec<f64>,
    pub max_residual: f64,
}

/// Evaluates the first-order conditions at a fit: nonzero coordinates must
/// zero the penalized gradient, zero coordinates must satisfy the
/// subdifferential bound `|s_j| <= P'(0+)`, and every spline coordinate must
/// have a vanishing gradient.
pub fn kkt_report(fit: &FitResult, ds: &Dataset, design: &DesignMatrix, tol: f64) -> Result<KktReport> {
    let (gb, gx) = empirical_grad(ds, design, &fit.beta, &fit.xi, fit.config.alpha)?;
    let spec = &fit.config.penalty;
    let p = ds.p();
    let mut beta_residuals = Vec::with_capacity(p);
    let mut beta_status = Vec::with_capacity(p);
    let mut max_res: f64 = 0.0;
    let on_support = |j: usize| match &fit.support {
        Some(a) => a.contains(&j),
        None => true,
    };
    for j in 0..p {
        if !on_support(j) {
            beta_residuals.push(0.0);
            beta_status.push(CoordStatus::OffSupport);
            continue;
        }
        let bj = fit.beta[j];
        let (res, status) = if bj != 0.0 {
            let omega = penalty_deriv_abs(bj.abs(), spec);
            let r = (gb[j] + omega * bj.signum()).abs();
            (r, if r <= tol { CoordStatus::ActiveStationary } else { CoordStatus::Violating })
        } else {
            let bound = penalty_deriv_abs(0.0, spec);
            let r = (gb[j].abs() - bound).max(0.0);
            (r, if r <= tol { CoordStatus::ZeroStationary } else { CoordStatus::Violating })
        };
        max_res = max_res.max(res);
        beta_residuals.push(res);
        beta_status.push(status);
    }
    let xi_residuals: Vec<f64> = gx.iter().map(|g| g.abs()).collect();
    for &r in &xi_residuals {
        max_res = max_res.max(r);
    }
    Ok(KktReport {
        grad_beta: gb.iter().cloned().collect(),
        grad_xi: gx.iter().cloned().collect(),
        beta_residuals,
        beta_status,
        xi_residuals,
        max_residual: max_res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::PenaltyFamily;
    use crate::spline::SplineSpec;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn lvl(a: f64) -> ExpectileLevel {
        ExpectileLevel::new(a).unwrap()
    }

    fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize, d: usize) -> Dataset {
        let x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let z = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>());
        let noise = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        let beta_true = DVector::from_fn(p, |j, _| if j < 2 { 1.0 } else { 0.0 });
        let y = &x * &beta_true
            + DVector::from_fn(n, |i, _| (2.0 * std::f64::consts::PI * z[(i, 0)]).sin())
            + noise;
        Dataset::new(y, x, z).unwrap()
    }

    #[test]
    fn power_iteration_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = DMatrix::from_fn(40, 12, |_, _| rng.random::<f64>() - 0.5);
        let est = xtx_operator_norm(&x);
        let svd = x.clone().svd(false, false);
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        assert_relative_eq!(est, smax * smax, max_relative = 1e-6);
        assert_eq!(xtx_operator_norm(&DMatrix::zeros(5, 3)), 0.0);
    }

    #[test]
    fn nonparametric_half_matches_ols() {
        // alpha = 0.5 reduces to least squares: check against normal equations
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ds = random_dataset(&mut rng, 60, 3, 2);
        let design = DesignMatrix::build(&ds.z, &SplineSpec::default()).unwrap();
        let cfg = SolverConfig::new(lvl(0.5), PenaltySpec::none());
        let beta = DVector::zeros(3);
        let solve = fit_nonparametric(&ds, &design, &beta, &cfg).unwrap();
        let gram = design.pi.transpose() * &design.pi;
        let rhs = design.pi.transpose() * &ds.y;
        let ols = gram.cholesky().unwrap().solve(&rhs);
        for c in 0..design.dn() {
            assert_relative_eq!(solve.coef[c], ols[c], max_relative = 1e-6, epsilon = 1e-8);
        }
    }

    #[test]
    fn nonparametric_recovers_exact_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let z = DMatrix::from_fn(50, 2, |_, _| rng.random::<f64>());
        let design = DesignMatrix::build(&z, &SplineSpec::default()).unwrap();
        let xi_true = DVector::from_fn(design.dn(), |c, _| 0.3 * c as f64 - 0.5);
        let y = &design.pi * &xi_true;
        let x = DMatrix::zeros(50, 2);
        let ds = Dataset::new(y, x, z).unwrap();
        let cfg = SolverConfig::new(lvl(0.8), PenaltySpec::none());
        let solve = fit_nonparametric(&ds, &design, &DVector::zeros(2), &cfg).unwrap();
        for c in 0..design.dn() {
            assert_relative_eq!(solve.coef[c], xi_true[c], epsilon = 1e-6);
        }
    }

    #[test]
    fn nonparametric_asymmetric_matches_coordinate_search_oracle() {
        // independent derivative-free minimizer: cyclic golden-section search
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let z = DMatrix::from_fn(40, 1, |_, _| rng.random::<f64>());
        let design = DesignMatrix::build(&z, &SplineSpec::default()).unwrap();
        assert_eq!(design.dn(), 4);
        let y = DVector::from_fn(40, |i, _| {
            (3.0 * z[(i, 0)]).cos() + 0.4 * (rng.random::<f64>() - 0.3)
        });
        let x = DMatrix::zeros(40, 1);
        let ds = Dataset::new(y.clone(), x, z).unwrap();
        let alpha = lvl(0.9);
        let cfg = SolverConfig::new(alpha, PenaltySpec::none());
        let solve = fit_nonparametric(&ds, &design, &DVector::zeros(1), &cfg).unwrap();

        let objective = |c: &DVector<f64>| -> f64 {
            let r = &y - &design.pi * c;
            r.iter().map(|&ri| expectile_loss(ri, alpha)).sum::<f64>() / 40.0
        };
        let golden = 0.618_033_988_749_894_9;
        let mut c = DVector::zeros(4);
        for _ in 0..200 {
            for j in 0..4 {
                let mut lo = c[j] - 4.0;
                let mut hi = c[j] + 4.0;
                for _ in 0..70 {
                    let m1 = hi - golden * (hi - lo);
                    let m2 = lo + golden * (hi - lo);
                    let mut c1 = c.clone();
                    c1[j] = m1;
                    let mut c2 = c.clone();
                    c2[j] = m2;
                    if objective(&c1) <= objective(&c2) {
                        hi = m2;
                    } else {
                        lo = m1;
                    }
                }
                c[j] = 0.5 * (lo + hi);
            }
        }
        for j in 0..4 {
            assert_relative_eq!(solve.coef[j], c[j], epsilon = 1e-4);
        }
    }

    #[test]
    fn linear_lla_zero_at_critical_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let ds = random_dataset(&mut rng, 50, 8, 1);
        let design = DesignMatrix::build(&ds.z, &SplineSpec::default()).unwrap();
        let cfg = SolverConfig::new(lvl(0.7), PenaltySpec::none());
        let solve0 = fit_nonparametric(&ds, &design, &DVector::zeros(8), &cfg).unwrap();
        let (gb, _) = empirical_grad(&ds, &design, &DVector::zeros(8), &solve0.coef, cfg.alpha).unwrap();
        let lam_max = gb.amax();
        let weights = vec![lam_max; 8];
        let out = fit_linear_lla(&ds, &design, &solve0.coef, &weights, &DVector::zeros(8), &cfg).unwrap();
        assert!(out.coef.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn linear_lla_unweighted_matches_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let ds = random_dataset(&mut rng, 80, 4, 1);
        let design = DesignMatrix::build(&ds.z, &SplineSpec::default()).unwrap();
        let cfg = SolverConfig::new(lvl(0.5), PenaltySpec::none());
        let xi = DVector::from_fn(design.dn(), |c, _| 0.1 * c as f64);
        let weights = vec![0.0; 4];
        let out = fit_linear_lla(&ds, &design, &xi, &weights, &DVector::zeros(4), &cfg).unwrap();
        let u = &ds.y - &design.pi * &xi;
        let gram = ds.x.transpose() * &ds.x;
        let rhs = ds.x.transpose() * &u;
        let ols = gram.cholesky().unwrap().solve(&rhs);
        for j in 0..4 {
            assert_relative_eq!(out.coef[j], ols[j], max_relative = 1e-6, epsilon = 1e-8);
        }
    }

    #[test]
    fn linear_lla_beats_random_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let ds = random_dataset(&mut rng, 30, 5, 1);
        let design = DesignMatrix::build(&ds.z, &SplineSpec::default()).unwrap();
        let alpha = lvl(0.7);
        let cfg = SolverConfig::new(alpha, PenaltySpec::none());
        let xi = fit_nonparametric(&ds, &design, &DVector::zeros(5), &cfg).unwrap().coef;
        let weights = vec![0.1; 5];
        let out = fit_linear_lla(&ds, &design, &xi, &weights, &DVector::zeros(5), &cfg).unwrap();
        let u = &ds.y - &design.pi * &xi;
        let objective = |b: &DVector<f64>| -> f64 {
            let r = &u - &ds.x * b;
            r.iter().map(|&ri| expectile_loss(ri, alpha)).sum::<f64>() / 30.0
                + b.iter().map(|&bj| 0.1 * bj.abs()).sum::<f64>()
        };
        let best = objective(&out.coef);
        for _ in 0..10_000 {
            let probe = DVector::from_fn(5, |j, _| {
                out.coef[j] + (rng.random::<f64>() - 0.5) * 0.2
            });
            assert!(objective(&probe) >= best - 1e-12);
        }
    }

    #[test]
    fn two_step_unpenalized_matches_joint_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let ds = random_dataset(&mut rng, 90, 4, 2);
        let design = DesignMatrix::build(&ds.z, &SplineSpec::default()).unwrap();
        let mut cfg = SolverConfig::new(lvl(0.5), PenaltySpec::none());
        cfg.init = Init::Zero;
        cfg.max_outer = 300;
        cfg.tol_outer = 1e-10;
        let fit = two_step_fit(&ds, &design, &cfg).unwrap();

        let p = 4;
        let dn = design.dn();
        let mut m = DMatrix::zeros(90, p + dn);
        for j in 0..p {
            m.set_column(j, &ds.x.column(j));
        }
        for c in 0..dn {
            m.set_column(p + c, &design.pi.column(c));
        }
        let gram = m.transpose() * &m;
        let rhs = m.transpose() * &ds.y;
        let joint = gram.cholesky().unwrap().solve(&rhs);
        for j in 0..p {
            assert_relative_eq!(fit.beta[j], joint[j], max_relative = 1e-6, epsilon = 1e-7);
        }
        for c in 0..dn {
            assert_relative_eq!(fit.xi[c], joint[p + c], max_relative = 1e-6, epsilon = 1e-7);
        }
    }

    #[test]
    fn two_step_strong_penalty_zeroes_noise_and_keeps_signal_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100;
        let x = DMatrix::from_fn(n, 6, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let z = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>());
        let y = DVector::from_fn(n, |i, _| (2.0 * std::f64::consts::PI * z[(i, 0)]).sin());
        let ds = Dataset::new(y, x, z).unwrap();
        let design =
            DesignMatrix::build(&ds.z, &SplineSpec { internal_knots: 3, ..Default::default() }).unwrap();
        let cfg = SolverConfig::new(lvl(0.5), PenaltySpec::scad(2.0).unwrap());
        let fit = two_step_fit(&ds, &design, &cfg).unwrap();
        assert!(fit.beta.iter().all(|&b| b == 0.0));
        // the additive part should absorb the signal
        let resid = (&ds.y - fit.fitted(&ds)).amax();
        assert!(resid < 0.05, "residual {resid}");
    }

    #[test]
    fn objective_trace_is_nonincreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for &(a, fam) in &[
            (0.1, PenaltyFamily::Scad),
            (0.5, PenaltyFamily::Mcp),
            (0.9, PenaltyFamily::L1),
        ] {
            let ds = random_dataset(&mut rng, 70, 10, 2);
            let design = DesignMatrix::build(&ds.z, &SplineSpec::default()).unwrap();
            let spec =
                PenaltySpec::new(fam, 0.1, if fam == PenaltyFamily::Mcp { 1.0 } else { 3.7 }).unwrap();
            let cfg = SolverConfig::new(lvl(a), spec);
            let fit = two_step_fit(&ds, &design, &cfg).unwrap();
            for w in fit.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-10, "trace increased: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let ds = random_dataset(&mut rng, 40, 3, 2);
        let design = DesignMatrix::build(&ds.z, &SplineSpec::default()).unwrap();
        let alpha = lvl(0.3);
        let beta = DVector::from_fn(3, |_, _| rng.random::<f64>() - 0.5);
        let xi = DVector::from_fn(design.dn(), |_, _| rng.random::<f64>() - 0.5);
        let (gb, gx) = empirical_grad(&ds, &design, &beta, &xi, alpha).unwrap();
        let h = 1e-6;
        let loss_at = |b: &DVector<f64>, x_: &DVector<f64>| {
            crate::loss::empirical_loss(&ds.y, &ds.x, &design.pi, b, x_, alpha).unwrap()
        };
        for j in 0..3 {
            let mut bp = beta.clone();
            bp[j] += h;
            let mut bm = beta.clone();
            bm[j] -= h;
            let fd = (loss_at(&bp, &xi) - loss_at(&bm, &xi)) / (2.0 * h);
            assert_relative_eq!(gb[j], fd, max_relative = 1e-5, epsilon = 1e-8);
        }
        for c in 0..design.dn() {
            let mut xp = xi.clone();
            xp[c] += h;
            let mut xm = xi.clone();
            xm[c] -= h;
            let fd = (loss_at(&beta, &xp) - loss_at(&beta, &xm)) / (2.0 * h);
            assert_relative_eq!(gx[c], fd, max_relative = 1e-5, epsilon = 1e-8);
        }
    }

    #[test]
    fn oracle_fit_empty_support_is_pure_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let ds = random_dataset(&mut rng, 60, 4, 1);
        let design = DesignMatrix::build(&ds.z, &SplineSpec::default()).unwrap();
        let alpha = lvl(0.7);
        let fit = oracle_fit(&ds, &design, &[], alpha).unwrap();
        let cfg = SolverConfig::new(alpha, PenaltySpec::none());
        let xi = fit_nonparametric(&ds, &design, &DVector::zeros(4), &cfg).unwrap().coef;
        for c in 0..design.dn() {
            assert_relative_eq!(fit.xi[c], xi[c], epsilon = 1e-7);
        }
        assert!(fit.beta.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn oracle_fit_half_matches_restricted_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let ds = random_dataset(&mut rng, 80, 6, 1);
        let design = DesignMatrix::build(&ds.z, &SplineSpec::default()).unwrap();
        let active = vec![0usize, 1];
        let fit = oracle_fit(&ds, &design, &active, lvl(0.5)).unwrap();
        let q = 2;
        let dn = design.dn();
        let mut m = DMatrix::zeros(80, q + dn);
        m.set_column(0, &ds.x.column(0));
        m.set_column(1, &ds.x.column(1));
        for c in 0..dn {
            m.set_column(q + c, &design.pi.column(c));
        }
        let gram = m.transpose() * &m;
        let rhs = m.transpose() * &ds.y;
        let ols = gram.cholesky().unwrap().solve(&rhs);
        assert_relative_eq!(fit.beta[0], ols[0], max_relative = 1e-6, epsilon = 1e-8);
        assert_relative_eq!(fit.beta[1], ols[1], max_relative = 1e-6, epsilon = 1e-8);
        assert_eq!(fit.beta[3], 0.0);
        // oracle stationarity: restricted coordinates and spline gradient vanish
        let report = kkt_report(&fit, &ds, &design, 1e-6).unwrap();
        assert!(report.max_residual <= 1e-6);
        assert_eq!(report.beta_status[3], CoordStatus::OffSupport);
    }

    #[test]
    fn kkt_gradient_matches_hand_loop() {
        // two covariates, tiny instance: s_j must equal the hand loop
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, -1.0, 0.25, 0.0, 1.0, 2.0, -0.5]);
        let z = DMatrix::from_column_slice(4, 1, &[0.1, 0.4, 0.6, 0.9]);
        let ds = Dataset::new(y.clone(), x.clone(), z.clone()).unwrap();
        let design = DesignMatrix::build(&z, &SplineSpec::default()).unwrap();
        let alpha = lvl(0.25);
        let beta = DVector::from_vec(vec![0.3, -0.2]);
        let xi = DVector::from_fn(design.dn(), |c, _| 0.05 * (c as f64 + 1.0));
        let (gb, _) = empirical_grad(&ds, &design, &beta, &xi, alpha).unwrap();
        for j in 0..2 {
            let mut acc = 0.0;
            for i in 0..4 {
                let mut fit_i = 0.0;
                for jj in 0..2 {
                    fit_i += x[(i, jj)] * beta[jj];
                }
                for c in 0..design.dn() {
                    fit_i += design.pi[(i, c)] * xi[c];
                }
                let r = y[i] - fit_i;
                let w = if r >= 0.0 { 0.25 } else { 0.75 };
                acc += -2.0 * w * r * x[(i, j)];
            }
            acc /= 4.0;
            assert_relative_eq!(gb[j], acc, max_relative = 1e-12);
        }
    }

    #[test]
    fn lla_fixed_point_at_strong_signals() {
        // start at a stationary point with strong actives: one outer pass
        // must return the same point (zero weights on the support, full
        // weight elsewhere)
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let n = 120;
        let p = 6;
        let x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let z = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>());
        let y = DVector::from_fn(n, |i, _| {
            2.0 * x[(i, 0)] - 1.5 * x[(i, 1)]
                + (2.0 * std::f64::consts::PI * z[(i, 0)]).sin()
                + 0.05 * (rng.random::<f64>() - 0.5)
        });
        let ds = Dataset::new(y, x, z).unwrap();
        let design =
            DesignMatrix::build(&ds.z, &SplineSpec { internal_knots: 2, ..Default::default() }).unwrap();
        let alpha = lvl(0.5);
        let oracle = oracle_fit(&ds, &design, &[0, 1], alpha).unwrap();
        let lam = 0.05; // a*lam = 0.185 << |beta_j|
        assert!(oracle.beta[0].abs() > 3.7 * lam && oracle.beta[1].abs() > 3.7 * lam);
        let report = kkt_report(&oracle, &ds, &design, 1e-8).unwrap();
        // inactive gradients must sit strictly inside the lambda bound
        for j in 2..p {
            assert!(report.grad_beta[j].abs() < lam, "j={j} s={}", report.grad_beta[j]);
        }
        let mut cfg = SolverConfig::new(alpha, PenaltySpec::scad(lam).unwrap());
        cfg.init = Init::User(oracle.beta.iter().cloned().collect());
        cfg.max_outer = 1;
        let fit = two_step_fit(&ds, &design, &cfg).unwrap();
        for j in 0..p {
            assert_relative_eq!(fit.beta[j], oracle.beta[j], epsilon = 1e-6);
        }
        assert_eq!(fit.active_set, vec![0, 1]);
    }

    #[test]
    fn duplicate_columns_still_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        let n = 50;
        let col = DVector::from_fn(n, |_, _| rng.random::<f64>());
        let mut x = DMatrix::zeros(n, 2);
        x.set_column(0, &col);
        x.set_column(1, &col);
        let z = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>());
        let y = DVector::from_fn(n, |i, _| col[i] + 0.1 * (rng.random::<f64>() - 0.5));
        let ds = Dataset::new(y, x, z).unwrap();
        let design = DesignMatrix::build(&ds.z, &SplineSpec::default()).unwrap();
        let cfg = SolverConfig::new(lvl(0.5), PenaltySpec::l1(0.05).unwrap());
        let fit = two_step_fit(&ds, &design, &cfg).unwrap();
        assert!(fit.kkt_max_residual <= 1e-6);
    }

    #[test]
    fn user_init_length_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(49);
        let ds = random_dataset(&mut rng, 30, 3, 1);
        let design = DesignMatrix::build(&ds.z, &SplineSpec::default()).unwrap();
        let mut cfg = SolverConfig::new(lvl(0.5), PenaltySpec::none());
        cfg.init = Init::User(vec![0.0; 7]);
        assert!(two_step_fit(&ds, &design, &cfg).is_err());
    }
}
