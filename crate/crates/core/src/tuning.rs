//! Penalty-level selection: a geometric grid of `lambda` values fitted with
//! warm starts, scored either on a held-out tuning set or by k-fold
//! cross-validation.

use crate::loss::{expectile_loss, ExpectileLevel};
use crate::solver::{empirical_grad, fit_nonparametric, FitProblem, FitResult, SolverConfig};
use crate::spline::{DesignMatrix, SplineSpec};
use crate::{Dataset, Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Descending grid of positive penalty levels.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    values: Vec<f64>,
}

pub const DEFAULT_GRID_LEN: usize = 50;
pub const DEFAULT_GRID_EPS: f64 = 0.01;

impl LambdaGrid {
    /// Geometric sequence from `lambda_max` down to `eps * lambda_max`.
    pub fn geometric(lambda_max: f64, eps: f64, len: usize) -> Result<Self> {
        if !(lambda_max > 0.0) {
            return Err(Error::Invalid(format!("lambda_max must be positive, got {lambda_max}")));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Invalid(format!("grid eps must lie in (0,1), got {eps}")));
        }
        if len < 1 {
            return Err(Error::Invalid("grid needs at least one value".into()));
        }
        let values = if len == 1 {
            vec![lambda_max]
        } else {
            (0..len)
                .map(|i| lambda_max * eps.powf(i as f64 / (len - 1) as f64))
                .collect()
        };
        Ok(Self { values })
    }

    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        values.sort_by(|a, b| b.partial_cmp(a).unwrap());
        values.dedup();
        if values.is_empty() {
            return Err(Error::Invalid("empty lambda grid".into()));
        }
        if values.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Invalid("lambda grid values must be positive".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Smallest penalty level that keeps all linear coefficients at zero in the
/// first weighted-L1 pass: the max-norm of the loss gradient at `beta = 0`
/// with the spline part fitted.
pub fn lambda_max(ds: &Dataset, design: &DesignMatrix, alpha: ExpectileLevel) -> Result<f64> {
    let cfg = SolverConfig::new(alpha, crate::penalty::PenaltySpec::none());
    let beta0 = DVector::zeros(ds.p());
    let xi = fit_nonparametric(ds, design, &beta0, &cfg)?.coef;
    let (gb, _) = empirical_grad(ds, design, &beta0, &xi, alpha)?;
    Ok(if ds.p() == 0 { 0.0 } else { gb.amax() })
}

/// Fits the whole path, warm-starting each level from the previous one
/// (largest `lambda` first). Returns one fit per grid value.
pub fn fit_path(
    problem: &FitProblem<'_>,
    base_cfg: &SolverConfig,
    grid: &LambdaGrid,
) -> Result<Vec<FitResult>> {
    let mut fits: Vec<FitResult> = Vec::with_capacity(grid.len());
    for &lam in grid.values() {
        let mut cfg = base_cfg.clone();
        cfg.penalty = base_cfg.penalty.with_lambda(lam);
        let fit = problem.fit_warm(&cfg, fits.last())?;
        fits.push(fit);
    }
    Ok(fits)
}

/// Mean expectile loss of a fit's predictions on held-out rows, with the
/// design matrix for those rows prebuilt from the training bases.
fn holdout_loss(fit: &FitResult, pi_new: &DMatrix<f64>, x_new: &DMatrix<f64>, y_new: &DVector<f64>) -> f64 {
    let pred = x_new * &fit.beta + pi_new * &fit.xi;
    let alpha = fit.config.alpha;
    y_new
        .iter()
        .zip(pred.iter())
        .map(|(&y, &m)| expectile_loss(y - m, alpha))
        .sum::<f64>()
        / y_new.len() as f64
}

/// Outcome of held-out tuning.
#[derive(Debug)]
pub struct TuneResult {
    pub best_lambda: f64,
    pub best_index: usize,
    /// `(lambda, mean held-out loss)` per grid value, in grid order.
    pub losses: Vec<(f64, f64)>,
    /// The path fit at the selected level.
    pub best_fit: FitResult,
}

/// Selects the penalty level minimizing prediction expectile loss on a
/// separate tuning set. Ties keep the larger `lambda` (sparser model).
pub fn tune_by_validation(
    train: &Dataset,
    design: &DesignMatrix,
    tune: &Dataset,
    grid: &LambdaGrid,
    cfg: &SolverConfig,
) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(Error::Invalid("empty lambda grid".into()));
    }
    if tune.p() != train.p() || tune.d() != train.d() {
        return Err(Error::Dim("tuning set shape differs from training set".into()));
    }
    let problem = FitProblem::new(train, design)?;
    let mut fits = fit_path(&problem, cfg, grid)?;
    let pi_tune = design.eval_matrix(&tune.z)?;
    let losses: Vec<(f64, f64)> = grid
        .values()
        .iter()
        .zip(&fits)
        .map(|(&lam, fit)| (lam, holdout_loss(fit, &pi_tune, &tune.x, &tune.y)))
        .collect();
    let mut best_index = 0;
    for (i, &(_, loss)) in losses.iter().enumerate() {
        if loss < losses[best_index].1 {
            best_index = i;
        }
    }
    let best_fit = fits.swap_remove(best_index);
    Ok(TuneResult { best_lambda: losses[best_index].0, best_index, losses, best_fit })
}

/// Near-equal random partition of `0..n` into `k` folds.
pub fn cv_folds(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Invalid(format!("cross-validation needs k >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::Invalid(format!("k = {k} folds exceed n = {n} rows")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(idx[start..start + size].to_vec());
        start += size;
    }
    Ok(folds)
}

/// Outcome of k-fold cross-validation.
#[derive(Debug)]
pub struct CvResult {
    pub best_lambda: f64,
    pub best_index: usize,
    /// `(lambda, mean held-out loss across folds)` in grid order.
    pub mean_losses: Vec<(f64, f64)>,
    /// Per-fold loss curves, `fold_losses[fold][grid index]`.
    pub fold_losses: Vec<Vec<f64>>,
}

fn subset(ds: &Dataset, rows: &[usize]) -> Dataset {
    let n = rows.len();
    let y = DVector::from_fn(n, |i, _| ds.y[rows[i]]);
    let x = DMatrix::from_fn(n, ds.p(), |i, j| ds.x[(rows[i], j)]);
    let z = DMatrix::from_fn(n, ds.d(), |i, j| ds.z[(rows[i], j)]);
    Dataset { y, x, z }
}

/// Cross-validation with an explicit fold assignment (each entry holds the
/// held-out row indices of one fold).
pub fn tune_by_cv_with_folds(
    ds: &Dataset,
    spline: &SplineSpec,
    folds: &[Vec<usize>],
    grid: &LambdaGrid,
    cfg: &SolverConfig,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::Invalid("empty lambda grid".into()));
    }
    if folds.len() < 2 {
        return Err(Error::Invalid("cross-validation needs at least two folds".into()));
    }
    let n = ds.n();
    let mut held = vec![false; n];
    for fold in folds {
        for &i in fold {
            if i >= n || held[i] {
                return Err(Error::Invalid("folds must partition the row indices".into()));
            }
            held[i] = true;
        }
    }
    let mut fold_losses = Vec::with_capacity(folds.len());
    for fold in folds {
        let train_rows: Vec<usize> = (0..n).filter(|i| !fold.contains(i)).collect();
        let train = subset(ds, &train_rows);
        let test = subset(ds, fold);
        let design = DesignMatrix::build(&train.z, spline)?;
        let problem = FitProblem::new(&train, &design)?;
        let fits = fit_path(&problem, cfg, grid)?;
        let pi_test = design.eval_matrix(&test.z)?;
        let losses: Vec<f64> = fits
            .iter()
            .map(|fit| holdout_loss(fit, &pi_test, &test.x, &test.y))
            .collect();
        fold_losses.push(losses);
    }
    let g = grid.len();
    let mean_losses: Vec<(f64, f64)> = (0..g)
        .map(|i| {
            let mean = fold_losses.iter().map(|l| l[i]).sum::<f64>() / folds.len() as f64;
            (grid.values()[i], mean)
        })
        .collect();
    let mut best_index = 0;
    for (i, &(_, loss)) in mean_losses.iter().enumerate() {
        if loss < mean_losses[best_index].1 {
            best_index = i;
        }
    }
    Ok(CvResult {
        best_lambda: mean_losses[best_index].0,
        best_index,
        mean_losses,
        fold_losses,
    })
}

/// Seeded k-fold cross-validation over the grid; identical inputs and seed
/// give identical output.
pub fn tune_by_cv(
    ds: &Dataset,
    spline: &SplineSpec,
    k: usize,
    grid: &LambdaGrid,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<CvResult> {
    let folds = cv_folds(ds.n(), k, seed)?;
    tune_by_cv_with_folds(ds, spline, &folds, grid, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::PenaltySpec;
    use crate::solver::two_step_fit;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn lvl(a: f64) -> ExpectileLevel {
        ExpectileLevel::new(a).unwrap()
    }

    fn signal_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize, noise: f64) -> Dataset {
        let x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let z = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>());
        let y = DVector::from_fn(n, |i, _| {
            1.5 * x[(i, 0)] - 1.0 * x[(i, 1)]
                + (2.0 * std::f64::consts::PI * z[(i, 0)]).sin()
                + noise * (rng.random::<f64>() - 0.5)
        });
        Dataset::new(y, x, z).unwrap()
    }

    #[test]
    fn grid_shape() {
        let g = LambdaGrid::geometric(2.0, 0.01, 5).unwrap();
        assert_eq!(g.len(), 5);
        assert_relative_eq!(g.values()[0], 2.0);
        assert_relative_eq!(g.values()[4], 0.02, max_relative = 1e-12);
        assert!(g.values().windows(2).all(|w| w[0] > w[1]));
        assert!(LambdaGrid::geometric(0.0, 0.01, 5).is_err());
        let single = LambdaGrid::geometric(1.0, 0.5, 1).unwrap();
        assert_eq!(single.values(), &[1.0]);
    }

    #[test]
    fn lambda_max_zero_design_and_duplicates() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let n = 30;
        let z = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>());
        let y = DVector::from_fn(n, |_, _| rng.random::<f64>());
        let x0 = DMatrix::zeros(n, 3);
        let ds0 = Dataset::new(y.clone(), x0, z.clone()).unwrap();
        let design = DesignMatrix::build(&z, &SplineSpec::default()).unwrap();
        assert_eq!(lambda_max(&ds0, &design, lvl(0.5)).unwrap(), 0.0);

        // duplicating the strongest column leaves the max unchanged
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { y[i] } else { 0.1 * y[i] });
        let ds = Dataset::new(y.clone(), x.clone(), z.clone()).unwrap();
        let lm = lambda_max(&ds, &design, lvl(0.5)).unwrap();
        let mut x3 = DMatrix::zeros(n, 3);
        x3.set_column(0, &x.column(0));
        x3.set_column(1, &x.column(1));
        x3.set_column(2, &x.column(0));
        let ds3 = Dataset::new(y, x3, z).unwrap();
        let lm3 = lambda_max(&ds3, &design, lvl(0.5)).unwrap();
        assert_relative_eq!(lm, lm3, max_relative = 1e-10);
    }

    #[test]
    fn lambda_max_brackets_the_zero_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let ds = signal_dataset(&mut rng, 50, 6, 0.4);
        let design = DesignMatrix::build(&ds.z, &SplineSpec::default()).unwrap();
        let alpha = lvl(0.7);
        let lm = lambda_max(&ds, &design, alpha).unwrap();
        let mut cfg = SolverConfig::new(alpha, PenaltySpec::l1(1.01 * lm).unwrap());
        cfg.init = crate::solver::Init::Zero;
        let fit_hi = two_step_fit(&ds, &design, &cfg).unwrap();
        assert!(fit_hi.beta.iter().all(|&b| b == 0.0), "beta nonzero at 1.01*lambda_max");
        let cfg_lo = SolverConfig::new(alpha, PenaltySpec::l1(0.5 * lm).unwrap());
        let fit_lo = two_step_fit(&ds, &design, &cfg_lo).unwrap();
        assert!(fit_lo.beta.iter().any(|&b| b != 0.0), "beta all zero at 0.5*lambda_max");
    }

    #[test]
    fn validation_tuning_single_value_and_strong_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let train = signal_dataset(&mut rng, 80, 6, 0.3);
        let tune = signal_dataset(&mut rng, 400, 6, 0.3);
        let design = DesignMatrix::build(&train.z, &SplineSpec::default()).unwrap();
        let cfg = SolverConfig::new(lvl(0.5), PenaltySpec::scad(1.0).unwrap());

        let single = LambdaGrid::geometric(0.3, 0.5, 1).unwrap();
        let out = tune_by_validation(&train, &design, &tune, &single, &cfg).unwrap();
        assert_eq!(out.best_lambda, 0.3);

        let lm = lambda_max(&train, &design, lvl(0.5)).unwrap();
        let grid = LambdaGrid::geometric(lm, 0.01, 30).unwrap();
        let out = tune_by_validation(&train, &design, &tune, &grid, &cfg).unwrap();
        // both true signals recovered at the selected level
        assert!(out.best_fit.active_set.contains(&0));
        assert!(out.best_fit.active_set.contains(&1));
        assert_eq!(out.losses.len(), 30);
    }

    #[test]
    fn validation_tuning_noise_only_prefers_sparse_levels() {
        let mut hits = 0;
        for rep in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(2000 + rep);
            let n = 60;
            let x = DMatrix::from_fn(n, 8, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let z = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>());
            let y = DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let train = Dataset::new(y, x, z).unwrap();
            let xt = DMatrix::from_fn(300, 8, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let zt = DMatrix::from_fn(300, 1, |_, _| rng.random::<f64>());
            let yt = DVector::from_fn(300, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let tune = Dataset::new(yt, xt, zt).unwrap();
            let design = DesignMatrix::build(&train.z, &SplineSpec::default()).unwrap();
            let lm = lambda_max(&train, &design, lvl(0.5)).unwrap();
            let grid = LambdaGrid::geometric(lm, 0.01, 30).unwrap();
            let cfg = SolverConfig::new(lvl(0.5), PenaltySpec::l1(1.0).unwrap());
            let out = tune_by_validation(&train, &design, &tune, &grid, &cfg).unwrap();
            if out.best_index < 10 {
                hits += 1;
            }
        }
        assert!(hits >= 16, "sparse selection in only {hits}/20 noise replications");
    }

    #[test]
    fn cv_folds_partition_and_determinism() {
        let folds = cv_folds(11, 3, 9).unwrap();
        assert_eq!(folds.len(), 3);
        let sizes: Vec<usize> = folds.iter().map(|f| f.len()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 11);
        assert!(sizes.iter().all(|&s| s == 3 || s == 4));
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
        assert_eq!(cv_folds(11, 3, 9).unwrap(), folds);
        assert!(cv_folds(5, 6, 0).is_err());
        assert!(cv_folds(5, 1, 0).is_err());
    }

    #[test]
    fn leave_one_out_matches_enumeration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let ds = signal_dataset(&mut rng, 12, 2, 0.2);
        let spline = SplineSpec::default();
        let grid = LambdaGrid::from_values(vec![0.5, 0.1, 0.02]).unwrap();
        let cfg = SolverConfig::new(lvl(0.5), PenaltySpec::l1(1.0).unwrap());
        let folds: Vec<Vec<usize>> = (0..12).map(|i| vec![i]).collect();
        let cv = tune_by_cv_with_folds(&ds, &spline, &folds, &grid, &cfg).unwrap();

        // oracle: explicit loop over held-out points and grid values
        for (gi, &lam) in grid.values().iter().enumerate() {
            let mut total = 0.0;
            for i in 0..12 {
                let train_rows: Vec<usize> = (0..12).filter(|&r| r != i).collect();
                let train = subset(&ds, &train_rows);
                let design = DesignMatrix::build(&train.z, &spline).unwrap();
                let mut c = cfg.clone();
                c.penalty = c.penalty.with_lambda(lam);
                let fit = two_step_fit(&train, &design, &c).unwrap();
                let pred = fit
                    .predict(
                        &design,
                        &DMatrix::from_fn(1, 2, |_, j| ds.x[(i, j)]),
                        &DMatrix::from_fn(1, 1, |_, _| ds.z[(i, 0)]),
                    )
                    .unwrap();
                total += expectile_loss(ds.y[i] - pred[0], lvl(0.5));
            }
            let oracle = total / 12.0;
            assert_relative_eq!(cv.mean_losses[gi].1, oracle, max_relative = 1e-4, epsilon = 1e-6);
        }
    }

    #[test]
    fn duplicated_rows_give_symmetric_folds() {
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        let half = signal_dataset(&mut rng, 15, 3, 0.3);
        let n = 30;
        let y = DVector::from_fn(n, |i, _| half.y[i % 15]);
        let x = DMatrix::from_fn(n, 3, |i, j| half.x[(i % 15, j)]);
        let z = DMatrix::from_fn(n, 1, |i, j| half.z[(i % 15, j)]);
        let ds = Dataset::new(y, x, z).unwrap();
        let folds = vec![(0..15).collect::<Vec<_>>(), (15..30).collect::<Vec<_>>()];
        let grid = LambdaGrid::from_values(vec![0.4, 0.1]).unwrap();
        let cfg = SolverConfig::new(lvl(0.7), PenaltySpec::l1(1.0).unwrap());
        let cv = tune_by_cv_with_folds(&ds, &SplineSpec::default(), &folds, &grid, &cfg).unwrap();
        for gi in 0..2 {
            assert_relative_eq!(cv.fold_losses[0][gi], cv.fold_losses[1][gi], max_relative = 1e-8);
        }
    }

    #[test]
    fn cv_same_seed_identical_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let ds = signal_dataset(&mut rng, 40, 4, 0.3);
        let grid = LambdaGrid::from_values(vec![0.6, 0.2, 0.05]).unwrap();
        let cfg = SolverConfig::new(lvl(0.5), PenaltySpec::scad(1.0).unwrap());
        let a = tune_by_cv(&ds, &SplineSpec::default(), 5, &grid, &cfg, 77).unwrap();
        let b = tune_by_cv(&ds, &SplineSpec::default(), 5, &grid, &cfg, 77).unwrap();
        assert_eq!(a.best_lambda, b.best_lambda);
        assert_eq!(a.mean_losses, b.mean_losses);
    }

    #[test]
    fn path_active_sets_mostly_grow() {
        let mut pairs = 0usize;
        let mut violations = 0usize;
        for rep in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(900 + rep);
            let ds = signal_dataset(&mut rng, 60, 10, 0.5);
            let design = DesignMatrix::build(&ds.z, &SplineSpec::default()).unwrap();
            let problem = FitProblem::new(&ds, &design).unwrap();
            let lm = lambda_max(&ds, &design, lvl(0.5)).unwrap();
            let grid = LambdaGrid::geometric(lm, 0.01, 25).unwrap();
            let cfg = SolverConfig::new(lvl(0.5), PenaltySpec::scad(1.0).unwrap());
            let fits = fit_path(&problem, &cfg, &grid).unwrap();
            for w in fits.windows(2) {
                pairs += 1;
                if w[1].active_set.len() < w[0].active_set.len() {
                    violations += 1;
                }
            }
        }
        assert!(
            (violations as f64) <= 0.05 * pairs as f64,
            "{violations} shrinking steps out of {pairs}"
        );
    }

    #[test]
    fn training_loss_nonincreasing_in_nested_supports() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let ds = signal_dataset(&mut rng, 60, 5, 0.4);
        let design = DesignMatrix::build(&ds.z, &SplineSpec::default()).unwrap();
        let alpha = lvl(0.5);
        let mut last = f64::INFINITY;
        for support in [vec![], vec![0], vec![0, 1], vec![0, 1, 2]] {
            let fit = crate::solver::oracle_fit(&ds, &design, &support, alpha).unwrap();
            let resid = &ds.y - fit.fitted(&ds);
            let loss: f64 =
                resid.iter().map(|&r| expectile_loss(r, alpha)).sum::<f64>() / ds.n() as f64;
            assert!(loss <= last + 1e-10);
            last = loss;
        }
    }
}
