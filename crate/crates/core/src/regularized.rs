//! Penalized least-squares hedge fits.
//!
//! OLS, Lasso (L1) and Ridge (L2), each optionally cost-adjusted: scaling
//! column `j` by `1/psi_j` and un-scaling the fitted coefficient afterwards
//! makes the penalty act on `psi_j * beta_j`, so expensive instruments are
//! shrunk harder while the unpenalized objective is untouched.
//!
//! Conventions, fixed across the crate:
//! - Lasso minimizes `0.5·sum(r²) + lambda·sum(|beta|)`; Ridge solves
//!   `(XᵀX + lambda·I)·beta = Xᵀy` exactly, the stationary point of
//!   `0.5·sum(r²) + (lambda/2)·sum(beta²)`;
//! - no intercept by default; when enabled it is never penalized
//!   (implemented by centering);
//! - no silent column standardization — cost scaling is itself a deliberate
//!   column scaling and must not be cancelled.

use nalgebra::{DMatrix, DVector};

use crate::error::{HedgeError, Result};
use crate::marketdata::ReturnPanel;
use crate::par;

const LASSO_TOL: f64 = 1e-9;
const LASSO_MAX_CYCLES: usize = 100_000;

/// Penalty applied to the coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Penalty {
    None,
    L1,
    L2,
}

/// Fit request: penalty, strength, optional per-instrument unit costs and
/// the (diagnostic) intercept flag.
#[derive(Debug, Clone)]
pub struct RegularizationSpec {
    pub penalty: Penalty,
    pub lambda: f64,
    /// Relative unit costs `psi`, all positive, one per instrument.
    pub costs: Option<Vec<f64>>,
    pub fit_intercept: bool,
}

impl RegularizationSpec {
    pub fn ols() -> Self {
        Self {
            penalty: Penalty::None,
            lambda: 0.0,
            costs: None,
            fit_intercept: false,
        }
    }

    pub fn lasso(lambda: f64) -> Self {
        Self {
            penalty: Penalty::L1,
            lambda,
            costs: None,
            fit_intercept: false,
        }
    }

    pub fn ridge(lambda: f64) -> Self {
        Self {
            penalty: Penalty::L2,
            lambda,
            costs: None,
            fit_intercept: false,
        }
    }

    pub fn with_costs(mut self, costs: Vec<f64>) -> Self {
        self.costs = Some(costs);
        self
    }

    pub fn with_intercept(mut self, fit_intercept: bool) -> Self {
        self.fit_intercept = fit_intercept;
        self
    }
}

/// Fitted hedge ratios with residuals and solver metadata.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta: DVector<f64>,
    pub intercept: f64,
    pub residuals: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(HedgeError::InvalidLambda { lambda });
    }
    Ok(())
}

fn centered_views(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    fit_intercept: bool,
) -> (DMatrix<f64>, DVector<f64>, DVector<f64>, f64) {
    if !fit_intercept {
        return (x.clone(), y.clone(), DVector::zeros(x.ncols()), 0.0);
    }
    let k = x.nrows() as f64;
    let x_means = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / k));
    let y_mean = y.sum() / k;
    let mut xc = x.clone();
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            xc[(i, j)] -= x_means[j];
        }
    }
    let yc = y.map(|v| v - y_mean);
    (xc, yc, x_means, y_mean)
}

fn finish(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: DVector<f64>,
    x_means: &DVector<f64>,
    y_mean: f64,
    fit_intercept: bool,
    iterations: usize,
    converged: bool,
) -> FitResult {
    let intercept = if fit_intercept {
        y_mean - x_means.dot(&beta)
    } else {
        0.0
    };
    let residuals = y - x * &beta - DVector::from_element(y.len(), intercept);
    FitResult {
        beta,
        intercept,
        residuals,
        iterations,
        converged,
    }
}

/// Ordinary least squares through an SVD of the design matrix.
///
/// Rank deficiency is rejected as [`HedgeError::SingularDesign`], naming the
/// columns that participate in the collinear direction when detectable.
pub fn fit_ols(panel: &ReturnPanel, spec: &RegularizationSpec) -> Result<FitResult> {
    let (xc, yc, x_means, y_mean) = centered_views(&panel.x, &panel.y, spec.fit_intercept);
    let beta = ols_solve(&xc, &yc, &panel.instrument_names)?;
    Ok(finish(
        &panel.x,
        &panel.y,
        beta,
        &x_means,
        y_mean,
        spec.fit_intercept,
        1,
        true,
    ))
}

fn ols_solve(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<DVector<f64>> {
    let svd = nalgebra::SVD::try_new(x.clone(), true, true, f64::EPSILON, 100_000)
        .ok_or(HedgeError::EigenFailure)?;
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if x.nrows() <= x.ncols() || smax <= 0.0 || smin < smax * 1e-10 {
        // columns loading on the near-null singular direction
        let columns = match &svd.v_t {
            Some(v_t) => {
                let null_dir = v_t.row(v_t.nrows() - 1);
                let vmax = null_dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                names
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| null_dir[*j].abs() > 0.3 * vmax)
                    .map(|(_, n)| n.clone())
                    .collect()
            }
            None => names.to_vec(),
        };
        return Err(HedgeError::SingularDesign { columns });
    }
    let sol = svd
        .solve(y, 0.0)
        .map_err(|_| HedgeError::SingularDesign {
            columns: names.to_vec(),
        })?;
    Ok(DVector::from_column_slice(sol.as_slice()))
}

/// Ridge regression: solves `(XᵀX + lambda I) beta = Xᵀy` exactly.
/// `lambda = 0` falls back to [`fit_ols`].
pub fn fit_ridge(panel: &ReturnPanel, spec: &RegularizationSpec) -> Result<FitResult> {
    check_lambda(spec.lambda)?;
    if spec.lambda == 0.0 {
        return fit_ols(panel, spec);
    }
    let (xc, yc, x_means, y_mean) = centered_views(&panel.x, &panel.y, spec.fit_intercept);
    let beta = ridge_solve(&xc, &yc, spec.lambda)?;
    Ok(finish(
        &panel.x,
        &panel.y,
        beta,
        &x_means,
        y_mean,
        spec.fit_intercept,
        1,
        true,
    ))
}

fn ridge_solve(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let n = x.ncols();
    let mut gram = x.transpose() * x;
    for j in 0..n {
        gram[(j, j)] += lambda;
    }
    let rhs = x.transpose() * y;
    // positive definite for lambda > 0
    gram.cholesky()
        .map(|ch| ch.solve(&rhs))
        .ok_or(HedgeError::EigenFailure)
}

/// Lasso by cyclic coordinate descent with soft-thresholding.
///
/// Stops when the largest coordinate change in a full cycle drops below
/// 1e-9, or after 100,000 cycles with `converged = false` (the best iterate
/// is still returned). Between duplicated columns at equal cost the lower
/// index wins weight first — a consequence of the cyclic visit order.
pub fn fit_lasso(panel: &ReturnPanel, spec: &RegularizationSpec) -> Result<FitResult> {
    check_lambda(spec.lambda)?;
    let (xc, yc, x_means, y_mean) = centered_views(&panel.x, &panel.y, spec.fit_intercept);
    let (beta, iterations, converged) = lasso_cd(&xc, &yc, spec.lambda, None);
    Ok(finish(
        &panel.x,
        &panel.y,
        beta,
        &x_means,
        y_mean,
        spec.fit_intercept,
        iterations,
        converged,
    ))
}

fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}

fn lasso_cd(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    mut objective_trace: Option<&mut Vec<f64>>,
) -> (DVector<f64>, usize, bool) {
    let n = x.ncols();
    let col_sq: Vec<f64> = (0..n).map(|j| x.column(j).dot(&x.column(j))).collect();
    let mut beta = DVector::zeros(n);
    let mut residual = y.clone();
    let mut cycles = 0;
    let mut converged = false;
    while cycles < LASSO_MAX_CYCLES {
        cycles += 1;
        let mut max_change = 0.0f64;
        for j in 0..n {
            if col_sq[j] == 0.0 {
                continue;
            }
            let old = beta[j];
            let rho = x.column(j).dot(&residual) + col_sq[j] * old;
            let new = soft_threshold(rho, lambda) / col_sq[j];
            if new != old {
                residual.axpy(old - new, &x.column(j).into_owned(), 1.0);
                beta[j] = new;
            }
            max_change = max_change.max((new - old).abs());
        }
        if let Some(trace) = objective_trace.as_deref_mut() {
            let rss: f64 = residual.iter().map(|r| r * r).sum();
            let l1: f64 = beta.iter().map(|b| b.abs()).sum();
            trace.push(0.5 * rss + lambda * l1);
        }
        if max_change < LASSO_TOL {
            converged = true;
            break;
        }
    }
    (beta, cycles, converged)
}

/// Cost-adjusted fit: scales each column by `1/psi_j`, fits the requested
/// penalty on the scaled design, and un-scales the coefficients, so the
/// penalty acts on `psi_j * beta_j`. Residuals are computed in the original
/// design. Without a penalty, costs change nothing and this is plain OLS.
pub fn fit_with_costs(panel: &ReturnPanel, spec: &RegularizationSpec) -> Result<FitResult> {
    let costs = spec.costs.as_ref().ok_or(HedgeError::NonPositiveCost {
        index: 0,
        value: f64::NAN,
    })?;
    if costs.len() != panel.n_instruments() {
        return Err(HedgeError::LengthMismatch {
            left: costs.len(),
            right: panel.n_instruments(),
        });
    }
    for (index, &value) in costs.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(HedgeError::NonPositiveCost { index, value });
        }
    }
    if spec.penalty == Penalty::None {
        return fit_ols(panel, spec);
    }
    check_lambda(spec.lambda)?;

    let mut scaled = panel.x.clone();
    for j in 0..scaled.ncols() {
        for i in 0..scaled.nrows() {
            scaled[(i, j)] /= costs[j];
        }
    }
    let (xc, yc, _, _) = centered_views(&scaled, &panel.y, spec.fit_intercept);
    let (mut beta, iterations, converged) = match spec.penalty {
        Penalty::L1 => lasso_cd(&xc, &yc, spec.lambda, None),
        Penalty::L2 => {
            let b = ridge_solve(&xc, &yc, spec.lambda)?;
            (b, 1, true)
        }
        Penalty::None => unreachable!(),
    };
    for j in 0..beta.len() {
        beta[j] /= costs[j];
    }
    let (_, _, x_means, y_mean) = centered_views(&panel.x, &panel.y, spec.fit_intercept);
    Ok(finish(
        &panel.x,
        &panel.y,
        beta,
        &x_means,
        y_mean,
        spec.fit_intercept,
        iterations,
        converged,
    ))
}

/// k-fold cross-validation over a lambda ladder, scoring each candidate by
/// decay-weighted out-of-sample squared residuals. Returns the winning
/// lambda (earliest ladder entry on ties) and the per-lambda scores.
pub fn cross_validate_lambda(
    panel: &ReturnPanel,
    spec: &RegularizationSpec,
    ladder: &[f64],
    folds: usize,
    decay_alpha: f64,
) -> Result<(f64, Vec<(f64, f64)>)> {
    if ladder.is_empty() || folds < 2 {
        return Err(HedgeError::ZeroLength);
    }
    let k = panel.n_rows();
    if k < folds * 2 {
        return Err(HedgeError::SeriesTooShort {
            len: k,
            window: folds * 2,
        });
    }
    let weights = crate::sampler::decay_weights(k, decay_alpha)?;

    let bounds: Vec<(usize, usize)> = (0..folds)
        .map(|f| (f * k / folds, (f + 1) * k / folds))
        .collect();

    let scores: Vec<Result<f64>> = par::map_collect(ladder, |&lambda| {
        let mut weighted_sq = 0.0;
        let mut weight_sum = 0.0;
        for &(lo, hi) in &bounds {
            let train_rows: Vec<usize> = (0..k).filter(|r| *r < lo || *r >= hi).collect();
            let sub = subset_panel(panel, &train_rows);
            let sub_spec = RegularizationSpec {
                lambda,
                ..spec.clone()
            };
            let fit = match spec.penalty {
                Penalty::None => fit_ols(&sub, &sub_spec)?,
                Penalty::L1 | Penalty::L2 => {
                    let f = if spec.costs.is_some() {
                        fit_with_costs(&sub, &sub_spec)?
                    } else if spec.penalty == Penalty::L1 {
                        fit_lasso(&sub, &sub_spec)?
                    } else {
                        fit_ridge(&sub, &sub_spec)?
                    };
                    f
                }
            };
            for r in lo..hi {
                let pred: f64 = (0..panel.n_instruments())
                    .map(|c| panel.x[(r, c)] * fit.beta[c])
                    .sum::<f64>()
                    + fit.intercept;
                let e = panel.y[r] - pred;
                weighted_sq += weights[r] * e * e;
                weight_sum += weights[r];
            }
        }
        Ok(weighted_sq / weight_sum)
    });

    let mut table = Vec::with_capacity(ladder.len());
    for (i, s) in scores.into_iter().enumerate() {
        table.push((ladder[i], s?));
    }
    let mut best = 0;
    for i in 1..table.len() {
        if table[i].1 < table[best].1 {
            best = i;
        }
    }
    Ok((table[best].0, table))
}

fn subset_panel(panel: &ReturnPanel, rows: &[usize]) -> ReturnPanel {
    let n = panel.n_instruments();
    let y = DVector::from_fn(rows.len(), |r, _| panel.y[rows[r]]);
    let x = DMatrix::from_fn(rows.len(), n, |r, c| panel.x[(rows[r], c)]);
    let dates = rows.iter().map(|&r| panel.dates[r].clone()).collect();
    ReturnPanel::new(
        dates,
        panel.target_name.clone(),
        y,
        x,
        panel.instrument_names.clone(),
    )
    .expect("subset of a valid panel is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rng: &mut ChaCha8Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    fn panel_from(x: DMatrix<f64>, y: DVector<f64>) -> ReturnPanel {
        let k = x.nrows();
        let n = x.ncols();
        ReturnPanel::new(
            (0..k).map(|i| format!("d{i:04}")).collect(),
            "Y".into(),
            y,
            x,
            (0..n).map(|i| format!("X{i}")).collect(),
        )
        .unwrap()
    }

    fn random_panel(seed: u64, k: usize, n: usize) -> ReturnPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(k, n, |_, _| randn(&mut rng) * 0.01);
        let y = DVector::from_fn(k, |r, _| {
            (0..n).map(|c| x[(r, c)] * (0.2 + 0.1 * c as f64)).sum::<f64>()
                + randn(&mut rng) * 0.003
        });
        panel_from(x, y)
    }

    #[test]
    fn exact_linear_relation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(20, 1, |_, _| randn(&mut rng));
        let y = DVector::from_fn(20, |r, _| 2.0 * x[(r, 0)]);
        let fit = fit_ols(&panel_from(x, y), &RegularizationSpec::ols()).unwrap();
        assert_relative_eq!(fit.beta[0], 2.0, epsilon = 1e-12);
        assert!(fit.residuals.amax() < 1e-12);
    }

    #[test]
    fn duplicated_column_is_singular() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base = DVector::from_fn(30, |_, _| randn(&mut rng));
        let x = DMatrix::from_fn(30, 2, |r, _| base[r]);
        let y = DVector::from_fn(30, |r, _| base[r] + 0.1 * randn(&mut rng));
        let err = fit_ols(&panel_from(x, y), &RegularizationSpec::ols()).unwrap_err();
        match err {
            HedgeError::SingularDesign { columns } => {
                assert!(columns.contains(&"X0".to_string()));
                assert!(columns.contains(&"X1".to_string()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ols_matches_normal_equations_oracle() {
        let panel = random_panel(3, 50, 3);
        let fit = fit_ols(&panel, &RegularizationSpec::ols()).unwrap();
        let gram = panel.x.transpose() * &panel.x;
        let rhs = panel.x.transpose() * &panel.y;
        let oracle = gram.lu().solve(&rhs).unwrap();
        assert!((fit.beta - oracle).amax() < 1e-8);
    }

    #[test]
    fn ridge_zero_lambda_is_ols() {
        let panel = random_panel(4, 60, 4);
        let ols = fit_ols(&panel, &RegularizationSpec::ols()).unwrap();
        let ridge = fit_ridge(&panel, &RegularizationSpec::ridge(0.0)).unwrap();
        assert!((ols.beta - ridge.beta).amax() < 1e-10);
    }

    #[test]
    fn ridge_handles_duplicated_columns_symmetrically() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = DVector::from_fn(40, |_, _| randn(&mut rng));
        let x = DMatrix::from_fn(40, 2, |r, _| base[r]);
        let y = DVector::from_fn(40, |r, _| base[r] + 0.05 * randn(&mut rng));
        let fit = fit_ridge(&panel_from(x, y), &RegularizationSpec::ridge(0.1)).unwrap();
        assert!(fit.beta[0].is_finite());
        assert_relative_eq!(fit.beta[0], fit.beta[1], epsilon = 1e-10);
    }

    #[test]
    fn ridge_one_dimensional_closed_form() {
        // x with xᵀx = 1, xᵀy = 1, lambda = 1 → beta = 1/(1+1)
        let x = DMatrix::from_column_slice(4, 1, &[0.5, 0.5, 0.5, 0.5]);
        let y = DVector::from_vec(vec![0.5, 0.5, 0.5, 0.5]);
        let fit = fit_ridge(&panel_from(x, y), &RegularizationSpec::ridge(1.0)).unwrap();
        assert_relative_eq!(fit.beta[0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn ridge_linear_system_residual_is_tiny() {
        let panel = random_panel(6, 80, 5);
        let lambda = 0.37;
        let fit = fit_ridge(&panel, &RegularizationSpec::ridge(lambda)).unwrap();
        let mut gram = panel.x.transpose() * &panel.x;
        for j in 0..5 {
            gram[(j, j)] += lambda;
        }
        let lhs = gram * &fit.beta;
        let rhs = panel.x.transpose() * &panel.y;
        assert!((lhs - rhs).amax() < 1e-10);
    }

    #[test]
    fn lasso_zero_lambda_matches_ols() {
        let panel = random_panel(7, 70, 4);
        let ols = fit_ols(&panel, &RegularizationSpec::ols()).unwrap();
        let lasso = fit_lasso(&panel, &RegularizationSpec::lasso(0.0)).unwrap();
        assert!(lasso.converged);
        assert!((ols.beta - lasso.beta).amax() < 1e-6);
    }

    #[test]
    fn lambda_above_max_zeroes_everything() {
        let panel = random_panel(8, 50, 3);
        // the standard bound: lambda >= max_j |x_jᵀ y| forces beta = 0
        let lambda_max = (0..3)
            .map(|j| panel.x.column(j).dot(&panel.y).abs())
            .fold(0.0f64, f64::max);
        let fit = fit_lasso(&panel, &RegularizationSpec::lasso(lambda_max * 1.0001)).unwrap();
        for j in 0..3 {
            assert_eq!(fit.beta[j], 0.0);
        }
    }

    #[test]
    fn orthonormal_design_soft_thresholds() {
        // columns of Q from a QR factorization are orthonormal
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let raw = DMatrix::from_fn(30, 3, |_, _| randn(&mut rng));
        let q = raw.qr().q().columns(0, 3).into_owned();
        let y = DVector::from_fn(30, |r, _| randn(&mut rng) + q[(r, 0)]);
        let lambda = 0.15;
        let fit = fit_lasso(&panel_from(q.clone(), y.clone()), &RegularizationSpec::lasso(lambda))
            .unwrap();
        for j in 0..3 {
            let expected = soft_threshold(q.column(j).dot(&y), lambda);
            assert_relative_eq!(fit.beta[j], expected, epsilon = 1e-10);
        }
    }

    #[test]
    fn lasso_objective_descends_every_cycle() {
        let panel = random_panel(10, 60, 5);
        let mut trace = Vec::new();
        let _ = lasso_cd(&panel.x, &panel.y, 1e-4, Some(&mut trace));
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "objective rose: {w:?}");
        }
    }

    #[test]
    fn shrinkage_is_monotone_in_lambda() {
        let panel = random_panel(11, 90, 4);
        let ladder = [0.0, 1e-4, 1e-3, 1e-2, 1e-1];
        let mut prev_l2 = f64::INFINITY;
        let mut prev_l1 = f64::INFINITY;
        for &lambda in &ladder {
            let ridge = fit_ridge(&panel, &RegularizationSpec::ridge(lambda)).unwrap();
            let lasso = fit_lasso(&panel, &RegularizationSpec::lasso(lambda)).unwrap();
            let l2 = ridge.beta.norm();
            let l1: f64 = lasso.beta.iter().map(|b| b.abs()).sum();
            assert!(l2 <= prev_l2 + 1e-12);
            assert!(l1 <= prev_l1 + 1e-12);
            prev_l2 = l2;
            prev_l1 = l1;
        }
    }

    #[test]
    fn unit_costs_change_nothing() {
        let panel = random_panel(12, 60, 3);
        for penalty in [Penalty::L1, Penalty::L2] {
            let spec = RegularizationSpec {
                penalty,
                lambda: 1e-3,
                costs: None,
                fit_intercept: false,
            };
            let plain = match penalty {
                Penalty::L1 => fit_lasso(&panel, &spec).unwrap(),
                _ => fit_ridge(&panel, &spec).unwrap(),
            };
            let costed = fit_with_costs(
                &panel,
                &RegularizationSpec {
                    costs: Some(vec![1.0; 3]),
                    ..spec
                },
            )
            .unwrap();
            assert!((plain.beta - costed.beta).amax() < 1e-10);
        }
    }

    #[test]
    fn expensive_duplicate_gets_zero_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let base = DVector::from_fn(50, |_, _| randn(&mut rng) * 0.01);
        let x = DMatrix::from_fn(50, 2, |r, _| base[r]);
        let y = DVector::from_fn(50, |r, _| base[r] * 0.8);
        let spec = RegularizationSpec::lasso(1e-5).with_costs(vec![1.0, 10.0]);
        let fit = fit_with_costs(&panel_from(x, y), &spec).unwrap();
        assert!(fit.beta[0] != 0.0, "cheap column should carry the hedge");
        assert_eq!(fit.beta[1], 0.0, "expensive duplicate must be exactly zero");
    }

    #[test]
    fn costs_without_penalty_equal_ols() {
        let panel = random_panel(14, 40, 3);
        let ols = fit_ols(&panel, &RegularizationSpec::ols()).unwrap();
        let spec = RegularizationSpec::ols().with_costs(vec![0.5, 2.0, 7.0]);
        let costed = fit_with_costs(&panel, &spec).unwrap();
        assert!((ols.beta - costed.beta).amax() < 1e-12);
    }

    #[test]
    fn nonpositive_cost_is_rejected() {
        let panel = random_panel(15, 30, 2);
        let spec = RegularizationSpec::lasso(0.1).with_costs(vec![1.0, 0.0]);
        assert!(matches!(
            fit_with_costs(&panel, &spec),
            Err(HedgeError::NonPositiveCost { index: 1, .. })
        ));
    }

    // brute-force oracle: refine a dense grid over (beta0, beta1) for the
    // cost-adjusted objective and compare with the change-of-variables fit
    fn grid_minimize<F: Fn(f64, f64) -> f64>(objective: F) -> (f64, f64) {
        let mut c = (0.0f64, 0.0f64);
        let mut w = 2.0f64;
        for _ in 0..8 {
            let mut best = (c.0, c.1, objective(c.0, c.1));
            let steps = 40;
            for i in 0..=steps {
                for j in 0..=steps {
                    let b0 = c.0 - w + 2.0 * w * i as f64 / steps as f64;
                    let b1 = c.1 - w + 2.0 * w * j as f64 / steps as f64;
                    let v = objective(b0, b1);
                    if v < best.2 {
                        best = (b0, b1, v);
                    }
                }
            }
            c = (best.0, best.1);
            w *= 0.2;
        }
        c
    }

    #[test]
    fn cost_change_of_variables_matches_direct_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let x = DMatrix::from_fn(30, 2, |_, _| randn(&mut rng));
        let y = DVector::from_fn(30, |r, _| 0.7 * x[(r, 0)] - 0.3 * x[(r, 1)] + 0.1 * randn(&mut rng));
        let psi = [1.0, 3.0];
        let lambda = 0.8;
        let panel = panel_from(x.clone(), y.clone());

        for penalty in [Penalty::L1, Penalty::L2] {
            let spec = RegularizationSpec {
                penalty,
                lambda,
                costs: Some(psi.to_vec()),
                fit_intercept: false,
            };
            let fit = fit_with_costs(&panel, &spec).unwrap();
            // per the crate conventions the L2 penalty enters as lambda/2
            let (p, pen_scale) = if penalty == Penalty::L1 {
                (1.0, lambda)
            } else {
                (2.0, lambda / 2.0)
            };
            let objective = |b0: f64, b1: f64| {
                let mut rss = 0.0;
                for r in 0..30 {
                    let e = y[r] - x[(r, 0)] * b0 - x[(r, 1)] * b1;
                    rss += e * e;
                }
                0.5 * rss
                    + pen_scale * ((psi[0] * b0).abs().powf(p) + (psi[1] * b1).abs().powf(p))
            };
            let (b0, b1) = grid_minimize(objective);
            assert!(
                (fit.beta[0] - b0).abs() < 1e-4 && (fit.beta[1] - b1).abs() < 1e-4,
                "{penalty:?}: fit ({}, {}) vs oracle ({b0}, {b1})",
                fit.beta[0],
                fit.beta[1]
            );
        }
    }

    #[test]
    fn residuals_match_definition_and_center() {
        let panel = random_panel(17, 100, 3);
        let fit = fit_ols(&panel, &RegularizationSpec::ols()).unwrap();
        let recomputed = &panel.y - &panel.x * &fit.beta;
        assert!((fit.residuals.clone() - recomputed).amax() < 1e-10);

        // on demeaned inputs the residual mean is sampling noise around zero
        let mean = fit.residuals.sum() / fit.residuals.len() as f64;
        assert!(mean.abs() < 1e-3);
    }

    #[test]
    fn intercept_is_unpenalized_and_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let x = DMatrix::from_fn(80, 2, |_, _| randn(&mut rng));
        let y = DVector::from_fn(80, |r, _| 3.0 + 0.5 * x[(r, 0)] - 0.2 * x[(r, 1)]);
        let panel = panel_from(x, y);
        for fit in [
            fit_ols(&panel, &RegularizationSpec::ols().with_intercept(true)).unwrap(),
            fit_ridge(&panel, &RegularizationSpec::ridge(1e-8).with_intercept(true)).unwrap(),
            fit_lasso(&panel, &RegularizationSpec::lasso(0.0).with_intercept(true)).unwrap(),
        ] {
            assert_relative_eq!(fit.intercept, 3.0, epsilon = 1e-5);
            assert_relative_eq!(fit.beta[0], 0.5, epsilon = 1e-5);
        }
    }

    #[test]
    fn cross_validation_picks_from_ladder() {
        let panel = random_panel(19, 120, 4);
        let ladder = [0.0, 1e-4, 1e-3, 1e-2];
        let (chosen, table) = cross_validate_lambda(
            &panel,
            &RegularizationSpec::ridge(0.0),
            &ladder,
            5,
            0.999,
        )
        .unwrap();
        assert!(ladder.contains(&chosen));
        assert_eq!(table.len(), 4);
        assert!(table.iter().all(|(_, s)| s.is_finite()));
        let best = table.iter().map(|(_, s)| *s).fold(f64::INFINITY, f64::min);
        let chosen_score = table.iter().find(|(l, _)| *l == chosen).unwrap().1;
        assert_eq!(best, chosen_score);
    }
}
