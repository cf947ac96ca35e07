//! Common-factor hedge extraction.
//!
//! Instruments are mapped onto factor series `F` with loadings `gamma`
//! (`X ≈ F·gamma`), the target onto loadings `alpha` (`Y ≈ F·alpha`), and the
//! hedge ratios solve `gamma·beta = alpha`, which zeroes the hedged series'
//! exposure to every factor. Factors come from PCA or from iterated
//! principal-axis factor analysis, optionally Varimax-rotated. Because
//! `gamma` and `alpha` are both least-squares projections onto the same
//! scores, `beta` is algebraically invariant under any invertible
//! re-basis of the factors — rotation or rescaling never changes the hedge.

use nalgebra::{DMatrix, DVector};

use crate::error::{HedgeError, Result};
use crate::marketdata::ReturnPanel;

const GAMMA_CONDITION_LIMIT: f64 = 1e10;
const PAF_TOL: f64 = 1e-6;
const PAF_MAX_ITER: usize = 200;
const VARIMAX_TOL: f64 = 1e-8;
const VARIMAX_MAX_SWEEPS: usize = 500;

/// Which route produced a decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorMethod {
    Pca,
    FaUnrotated,
    FaVarimax,
}

/// Factor scores with instrument and (optionally) target loadings.
#[derive(Debug, Clone)]
pub struct FactorDecomposition {
    /// k x m centered factor series.
    pub scores: DMatrix<f64>,
    /// m x n loadings: `X_centered ≈ scores · gamma`.
    pub gamma: DMatrix<f64>,
    /// Target loadings, set when the decomposition was fitted on a panel.
    pub alpha: Option<DVector<f64>>,
    /// Eigenvalues descending (PCA) or final communalities (FA).
    pub explained_variance: DVector<f64>,
    pub method: FactorMethod,
    /// Column means removed before factor construction.
    pub col_means: DVector<f64>,
    /// True when a communality exceeded 1 and was clamped to 0.999.
    pub heywood: bool,
}

fn column_means(data: &DMatrix<f64>) -> DVector<f64> {
    let k = data.nrows() as f64;
    DVector::from_iterator(data.ncols(), data.column_iter().map(|c| c.sum() / k))
}

fn center(data: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let means = column_means(data);
    let mut out = data.clone();
    for j in 0..out.ncols() {
        let m = means[j];
        for i in 0..out.nrows() {
            out[(i, j)] -= m;
        }
    }
    (out, means)
}

/// Principal component decomposition of an arbitrary data matrix.
///
/// Eigendecomposes the sample covariance, keeps all components, and orients
/// loadings so that `X_centered ≈ scores · gamma` holds exactly.
pub fn pca_scores_matrix(data: &DMatrix<f64>) -> Result<FactorDecomposition> {
    let k = data.nrows();
    let m = data.ncols();
    if k < 2 || m == 0 {
        return Err(HedgeError::DegenerateCovariance {
            eigenvalue: 0.0,
            trace: 0.0,
        });
    }
    let (centered, col_means) = center(data);
    let cov = centered.transpose() * &centered / (k as f64 - 1.0);
    let eig = nalgebra::SymmetricEigen::try_new(cov, f64::EPSILON, 10_000)
        .ok_or(HedgeError::EigenFailure)?;

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let trace: f64 = eig.eigenvalues.iter().sum();
    let min_eig = eig.eigenvalues[order[m - 1]];
    if min_eig < 1e-12 * trace {
        return Err(HedgeError::DegenerateCovariance {
            eigenvalue: min_eig,
            trace,
        });
    }

    let vectors = DMatrix::from_fn(m, m, |r, c| eig.eigenvectors[(r, order[c])]);
    let eigenvalues = DVector::from_fn(m, |r, _| eig.eigenvalues[order[r]].max(0.0));

    let scores = &centered * &vectors;
    let gamma = vectors.transpose();
    Ok(FactorDecomposition {
        scores,
        gamma,
        alpha: None,
        explained_variance: eigenvalues,
        method: FactorMethod::Pca,
        col_means,
        heywood: false,
    })
}

/// PCA over a panel's instrument returns. Attach target loadings with
/// [`regress_on_factors`].
pub fn pca_scores(panel: &ReturnPanel) -> Result<FactorDecomposition> {
    pca_scores_matrix(&panel.x)
}

/// Least-squares loadings of `y` on the factor scores (no intercept; the
/// scores are centered and `y` is demeaned first, so the fit is exact for
/// any series in the factor span).
pub fn regress_on_factors(decomp: &FactorDecomposition, y: &DVector<f64>) -> Result<DVector<f64>> {
    let k = decomp.scores.nrows();
    if y.len() != k {
        return Err(HedgeError::LengthMismatch {
            left: y.len(),
            right: k,
        });
    }
    let mean = y.sum() / k as f64;
    let y_c = y.map(|v| v - mean);
    least_squares(&decomp.scores, &y_c).map_err(|_| HedgeError::SingularScores)
}

fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> std::result::Result<DVector<f64>, ()> {
    let svd = nalgebra::SVD::try_new(a.clone(), true, true, f64::EPSILON, 100_000).ok_or(())?;
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax <= 0.0 || smin < smax * 1e-13 {
        return Err(());
    }
    let sol = svd.solve(b, 0.0).map_err(|_| ())?;
    Ok(DVector::from_column_slice(sol.as_slice()))
}

fn least_squares_matrix(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> std::result::Result<DMatrix<f64>, ()> {
    let svd = nalgebra::SVD::try_new(a.clone(), true, true, f64::EPSILON, 100_000).ok_or(())?;
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax <= 0.0 || smin < smax * 1e-13 {
        return Err(());
    }
    svd.solve(b, 0.0).map_err(|_| ())
}

/// Solves `gamma · beta = alpha` through an SVD, refusing condition numbers
/// at or above 1e10 where the solution is numerically meaningless.
pub fn extract_hedge(decomp: &FactorDecomposition, alpha: &DVector<f64>) -> Result<DVector<f64>> {
    solve_gamma(&decomp.gamma, alpha)
}

pub(crate) fn solve_gamma(gamma: &DMatrix<f64>, alpha: &DVector<f64>) -> Result<DVector<f64>> {
    if gamma.nrows() != gamma.ncols() || gamma.nrows() != alpha.len() {
        return Err(HedgeError::LengthMismatch {
            left: gamma.nrows(),
            right: alpha.len(),
        });
    }
    let svd = nalgebra::SVD::try_new(gamma.clone(), true, true, f64::EPSILON, 100_000)
        .ok_or(HedgeError::EigenFailure)?;
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond < GAMMA_CONDITION_LIMIT) {
        return Err(HedgeError::IllConditionedGamma { cond });
    }
    let sol = svd
        .solve(alpha, 0.0)
        .map_err(|_| HedgeError::IllConditionedGamma { cond })?;
    Ok(DVector::from_column_slice(sol.as_slice()))
}

/// Varimax rotation (normalized Kaiser variant) via pairwise factor
/// rotations. Returns the rotated loadings and the criterion value after
/// each sweep; the criterion is non-decreasing across sweeps.
pub fn varimax(loadings: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = loadings.nrows();
    let m = loadings.ncols();
    if m < 2 {
        return Ok((loadings.clone(), vec![varimax_criterion(loadings)]));
    }

    // Kaiser normalization: rows scaled to unit length during rotation.
    let row_norms: Vec<f64> = (0..n)
        .map(|j| loadings.row(j).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut a = loadings.clone();
    for j in 0..n {
        if row_norms[j] > 0.0 {
            for f in 0..m {
                a[(j, f)] /= row_norms[j];
            }
        }
    }

    let mut trace = vec![varimax_criterion(&a)];
    for _sweep in 0..VARIMAX_MAX_SWEEPS {
        for p in 0..m {
            for q in (p + 1)..m {
                let mut sum_u = 0.0;
                let mut sum_v = 0.0;
                let mut sum_uv = 0.0;
                let mut sum_u2_v2 = 0.0;
                for j in 0..n {
                    let u = a[(j, p)] * a[(j, p)] - a[(j, q)] * a[(j, q)];
                    let v = 2.0 * a[(j, p)] * a[(j, q)];
                    sum_u += u;
                    sum_v += v;
                    sum_uv += u * v;
                    sum_u2_v2 += u * u - v * v;
                }
                let nf = n as f64;
                let num = 2.0 * (nf * sum_uv - sum_u * sum_v);
                let den = nf * sum_u2_v2 - (sum_u * sum_u - sum_v * sum_v);
                if num == 0.0 && den == 0.0 {
                    continue;
                }
                let phi = 0.25 * num.atan2(den);
                if phi.abs() < 1e-15 {
                    continue;
                }
                let (s, c) = phi.sin_cos();
                for j in 0..n {
                    let lp = a[(j, p)];
                    let lq = a[(j, q)];
                    a[(j, p)] = c * lp + s * lq;
                    a[(j, q)] = -s * lp + c * lq;
                }
            }
        }
        let crit = varimax_criterion(&a);
        let improved = crit - trace[trace.len() - 1];
        trace.push(crit);
        if improved.abs() < VARIMAX_TOL {
            for j in 0..n {
                if row_norms[j] > 0.0 {
                    for f in 0..m {
                        a[(j, f)] *= row_norms[j];
                    }
                }
            }
            return Ok((a, trace));
        }
    }
    Err(HedgeError::NoConvergence {
        what: "varimax rotation".into(),
        iterations: VARIMAX_MAX_SWEEPS,
    })
}

fn varimax_criterion(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows() as f64;
    let mut total = 0.0;
    for f in 0..a.ncols() {
        let mut s2 = 0.0;
        let mut s4 = 0.0;
        for j in 0..a.nrows() {
            let l2 = a[(j, f)] * a[(j, f)];
            s2 += l2;
            s4 += l2 * l2;
        }
        total += s4 - s2 * s2 / n;
    }
    total
}

/// Factor analysis by iterated principal-axis factoring with as many
/// factors as instruments, regression (Thomson) scores, and optional
/// Varimax rotation.
///
/// Communalities start at squared multiple correlations and iterate until
/// the largest change falls below 1e-6 (or 200 iterations). A communality
/// above 1 is clamped to 0.999 and flagged. Scores are rescaled to unit
/// variance, which the hedge ratios are invariant to but which keeps the
/// loading regression well conditioned.
pub fn fa_fit(panel: &ReturnPanel, rotate: bool) -> Result<FactorDecomposition> {
    let k = panel.n_rows();
    let n = panel.n_instruments();
    if k < 2 || n == 0 {
        return Err(HedgeError::DegenerateCovariance {
            eigenvalue: 0.0,
            trace: 0.0,
        });
    }

    let (centered, col_means) = center(&panel.x);
    let mut sds = DVector::zeros(n);
    for j in 0..n {
        let var = centered.column(j).iter().map(|v| v * v).sum::<f64>() / (k as f64 - 1.0);
        sds[j] = var.sqrt();
        if !(sds[j] > 0.0) {
            return Err(HedgeError::DegenerateCovariance {
                eigenvalue: 0.0,
                trace: var,
            });
        }
    }
    let mut z = centered.clone();
    for j in 0..n {
        for i in 0..k {
            z[(i, j)] /= sds[j];
        }
    }
    let corr = z.transpose() * &z / (k as f64 - 1.0);

    let corr_inv = corr
        .clone()
        .lu()
        .try_inverse()
        .ok_or(HedgeError::DegenerateCovariance {
            eigenvalue: 0.0,
            trace: n as f64,
        })?;

    // squared multiple correlations as starting communalities
    let mut communalities = DVector::from_fn(n, |j, _| {
        (1.0 - 1.0 / corr_inv[(j, j)]).clamp(0.0, 0.999)
    });

    let mut heywood = false;
    for _iter in 0..PAF_MAX_ITER {
        let (l, _eigs) = reduced_loadings(&corr, &communalities, 0.0)?;
        let mut max_change = 0.0f64;
        for j in 0..n {
            let mut h = l.row(j).iter().map(|v| v * v).sum::<f64>();
            if h > 1.0 {
                h = 0.999;
                heywood = true;
            }
            max_change = max_change.max((h - communalities[j]).abs());
            communalities[j] = h;
        }
        if max_change < PAF_TOL {
            break;
        }
    }

    // Final pass with a tiny eigenvalue floor so every factor keeps a
    // direction; a zero column would make the score matrix singular.
    let floor = 1e-12 * n as f64;
    let (loadings, _eigs) = reduced_loadings(&corr, &communalities, floor)?;

    let (rotated, method) = if rotate {
        let (l, _trace) = varimax(&loadings)?;
        (l, FactorMethod::FaVarimax)
    } else {
        (loadings, FactorMethod::FaUnrotated)
    };

    // Thomson regression scores, rescaled to unit variance per factor.
    let mut scores = &z * (&corr_inv * &rotated);
    for f in 0..n {
        let var = scores.column(f).iter().map(|v| v * v).sum::<f64>() / (k as f64 - 1.0);
        let sd = var.sqrt();
        if !(sd > 0.0) {
            return Err(HedgeError::SingularScores);
        }
        for i in 0..k {
            scores[(i, f)] /= sd;
        }
    }

    // Loadings back in return units via least squares, matching the
    // X ≈ F·gamma orientation used for hedge extraction.
    let gamma = least_squares_matrix(&scores, &centered).map_err(|_| HedgeError::SingularScores)?;

    let mut decomp = FactorDecomposition {
        scores,
        gamma,
        alpha: None,
        explained_variance: communalities,
        method,
        col_means,
        heywood,
    };
    let alpha = regress_on_factors(&decomp, &panel.y)?;
    decomp.alpha = Some(alpha);
    Ok(decomp)
}

/// Loadings of the reduced correlation matrix (diagonal replaced by
/// communalities); negative eigenvalues are clamped to `floor`.
fn reduced_loadings(
    corr: &DMatrix<f64>,
    communalities: &DVector<f64>,
    floor: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = corr.nrows();
    let mut reduced = corr.clone();
    for j in 0..n {
        reduced[(j, j)] = communalities[j];
    }
    let eig = nalgebra::SymmetricEigen::try_new(reduced, f64::EPSILON, 10_000)
        .ok_or(HedgeError::EigenFailure)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let loadings = DMatrix::from_fn(n, n, |r, c| {
        let ev = eig.eigenvalues[order[c]].max(floor);
        eig.eigenvectors[(r, order[c])] * ev.sqrt()
    });
    let eigs = DVector::from_fn(n, |r, _| eig.eigenvalues[order[r]]);
    Ok((loadings, eigs))
}
