//! Cross-module behavior on the bundled synthetic market: equivalence of
//! the regression and factor routes, factor neutrality, and the
//! multicollinearity regime that motivates regularization.

use hedgekit_core::eval;
use hedgekit_core::factors;
use hedgekit_core::regularized::{self, RegularizationSpec};
use hedgekit_core::synth::{generate, SynthSpec};
use nalgebra::DVector;

fn sample_cov(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let k = a.len() as f64;
    let ma = a.sum() / k;
    let mb = b.sum() / k;
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (k - 1.0)
}

#[test]
fn full_pca_hedge_equals_ols() {
    let data = generate(&SynthSpec::default());
    let panel = &data.returns;
    let ols = regularized::fit_ols(panel, &RegularizationSpec::ols()).unwrap();

    let decomp = factors::pca_scores(panel).unwrap();
    let alpha = factors::regress_on_factors(&decomp, &panel.y).unwrap();
    let beta = factors::extract_hedge(&decomp, &alpha).unwrap();

    let diff = (beta - ols.beta).amax();
    assert!(diff < 1e-8, "pca vs ols difference {diff}");
}

#[test]
fn lasso_and_ridge_at_zero_lambda_equal_ols() {
    let data = generate(&SynthSpec::default());
    let panel = &data.returns;
    let ols = regularized::fit_ols(panel, &RegularizationSpec::ols()).unwrap();
    let ridge = regularized::fit_ridge(panel, &RegularizationSpec::ridge(0.0)).unwrap();
    let lasso = regularized::fit_lasso(panel, &RegularizationSpec::lasso(0.0)).unwrap();
    assert!(lasso.converged);
    assert!((ols.beta.clone() - ridge.beta).amax() < 1e-10);
    let lasso_diff = (ols.beta - lasso.beta).amax();
    assert!(lasso_diff < 5e-7, "lasso at 0 off ols by {lasso_diff}");
}

#[test]
fn every_factor_method_is_neutral() {
    let data = generate(&SynthSpec::default());
    let panel = &data.returns;

    let mut cases: Vec<(&str, factors::FactorDecomposition, DVector<f64>)> = Vec::new();
    let pca = factors::pca_scores(panel).unwrap();
    let pca_alpha = factors::regress_on_factors(&pca, &panel.y).unwrap();
    cases.push(("pca", pca, pca_alpha));
    for rotate in [false, true] {
        let fa = factors::fa_fit(panel, rotate).unwrap();
        let alpha = fa.alpha.clone().unwrap();
        cases.push((if rotate { "fa-varimax" } else { "fa" }, fa, alpha));
    }

    for (name, decomp, alpha) in &cases {
        let beta = factors::extract_hedge(decomp, alpha).unwrap();
        let hedged = &panel.y - &panel.x * &beta;
        for c in 0..decomp.scores.ncols() {
            let col = DVector::from_column_slice(decomp.scores.column(c).as_slice());
            let cov = sample_cov(&hedged, &col);
            assert!(cov.abs() < 1e-8, "{name}: factor {c} exposure {cov}");
        }
    }
}

#[test]
fn rotation_does_not_change_hedge_on_collinear_panel() {
    let data = generate(&SynthSpec::default());
    let panel = &data.returns;
    let unrot = factors::fa_fit(panel, false).unwrap();
    let rot = factors::fa_fit(panel, true).unwrap();
    let beta_u = factors::extract_hedge(&unrot, unrot.alpha.as_ref().unwrap()).unwrap();
    let beta_r = factors::extract_hedge(&rot, rot.alpha.as_ref().unwrap()).unwrap();
    let diff = (beta_u - beta_r).amax();
    assert!(diff < 1e-6, "rotation moved the hedge by {diff}");
}

// The hedged series decomposes into the target's factor residual minus the
// instrument factor residuals mapped through the hedge.
#[test]
fn hedged_residual_decomposes_into_parts() {
    let data = generate(&SynthSpec::default());
    let panel = &data.returns;
    let decomp = factors::fa_fit(panel, false).unwrap();
    let alpha = decomp.alpha.clone().unwrap();
    let beta = factors::extract_hedge(&decomp, &alpha).unwrap();

    let k = panel.n_rows() as f64;
    let y_mean = panel.y.sum() / k;
    let y_c = panel.y.map(|v| v - y_mean);
    let mut x_c = panel.x.clone();
    for j in 0..x_c.ncols() {
        let m = decomp.col_means[j];
        for i in 0..x_c.nrows() {
            x_c[(i, j)] -= m;
        }
    }

    let delta = &y_c - &decomp.scores * &alpha;
    let eps = &x_c - &decomp.scores * &decomp.gamma;
    let hedged_centered = &y_c - &x_c * &beta;
    let reconstructed = delta - eps * &beta;
    let diff = (hedged_centered - reconstructed).amax();
    assert!(diff < 1e-8, "decomposition off by {diff}");
}

#[test]
fn ridge_stabilizes_the_near_duplicate_pair() {
    let data = generate(&SynthSpec::default());
    let panel = &data.returns;

    // the pair is there by construction
    let goog = DVector::from_column_slice(panel.x.column(3).as_slice());
    let googl = DVector::from_column_slice(panel.x.column(4).as_slice());
    let rho = sample_cov(&goog, &googl)
        / (sample_cov(&goog, &goog).sqrt() * sample_cov(&googl, &googl).sqrt());
    assert!(rho > 0.999, "pair correlation {rho}");

    let ols = regularized::fit_ols(panel, &RegularizationSpec::ols()).unwrap();
    let ridge = regularized::fit_ridge(panel, &RegularizationSpec::ridge(0.01)).unwrap();

    assert!(ridge.beta.norm() < ols.beta.norm());
    let (a, b) = (ridge.beta[3], ridge.beta[4]);
    let spread = (a - b).abs() / a.abs().max(b.abs());
    assert!(spread < 0.10, "ridge pair spread {spread}");
    let ols_spread = (ols.beta[3] - ols.beta[4]).abs();
    assert!(
        ols_spread > (a - b).abs(),
        "ols should be less stable on the pair"
    );
}

#[test]
fn ols_r_squared_sits_in_the_expected_regime() {
    let data = generate(&SynthSpec::default());
    let panel = &data.returns;
    let ols = regularized::fit_ols(panel, &RegularizationSpec::ols()).unwrap();
    let report = eval::evaluate(panel, &ols.beta, None).unwrap();
    assert!(
        (0.9..1.0).contains(&report.r_squared),
        "r2 {} outside regime",
        report.r_squared
    );
}

#[test]
fn calibration_runs_on_the_synthetic_panel() {
    let data = generate(&SynthSpec::default());
    let grid = hedgekit_core::sampler::default_alpha_grid();
    let model = hedgekit_core::sampler::calibrate_decay(&data.returns, 100, &grid).unwrap();
    assert!(model.alpha_decay > 0.97 && model.alpha_decay <= 1.0);
    assert!(model.pit_stat.is_finite());
    assert!((0.0..=1.0).contains(&model.pit_pvalue));
    assert_eq!(model.component_alphas.len(), 11);
}
