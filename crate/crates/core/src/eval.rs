//! Fit quality, hedging cost and value-at-risk reporting.
//!
//! Conventions:
//! - R² is the squared Pearson correlation between the target and the hedge
//!   portfolio series, so it is direction-blind and invariant under positive
//!   affine transforms of the prediction; a constant prediction scores 0.
//! - the portfolio hedging cost is `-sum(psi_j * |beta_j|)` — long and short
//!   positions both pay their unit cost — and shifts the whole residual
//!   distribution, so the mean of the reported distribution equals the cost.
//! - VaR(99%) is the empirical 1% quantile of the shifted residuals, linear
//!   interpolation between closest order statistics (`h = (n-1)p`); a
//!   negative value is a loss.

use std::path::Path;

use nalgebra::DVector;

use crate::error::{HedgeError, Result};
use crate::marketdata::ReturnPanel;

/// Inputs of the unit-cost model for one instrument.
#[derive(Debug, Clone, Copy)]
pub struct CostInputs {
    /// Funding cost per unit of instrument price.
    pub funding_rate: f64,
    /// Expected bid-ask spread paid on liquidation, in price units.
    pub expected_spread: f64,
    pub ask_price: f64,
}

/// Five-number summary of the shifted residual distribution, for boxplots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Per-method evaluation of a hedge solution.
#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub r_squared: f64,
    /// Deterministic PnL drag, always <= 0; zero iff no position or no costs.
    pub hedge_cost_total: f64,
    pub var_99: f64,
    pub residual_summary: ResidualSummary,
    pub betas: Vec<f64>,
    pub mean_residual: f64,
    pub mean_shifted_residual: f64,
}

/// Unit cost of hedging: funding rate plus expected spread per unit of ask
/// price. A zero result is valid here but must be rejected by callers that
/// feed costs into a penalized fit.
pub fn unit_cost(inputs: &CostInputs) -> Result<f64> {
    if !(inputs.ask_price > 0.0) {
        return Err(HedgeError::InvalidCostModel {
            message: format!("ask price must be positive, got {}", inputs.ask_price),
        });
    }
    if inputs.expected_spread < 0.0 || inputs.funding_rate < 0.0 {
        return Err(HedgeError::InvalidCostModel {
            message: "funding rate and spread must be nonnegative".into(),
        });
    }
    Ok(inputs.funding_rate + inputs.expected_spread / inputs.ask_price)
}

/// Squared Pearson correlation of `y` and `y_hat`; 0 when either series is
/// constant.
pub fn r_squared(y: &DVector<f64>, y_hat: &DVector<f64>) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(HedgeError::LengthMismatch {
            left: y.len(),
            right: y_hat.len(),
        });
    }
    if y.len() < 2 {
        return Err(HedgeError::LengthMismatch {
            left: y.len(),
            right: 2,
        });
    }
    let k = y.len() as f64;
    let my = y.sum() / k;
    let mh = y_hat.sum() / k;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..y.len() {
        let a = y[i] - my;
        let b = y_hat[i] - mh;
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Ok(0.0);
    }
    Ok(((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0))
}

/// Linear-interpolation quantile (`h = (n-1)p` between closest order
/// statistics) of an already sorted slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// 99% value-at-risk: the empirical 1% quantile of the residuals shifted by
/// the (nonpositive) total hedging cost. Computed as quantile-then-shift, so
/// shift equivariance is exact.
pub fn var_99(residuals: &[f64], total_cost: f64) -> Result<f64> {
    if residuals.len() < 100 {
        return Err(HedgeError::TooFewResiduals {
            len: residuals.len(),
        });
    }
    if total_cost > 0.0 {
        return Err(HedgeError::InvalidCostModel {
            message: format!("total hedging cost must be nonpositive, got {total_cost}"),
        });
    }
    let mut sorted = residuals.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(quantile_sorted(&sorted, 0.01) + total_cost)
}

/// Evaluates hedge ratios on a panel: residuals `y - X·beta`, total cost
/// `-sum(psi|beta|)`, R² against the hedge portfolio, VaR and a boxplot
/// summary of the cost-shifted residuals.
pub fn evaluate(
    panel: &ReturnPanel,
    beta: &DVector<f64>,
    costs: Option<&[f64]>,
) -> Result<EvaluationReport> {
    let n = panel.n_instruments();
    if beta.len() != n {
        return Err(HedgeError::LengthMismatch {
            left: beta.len(),
            right: n,
        });
    }
    let hedge_cost_total = match costs {
        Some(psi) => {
            if psi.len() != n {
                return Err(HedgeError::LengthMismatch {
                    left: psi.len(),
                    right: n,
                });
            }
            for (index, &value) in psi.iter().enumerate() {
                if !(value > 0.0) {
                    return Err(HedgeError::NonPositiveCost { index, value });
                }
            }
            -psi.iter()
                .zip(beta.iter())
                .map(|(p, b)| p * b.abs())
                .sum::<f64>()
        }
        None => 0.0,
    };

    let y_hat = &panel.x * beta;
    let residuals = &panel.y - &y_hat;
    let rsq = r_squared(&panel.y, &y_hat)?;
    let var = var_99(residuals.as_slice(), hedge_cost_total)?;

    let shifted: Vec<f64> = residuals.iter().map(|r| r + hedge_cost_total).collect();
    let mut sorted = shifted.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let residual_summary = ResidualSummary {
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    };

    let k = residuals.len() as f64;
    let mean_residual = residuals.sum() / k;
    let mean_shifted_residual = shifted.iter().sum::<f64>() / k;

    Ok(EvaluationReport {
        r_squared: rsq,
        hedge_cost_total,
        var_99: var,
        residual_summary,
        betas: beta.iter().copied().collect(),
        mean_residual,
        mean_shifted_residual,
    })
}

/// Parses a `variable,cost` CSV (one instrument per row, costs as decimal
/// reals) into ordered name/cost pairs.
pub fn load_cost_csv<P: AsRef<Path>>(path: P) -> Result<Vec<(String, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(|e| HedgeError::MalformedCsv {
            line: 0,
            message: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| HedgeError::MalformedCsv {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.len() != 2 || &headers[0] != "variable" || &headers[1] != "cost" {
        return Err(HedgeError::MalformedCsv {
            line: 1,
            message: "header must be `variable,cost`".into(),
        });
    }
    let mut out = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| HedgeError::MalformedCsv {
            line,
            message: e.to_string(),
        })?;
        if record.len() != 2 {
            return Err(HedgeError::MalformedCsv {
                line,
                message: format!("expected 2 fields, got {}", record.len()),
            });
        }
        let cost: f64 = record[1].parse().map_err(|_| HedgeError::MalformedCsv {
            line,
            message: format!("unparseable cost `{}`", &record[1]),
        })?;
        out.push((record[0].to_string(), cost));
    }
    Ok(out)
}
