//! Hedge-ratio estimation and risk compression toolkit.
//!
//! Computes hedge ratios for a target return series against candidate
//! instruments by several routes — penalized regression (with optional
//! per-instrument hedging costs), common-factor models (PCA and factor
//! analysis with optional Varimax rotation), and a latent-variable
//! autoencoder with a strictly linear decoder — on top of decay-weighted
//! historical sampling. Evaluation covers fit quality, hedging cost and the
//! 99% value-at-risk of the hedged distribution.

pub mod betavae;
pub mod error;
pub mod eval;
pub mod factors;
pub mod marketdata;
pub mod par;
pub mod regularized;
pub mod sampler;
pub mod synth;

pub use error::{HedgeError, Result};
pub use marketdata::{load_price_csv, to_returns, PricePanel, ReturnPanel};
