//! Mixed-frequency stock volatility forecasting.
//!
//! The crate is organised along the forecasting pipeline:
//!
//! * [`marketdata`] loads, validates, cleans and frequency-aligns the raw
//!   intraday, daily, monthly and attention-index files.
//! * [`realized_vol`] turns 5-minute prices into daily returns and
//!   scale-adjusted realized variance.
//! * [`features`] compresses each indicator group into principal components.
//! * [`garch_midas`] estimates the GARCH-MIDAS model and filters the daily
//!   conditional variance `h = tau * g`.
//! * [`transformer`] is a small encoder-only transformer regressor trained by
//!   mini-batch gradient descent with hand-written backpropagation.
//! * [`evaluation`] holds the forecast loss functions, the feature ablation
//!   groups and a persistence baseline.
//! * [`simlab`] generates seeded synthetic scenarios with known ground truth.
//! * [`pipeline`] wires the pieces together for the `volmix` binary.

// `!(x > 0.0)` also rejects NaN; indexed loops follow the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod evaluation;
pub mod features;
pub mod garch_midas;
pub mod linalg;
pub mod marketdata;
pub mod optim;
pub mod pipeline;
pub mod realized_vol;
pub mod simlab;
pub mod transformer;

pub use error::{Error, Result};
pub use linalg::Matrix;
