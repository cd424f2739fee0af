//! Numerical laboratory for short-horizon relative arbitrage in high
//! dimensional markets.
//!
//! The crate is organised bottom-up:
//!
//! * [`sequences`]: regularly varying weight sequences, their norms and
//!   asymptotic diagnostics.
//! * [`dirichlet`]: gamma-construction Dirichlet sampling and Monte Carlo
//!   concentration reports.
//! * [`expconcave`]: cosine generating functions and `(K, N)` concavity
//!   certificates.
//! * [`portfolio`]: functionally generated portfolio maps and baselines.
//! * [`wfsim`]: Wright-Fisher market weight simulation.
//! * [`valuation`]: wealth recursion and Fernholz decomposition along paths.
//! * [`experiments`]: desk-scale sweeps producing JSON reports.
//! * [`market_data`]: market-cap ingestion and the rolling-period backtest.
//! * [`cli`]: the `astra` command line front end.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dirichlet;
pub mod error;
pub mod expconcave;
pub mod experiments;
pub mod market_data;
pub mod numeric;
pub mod portfolio;
pub mod rng;
pub mod sequences;
pub mod simplex;
pub mod valuation;
pub mod wfsim;

pub use error::{Error, Result};
pub use simplex::SimplexPoint;
