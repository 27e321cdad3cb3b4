//! Bayesian compositional mediation analysis: a joint Dirichlet-multinomial
//! and balance-regression model with spike-and-slab selection, fitted by
//! MCMC, plus estimands, selection strategies, a simulation harness and
//! file I/O.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod composition;
pub mod error;
pub mod estimands;
pub mod io;
pub mod matrix;
pub mod mcmc;
pub mod model;
pub mod scalar;
pub mod sim;
pub mod special;
pub mod strategy;
pub mod summary;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Composition64 = composition::Composition<f64>;
pub type Composition32 = composition::Composition<f32>;
pub type BalanceVector64 = composition::BalanceVector<f64>;
pub type EffectSummary64 = estimands::EffectSummary<f64>;
