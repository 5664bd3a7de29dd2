//! Multidimensional opinion-formation games: construction, best-response
//! dynamics, equilibrium and optimum solvers, price-of-anarchy bounds and the
//! suitability calculus behind them.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clique;
pub mod cost_fn;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod game;
pub mod linalg;
pub mod lowerbound;
pub mod optimize;
pub mod schema;

pub use cost_fn::CostFunction;
pub use error::{Error, Result};
pub use game::{HeterogeneousGame, OpinionProfile, QuadraticGame};
