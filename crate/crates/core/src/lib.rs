//! Worst-case option pricing under uncertain volatility with slowly varying
//! stochastic bounds.
//!
//! The volatility of the asset is only known to lie in `[d sqrt(Z), u sqrt(Z)]`
//! where `Z` is a slow CIR process. This crate computes
//!
//! * the leading-order price `P0` and first correction `P1`
//!   ([`solver_p0p1`]),
//! * the full two-dimensional worst-case price `P^delta`
//!   ([`solver_pdelta`]),
//! * Monte Carlo paths of the bound process and the coupled asset
//!   ([`montecarlo`]),
//! * and the accuracy experiments built on them ([`analysis`]).

pub mod analysis;
pub mod blackscholes;
pub mod error;
pub mod export;
pub mod linsolve;
pub mod montecarlo;
pub mod params;
pub mod payoff;
pub mod solver_p0p1;
pub mod solver_pdelta;
pub mod stencils;

pub use error::{Error, Result};
pub use params::{
    build_grid, validate_params, Grid2D, GridSpec, ModelParams, OptimizerMode, SolverConfig,
    Surface, TerminalSampling,
};
pub use payoff::PayoffSpec;
