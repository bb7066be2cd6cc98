//! Second moments, stability, optimal control and filtering for linear
//! systems whose parameters follow a Markov chain read backwards in time.
//!
//! The system `x(t+1) = A_{theta(t)} x(t) + B_{theta(t)} u(t)` is driven by
//! `theta(t) = eta(horizon - t)` for a forward chain `eta`. The crate provides
//! the conditioned second-moment recursion and its stability test
//! ([`operators`], [`moments`]), the backward Riccati synthesis of optimal
//! mode-dependent feedback and the forward LMMSE filter it is dual to
//! ([`riccati`]), and simulation/enumeration oracles ([`montecarlo`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod export;
pub mod family;
pub mod linalg;
pub mod model;
pub mod moments;
pub mod montecarlo;
pub mod operators;
pub mod riccati;

pub use error::{Error, Result, Violation};
pub use family::{Mat, MatrixFamily};
pub use model::{
    is_reversible, propagate_eta, theta_distribution, validate_plant, ControlPlant, DistributionTable,
    FilterPlant, MarkovSpec, Plant, Reversibility,
};
pub use moments::{
    closed_loop_moments, evaluate_cost, open_loop_moments, w_moments, GainSchedule, MomentTrajectory,
};
pub use operators::{apply_d, apply_u, apply_v, build_u_matrix, inner_product, is_ms_stable, spectral_radius};
pub use riccati::{
    check_duality, dualize, solve_lmmse, solve_trmjlq, verify_value_function, ControlSolution, FilterSolution,
};
