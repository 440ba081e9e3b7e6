//! Projection-free non-convex optimization with conditional gradient sliding.
//!
//! The crate provides
//!
//! * objective traits for deterministic, stochastic and finite-sum problems,
//!   with metered oracle evaluation ([`oracle`]);
//! * feasible sets with linear minimization oracles, projections and the
//!   gradient mapping ([`geometry`]);
//! * the inner conditional-gradient procedure ([`condg`]);
//! * NCGS in its batched, stochastic and variance-reduced forms ([`ncgs`]) and
//!   Frank–Wolfe baselines ([`baselines`]);
//! * test problems ([`problems`]), trace I/O ([`trace`]) and the experiment
//!   harness behind the `ncgs` binary ([`harness`]).
//!
//! Data-parallel loops run on rayon when the default `parallel` feature is on.
//! Parallel and sequential execution give bitwise identical results.

// `!(x > 0.0)` is used on purpose to reject NaN alongside non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod condg;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod ncgs;
pub mod oracle;
pub mod problems;
pub mod rng;
pub mod trace;

pub use error::{Error, Result};
pub use exec::Exec;
pub use geometry::{FeasibleSet, LinearOracle};
pub use oracle::{FiniteSumObjective, Objective, OracleCounters, Smoothness, StochasticObjective};
pub use rng::SeedTree;
