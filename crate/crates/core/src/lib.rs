//! Networked solvers for robust convex optimization via the scenario approach.
//!
//! A robust program `min c'θ s.t. f(θ, q) ≤ 0 ∀ q ∈ Q, θ ∈ Θ` is replaced by a
//! scenario program that enforces the constraint only on finitely many
//! sampled uncertainty values. The samples are split across the nodes of a
//! simulated network, and every node runs a cheap local iteration that only
//! talks to its neighbours:
//!
//! * [`primal_dual`]: augmented-Lagrangian primal-dual sub-gradient iteration
//!   for undirected graphs.
//! * [`rand_proj`]: consensus mixing followed by a randomized Polyak step,
//!   for directed (strongly connected) graphs.
//!
//! [`engine`] drives either iteration round by round, [`oracle`] supplies
//! centralized reference solutions, and [`scenario`] computes how many
//! samples are needed for a given violation level and confidence.

pub mod config;
pub mod engine;
pub mod experiment;
pub mod error;
pub mod graph;
pub mod rng;
pub mod oracle;
pub mod primal_dual;
pub mod problems;
pub mod rand_proj;
pub mod scenario;
pub mod schedule;

pub use error::{Error, Result};

/// Dense real vector used for decisions, samples and multipliers.
pub type Vector = nalgebra::DVector<f64>;
/// Dense real matrix.
pub type Matrix = nalgebra::DMatrix<f64>;
