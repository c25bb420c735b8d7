//! Sparse identification of nonlinear dynamics with exact best-subset
//! selection.
//!
//! The crate covers the whole pipeline: simulating benchmark systems,
//! differentiating trajectories, building (weak) candidate libraries,
//! solving the cardinality-constrained regression by branch-and-bound,
//! heuristic baselines, and model selection / scoring.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod differentiation;
pub mod error;
pub mod library;
pub mod linalg;
pub mod metrics;
pub mod pde;
pub mod rng;
pub mod selection;
pub mod solver;
pub mod systems;

pub use error::{Error, Result};
pub use linalg::{LinearConstraints, Matrix, Vector};
pub use rng::RngStream;
pub use solver::{solve_joint, solve_sparse, unbias, BnbConfig, SolveStatus, SparseRegressionProblem, SparseSolution};
