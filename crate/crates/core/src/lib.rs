//! Combinatorial Bayesian optimization over binary spaces `{0,1}^n`.
//!
//! The surrogate is a Bayesian linear model over closed-form Mercer features of
//! the diffusion kernel on the hypercube graph. Acquisition is Thompson
//! sampling: a posterior draw of the feature weights turns into a binary
//! quadratic program, which is minimized by submodular relaxation on top of an
//! s-t min-cut.
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`features`] | Walsh-basis feature maps, exact kernel and spectrum oracles |
//! | [`surrogate`] | Weight-space posterior, Thompson draws, evidence grid search |
//! | [`afo`] | BQP construction and solvers (relaxation + graph cut, brute force, local search) |
//! | [`benchmarks`] | LABS, Ising sparsification and lookup-table objectives |
//! | [`driver`] | Sequential and batch BO loops, run histories |

pub mod afo;
pub mod benchmarks;
pub mod driver;
mod error;
pub mod features;
mod point;
pub mod seed;
pub mod surrogate;

pub use error::{Error, Result};
pub use point::BinaryPoint;
