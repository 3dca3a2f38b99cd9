//! Streaming mean field variational Bayes for semiparametric regression.
//!
//! Every solver keeps the data only through a small set of sufficient
//! statistics, so each new observation costs one rank-one update plus one
//! coordinate-ascent sweep. Batch fits over the same statistics provide the
//! warm-up starting values and the reference trajectories used by the
//! convergence diagnostics.
//!
//! | module | model |
//! |--------|-------|
//! | [`linreg`] | Gaussian linear regression with a Half-Cauchy error scale |
//! | [`lmm`] | Gaussian linear mixed models, random intercepts, additive splines |
//! | [`sparse`] | Laplace-Zero spike-and-slab signal regression |
//! | [`logistic`] | Bernoulli-logit mixed models via the Jaakkola-Jordan bound |

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
mod linalg;
pub mod linreg;
pub mod lmm;
pub mod logistic;
pub mod model;
pub mod scaling;
pub mod simdata;
pub mod sparse;
pub mod special;
pub mod splines;
pub mod suffstats;
pub mod summary;

pub use error::{Error, Result};

/// Stopping rule shared by the batch solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

/// Outcome of a batch fit. A fit that hits `max_iter` is still returned,
/// with `converged` cleared.
#[derive(Debug, Clone)]
pub struct BatchFit<S> {
    pub state: S,
    pub iterations: usize,
    pub converged: bool,
    /// Final lower bound, for solvers that have one.
    pub elbo: Option<f64>,
}
