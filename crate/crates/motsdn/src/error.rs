//! Error type shared by the library.

use thiserror::Error;

/// Failures reported by the numerical layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller supplied parameter is out of its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// A point left the coordinate neighbourhood on which the gauge is defined.
    #[error("point (s = {s}, u = {u}) lies outside the coordinate neighbourhood")]
    OutsideNeighbourhood { s: f64, u: f64 },
    /// The area radius root solve did not converge.
    #[error("area radius root solve failed at (s = {s}, u = {u})")]
    RootSolve { s: f64, u: f64 },
    /// A non-finite value appeared during a computation.
    #[error("non-finite value in {0}")]
    NonFinite(String),
    /// The null frame could not be built because the surface is not spacelike.
    #[error("surface is not spacelike at node {node}")]
    NotSpacelike { node: usize },
    /// A Poisson right hand side had non-zero mean.
    #[error("Poisson source has non-zero mean {mean:e}")]
    NonZeroMean { mean: f64 },
    /// An iteration failed to converge.
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { what: String, iterations: usize, residual: f64 },
    /// An iteration diverged.
    #[error("{what} diverged at iteration {iteration}")]
    Diverged { what: String, iteration: usize },
    /// A transport denominator came within the guard distance of zero.
    #[error("surface is nearly tangent to the incoming null direction at node {node} (denominator {denominator:e})")]
    NullTangency { node: usize, denominator: f64 },
    /// A runtime invariant check failed.
    #[error("invariant violated: {0}")]
    Invariant(String),
    /// A perturbation recipe could not be parsed or is inconsistent.
    #[error("recipe error: {0}")]
    Recipe(String),
}

/// Result alias for the library.
pub type Result<T> = std::result::Result<T, Error>;
