//! Numerical toolkit for free probability on the real line, the unit circle,
//! and the positive half-line.
//!
//! The library computes logarithmic-energy functionals (free entropy, relative
//! free entropy, free Fisher information), solves equilibrium-measure problems
//! for external potentials, samples Coulomb-gas eigenvalue ensembles, evaluates
//! one-dimensional Wasserstein distances, and runs a verification harness for a
//! family of free log-Sobolev and transportation-cost inequalities.
//!
//! # Conventions
//!
//! * Measures are piecewise-constant densities on uniform grids
//!   ([`measure::GridMeasure`]) or finite atom lists
//!   ([`measure::EmpiricalMeasure`]).
//! * Circle densities are taken with respect to the normalized arc measure
//!   `dθ/2π`; angles live in `[-π, π)`.
//! * The Hilbert transform carries no `1/π` prefactor: on the line it is the
//!   principal value of `∫ p(t)/(x−t) dt`, on the circle the principal value
//!   of `∫ p(θ−t) cot(t/2) dt/2π`.
//! * Free entropy is `Σ(μ) = ∬ log|x−y| dμ dμ`; free Fisher information on the
//!   line is `Φ(μ) = (4π²/3)∫p³ = 4∫(Hp)² dμ`.
//! * Wasserstein distances use the cost `½ d(x,y)²` inside the square root.
//!
//! Every quantity with a known closed form (semicircle families, trigonometric
//! circle families, power densities on an interval) is covered by tests that
//! pin the numerics against those values.

pub mod equilibrium;
pub mod functionals;
pub mod harness;
pub mod hilbert;
pub mod matrixfn;
pub mod measure;
pub mod potential;
pub mod quad;
pub mod sampler;
pub mod transport;

pub mod cli;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Operation received measures or potentials on incompatible domains.
    #[error("domain mismatch: expected {expected}, got {got}")]
    DomainMismatch {
        expected: &'static str,
        got: &'static str,
    },
    /// Grid resolution below the supported minimum.
    #[error("grid must have at least {min} cells, got {got}")]
    TooFewCells { min: usize, got: usize },
    /// A density value was negative or not finite.
    #[error("invalid density at cell {index}: {value}")]
    InvalidDensity { index: usize, value: f64 },
    /// Measure carries no mass to normalize.
    #[error("measure has zero total mass")]
    ZeroMass,
    /// A scalar argument was outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// Iterative solver exhausted its iteration budget.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    /// A matrix logarithm or eigen-angle extraction hit the branch cut.
    #[error("ambiguous branch: {0}")]
    AmbiguousBranch(String),
    /// Requested operation is outside the supported size or shape limits.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// Markov chain stopped accepting moves.
    #[error("sampler stalled: {0}")]
    SamplerStall(String),
    /// Text input (CSV, potential or measure spec) failed to parse.
    #[error("parse error: {0}")]
    Parse(String),
    /// Numerical failure inside a dense linear-algebra or flow routine.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
