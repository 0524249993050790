//! # paramest
//!
//! Finite-dimensional toolkit for parameter-based quantum uncertainty
//! relations.
//!
//! A family of states `ρ(X)` generated by a Hermitian operator `ĥ` is
//! probed by `N` repeated measurements; the mean-square deviation of any
//! estimator of `X` obeys the chain
//!
//! ```text
//! ⟨(δX)²⟩ ≥ 1/(N F) ≥ 1/(N ds²/dX²),   ds²/dX² ≤ 4⟨(Δĥ)²⟩
//! ```
//!
//! where `F` is the classical Fisher information of the chosen POVM and
//! `ds²/dX²` is the quantum Fisher information built from the symmetric
//! logarithmic derivative. The crate provides each link of the chain and a
//! Monte-Carlo harness that checks it numerically.
//!
//! - [`hilbert`]: dense complex matrices, states, Hermitian eigensolver.
//! - [`metric`]: symmetric logarithmic derivative, QFI, Fubini-Study angle.
//! - [`povm`]: POVM validation, classical Fisher information, covariant
//!   measurements built from a generator spectrum.
//! - [`estimate`]: sampling, sample-mean / maximum-likelihood estimators and
//!   the deviation statistic with bound audits.
//! - [`scenarios`]: squeezed-vacuum displacement, oscillator phase, and
//!   time/energy (including the doubly degenerate ring model).

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![forbid(unsafe_code)]

pub mod estimate;
pub mod hilbert;
pub mod metric;
pub mod optimize;
pub mod povm;
pub mod scenarios;

use thiserror::Error;

pub use num_complex::Complex64 as C64;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),

    #[error("dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("empty dimension")]
    EmptyDimension,

    #[error("not Hermitian (max |A - A†| = {0:e})")]
    NotHermitian(f64),

    #[error("trace is not 1 (got {0})")]
    InvalidTrace(f64),

    #[error("not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),

    #[error("eigensolver did not converge within {0} iterations")]
    EigenNoConvergence(usize),

    #[error("path leaves the support of the density operator")]
    PathLeavesSupport,

    #[error("tangent is not traceless (trace {0:e})")]
    NotTraceless(f64),

    #[error("covariant construction needs a spectrum of ĥ with no degeneracies (eigenvalues {0} and {1} coincide)")]
    DegenerateSpectrum(f64, f64),

    #[error("eigenvalue {value} is not commensurate with period {period}")]
    NotPeriodic { value: f64, period: f64 },

    #[error("grid of {grid} points is below the minimum {minimum}")]
    GridTooCoarse { grid: usize, minimum: usize },

    #[error("{0} is not a difference of spectrum eigenvalues")]
    NotEigenvalueDifference(f64),

    #[error("all outcome probabilities are below the floor")]
    AllBelowFloor,

    #[error("parameter not identifiable: likelihood is flat")]
    NotIdentifiable,

    #[error("clock does not move: |⟨[A,H]⟩| = {0:e}")]
    ClockDoesNotMove(f64),

    #[error("sector energy lists do not match")]
    SectorMismatch,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
