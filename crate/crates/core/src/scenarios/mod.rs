//! Ready-made scenarios with closed-form companions (units `ħ = 1`, `L = 1`).
//!
//! - [`squeezed`]: displacement of a squeezed vacuum read out by a rotated
//!   quadrature, sampled from its exact Gaussian law.
//! - [`phase`]: phase shifts of a truncated oscillator measured with the
//!   canonical (Susskind-Glogower) phase POVM.
//! - [`clock`]: Mandelstam-Tamm clocks and the doubly degenerate ring model
//!   with a two-label covariant time POVM.

use serde::{Deserialize, Serialize};

pub mod clock;
pub mod phase;
pub mod squeezed;

/// A Monte-Carlo observable compared against its expected value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandCheck {
    pub name: String,
    pub observed: f64,
    pub expected: f64,
    /// One Monte-Carlo standard error of `observed`.
    pub sigma: f64,
    pub within: bool,
}

impl BandCheck {
    /// Passes when `|observed − expected| ≤ 3σ`.
    pub fn three_sigma(name: &str, observed: f64, expected: f64, sigma: f64) -> Self {
        Self { name: name.into(), observed, expected, sigma, within: (observed - expected).abs() <= 3.0 * sigma }
    }
}
