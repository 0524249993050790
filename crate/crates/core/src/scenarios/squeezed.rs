//! Displacement estimation with a squeezed vacuum.
//!
//! The family is `e^{−iXp̂}|ψ₀⟩` with `|ψ₀⟩` a squeezed vacuum of squeeze
//! parameter `r` and angle `φ`. Its position wavefunction is Gaussian with
//! `ψ₀(x) ∝ exp(−γ x²/2)`. The optimal measurement reads out
//! `x̂ = x + tanθ·p̂`, whose outcomes are `N(X, var_xhat)` with
//! `var_xhat = 1/(4 var_p)`; the sample mean is then efficient at every `N`.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::BandCheck;
use crate::estimate::{
    bound_audit, deviation_moment, AuditVerdict, Dataset, EstimationReport, Estimator, LogLikelihood, ParametricModel,
    RunConfig, Sampler,
};
use crate::optimize::golden_min;
use crate::{Error, Result, C64};

/// Squeeze parameter `r ≥ 0` and angle `φ` (radians).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqueezedParams {
    pub r: f64,
    pub phi: f64,
}

impl SqueezedParams {
    pub fn new(r: f64, phi: f64) -> Result<Self> {
        if !(r >= 0.0) || !r.is_finite() || !phi.is_finite() {
            return Err(Error::InvalidArgument(format!("need finite r ≥ 0 and finite φ, got r = {r}, φ = {phi}")));
        }
        Ok(Self { r, phi })
    }
}

/// The Gaussian width constant `γ` (`Re γ > 0`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaConstant {
    pub re: f64,
    pub im: f64,
}

impl GammaConstant {
    pub fn value(&self) -> C64 {
        C64::new(self.re, self.im)
    }
}

/// The three algebraically equivalent expressions for `γ`.
pub fn gamma_forms(p: &SqueezedParams) -> [C64; 3] {
    let (r, phi) = (p.r, p.phi);
    let e2 = C64::from_polar(1.0, 2.0 * phi);
    let first = (C64::new(r.cosh(), 0.0) + e2 * r.sinh()) / (C64::new(r.cosh(), 0.0) - e2 * r.sinh());
    let (c2, s2) = ((2.0 * r).cosh(), (2.0 * r).sinh());
    let second = C64::new(1.0, s2 * (2.0 * phi).sin()) / (c2 - s2 * (2.0 * phi).cos());
    let third = C64::new(c2 + s2 * (2.0 * phi).cos(), 0.0) / C64::new(1.0, -s2 * (2.0 * phi).sin());
    [first, second, third]
}

/// `γ = (cosh r + e^{2iφ} sinh r)/(cosh r − e^{2iφ} sinh r)`.
pub fn gamma(p: &SqueezedParams) -> GammaConstant {
    let g = gamma_forms(p)[0];
    GammaConstant { re: g.re, im: g.im }
}

/// Second moments of the squeezed vacuum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqueezedCovariance {
    pub var_x: f64,
    pub var_p: f64,
    pub cov_xp: f64,
}

/// Covariances from the hyperbolic expressions.
pub fn squeezed_covariance(p: &SqueezedParams) -> SqueezedCovariance {
    let (r, phi) = (p.r, p.phi);
    let (c, s) = (phi.cos().powi(2), phi.sin().powi(2));
    SqueezedCovariance {
        var_x: 0.5 * ((-2.0 * r).exp() * c + (2.0 * r).exp() * s),
        var_p: 0.5 * ((-2.0 * r).exp() * s + (2.0 * r).exp() * c),
        cov_xp: -0.5 * (2.0 * r).sinh() * (2.0 * phi).sin(),
    }
}

/// Covariances from `γ`: `var_x = 1/(2 Re γ)`, `var_p = 1/(2 Re γ⁻¹)`,
/// `cov = −Im γ / (2 Re γ)`.
pub fn squeezed_covariance_from_gamma(g: &GammaConstant) -> SqueezedCovariance {
    let gamma = g.value();
    let inv = gamma.inv();
    SqueezedCovariance { var_x: 0.5 / gamma.re, var_p: 0.5 / inv.re, cov_xp: -gamma.im / (2.0 * gamma.re) }
}

/// The optimal readout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqueezedOptimal {
    /// `c` in the gauge `f(p) = c p²`, equal to `−½ Im γ⁻¹`.
    pub gauge_coefficient: f64,
    /// `tanθ = −Im γ⁻¹`; the measured operator is `x + tanθ·p̂`.
    pub tan_theta: f64,
    /// `Re γ⁻¹ / 2`.
    pub var_xhat: f64,
}

pub fn squeezed_optimal(p: &SqueezedParams) -> SqueezedOptimal {
    let inv = gamma(p).value().inv();
    SqueezedOptimal { gauge_coefficient: -0.5 * inv.im, tan_theta: -inv.im, var_xhat: 0.5 * inv.re }
}

/// Noise-to-signal ratio of the readout at angle `θ`:
/// `var_x + 2 cov tanθ + var_p tan²θ`.
pub fn squeezed_nsr(p: &SqueezedParams, theta: f64) -> Result<f64> {
    if theta.cos().abs() <= 1e-9 {
        return Err(Error::InvalidArgument(format!("cos θ vanishes at θ = {theta}")));
    }
    Ok(nsr_at_tan(&squeezed_covariance(p), theta.tan()))
}

fn nsr_at_tan(c: &SqueezedCovariance, t: f64) -> f64 {
    c.var_x + 2.0 * c.cov_xp * t + c.var_p * t * t
}

/// Numerical minimum of the noise-to-signal ratio: golden section over
/// `θ ∈ (−π/2, π/2)`, polished by one parabolic step in `tanθ` through three
/// widely spaced points. Returns `(tanθ, nsr)`.
pub fn minimize_nsr(p: &SqueezedParams) -> (f64, f64) {
    let c = squeezed_covariance(p);
    let edge = FRAC_PI_2 - 1e-6;
    let theta = golden_min(|th| nsr_at_tan(&c, th.tan()), -edge, edge, 1e-12);
    let t0 = theta.tan();
    let h = 0.5 * (1.0 + t0.abs());
    let (fm, f0, fp) = (nsr_at_tan(&c, t0 - h), nsr_at_tan(&c, t0), nsr_at_tan(&c, t0 + h));
    let curvature = fp - 2.0 * f0 + fm;
    let t = if curvature > 0.0 { t0 - 0.5 * h * (fp - fm) / curvature } else { t0 };
    (t, nsr_at_tan(&c, t))
}

/// Closed-form quantities emitted next to a squeezed run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqueezedSidecar {
    pub params: SqueezedParams,
    pub gamma: GammaConstant,
    pub covariance: SqueezedCovariance,
    pub optimal: SqueezedOptimal,
    pub theta: f64,
    pub checks: Vec<BandCheck>,
}

/// Sample-mean readout of `x + tanθ·p̂` on the displaced squeezed vacuum.
pub struct SqueezedModel {
    params: SqueezedParams,
    covariance: SqueezedCovariance,
    optimal: SqueezedOptimal,
}

impl SqueezedModel {
    pub fn new(params: SqueezedParams) -> Self {
        Self { params, covariance: squeezed_covariance(&params), optimal: squeezed_optimal(&params) }
    }

    pub fn params(&self) -> SqueezedParams {
        self.params
    }

    fn sd(&self) -> f64 {
        self.optimal.var_xhat.sqrt()
    }
}

impl ParametricModel for SqueezedModel {
    fn name(&self) -> &str {
        "squeezed"
    }

    fn period(&self) -> Option<f64> {
        None
    }

    fn parameter_window(&self) -> f64 {
        8.0 * self.sd()
    }

    fn sampler(&self, x: f64) -> Result<Sampler> {
        Ok(Sampler::Gaussian { mean: x, sd: self.sd() })
    }

    fn log_likelihood<'a>(&'a self, data: &'a Dataset) -> Result<LogLikelihood<'a>> {
        let v = self.optimal.var_xhat;
        Ok(Box::new(move |x| data.outcomes.iter().map(|o| -(o - x).powi(2) / (2.0 * v)).sum()))
    }

    fn fisher(&self, _x: f64) -> Result<f64> {
        Ok(1.0 / self.optimal.var_xhat)
    }

    fn qfi(&self) -> Result<f64> {
        Ok(4.0 * self.covariance.var_p)
    }

    fn generator_variance(&self) -> Result<f64> {
        Ok(self.covariance.var_p)
    }

    fn outcome_bias(&self) -> Result<f64> {
        Ok(0.0)
    }

    fn mle_window(&self, data: &Dataset) -> (f64, f64) {
        let m = data.outcomes.iter().sum::<f64>() / data.len().max(1) as f64;
        let half = 10.0 * self.sd();
        (m - half, m + half)
    }
}

/// Monte-Carlo run of the squeezed scenario with the sample-mean estimator.
///
/// The sidecar carries the closed forms and two 3σ band checks:
/// `N·mse ≈ var_xhat` and `4N·mse·var_p ≈ 1`.
pub fn squeezed_mc_scenario(
    params: SqueezedParams,
    config: &RunConfig,
) -> Result<(EstimationReport, AuditVerdict, SqueezedSidecar)> {
    let model = SqueezedModel::new(params);
    let mut report = deviation_moment(&model, &Estimator::SampleMean, config)?;
    let verdict = bound_audit(&report);
    let cov = model.covariance;
    let opt = model.optimal;
    let n = config.n as f64;
    let mut checks = Vec::new();
    if let (Some(mse), Some(se)) = (report.mse, report.mse_stderr) {
        checks.push(BandCheck::three_sigma("N*mse = var_xhat", n * mse, opt.var_xhat, n * se));
        checks.push(BandCheck::three_sigma(
            "4*N*mse*var_p = 1",
            4.0 * n * mse * cov.var_p,
            1.0,
            4.0 * n * se * cov.var_p,
        ));
        report.extras = BTreeMap::from([
            ("n_mse".to_string(), n * mse),
            ("product_4n".to_string(), 4.0 * n * mse * cov.var_p),
            ("tan_theta".to_string(), opt.tan_theta),
            ("var_xhat".to_string(), opt.var_xhat),
        ]);
    }
    let sidecar = SqueezedSidecar {
        params,
        gamma: gamma(&params),
        covariance: cov,
        optimal: opt,
        theta: opt.tan_theta.atan(),
        checks,
    };
    Ok((report, verdict, sidecar))
}
