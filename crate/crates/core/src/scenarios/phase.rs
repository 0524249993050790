//! Phase shifts of a truncated oscillator read out with canonical phase states.
//!
//! The generator is `ĥ = −n̂` on `|0⟩…|d−1⟩`, the period is `2π`, and the
//! measurement is the covariant POVM with gauge `f = 0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::estimate::{bound_audit, deviation_moment, AuditVerdict, EstimationReport, ParametricModel, RunConfig};
use crate::estimate::{CovariantModel, Estimator};
use crate::hilbert::{PureState, MAX_DIM, NORM_TOL};
use crate::metric::StateFamily;
use crate::povm::SpectrumModel;
use crate::povm::{build_covariant, covariant_family, minimum_grid, optimality_test, CovariantPOVM, OptimalityReport};
use crate::{Error, Result, C64};

/// `h_n = −n` for `n = 0…d−1`, period `2π`.
pub fn fock_spectrum(d: usize) -> Result<SpectrumModel> {
    check_dim(d)?;
    SpectrumModel::diagonal((0..d).map(|n| -(n as f64)).collect(), Some(2.0 * PI))
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::EmptyDimension);
    }
    if d > MAX_DIM {
        return Err(Error::DimensionCap { dim: d, cap: MAX_DIM });
    }
    Ok(())
}

/// Default grid: the smallest accepted for levels `0…d−1`, i.e. `4d`.
pub fn default_grid(d: usize) -> usize {
    minimum_grid(d as i64 - 1)
}

/// `|n⟩`.
pub fn number_state(d: usize, n: usize) -> Result<Vec<C64>> {
    check_dim(d)?;
    if n >= d {
        return Err(Error::InvalidArgument(format!("level {n} outside 0..{d}")));
    }
    let mut v = vec![C64::new(0.0, 0.0); d];
    v[n] = C64::new(1.0, 0.0);
    Ok(v)
}

/// `(|a⟩ + |b⟩)/√2`.
pub fn pair_state(d: usize, a: usize, b: usize) -> Result<Vec<C64>> {
    if a == b {
        return Err(Error::InvalidArgument("pair needs two distinct levels".into()));
    }
    let mut v = number_state(d, a)?;
    v[b] = number_state(d, b)?[b];
    Ok(v.into_iter().map(|z| z / 2f64.sqrt()).collect())
}

/// Binomial amplitudes `√(C(d−1, n) qⁿ (1−q)^{d−1−n})` with
/// `q = center/(d−1)`, so that `⟨n̂⟩ = center`. Computed in log space.
pub fn binomial_state(d: usize, center: f64) -> Result<Vec<C64>> {
    check_dim(d)?;
    if d < 2 {
        return Err(Error::InvalidArgument("binomial state needs d ≥ 2".into()));
    }
    let top = (d - 1) as f64;
    if !(center > 0.0 && center < top) {
        return Err(Error::InvalidArgument(format!("center must lie in (0, {top}), got {center}")));
    }
    let q = center / top;
    let mut ln_fact = vec![0.0f64; d];
    for k in 1..d {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let amps: Vec<C64> = (0..d)
        .map(|n| {
            let ln_p = ln_fact[d - 1] - ln_fact[n] - ln_fact[d - 1 - n]
                + n as f64 * q.ln()
                + (top - n as f64) * (1.0 - q).ln();
            C64::new((0.5 * ln_p).exp(), 0.0)
        })
        .collect();
    Ok(normalize(amps))
}

/// Amplitudes `C(n, k)` on the levels `offset…offset+n`; the phase
/// wavefunction is `e^{−iφ(offset + n/2)} (2 cos(φ/2))ⁿ` up to normalization.
pub fn pascal_state(d: usize, n: usize, offset: usize) -> Result<Vec<C64>> {
    check_dim(d)?;
    if offset + n >= d {
        return Err(Error::InvalidArgument(format!("levels {offset}..={} exceed d = {d}", offset + n)));
    }
    let mut row = vec![1.0f64];
    for _ in 0..n {
        let mut next = vec![1.0; row.len() + 1];
        for k in 1..row.len() {
            next[k] = row[k - 1] + row[k];
        }
        row = next;
    }
    let mut amps = vec![C64::new(0.0, 0.0); d];
    for (k, b) in row.into_iter().enumerate() {
        amps[offset + k] = C64::new(b, 0.0);
    }
    Ok(normalize(amps))
}

/// Multiplies each amplitude by `e^{iκ(n − ⟨n̂⟩)²}`.
pub fn chirped(amplitudes: &[C64], kappa: f64) -> Vec<C64> {
    let probs: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
    let mean: f64 = amplitudes.iter().enumerate().map(|(n, a)| n as f64 * a.norm_sqr()).sum::<f64>() / probs;
    amplitudes.iter().enumerate().map(|(n, a)| a * C64::from_polar(1.0, kappa * (n as f64 - mean).powi(2))).collect()
}

fn normalize(v: Vec<C64>) -> Vec<C64> {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

fn fiducial_state(d: usize, amplitudes: &[C64]) -> Result<PureState> {
    check_dim(d)?;
    if amplitudes.len() != d {
        return Err(Error::DimensionMismatch(d, amplitudes.len()));
    }
    let norm: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e3 * NORM_TOL {
        return Err(Error::NotNormalized(norm));
    }
    PureState::normalized(amplitudes.to_vec())
}

/// The family `e^{iΦn̂}|ψ⟩` with its canonical phase POVM on `m` grid points
/// (default `4d`).
pub fn fock_phase_scenario(d: usize, amplitudes: &[C64], m: Option<usize>) -> Result<(StateFamily, CovariantPOVM)> {
    let psi = fiducial_state(d, amplitudes)?;
    let povm = build_covariant(fock_spectrum(d)?, &vec![0.0; d], m.unwrap_or_else(|| default_grid(d)))?;
    let family = covariant_family(&povm, psi)?;
    Ok((family, povm))
}

/// The same bundle as an estimation model named `"phase"`.
pub fn phase_model(d: usize, amplitudes: &[C64], m: Option<usize>) -> Result<CovariantModel> {
    let psi = fiducial_state(d, amplitudes)?;
    let povm = build_covariant(fock_spectrum(d)?, &vec![0.0; d], m.unwrap_or_else(|| default_grid(d)))?;
    CovariantModel::new("phase", povm, psi)
}

/// Closed-form and exact quantities emitted next to a phase run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSidecar {
    pub d: usize,
    pub grid: usize,
    pub mean_n: f64,
    pub var_n: f64,
    /// `⟨φ|φ⟩` of a canonical phase state, equal to `d`.
    pub phase_state_norm: f64,
    pub fisher: f64,
    pub qfi: f64,
    /// `F / QFI`; absent when `QFI = 0`.
    pub efficiency: Option<f64>,
    pub optimality: OptimalityReport,
}

pub fn phase_sidecar(model: &CovariantModel) -> Result<PhaseSidecar> {
    let povm = model.povm();
    let psi = model.fiducial();
    let probs: Vec<f64> = psi.amplitudes().iter().map(|z| z.norm_sqr()).collect();
    let mean_n: f64 = probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
    let var_n: f64 = probs.iter().enumerate().map(|(n, p)| (n as f64 - mean_n).powi(2) * p).sum();
    let phase_state_norm = povm.state_vector(0.0).iter().map(|z| z.norm_sqr()).sum();
    let fisher = model.fisher(0.0)?;
    let qfi = model.qfi()?;
    Ok(PhaseSidecar {
        d: povm.spectrum().dim(),
        grid: povm.len(),
        mean_n,
        var_n,
        phase_state_norm,
        fisher,
        qfi,
        efficiency: (qfi > 0.0).then(|| fisher / qfi),
        optimality: optimality_test(povm, psi, 1e-8)?,
    })
}

/// Monte-Carlo run of the phase scenario.
pub fn phase_mc_scenario(
    d: usize,
    amplitudes: &[C64],
    m: Option<usize>,
    estimator: &Estimator,
    config: &RunConfig,
) -> Result<(EstimationReport, AuditVerdict, PhaseSidecar)> {
    let model = phase_model(d, amplitudes, m)?;
    let sidecar = phase_sidecar(&model)?;
    let mut report = deviation_moment(&model, estimator, config)?;
    report.extras.insert("mean_n".into(), sidecar.mean_n);
    report.extras.insert("var_n".into(), sidecar.var_n);
    if let Some(e) = sidecar.efficiency {
        report.extras.insert("efficiency".into(), e);
    }
    let verdict = bound_audit(&report);
    Ok((report, verdict, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::wrap_period;
    use crate::metric::qfi_unitary;
    use crate::povm::{classical_fisher, default_fisher_step};

    #[test]
    fn fiducial_builders() {
        let b = binomial_state(128, 32.0).unwrap();
        let norm: f64 = b.iter().map(|z| z.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        let mean: f64 = b.iter().enumerate().map(|(n, z)| n as f64 * z.norm_sqr()).sum();
        assert!((mean - 32.0).abs() < 1e-9);
        // binomial law variance n q (1 − q)
        let q = 32.0 / 127.0;
        let var: f64 = b.iter().enumerate().map(|(n, z)| (n as f64 - mean).powi(2) * z.norm_sqr()).sum();
        assert!((var - 127.0 * q * (1.0 - q)).abs() < 1e-9);

        let p = pair_state(6, 2, 3).unwrap();
        assert!((p[2].re - 0.5f64.sqrt()).abs() < 1e-15 && (p[3].re - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(pair_state(6, 2, 2).is_err());
        assert!(number_state(4, 4).is_err());
        assert!(binomial_state(8, 7.0).is_err());
        assert!(matches!(fock_spectrum(300), Err(Error::DimensionCap { .. })));
    }

    #[test]
    fn scenario_rejects_unnormalized_amplitudes() {
        let v = vec![C64::new(1.0, 0.0); 4];
        assert!(matches!(fock_phase_scenario(4, &v, None), Err(Error::NotNormalized(_))));
        assert!(matches!(
            fock_phase_scenario(4, &number_state(4, 1).unwrap(), Some(8)),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn phase_state_norm_is_dimension() {
        let model = phase_model(10, &number_state(10, 3).unwrap(), None).unwrap();
        let side = phase_sidecar(&model).unwrap();
        assert!((side.phase_state_norm - 10.0).abs() < 1e-12);
        assert_eq!(side.grid, 40);
    }

    #[test]
    fn number_state_gives_no_information() {
        let (family, povm) = fock_phase_scenario(8, &number_state(8, 5).unwrap(), None).unwrap();
        let f = classical_fisher(&povm.to_discrete(), &family, 0.3, default_fisher_step(Some(2.0 * PI))).unwrap();
        assert!(f.abs() < 1e-12);
        let cfg = RunConfig { x: 0.0, n: 5, trials: 200, seed: 1, slope_step: None };
        for est in [Estimator::SampleMean, Estimator::MaxLikelihood { window: None }] {
            let (report, verdict, _) = phase_mc_scenario(8, &number_state(8, 5).unwrap(), None, &est, &cfg).unwrap();
            assert!(report.divergent, "{est:?}");
            assert!(verdict.passed());
        }
    }

    #[test]
    fn seam_estimates_do_not_fake_a_slope() {
        // uniform outcomes put some circular means within a slope step of ±π
        let model = phase_model(16, &number_state(16, 5).unwrap(), None).unwrap();
        for (seed, x) in [(9, 0.4), (3, -2.9), (17, 3.1)] {
            let cfg = RunConfig { x, n: 10, trials: 500, seed, slope_step: None };
            let report = deviation_moment(&model, &Estimator::SampleMean, &cfg).unwrap();
            assert!(report.divergent, "seed {seed}: slope {:?}", report.slope);
        }
    }

    #[test]
    fn symmetric_pair_saturates() {
        let model = phase_model(6, &pair_state(6, 2, 3).unwrap(), None).unwrap();
        let side = phase_sidecar(&model).unwrap();
        assert!((side.fisher - 1.0).abs() < 1e-6, "{}", side.fisher);
        assert!((side.qfi - 1.0).abs() < 1e-12);
        assert!((side.mean_n - 2.5).abs() < 1e-15);
        assert!(side.optimality.pass);
    }

    #[test]
    fn semiclassical_binomial_is_nearly_efficient() {
        let model = phase_model(128, &binomial_state(128, 32.0).unwrap(), None).unwrap();
        let side = phase_sidecar(&model).unwrap();
        assert_eq!(side.grid, 512);
        let e = side.efficiency.unwrap();
        assert!((0.98..=1.0 + 1e-9).contains(&e), "F/QFI = {e}");
    }

    #[test]
    fn chirp_lowers_fisher() {
        let base = pascal_state(12, 8, 2).unwrap();
        let flat = phase_model(12, &base, None).unwrap();
        let bent = phase_model(12, &chirped(&base, 0.3), None).unwrap();
        let q = flat.qfi().unwrap();
        assert!((flat.fisher(0.0).unwrap() - q).abs() < 1e-5 * q);
        assert!((bent.qfi().unwrap() - q).abs() < 1e-9 * q);
        assert!(bent.fisher(0.0).unwrap() < q * (1.0 - 1e-3));
    }

    #[test]
    fn shifted_fiducial_matches_shifted_parameter() {
        let amps = chirped(&binomial_state(16, 5.0).unwrap(), 0.1);
        let phi0 = 0.7;
        let moved: Vec<C64> = amps.iter().enumerate().map(|(n, a)| a * C64::from_polar(1.0, phi0 * n as f64)).collect();
        let a = phase_model(16, &amps, None).unwrap();
        let b = phase_model(16, &moved, None).unwrap();
        for x in [-3.0, 0.0, 0.4, 2.9] {
            let pa = a.distribution(wrap_period(x + phi0, 2.0 * PI));
            let pb = b.distribution(x);
            let gap = pa.iter().zip(&pb).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
            assert!(gap < 1e-9);
        }
        assert!((qfi_unitary(a.family()).unwrap() - qfi_unitary(b.family()).unwrap()).abs() < 1e-9);
    }
}
