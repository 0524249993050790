//! Symmetric logarithmic derivative, quantum Fisher information and the
//! Fubini-Study angle.
//!
//! The quantum Fisher information (QFI) of a path `ρ(X)` with tangent `ρ'`
//! is `tr(ρ' ℒ)`, where the SLD `ℒ` solves `½(ρℒ + ℒρ) = ρ'`. For a unitary
//! family `ρ(X) = e^{−iXĥ} ρ₀ e^{iXĥ}` it is bounded by `4 var(ĥ)`, with
//! equality for pure states.

use serde::{Deserialize, Serialize};

use crate::hilbert::{
    commutator_path_tangent, eig_hermitian, tensor_product, unitary_from_eigen, variance, ComplexMatrix,
    DensityOperator, EigenDecomposition, HermitianOperator, PureState, QuantumState, State,
};
use crate::{Error, Result, C64};

/// Default cutoff below which `p_j + p_k` is treated as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-12;
/// Allowed `|tr ρ'|` for a tangent.
pub const TRACELESS_TOL: f64 = 1e-10;

/// One-parameter unitary family `ρ(X) = e^{−iXĥ} ρ₀ e^{iXĥ}`.
#[derive(Clone, Debug)]
pub struct StateFamily {
    fiducial: State,
    generator: HermitianOperator,
    generator_eigen: EigenDecomposition,
    diagonal: Option<Vec<f64>>,
}

impl StateFamily {
    pub fn new(fiducial: impl Into<State>, generator: HermitianOperator) -> Result<Self> {
        let fiducial = fiducial.into();
        if fiducial.dim() != generator.dim() {
            return Err(Error::DimensionMismatch(fiducial.dim(), generator.dim()));
        }
        let generator_eigen = eig_hermitian(&generator)?;
        let diagonal =
            generator.is_diagonal().then(|| (0..generator.dim()).map(|i| generator.matrix().get(i, i).re).collect());
        Ok(Self { fiducial, generator, generator_eigen, diagonal })
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    pub fn fiducial(&self) -> &State {
        &self.fiducial
    }

    pub fn generator(&self) -> &HermitianOperator {
        &self.generator
    }

    pub fn generator_eigen(&self) -> &EigenDecomposition {
        &self.generator_eigen
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.fiducial, State::Pure(_))
    }

    /// `e^{−iXĥ}`.
    pub fn unitary(&self, x: f64) -> ComplexMatrix {
        match &self.diagonal {
            Some(h) => {
                let phases: Vec<C64> = h.iter().map(|&v| C64::from_polar(1.0, -x * v)).collect();
                ComplexMatrix::from_diagonal(&phases)
            }
            None => unitary_from_eigen(&self.generator_eigen, x),
        }
    }

    /// `e^{−iXĥ}|ψ₀⟩` for a pure family.
    pub fn pure_at(&self, x: f64) -> Option<PureState> {
        let State::Pure(psi) = &self.fiducial else {
            return None;
        };
        let evolved = match &self.diagonal {
            Some(h) => psi.amplitudes().iter().zip(h).map(|(a, &v)| a * C64::from_polar(1.0, -x * v)).collect(),
            None => self.unitary(x).apply(psi.amplitudes()),
        };
        Some(PureState::normalized(evolved).expect("unitary evolution preserves the norm"))
    }

    pub fn state_at(&self, x: f64) -> State {
        match &self.fiducial {
            State::Pure(_) => State::Pure(self.pure_at(x).expect("pure family")),
            State::Mixed(rho) => {
                State::Mixed(rho.conjugate_by(&self.unitary(x)).expect("dimensions checked at construction"))
            }
        }
    }

    pub fn density_at(&self, x: f64) -> DensityOperator {
        self.state_at(x).to_density()
    }

    /// `ρ'(X) = −i[ĥ, ρ(X)]`.
    pub fn tangent_at(&self, x: f64) -> Result<HermitianOperator> {
        commutator_path_tangent(&self.density_at(x), &self.generator)
    }

    /// `var(ĥ)` in the fiducial (constant along the family).
    pub fn generator_variance(&self) -> Result<f64> {
        variance(&self.generator, &self.fiducial)
    }
}

/// Output of [`sld`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SLDResult {
    /// `ℒ_ρ(ρ')`; `δĥ` is half of it.
    pub sld: HermitianOperator,
    /// `tr(ρ' ℒ)`.
    pub qfi: f64,
    /// `⟨ℒ²⟩ = tr(ρ ℒ²)`; equals `qfi` unless `ρ'` touches excluded pairs.
    pub sld_second_moment: f64,
    /// Eigen-index pairs `(j, k)` of `ρ` with `p_j + p_k ≤ zero_tol`.
    pub excluded: Vec<(usize, usize)>,
}

/// Symmetric logarithmic derivative of `ρ` along `ρ'`.
///
/// In the eigenbasis of `ρ`, `ℒ_jk = 2 ρ'_jk / (p_j + p_k)` for
/// `p_j + p_k > zero_tol` and zero otherwise; the result is rotated back to
/// the input basis.
pub fn sld(rho: &DensityOperator, rho_prime: &HermitianOperator, zero_tol: f64) -> Result<SLDResult> {
    let d = rho.dim();
    if rho_prime.dim() != d {
        return Err(Error::DimensionMismatch(d, rho_prime.dim()));
    }
    let tr = rho_prime.matrix().trace().re;
    if tr.abs() > TRACELESS_TOL {
        return Err(Error::NotTraceless(tr));
    }
    let eig = rho.eigen()?;
    let v = &eig.eigenvectors;
    let p: Vec<f64> = eig.eigenvalues.iter().map(|&x| x.max(0.0)).collect();
    let tangent = &(&v.adjoint() * rho_prime.matrix()) * v;

    let mut excluded = Vec::new();
    let mut kept_weight = 0.0f64;
    let mut excluded_weight = 0.0f64;
    let mut qfi = 0.0;
    let l_eig = ComplexMatrix::from_fn(d, |j, k| {
        let s = p[j] + p[k];
        let t = tangent.get(j, k);
        if s > zero_tol {
            kept_weight = kept_weight.max(t.norm());
            qfi += 2.0 * t.norm_sqr() / s;
            t * (2.0 / s)
        } else {
            excluded.push((j, k));
            excluded_weight = excluded_weight.max(t.norm());
            C64::new(0.0, 0.0)
        }
    });
    let scale = rho_prime.matrix().max_abs().max(1e-300);
    if excluded_weight > 1e-12 * scale.max(1.0) && kept_weight <= 1e-12 * scale.max(1.0) {
        return Err(Error::PathLeavesSupport);
    }
    let sld_second_moment =
        (0..d).flat_map(|j| (0..d).map(move |k| (j, k))).map(|(j, k)| p[j] * l_eig.get(j, k).norm_sqr()).sum();
    // V L V† is Hermitian up to round-off that grows with the dimension
    let sld = HermitianOperator::hermitian_part(&(&(v * &l_eig) * &v.adjoint()));
    Ok(SLDResult { sld, qfi, sld_second_moment, excluded })
}

/// QFI of a unitary family with the default zero tolerance.
pub fn qfi_unitary(family: &StateFamily) -> Result<f64> {
    qfi_unitary_with_tol(family, DEFAULT_ZERO_TOL)
}

/// QFI of a unitary family.
///
/// Pure fiducials give `4 var(ĥ)`. Mixed fiducials use the eigenbasis sum
/// `2 Σ_jk (p_j − p_k)²/(p_j + p_k) |h_jk|²`, dropping pairs with
/// `p_j + p_k ≤ zero_tol`.
pub fn qfi_unitary_with_tol(family: &StateFamily, zero_tol: f64) -> Result<f64> {
    match family.fiducial() {
        State::Pure(_) => Ok(4.0 * family.generator_variance()?),
        State::Mixed(rho) => {
            let eig = rho.eigen()?;
            let v = &eig.eigenvectors;
            let h = &(&v.adjoint() * family.generator().matrix()) * v;
            let p = &eig.eigenvalues;
            let d = p.len();
            let mut acc = 0.0;
            for j in 0..d {
                for k in 0..d {
                    let s = p[j] + p[k];
                    if s > zero_tol {
                        acc += (p[j] - p[k]).powi(2) / s * h.get(j, k).norm_sqr();
                    }
                }
            }
            Ok((2.0 * acc).max(0.0))
        }
    }
}

/// Both sides of `QFI ≤ 4 var(ĥ)`: `(qfi, four_var)`.
pub fn qfi_upper_gap(family: &StateFamily) -> Result<(f64, f64)> {
    Ok((qfi_unitary(family)?, 4.0 * family.generator_variance()?))
}

/// QFI of `copies` independent replicas, computed by an explicit SLD on the
/// tensored state with generator `Σ_i ĥ_i`, against `copies × QFI`.
///
/// Returns `(lhs, rhs)`.
pub fn additivity_check(family: &StateFamily, copies: usize) -> Result<(f64, f64)> {
    if !(2..=3).contains(&copies) {
        return Err(Error::InvalidArgument(format!("copies must be 2 or 3, got {copies}")));
    }
    let d = family.dim();
    let total = d.checked_pow(copies as u32).unwrap_or(usize::MAX);
    if total > crate::hilbert::MAX_TENSOR_DIM {
        return Err(Error::DimensionCap { dim: total, cap: crate::hilbert::MAX_TENSOR_DIM });
    }
    let rho = family.density_at(0.0);
    let id = HermitianOperator::identity(d)?;
    let mut rho_n = rho.clone();
    let mut h_n = family.generator().clone();
    for _ in 1..copies {
        rho_n = tensor_product(&rho_n, &rho)?;
        let id_n = HermitianOperator::identity(h_n.dim())?;
        h_n = h_n.kron(&id)?.sum(&id_n.kron(family.generator())?)?;
    }
    let tangent = commutator_path_tangent(&rho_n, &h_n)?;
    let lhs = sld(&rho_n, &tangent, DEFAULT_ZERO_TOL)?.qfi;
    let rhs = copies as f64 * qfi_unitary(family)?;
    Ok((lhs, rhs))
}

/// Fubini-Study angle `arccos |⟨a|b⟩|`, evaluated as
/// `atan2(‖b − a⟨a|b⟩‖, |⟨a|b⟩|)` to stay accurate for nearby states.
pub fn fubini_angle(a: &PureState, b: &PureState) -> Result<f64> {
    let overlap = a.inner(b)?;
    let perp: f64 =
        a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| (y - x * overlap).norm_sqr()).sum::<f64>().sqrt();
    Ok(perp.atan2(overlap.norm()))
}
