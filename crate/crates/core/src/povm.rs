//! POVMs, classical Fisher information and covariant measurements.
//!
//! A [`DiscretePOVM`] has outcomes `x_k` with operators `E_k` and quadrature
//! weights `w_k`; completeness means `Σ_k w_k E_k = I` and the outcome law is
//! `p_k = w_k tr(E_k ρ)`.
//!
//! A [`CovariantPOVM`] is built from the spectrum of a generator `ĥ`: with
//! eigenvectors `|h⟩`, gauge phases `f(h)` and a uniform grid `x_m`,
//!
//! ```text
//! |x⟩ = Σ_h e^{i f(h)} e^{−i x h} |h⟩,   E(x_m) = |x_m⟩⟨x_m| / C,   w = C / M.
//! ```
//!
//! When every `h` is `2π n_h / 𝒳` for integers `n_h` the grid spans one period
//! `[−𝒳/2, 𝒳/2)`, `C = 𝒳`, and completeness is exact as soon as `M` exceeds
//! `max n_h − min n_h`. Grids below `4 (max n_h − min n_h + 1)` points are
//! rejected anyway so that the fastest oscillation is sampled four times per
//! cycle.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hilbert::{
    eig_hermitian, expectation, ComplexMatrix, DensityOperator, HermitianOperator, PureState, QuantumState, State,
};
use crate::metric::{sld, StateFamily, DEFAULT_ZERO_TOL};
use crate::{Error, Result, C64};

/// Completeness threshold for [`validate_povm`].
pub const COMPLETENESS_TOL: f64 = 1e-8;
/// Smallest admissible element eigenvalue.
pub const POSITIVITY_TOL: f64 = -1e-10;
/// Probabilities below this are left out of Fisher sums.
pub const P_FLOOR: f64 = 1e-14;
/// Tolerance for matching eigenvalues (degeneracy, differences, integrality).
pub const SPECTRUM_TOL: f64 = 1e-9;

/// One POVM operator.
#[derive(Clone, Debug, PartialEq)]
pub enum PovmElement {
    Dense(HermitianOperator),
    /// `|v⟩⟨v|`; `v` need not be normalized.
    RankOne(Vec<C64>),
}

impl PovmElement {
    pub fn dim(&self) -> usize {
        match self {
            PovmElement::Dense(h) => h.dim(),
            PovmElement::RankOne(v) => v.len(),
        }
    }

    /// `tr(E ρ)`.
    pub fn expectation(&self, state: &impl QuantumState) -> f64 {
        match self {
            PovmElement::Dense(h) => state.expect_matrix(h.matrix()).re,
            PovmElement::RankOne(v) => state.sandwich(v),
        }
    }

    pub fn to_matrix(&self) -> ComplexMatrix {
        match self {
            PovmElement::Dense(h) => h.matrix().clone(),
            PovmElement::RankOne(v) => ComplexMatrix::outer(v, v).expect("same vector"),
        }
    }

    fn min_eigenvalue(&self) -> Result<f64> {
        match self {
            PovmElement::Dense(h) => Ok(eig_hermitian(h)?.eigenvalues[0]),
            PovmElement::RankOne(v) if v.len() == 1 => Ok(v[0].norm_sqr()),
            PovmElement::RankOne(_) => Ok(0.0),
        }
    }
}

/// Finite POVM with labelled outcomes and quadrature weights.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePOVM {
    elements: Vec<PovmElement>,
    labels: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscretePOVM {
    /// Checks shapes only; use [`validate_povm`] for completeness and positivity.
    pub fn new(elements: Vec<PovmElement>, labels: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let Some(first) = elements.first() else {
            return Err(Error::InvalidArgument("POVM has no elements".into()));
        };
        let d = first.dim();
        if let Some(bad) = elements.iter().find(|e| e.dim() != d) {
            return Err(Error::DimensionMismatch(d, bad.dim()));
        }
        if labels.len() != elements.len() || weights.len() != elements.len() {
            return Err(Error::InvalidArgument(format!(
                "{} elements, {} labels, {} weights",
                elements.len(),
                labels.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
        }
        Ok(Self { elements, labels, weights })
    }

    /// Projective measurement onto the columns of `basis`, labelled `labels`.
    pub fn projective(basis: &ComplexMatrix, labels: Vec<f64>) -> Result<Self> {
        let d = basis.dim();
        let elements = (0..d).map(|k| PovmElement::RankOne(basis.column(k))).collect();
        Self::new(elements, labels, vec![1.0; d])
    }

    /// Projective measurement in the standard basis, outcomes `0..d`.
    pub fn computational(dim: usize) -> Result<Self> {
        Self::projective(&ComplexMatrix::identity(dim), (0..dim).map(|k| k as f64).collect())
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[PovmElement] {
        &self.elements
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Same elements with every weight multiplied by `factor`.
    pub fn reweighted(&self, factor: f64) -> Result<Self> {
        Self::new(self.elements.clone(), self.labels.clone(), self.weights.iter().map(|w| w * factor).collect())
    }

    /// `Σ_k w_k E_k`.
    pub fn weighted_sum(&self) -> ComplexMatrix {
        let d = self.dim();
        let mut acc = ComplexMatrix::zeros(d).into_dmatrix();
        for (e, &w) in self.elements.iter().zip(&self.weights) {
            match e {
                PovmElement::Dense(h) => acc += h.matrix().as_dmatrix() * C64::new(w, 0.0),
                PovmElement::RankOne(v) => {
                    for i in 0..d {
                        let vi = v[i] * w;
                        for j in 0..d {
                            acc[(i, j)] += vi * v[j].conj();
                        }
                    }
                }
            }
        }
        ComplexMatrix::from_dmatrix(acc).expect("square")
    }
}

/// Outcome of [`validate_povm`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PovmReport {
    /// `max |Σ_k w_k E_k − I|`.
    pub completeness_residual: f64,
    /// Smallest eigenvalue over all elements.
    pub min_eigenvalue: f64,
    pub complete: bool,
    pub positive: bool,
}

impl PovmReport {
    pub fn passed(&self) -> bool {
        self.complete && self.positive
    }
}

/// Completeness and positivity check against [`COMPLETENESS_TOL`] and
/// [`POSITIVITY_TOL`].
pub fn validate_povm(povm: &DiscretePOVM) -> PovmReport {
    let residual = povm.weighted_sum().max_abs_diff(&ComplexMatrix::identity(povm.dim()));
    let min_eigenvalue =
        povm.elements.iter().map(|e| e.min_eigenvalue().unwrap_or(f64::NEG_INFINITY)).fold(f64::INFINITY, f64::min);
    PovmReport {
        completeness_residual: residual,
        min_eigenvalue,
        complete: residual <= COMPLETENESS_TOL,
        positive: min_eigenvalue >= POSITIVITY_TOL,
    }
}

/// `p_k = w_k tr(E_k ρ)`, with round-off negatives down to `−1e-10` set to 0.
pub fn outcome_distribution(povm: &DiscretePOVM, state: &(impl QuantumState + Sync)) -> Result<Vec<f64>> {
    if povm.dim() != state.dim() {
        return Err(Error::DimensionMismatch(povm.dim(), state.dim()));
    }
    let p: Vec<f64> = povm.elements.par_iter().zip(&povm.weights).map(|(e, &w)| w * e.expectation(state)).collect();
    let mut out = Vec::with_capacity(p.len());
    for v in p {
        if v < POSITIVITY_TOL {
            return Err(Error::Numerical(format!("negative outcome probability {v:e}")));
        }
        out.push(v.max(0.0));
    }
    let total: f64 = out.iter().sum();
    if (total - 1.0).abs() > COMPLETENESS_TOL {
        return Err(Error::Numerical(format!("outcome probabilities sum to {total}")));
    }
    Ok(out)
}

/// Central-difference step `1e-5 · period / 2π` (or `1e-5` without a period).
pub fn default_fisher_step(period: Option<f64>) -> f64 {
    1e-5 * period.map_or(1.0, |p| p / (2.0 * PI))
}

/// `F(x0) = Σ_k (∂p_k/∂X)² / p_k`, derivatives by central differences with
/// the given step.
///
/// An outcome with `p_k < P_FLOOR` sits at (or next to) a zero of `p_k`,
/// which is always quadratic, so its term is replaced by the limit
/// `(p')²/p → 2p''`. Dropping it instead loses a whole grid weight whenever a
/// wavefunction node falls on a grid point.
pub fn classical_fisher(povm: &DiscretePOVM, family: &StateFamily, x0: f64, step: f64) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let p0 = outcome_distribution(povm, &family.state_at(x0))?;
    let plus = outcome_distribution(povm, &family.state_at(x0 + step))?;
    let minus = outcome_distribution(povm, &family.state_at(x0 - step))?;
    fisher_from_samples(&p0, &plus, &minus, step)
}

pub(crate) fn fisher_from_samples(p0: &[f64], plus: &[f64], minus: &[f64], step: f64) -> Result<f64> {
    let mut any = false;
    let mut terms = Vec::with_capacity(p0.len());
    for k in 0..p0.len() {
        if p0[k] >= P_FLOOR {
            any = true;
            let dp = (plus[k] - minus[k]) / (2.0 * step);
            terms.push(dp * dp / p0[k]);
        } else {
            let curvature = (plus[k] + minus[k] - 2.0 * p0[k]) / (step * step);
            terms.push(2.0 * curvature.max(0.0));
        }
    }
    if !any {
        return Err(Error::AllBelowFloor);
    }
    Ok(pairwise_sum(&terms))
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Projective POVM in the eigenbasis of the SLD of `ρ` along `ρ'`; outcome
/// labels are the SLD eigenvalues.
pub fn sld_projective_povm(rho: &DensityOperator, rho_prime: &HermitianOperator) -> Result<DiscretePOVM> {
    let l = sld(rho, rho_prime, DEFAULT_ZERO_TOL)?;
    let eig = eig_hermitian(&l.sld)?;
    DiscretePOVM::projective(&eig.eigenvectors, eig.eigenvalues)
}

/// Eigen-structure of a generator, the input of the covariant construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpectrumRepr", into = "SpectrumRepr")]
pub struct SpectrumModel {
    eigenvalues: Vec<f64>,
    eigenvectors: ComplexMatrix,
    degeneracy_labels: Option<Vec<usize>>,
    period: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct SpectrumRepr {
    eigenvalues: Vec<f64>,
    eigenvectors: ComplexMatrix,
    degeneracy_labels: Option<Vec<usize>>,
    period: Option<f64>,
}

impl TryFrom<SpectrumRepr> for SpectrumModel {
    type Error = Error;

    fn try_from(r: SpectrumRepr) -> Result<Self> {
        Self::new(r.eigenvalues, r.eigenvectors, r.degeneracy_labels, r.period)
    }
}

impl From<SpectrumModel> for SpectrumRepr {
    fn from(s: SpectrumModel) -> Self {
        SpectrumRepr {
            eigenvalues: s.eigenvalues,
            eigenvectors: s.eigenvectors,
            degeneracy_labels: s.degeneracy_labels,
            period: s.period,
        }
    }
}

impl SpectrumModel {
    /// `eigenvectors` holds `|h_k⟩` as columns, in the order of `eigenvalues`.
    pub fn new(
        eigenvalues: Vec<f64>,
        eigenvectors: ComplexMatrix,
        degeneracy_labels: Option<Vec<usize>>,
        period: Option<f64>,
    ) -> Result<Self> {
        let d = eigenvalues.len();
        if d == 0 {
            return Err(Error::EmptyDimension);
        }
        if eigenvectors.dim() != d {
            return Err(Error::DimensionMismatch(d, eigenvectors.dim()));
        }
        if let Some(labels) = &degeneracy_labels {
            if labels.len() != d {
                return Err(Error::DimensionMismatch(d, labels.len()));
            }
        }
        let gram = &eigenvectors.adjoint() * &eigenvectors;
        let defect = gram.max_abs_diff(&ComplexMatrix::identity(d));
        if defect > 1e-10 {
            return Err(Error::Numerical(format!("eigenvectors not orthonormal (defect {defect:e})")));
        }
        if let Some(p) = period {
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::InvalidArgument(format!("period must be positive, got {p}")));
            }
            for &h in &eigenvalues {
                let n = h * p / (2.0 * PI);
                if (n - n.round()).abs() > SPECTRUM_TOL {
                    return Err(Error::NotPeriodic { value: h, period: p });
                }
            }
        }
        Ok(Self { eigenvalues, eigenvectors, degeneracy_labels, period })
    }

    /// Generator already diagonal in the standard basis.
    pub fn diagonal(eigenvalues: Vec<f64>, period: Option<f64>) -> Result<Self> {
        let d = eigenvalues.len();
        Self::new(eigenvalues, ComplexMatrix::identity(d), None, period)
    }

    /// Diagonalizes `h`; eigenvalues come out ascending.
    pub fn from_operator(h: &HermitianOperator, period: Option<f64>) -> Result<Self> {
        let eig = eig_hermitian(h)?;
        Self::new(eig.eigenvalues, eig.eigenvectors, None, period)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &ComplexMatrix {
        &self.eigenvectors
    }

    pub fn degeneracy_labels(&self) -> Option<&[usize]> {
        self.degeneracy_labels.as_deref()
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    /// The generator `Σ_k h_k |h_k⟩⟨h_k|`.
    pub fn operator(&self) -> Result<HermitianOperator> {
        let v = &self.eigenvectors;
        let m = &(v * &ComplexMatrix::from_real_diagonal(&self.eigenvalues)) * &v.adjoint();
        HermitianOperator::new(m)
    }

    /// Integers `n_h = h 𝒳 / 2π` (periodic spectra only).
    pub fn integer_levels(&self) -> Option<Vec<i64>> {
        let p = self.period?;
        Some(self.eigenvalues.iter().map(|h| (h * p / (2.0 * PI)).round() as i64).collect())
    }

    /// First pair of eigenvalues closer than [`SPECTRUM_TOL`], if any.
    pub fn degenerate_pair(&self) -> Option<(f64, f64)> {
        let mut sorted = self.eigenvalues.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.windows(2).find(|w| w[1] - w[0] <= SPECTRUM_TOL).map(|w| (w[0], w[1]))
    }

    /// Index of the eigenvalue equal to `h` within [`SPECTRUM_TOL`].
    pub fn index_of(&self, h: f64) -> Option<usize> {
        self.eigenvalues.iter().position(|&v| (v - h).abs() <= SPECTRUM_TOL)
    }

    /// `⟨h_k|ψ⟩` for every `k`.
    pub fn coefficients(&self, psi: &PureState) -> Result<Vec<C64>> {
        if psi.dim() != self.dim() {
            return Err(Error::DimensionMismatch(self.dim(), psi.dim()));
        }
        Ok(self.eigenvectors.adjoint().apply(psi.amplitudes()))
    }
}

/// Where the grid lives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Domain {
    /// One full period `[−𝒳/2, 𝒳/2)`.
    Periodic,
    /// Truncation window `[lo, lo + width)` for a spectrum without period;
    /// completeness then holds only approximately.
    Window { lo: f64, width: f64 },
}

/// Rank-one covariant POVM generated by a nondegenerate spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CovariantRepr", into = "CovariantRepr")]
pub struct CovariantPOVM {
    spectrum: SpectrumModel,
    gauge: Vec<f64>,
    grid: Vec<f64>,
    normalizer: f64,
    domain: Domain,
}

#[derive(Serialize, Deserialize)]
struct CovariantRepr {
    spectrum: SpectrumModel,
    gauge_samples: Vec<f64>,
    grid: Vec<f64>,
    #[serde(rename = "C")]
    normalizer: f64,
}

impl TryFrom<CovariantRepr> for CovariantPOVM {
    type Error = Error;

    fn try_from(r: CovariantRepr) -> Result<Self> {
        let m = r.grid.len();
        let rebuilt = match r.spectrum.period {
            Some(p) if (p - r.normalizer).abs() <= 1e-12 * p => build_covariant(r.spectrum, &r.gauge_samples, m)?,
            _ => {
                let lo = r.grid.first().copied().unwrap_or(0.0);
                build_covariant_window(r.spectrum, &r.gauge_samples, m, lo, r.normalizer)?
            }
        };
        let drift = rebuilt.grid.iter().zip(&r.grid).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if drift > 1e-9 * r.normalizer.abs().max(1.0) {
            return Err(Error::InvalidArgument("grid is not the uniform grid implied by C".into()));
        }
        Ok(rebuilt)
    }
}

impl From<CovariantPOVM> for CovariantRepr {
    fn from(c: CovariantPOVM) -> Self {
        CovariantRepr { spectrum: c.spectrum, gauge_samples: c.gauge, grid: c.grid, normalizer: c.normalizer }
    }
}

/// Smallest grid accepted for a spectrum with integer levels spanning `span`.
pub fn minimum_grid(span: i64) -> usize {
    4 * (span as usize + 1)
}

fn check_gauge(spectrum: &SpectrumModel, gauge: &[f64]) -> Result<()> {
    if gauge.len() != spectrum.dim() {
        return Err(Error::DimensionMismatch(spectrum.dim(), gauge.len()));
    }
    if let Some((a, b)) = spectrum.degenerate_pair() {
        return Err(Error::DegenerateSpectrum(a, b));
    }
    Ok(())
}

/// Periodic covariant POVM: grid `x_m = −𝒳/2 + m 𝒳/M`, `C = 𝒳`, weight `𝒳/M`.
///
/// `gauge[k]` is `f(h_k)`; pass zeros for the canonical states.
pub fn build_covariant(spectrum: SpectrumModel, gauge: &[f64], m: usize) -> Result<CovariantPOVM> {
    check_gauge(&spectrum, gauge)?;
    let period = spectrum
        .period
        .ok_or_else(|| Error::InvalidArgument("periodic construction needs a spectrum with a period".into()))?;
    let levels = spectrum.integer_levels().expect("period present");
    let span = levels.iter().max().unwrap() - levels.iter().min().unwrap();
    let minimum = minimum_grid(span);
    if m < minimum {
        return Err(Error::GridTooCoarse { grid: m, minimum });
    }
    let grid = (0..m).map(|k| -0.5 * period + k as f64 * period / m as f64).collect();
    Ok(CovariantPOVM { spectrum, gauge: gauge.to_vec(), grid, normalizer: period, domain: Domain::Periodic })
}

/// Covariant POVM on a truncation window `[lo, lo + width)` with `C = width`.
pub fn build_covariant_window(
    spectrum: SpectrumModel,
    gauge: &[f64],
    m: usize,
    lo: f64,
    width: f64,
) -> Result<CovariantPOVM> {
    check_gauge(&spectrum, gauge)?;
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::InvalidArgument(format!("window width must be positive, got {width}")));
    }
    let hmax = spectrum.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let hmin = spectrum.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    // same four-points-per-cycle rule, in units of 2π/width
    let span = ((hmax - hmin) * width / (2.0 * PI)).ceil() as i64;
    let minimum = minimum_grid(span);
    if m < minimum {
        return Err(Error::GridTooCoarse { grid: m, minimum });
    }
    let grid = (0..m).map(|k| lo + k as f64 * width / m as f64).collect();
    Ok(CovariantPOVM { spectrum, gauge: gauge.to_vec(), grid, normalizer: width, domain: Domain::Window { lo, width } })
}

impl CovariantPOVM {
    pub fn spectrum(&self) -> &SpectrumModel {
        &self.spectrum
    }

    pub fn gauge(&self) -> &[f64] {
        &self.gauge
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn is_periodic(&self) -> bool {
        self.domain == Domain::Periodic
    }

    /// Grid spacing, which is also the quadrature weight.
    pub fn weight(&self) -> f64 {
        self.normalizer / self.grid.len() as f64
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Period of the outcome variable, if any.
    pub fn period(&self) -> Option<f64> {
        self.is_periodic().then_some(self.normalizer)
    }

    /// `|x⟩` (unnormalized) in the original basis.
    pub fn state_vector(&self, x: f64) -> Vec<C64> {
        let weights: Vec<C64> =
            self.spectrum.eigenvalues.iter().zip(&self.gauge).map(|(&h, &f)| C64::from_polar(1.0, f - x * h)).collect();
        self.spectrum.eigenvectors.apply(&weights)
    }

    /// The same POVM as a [`DiscretePOVM`] with rank-one elements `|x_m⟩/√C`.
    pub fn to_discrete(&self) -> DiscretePOVM {
        let s = 1.0 / self.normalizer.sqrt();
        let elements = self
            .grid
            .iter()
            .map(|&x| PovmElement::RankOne(self.state_vector(x).into_iter().map(|z| z * s).collect()))
            .collect();
        DiscretePOVM::new(elements, self.grid.clone(), vec![self.weight(); self.grid.len()]).expect("consistent shapes")
    }

    /// Gauge-adjusted coefficients `c_k = e^{−i f(h_k)} ⟨h_k|ψ⟩`, so that the
    /// wavefunction is `ψ(x) = C^{−1/2} Σ_k c_k e^{i x h_k}`.
    pub fn coefficients(&self, psi: &PureState) -> Result<Vec<C64>> {
        let raw = self.spectrum.coefficients(psi)?;
        Ok(raw.iter().zip(&self.gauge).map(|(c, &f)| c * C64::from_polar(1.0, -f)).collect())
    }

    /// `ψ(x) = ⟨x|ψ⟩ / √C` from [`Self::coefficients`].
    pub fn wavefunction(&self, coefficients: &[C64], x: f64) -> C64 {
        let s: C64 =
            coefficients.iter().zip(&self.spectrum.eigenvalues).map(|(c, &h)| c * C64::from_polar(1.0, x * h)).sum();
        s / self.normalizer.sqrt()
    }

    /// `ψ'(x)`, differentiated term by term.
    pub fn wavefunction_derivative(&self, coefficients: &[C64], x: f64) -> C64 {
        let s: C64 = coefficients
            .iter()
            .zip(&self.spectrum.eigenvalues)
            .map(|(c, &h)| c * C64::new(0.0, h) * C64::from_polar(1.0, x * h))
            .sum();
        s / self.normalizer.sqrt()
    }

    /// Outcome law for the family `e^{−iXĥ}|ψ⟩` generated by this spectrum:
    /// `p_m(X) = w |ψ(x_m − X)|²`.
    pub fn shifted_distribution(&self, coefficients: &[C64], x: f64) -> Vec<f64> {
        let w = self.weight();
        self.grid.iter().map(|&xm| w * self.wavefunction(coefficients, xm - x).norm_sqr()).collect()
    }
}

/// `D(H) = Σ_m w e^{i x_m H} |x_m⟩⟨x_m| / C`, which moves `e^{if(h)}|h⟩` to
/// `e^{if(h+H)}|h+H⟩` and annihilates it when `h + H` is not an eigenvalue.
pub fn displacement_operator(povm: &CovariantPOVM, shift: f64) -> Result<ComplexMatrix> {
    let h = &povm.spectrum.eigenvalues;
    let is_difference =
        shift.abs() <= SPECTRUM_TOL || h.iter().any(|a| h.iter().any(|b| (a - b - shift).abs() <= SPECTRUM_TOL));
    if !is_difference {
        return Err(Error::NotEigenvalueDifference(shift));
    }
    let d = povm.spectrum.dim();
    let scale = povm.weight() / povm.normalizer;
    let mut acc = ComplexMatrix::zeros(d).into_dmatrix();
    for &x in &povm.grid {
        let v = povm.state_vector(x);
        let phase = C64::from_polar(scale, x * shift);
        for i in 0..d {
            let vi = v[i] * phase;
            for j in 0..d {
                acc[(i, j)] += vi * v[j].conj();
            }
        }
    }
    ComplexMatrix::from_dmatrix(acc)
}

/// Outcome of [`optimality_test`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalityReport {
    /// `max_m r²(x_m) |Θ'(x_m) − ⟨ĥ⟩|`.
    pub residual: f64,
    /// `max_u | |ψ(⟨h⟩+u)|² − |ψ(⟨h⟩−u)|² |` in the `h` representation; an
    /// eigenvalue with no mirror partner counts against amplitude zero.
    pub symmetry_residual: f64,
    pub mean_h: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Reduces an angle modulo π into `(−π/2, π/2]`.
fn wrap_half_pi(a: f64) -> f64 {
    let r = a.rem_euclid(PI);
    if r > 0.5 * PI {
        r - PI
    } else {
        r
    }
}

/// Checks whether the fiducial's `x` wavefunction is a real function times
/// `e^{i x ⟨ĥ⟩}`, the condition under which the covariant POVM attains the
/// quantum bound.
///
/// `Θ' − ⟨ĥ⟩` comes from central differences of `Θ(x) − x⟨ĥ⟩`, periodic at
/// the grid ends, falling back to one-sided differences at window edges and
/// next to points with `|ψ|² < P_FLOOR`. The differences are reduced modulo
/// π rather than 2π: a real amplitude may change sign, and the π jump at such
/// a node is not a phase gradient.
pub fn optimality_test(povm: &CovariantPOVM, fiducial: &PureState, tol: f64) -> Result<OptimalityReport> {
    let c = povm.coefficients(fiducial)?;
    let h = povm.spectrum.eigenvalues();
    let probs: Vec<f64> = c.iter().map(|z| z.norm_sqr()).collect();
    let mean_h: f64 = probs.iter().zip(h).map(|(p, h)| p * h).sum();

    let m = povm.len();
    let dx = povm.weight();
    let psi: Vec<C64> = povm.grid.iter().map(|&x| povm.wavefunction(&c, x)).collect();
    let theta: Vec<f64> = psi.iter().map(|z| z.arg()).collect();
    let mut residual = 0.0f64;
    for k in 0..m {
        let prob = |j: usize| psi[j].norm_sqr();
        if prob(k) < P_FLOOR {
            continue;
        }
        let (mut prev, mut next) = match povm.domain {
            Domain::Periodic => ((k + m - 1) % m, (k + 1) % m),
            Domain::Window { .. } => (k.saturating_sub(1), (k + 1).min(m - 1)),
        };
        // a neighbour sitting on a node has no usable phase
        if prob(prev) < P_FLOOR {
            prev = k;
        }
        if prob(next) < P_FLOOR {
            next = k;
        }
        if prev == next {
            continue;
        }
        let steps = if prev == k || next == k { 1.0 } else { 2.0 };
        let span = steps * dx;
        let drift = wrap_half_pi(theta[next] - theta[prev] - mean_h * span) / span;
        residual = residual.max(psi[k].norm_sqr() * drift.abs());
    }

    let mut symmetry_residual = 0.0f64;
    for (k, &hk) in h.iter().enumerate() {
        let partner = povm.spectrum.index_of(2.0 * mean_h - hk).map_or(0.0, |j| probs[j]);
        symmetry_residual = symmetry_residual.max((probs[k] - partner).abs());
    }
    Ok(OptimalityReport { residual, symmetry_residual, mean_h, tol, pass: residual <= tol })
}

/// The two parts of `var(ĥ)` read off the `x` wavefunction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceSplit {
    /// `¼ Σ_m w (p')²/p`, a quarter of the covariant POVM's Fisher information.
    pub fisher_quarter: f64,
    /// `Σ_m w p (Θ' − ⟨ĥ⟩)²`.
    pub phase_var: f64,
    /// `var(ĥ)` computed directly.
    pub variance: f64,
}

/// Splits `var(ĥ)` into amplitude and phase contributions on the grid.
///
/// Uses the exact derivative `ψ'`. Grid points with `p < P_FLOOR` add
/// `|ψ' − i⟨h⟩ψ|²` to the Fisher part. The resolution check requires
/// `Σ w |ψ|² = 1` and `Σ w |ψ' − i⟨h⟩ψ|² = var(ĥ)` to within `1e-9`
/// relative; otherwise the grid is reported as too coarse.
pub fn variance_split(povm: &CovariantPOVM, fiducial: &PureState) -> Result<VarianceSplit> {
    let c = povm.coefficients(fiducial)?;
    let h = povm.spectrum.eigenvalues();
    let mean: f64 = c.iter().zip(h).map(|(z, h)| z.norm_sqr() * h).sum();
    let variance: f64 = c.iter().zip(h).map(|(z, h)| z.norm_sqr() * (h - mean).powi(2)).sum();
    let w = povm.weight();
    let i_mean = C64::new(0.0, mean);

    let mut norm_terms = Vec::with_capacity(povm.len());
    let mut total_terms = Vec::with_capacity(povm.len());
    let mut fisher_terms = Vec::with_capacity(povm.len());
    let mut phase_terms = Vec::with_capacity(povm.len());
    for &x in &povm.grid {
        let psi = povm.wavefunction(&c, x);
        let dpsi = povm.wavefunction_derivative(&c, x);
        let p = psi.norm_sqr();
        let centered = (dpsi - i_mean * psi).norm_sqr();
        norm_terms.push(w * p);
        total_terms.push(w * centered);
        if p < P_FLOOR {
            fisher_terms.push(w * centered);
            continue;
        }
        let cross = psi.conj() * dpsi;
        let dp = 2.0 * cross.re;
        let dtheta = cross.im / p;
        fisher_terms.push(0.25 * w * dp * dp / p);
        phase_terms.push(w * p * (dtheta - mean).powi(2));
    }
    let norm = pairwise_sum(&norm_terms);
    let total = pairwise_sum(&total_terms);
    let resolved = (norm - 1.0).abs() <= 1e-9 && (total - variance).abs() <= 1e-9 * variance.max(1.0);
    if !resolved {
        let span = povm.spectrum.integer_levels().map_or(0, |n| n.iter().max().unwrap() - n.iter().min().unwrap());
        return Err(Error::GridTooCoarse { grid: povm.len(), minimum: minimum_grid(span) });
    }
    Ok(VarianceSplit { fisher_quarter: pairwise_sum(&fisher_terms), phase_var: pairwise_sum(&phase_terms), variance })
}

/// `⟨ĥ⟩` of a pure state, with `ĥ` given by the spectrum.
pub fn spectral_mean(spectrum: &SpectrumModel, psi: &PureState) -> Result<f64> {
    expectation(&spectrum.operator()?, psi)
}

/// Convenience: a family `e^{−iXĥ}|ψ⟩` whose generator is this spectrum's operator.
pub fn covariant_family(povm: &CovariantPOVM, fiducial: PureState) -> Result<StateFamily> {
    StateFamily::new(State::Pure(fiducial), povm.spectrum.operator()?)
}
