//! Dense complex linear algebra and state primitives.
//!
//! Matrices are square, dense and indexed `(row, column)`; the JSON form is
//! row-major: `re[i][j]` and `im[i][j]` hold entry `(i, j)`. Kronecker
//! products use the standard ordering, entry `(i·db + k, j·db + l)` of
//! `a ⊗ b` is `a[i][j]·b[k][l]`, so basis index `i·db + k` labels `|i⟩⊗|k⟩`.
//!
//! All values are immutable after construction.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Largest Hilbert-space dimension accepted for a single system.
pub const MAX_DIM: usize = 256;
/// Largest dimension accepted after tensoring replicas together.
pub const MAX_TENSOR_DIM: usize = 4096;
/// Relative tolerance on `max |A − A†|` for Hermitian operators.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Tolerance on `|tr ρ − 1|`.
pub const TRACE_TOL: f64 = 1e-12;
/// Density operators may have eigenvalues down to `-NEGATIVE_EIGEN_TOL`.
pub const NEGATIVE_EIGEN_TOL: f64 = 1e-10;
/// Tolerance on `|‖ψ‖² − 1|`.
pub const NORM_TOL: f64 = 1e-12;
/// Relative gap below which eigenvalues are treated as one degenerate cluster.
pub const DEGENERACY_TOL: f64 = 1e-10;

#[inline]
pub(crate) fn i_unit() -> C64 {
    C64::new(0.0, 1.0)
}

/// Square dense complex matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct ComplexMatrix {
    inner: DMatrix<C64>,
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    dim: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl TryFrom<MatrixRepr> for ComplexMatrix {
    type Error = Error;

    fn try_from(repr: MatrixRepr) -> Result<Self> {
        let d = repr.dim;
        if repr.re.len() != d || repr.im.len() != d {
            return Err(Error::DimensionMismatch(d, repr.re.len().max(repr.im.len())));
        }
        for (re_row, im_row) in repr.re.iter().zip(&repr.im) {
            if re_row.len() != d || im_row.len() != d {
                return Err(Error::NotSquare(d, re_row.len().max(im_row.len())));
            }
        }
        Ok(ComplexMatrix::from_fn(d, |i, j| C64::new(repr.re[i][j], repr.im[i][j])))
    }
}

impl From<ComplexMatrix> for MatrixRepr {
    fn from(m: ComplexMatrix) -> Self {
        let d = m.dim();
        let re = (0..d).map(|i| (0..d).map(|j| m.inner[(i, j)].re).collect()).collect();
        let im = (0..d).map(|i| (0..d).map(|j| m.inner[(i, j)].im).collect()).collect();
        MatrixRepr { dim: d, re, im }
    }
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { inner: DMatrix::zeros(dim, dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { inner: DMatrix::identity(dim, dim) }
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self { inner: DMatrix::from_fn(dim, dim, f) }
    }

    pub fn from_diagonal(values: &[C64]) -> Self {
        Self { inner: DMatrix::from_diagonal(&DVector::from_column_slice(values)) }
    }

    pub fn from_real_diagonal(values: &[f64]) -> Self {
        Self::from_fn(values.len(), |i, j| if i == j { C64::new(values[i], 0.0) } else { C64::new(0.0, 0.0) })
    }

    /// Builds a matrix from row-major entries.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let d = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::NotSquare(d, bad.len()));
        }
        Ok(Self::from_fn(d, |i, j| rows[i][j]))
    }

    pub fn from_dmatrix(inner: DMatrix<C64>) -> Result<Self> {
        if inner.nrows() != inner.ncols() {
            return Err(Error::NotSquare(inner.nrows(), inner.ncols()));
        }
        Ok(Self { inner })
    }

    /// `|ket⟩⟨bra|`.
    pub fn outer(ket: &[C64], bra: &[C64]) -> Result<Self> {
        if ket.len() != bra.len() {
            return Err(Error::DimensionMismatch(ket.len(), bra.len()));
        }
        Ok(Self::from_fn(ket.len(), |i, j| ket[i] * bra[j].conj()))
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.inner[(row, col)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.inner
    }

    pub fn into_dmatrix(self) -> DMatrix<C64> {
        self.inner
    }

    pub fn adjoint(&self) -> Self {
        Self { inner: self.inner.adjoint() }
    }

    pub fn trace(&self) -> C64 {
        self.inner.trace()
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self { inner: &self.inner * factor }
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.inner.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim(), "max_abs_diff: dimension mismatch");
        self.inner.iter().zip(other.inner.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Largest modulus of `A − A†`.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.inner[(i, j)] - self.inner[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        Self { inner: self.inner.kronecker(&other.inner) }
    }

    /// `self · v`.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.dim(), "apply: dimension mismatch");
        let d = self.dim();
        (0..d).map(|i| (0..d).map(|j| self.inner[(i, j)] * v[j]).sum()).collect()
    }

    pub fn column(&self, col: usize) -> Vec<C64> {
        self.inner.column(col).iter().copied().collect()
    }

    /// `A B − B A`.
    pub fn commutator(&self, other: &Self) -> Self {
        Self { inner: &self.inner * &other.inner - &other.inner * &self.inner }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix { inner: &self.inner * &rhs.inner }
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix { inner: &self.inner + &rhs.inner }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix { inner: &self.inner - &rhs.inner }
    }
}

fn check_dim(dim: usize, cap: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::EmptyDimension);
    }
    if dim > cap {
        return Err(Error::DimensionCap { dim, cap });
    }
    Ok(())
}

fn hermitize(m: &ComplexMatrix) -> ComplexMatrix {
    let half = C64::new(0.5, 0.0);
    ComplexMatrix { inner: (&m.inner + m.inner.adjoint()) * half }
}

/// Hermitian operator (`ĥ`, `Δĥ`, a clock observable, an SLD, ...).
///
/// Construction checks `max |A − A†| ≤ 1e-12 · max(1, max |A|)` and then
/// stores the exactly Hermitian part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexMatrix", into = "ComplexMatrix")]
pub struct HermitianOperator {
    matrix: ComplexMatrix,
}

impl TryFrom<ComplexMatrix> for HermitianOperator {
    type Error = Error;

    fn try_from(m: ComplexMatrix) -> Result<Self> {
        Self::new(m)
    }
}

impl From<HermitianOperator> for ComplexMatrix {
    fn from(h: HermitianOperator) -> Self {
        h.matrix
    }
}

impl HermitianOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Self::with_cap(matrix, MAX_TENSOR_DIM)
    }

    pub(crate) fn with_cap(matrix: ComplexMatrix, cap: usize) -> Result<Self> {
        check_dim(matrix.dim(), cap)?;
        let defect = matrix.hermiticity_defect();
        if defect > HERMITIAN_TOL * matrix.max_abs().max(1.0) {
            return Err(Error::NotHermitian(defect));
        }
        Ok(Self { matrix: hermitize(&matrix) })
    }

    /// `(A + A†)/2` without a tolerance check, for matrices that are
    /// Hermitian by construction but carry round-off from products.
    pub fn hermitian_part(matrix: &ComplexMatrix) -> Self {
        Self { matrix: hermitize(matrix) }
    }

    pub fn from_real_diagonal(values: &[f64]) -> Result<Self> {
        Self::new(ComplexMatrix::from_real_diagonal(values))
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(ComplexMatrix::identity(dim))
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(ComplexMatrix::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    /// True when every off-diagonal entry is exactly zero.
    pub fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.matrix.get(i, j) == C64::new(0.0, 0.0)))
    }

    /// `self − c·I`.
    pub fn shifted(&self, c: f64) -> Self {
        let shift = ComplexMatrix::identity(self.dim()).scale(C64::new(c, 0.0));
        Self { matrix: &self.matrix - &shift }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { matrix: self.matrix.scale(C64::new(factor, 0.0)) }
    }

    /// `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Result<Self> {
        let m = self.matrix.kron(&other.matrix);
        check_dim(m.dim(), MAX_TENSOR_DIM)?;
        Ok(Self { matrix: m })
    }

    pub fn sum(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(self.dim(), other.dim()));
        }
        Ok(Self { matrix: &self.matrix + &other.matrix })
    }
}

/// Density operator: Hermitian, unit trace, eigenvalues ≥ −1e-10.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexMatrix", into = "ComplexMatrix")]
pub struct DensityOperator {
    matrix: ComplexMatrix,
}

impl TryFrom<ComplexMatrix> for DensityOperator {
    type Error = Error;

    fn try_from(m: ComplexMatrix) -> Result<Self> {
        Self::new(m)
    }
}

impl From<DensityOperator> for ComplexMatrix {
    fn from(rho: DensityOperator) -> Self {
        rho.matrix
    }
}

impl DensityOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Self::with_cap(matrix, MAX_TENSOR_DIM)
    }

    fn with_cap(matrix: ComplexMatrix, cap: usize) -> Result<Self> {
        check_dim(matrix.dim(), cap)?;
        let defect = matrix.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::NotHermitian(defect));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidTrace(tr.re));
        }
        let matrix = hermitize(&matrix);
        let eig = eig_matrix(&matrix)?;
        let min = eig.eigenvalues.first().copied().unwrap_or(0.0);
        if min < -NEGATIVE_EIGEN_TOL {
            return Err(Error::NotPositive(min));
        }
        Ok(Self { matrix })
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn from_pure(psi: &PureState) -> Self {
        let a = psi.amplitudes();
        Self { matrix: ComplexMatrix::outer(a, a).expect("same length") }
    }

    /// `I/d`.
    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        check_dim(dim, MAX_TENSOR_DIM)?;
        let p = 1.0 / dim as f64;
        Ok(Self { matrix: ComplexMatrix::from_real_diagonal(&vec![p; dim]) })
    }

    /// Diagonal density operator with the given probabilities.
    pub fn diagonal(probabilities: &[f64]) -> Result<Self> {
        Self::new(ComplexMatrix::from_real_diagonal(probabilities))
    }

    /// `Σ_j p_j |v_j⟩⟨v_j|` for orthonormal columns `v_j` of `basis`.
    pub fn from_spectrum(probabilities: &[f64], basis: &ComplexMatrix) -> Result<Self> {
        if probabilities.len() != basis.dim() {
            return Err(Error::DimensionMismatch(probabilities.len(), basis.dim()));
        }
        let diag = ComplexMatrix::from_real_diagonal(probabilities);
        Self::new(&(basis * &diag) * &basis.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn as_hermitian(&self) -> HermitianOperator {
        HermitianOperator { matrix: self.matrix.clone() }
    }

    /// Spectral decomposition `Σ_j p_j |j⟩⟨j|` (eigenvalues ascending).
    pub fn eigen(&self) -> Result<EigenDecomposition> {
        eig_matrix(&self.matrix)
    }

    /// `U ρ U†`.
    pub fn conjugate_by(&self, unitary: &ComplexMatrix) -> Result<Self> {
        if unitary.dim() != self.dim() {
            return Err(Error::DimensionMismatch(unitary.dim(), self.dim()));
        }
        let m = &(unitary * &self.matrix) * &unitary.adjoint();
        Ok(Self { matrix: hermitize(&m) })
    }

    /// `tr ρ²`.
    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }
}

/// Normalized state vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PureState {
    amplitudes: Vec<C64>,
}

impl PureState {
    /// Accepts amplitudes with `|‖ψ‖² − 1| ≤ 1e-12`.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        check_dim(amplitudes.len(), MAX_TENSOR_DIM)?;
        let n2: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum();
        if (n2 - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(n2));
        }
        Ok(Self { amplitudes })
    }

    /// Rescales to unit norm.
    pub fn normalized(amplitudes: Vec<C64>) -> Result<Self> {
        check_dim(amplitudes.len(), MAX_TENSOR_DIM)?;
        let n = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::NotNormalized(n * n));
        }
        Ok(Self { amplitudes: amplitudes.into_iter().map(|z| z / n).collect() })
    }

    /// Real amplitudes, rescaled to unit norm.
    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::normalized(amplitudes.iter().map(|&a| C64::new(a, 0.0)).collect())
    }

    /// Basis vector `|k⟩` in dimension `dim`.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        check_dim(dim, MAX_TENSOR_DIM)?;
        if k >= dim {
            return Err(Error::InvalidArgument(format!("basis index {k} out of range for dimension {dim}")));
        }
        let mut amplitudes = vec![C64::new(0.0, 0.0); dim];
        amplitudes[k] = C64::new(1.0, 0.0);
        Ok(Self { amplitudes })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(self.dim(), other.dim()));
        }
        Ok(self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn density(&self) -> DensityOperator {
        DensityOperator::from_pure(self)
    }

    /// `self ⊗ other`.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let dim = self.dim() * other.dim();
        check_dim(dim, MAX_TENSOR_DIM)?;
        let amplitudes = self.amplitudes.iter().flat_map(|a| other.amplitudes.iter().map(move |b| a * b)).collect();
        Ok(Self { amplitudes })
    }

    /// Applies a unitary; renormalizes away round-off.
    pub fn evolve(&self, unitary: &ComplexMatrix) -> Result<Self> {
        if unitary.dim() != self.dim() {
            return Err(Error::DimensionMismatch(unitary.dim(), self.dim()));
        }
        Self::normalized(unitary.apply(&self.amplitudes))
    }
}

/// Either kind of state, for APIs that take both.
#[derive(Clone, Debug, PartialEq)]
pub enum State {
    Pure(PureState),
    Mixed(DensityOperator),
}

impl From<PureState> for State {
    fn from(psi: PureState) -> Self {
        State::Pure(psi)
    }
}

impl From<DensityOperator> for State {
    fn from(rho: DensityOperator) -> Self {
        State::Mixed(rho)
    }
}

/// Anything with a well-defined `tr(ρ A)`.
pub trait QuantumState {
    fn dim(&self) -> usize;

    /// `tr(ρ M)` for an arbitrary square matrix `M`.
    fn expect_matrix(&self, m: &ComplexMatrix) -> C64;

    fn to_density(&self) -> DensityOperator;

    /// `⟨v|ρ|v⟩` for an arbitrary (not necessarily normalized) vector.
    fn sandwich(&self, v: &[C64]) -> f64;
}

impl QuantumState for PureState {
    fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    fn expect_matrix(&self, m: &ComplexMatrix) -> C64 {
        let mv = m.apply(&self.amplitudes);
        self.amplitudes.iter().zip(&mv).map(|(a, b)| a.conj() * b).sum()
    }

    fn to_density(&self) -> DensityOperator {
        self.density()
    }

    fn sandwich(&self, v: &[C64]) -> f64 {
        let z: C64 = v.iter().zip(&self.amplitudes).map(|(a, b)| a.conj() * b).sum();
        z.norm_sqr()
    }
}

impl QuantumState for DensityOperator {
    fn dim(&self) -> usize {
        self.matrix.dim()
    }

    fn expect_matrix(&self, m: &ComplexMatrix) -> C64 {
        let d = self.dim();
        let rho = self.matrix.as_dmatrix();
        let m = m.as_dmatrix();
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..d {
            for k in 0..d {
                acc += rho[(j, k)] * m[(k, j)];
            }
        }
        acc
    }

    fn to_density(&self) -> DensityOperator {
        self.clone()
    }

    fn sandwich(&self, v: &[C64]) -> f64 {
        let rho = self.matrix.as_dmatrix();
        let d = v.len();
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..d {
            let mut row = C64::new(0.0, 0.0);
            for k in 0..d {
                row += rho[(j, k)] * v[k];
            }
            acc += v[j].conj() * row;
        }
        acc.re
    }
}

impl QuantumState for State {
    fn dim(&self) -> usize {
        match self {
            State::Pure(p) => p.dim(),
            State::Mixed(r) => r.dim(),
        }
    }

    fn expect_matrix(&self, m: &ComplexMatrix) -> C64 {
        match self {
            State::Pure(p) => p.expect_matrix(m),
            State::Mixed(r) => r.expect_matrix(m),
        }
    }

    fn to_density(&self) -> DensityOperator {
        match self {
            State::Pure(p) => p.density(),
            State::Mixed(r) => r.clone(),
        }
    }

    fn sandwich(&self, v: &[C64]) -> f64 {
        match self {
            State::Pure(p) => p.sandwich(v),
            State::Mixed(r) => r.sandwich(v),
        }
    }
}

/// Eigenvalues ascending with orthonormal eigenvectors as matrix columns.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, k: usize) -> Vec<C64> {
        self.eigenvectors.column(k)
    }

    /// `V Λ V†`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let lambda = ComplexMatrix::from_real_diagonal(&self.eigenvalues);
        &(&self.eigenvectors * &lambda) * &self.eigenvectors.adjoint()
    }

    /// `V diag(g(λ)) V†`.
    pub fn map(&self, g: impl Fn(f64) -> C64) -> ComplexMatrix {
        let values: Vec<C64> = self.eigenvalues.iter().map(|&l| g(l)).collect();
        let diag = ComplexMatrix::from_diagonal(&values);
        &(&self.eigenvectors * &diag) * &self.eigenvectors.adjoint()
    }

    /// `max |V†V − I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = &self.eigenvectors.adjoint() * &self.eigenvectors;
        gram.max_abs_diff(&ComplexMatrix::identity(self.dim()))
    }
}

/// Hard cap on implicit-QR iterations for a `d × d` problem.
pub fn eig_iteration_cap(dim: usize) -> usize {
    200 * dim + 200
}

/// Eigen-decomposition of a Hermitian operator.
///
/// Eigenvalues are returned in ascending order. Each eigenvector is
/// phase-fixed so that its largest-modulus component (lowest index on ties)
/// is real and positive. Inside a degenerate cluster the solver's basis is
/// replaced by a Gram-Schmidt pass over the projected standard basis vectors
/// `P e_0, P e_1, ...`, taken in column order, so that the output depends
/// only on the cluster subspace.
pub fn eig_hermitian(a: &HermitianOperator) -> Result<EigenDecomposition> {
    eig_matrix(a.matrix())
}

fn eig_matrix(m: &ComplexMatrix) -> Result<EigenDecomposition> {
    let d = m.dim();
    let cap = eig_iteration_cap(d);
    let eig =
        SymmetricEigen::try_new(m.as_dmatrix().clone(), f64::EPSILON, cap).ok_or(Error::EigenNoConvergence(cap))?;

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors: Vec<Vec<C64>> =
        order.iter().map(|&k| eig.eigenvectors.column(k).iter().copied().collect()).collect();

    let scale = eigenvalues.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d && eigenvalues[end] - eigenvalues[end - 1] <= DEGENERACY_TOL * scale {
            end += 1;
        }
        if end - start > 1 {
            let canonical = canonical_cluster_basis(&vectors[start..end], d);
            vectors.splice(start..end, canonical);
        }
        start = end;
    }
    for v in vectors.iter_mut() {
        fix_phase(v);
    }

    let eigenvectors = ComplexMatrix::from_fn(d, |i, j| vectors[j][i]);
    Ok(EigenDecomposition { eigenvalues, eigenvectors })
}

fn fix_phase(v: &mut [C64]) {
    let mut best = 0;
    for (i, z) in v.iter().enumerate() {
        if z.norm() > v[best].norm() {
            best = i;
        }
    }
    let n = v[best].norm();
    if n > 0.0 {
        let phase = v[best].conj() / n;
        for z in v.iter_mut() {
            *z *= phase;
        }
    }
}

fn canonical_cluster_basis(cluster: &[Vec<C64>], d: usize) -> Vec<Vec<C64>> {
    const ACCEPT: f64 = 1e-3;
    let k = cluster.len();
    let mut out: Vec<Vec<C64>> = Vec::with_capacity(k);
    for i in 0..d {
        if out.len() == k {
            break;
        }
        // P e_i = Σ_c q_c conj(q_c[i])
        let mut v = vec![C64::new(0.0, 0.0); d];
        for q in cluster {
            let w = q[i].conj();
            for (vr, qr) in v.iter_mut().zip(q) {
                *vr += qr * w;
            }
        }
        // two Gram-Schmidt passes
        for _ in 0..2 {
            for u in &out {
                let overlap: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (vr, ur) in v.iter_mut().zip(u) {
                    *vr -= ur * overlap;
                }
            }
        }
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n > ACCEPT {
            out.push(v.into_iter().map(|z| z / n).collect());
        }
    }
    if out.len() < k {
        // unreachable for an orthonormal cluster: some e_i always projects with norm ≥ 1/√d
        return cluster.to_vec();
    }
    out
}

/// `tr(ρ A)`, or `⟨ψ|A|ψ⟩` for a pure state.
pub fn expectation(op: &HermitianOperator, state: &impl QuantumState) -> Result<f64> {
    if op.dim() != state.dim() {
        return Err(Error::DimensionMismatch(op.dim(), state.dim()));
    }
    let z = state.expect_matrix(op.matrix());
    let tol = 1e-10 * op.matrix().max_abs().max(1.0);
    if z.im.abs() > tol {
        return Err(Error::Numerical(format!("expectation has imaginary part {:e}", z.im)));
    }
    Ok(z.re)
}

/// `⟨A²⟩ − ⟨A⟩²`, evaluated as `⟨(A − ⟨A⟩)²⟩` and clamped at zero.
pub fn variance(op: &HermitianOperator, state: &impl QuantumState) -> Result<f64> {
    let mean = expectation(op, state)?;
    let centered = op.shifted(mean);
    let sq = centered.matrix() * centered.matrix();
    let v = state.expect_matrix(&sq).re;
    let tol = 1e-10 * op.matrix().max_abs().max(1.0).powi(2);
    if v < -tol {
        return Err(Error::Numerical(format!("negative variance {v:e}")));
    }
    Ok(v.max(0.0))
}

/// `a ⊗ b` (see the module docs for the index convention).
pub fn tensor_product(a: &DensityOperator, b: &DensityOperator) -> Result<DensityOperator> {
    let dim = a.dim() * b.dim();
    check_dim(dim, MAX_TENSOR_DIM)?;
    Ok(DensityOperator { matrix: hermitize(&a.matrix.kron(&b.matrix)) })
}

/// Tangent `ρ' = −i[ĥ, ρ]` of the unitary path generated by `ĥ`.
pub fn commutator_path_tangent(rho: &DensityOperator, h: &HermitianOperator) -> Result<HermitianOperator> {
    if rho.dim() != h.dim() {
        return Err(Error::DimensionMismatch(rho.dim(), h.dim()));
    }
    let c = h.matrix().commutator(rho.matrix()).scale(-i_unit());
    HermitianOperator::new(c)
}

/// `e^{−i X ĥ}` from a precomputed decomposition of `ĥ`.
pub fn unitary_from_eigen(eig: &EigenDecomposition, x: f64) -> ComplexMatrix {
    eig.map(|l| C64::from_polar(1.0, -x * l))
}
