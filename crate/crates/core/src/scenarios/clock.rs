//! Elapsed-time estimation.
//!
//! [`mandelstam_tamm`] treats a moving observable as a clock. The rest of the
//! module builds the two-label covariant time POVM for a doubly degenerate
//! spectrum, realized as a particle on a ring: levels `ε_n = n²`,
//! `n = 1…K`, each carrying the two momentum directions `σ = ±1`. Basis
//! index `2(n−1) + s` holds `|ε_n, σ⟩` with `s = 0` for `σ = +1`; the optional
//! nondegenerate `n = 0` level sits last and feeds the `γ = +1` channel only.
//!
//! The time states are `|t, γ⟩ = Σ_{ε,σ} e^{−itε} e^{if(ε)} U_σγ(ε) |ε, σ⟩`
//! on the grid `t_m = −π + 2πm/M` with weight `2π/M` and `C = 2π`.

use std::cell::Cell;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::estimate::{
    antipode_index, bound_audit, circular_order, deviation_moment, AuditVerdict, Dataset, EstimationReport, Estimator,
    LogLikelihood, ParametricModel, RunConfig, Sampler,
};
use crate::hilbert::{variance, ComplexMatrix, HermitianOperator, PureState, QuantumState, MAX_DIM};
use crate::optimize::grid_then_golden_max;
use crate::povm::{pairwise_sum, DiscretePOVM, PovmElement, P_FLOOR, SPECTRUM_TOL};
use crate::{Error, Result, C64};

/// Below this `|⟨[Â, Ĥ]⟩|` the clock is considered stationary.
pub const STATIONARY_TOL: f64 = 1e-12;
/// Allowed defect of `U†U = 1` and `det U = 1`.
pub const SU2_TOL: f64 = 1e-12;

/// Output of [`mandelstam_tamm`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClockReading {
    pub delta_a: f64,
    pub delta_h: f64,
    /// `d⟨Â⟩/dT = −i⟨[Â, Ĥ]⟩`.
    pub rate: f64,
    /// `ΔA / |d⟨Â⟩/dT|`.
    pub delta_t: f64,
    /// `ΔT · ΔH`, at least ½.
    pub product: f64,
}

/// Time uncertainty of the clock observable `a` under the Hamiltonian `h`.
pub fn mandelstam_tamm(
    a: &HermitianOperator,
    h: &HermitianOperator,
    state: &impl QuantumState,
) -> Result<ClockReading> {
    if a.dim() != h.dim() {
        return Err(Error::DimensionMismatch(a.dim(), h.dim()));
    }
    if a.dim() != state.dim() {
        return Err(Error::DimensionMismatch(a.dim(), state.dim()));
    }
    let comm = state.expect_matrix(&a.matrix().commutator(h.matrix()));
    if comm.norm() <= STATIONARY_TOL {
        return Err(Error::ClockDoesNotMove(comm.norm()));
    }
    let rate = (C64::new(0.0, -1.0) * comm).re;
    let delta_a = variance(a, state)?.sqrt();
    let delta_h = variance(h, state)?.sqrt();
    let delta_t = delta_a / rate.abs();
    Ok(ClockReading { delta_a, delta_h, rate, delta_t, product: delta_t * delta_h })
}

/// A 2×2 matrix `[[u₊₊, u₊₋], [u₋₊, u₋₋]]`, rows `σ`, columns `γ`.
pub type Mixing = [[C64; 2]; 2];

const IDENTITY_MIXING: Mixing = [[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]];

/// `[[cos η e^{iα}, −sin η e^{−iβ}], [sin η e^{iβ}, cos η e^{−iα}]]`, the
/// general element of SU(2).
pub fn su2(eta: f64, alpha: f64, beta: f64) -> Mixing {
    let (s, c) = eta.sin_cos();
    [[C64::from_polar(c, alpha), -C64::from_polar(s, -beta)], [C64::from_polar(s, beta), C64::from_polar(c, -alpha)]]
}

/// `(max |U†U − 1|, |det U − 1|)`.
pub fn su2_defect(u: &Mixing) -> (f64, f64) {
    let mut unitarity = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            let g: C64 = (0..2).map(|s| u[s][i].conj() * u[s][j]).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            unitarity = unitarity.max((g - target).norm());
        }
    }
    let det = u[0][0] * u[1][1] - u[0][1] * u[1][0];
    (unitarity, (det - 1.0).norm())
}

/// Doubly degenerate spectrum with its per-level gauge freedom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoSectorSpectrum {
    energies: Vec<f64>,
    single: Option<f64>,
    mixing: Vec<Mixing>,
    gauge: Vec<f64>,
    single_gauge: f64,
    period: f64,
}

impl TwoSectorSpectrum {
    /// Pairs the `σ = +1` and `σ = −1` level lists, which must coincide.
    /// `single` is an extra nondegenerate level. All energies must be
    /// multiples of `2π/period`.
    pub fn from_sectors(plus: &[f64], minus: &[f64], single: Option<f64>, period: f64) -> Result<Self> {
        if plus.len() != minus.len() || plus.iter().zip(minus).any(|(a, b)| (a - b).abs() > SPECTRUM_TOL) {
            return Err(Error::SectorMismatch);
        }
        if plus.is_empty() {
            return Err(Error::EmptyDimension);
        }
        let dim = 2 * plus.len() + usize::from(single.is_some());
        if dim > MAX_DIM {
            return Err(Error::DimensionCap { dim, cap: MAX_DIM });
        }
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidArgument(format!("period must be positive, got {period}")));
        }
        let mut all: Vec<f64> = plus.iter().copied().chain(single).collect();
        for &e in &all {
            let n = e * period / (2.0 * PI);
            if (n - n.round()).abs() > SPECTRUM_TOL {
                return Err(Error::NotPeriodic { value: e, period });
            }
        }
        all.sort_by(f64::total_cmp);
        if let Some(w) = all.windows(2).find(|w| w[1] - w[0] <= SPECTRUM_TOL) {
            return Err(Error::DegenerateSpectrum(w[0], w[1]));
        }
        Ok(Self {
            energies: plus.to_vec(),
            single,
            mixing: vec![IDENTITY_MIXING; plus.len()],
            gauge: vec![0.0; plus.len()],
            single_gauge: 0.0,
            period,
        })
    }

    /// Ring levels `ε_n = n²`, `n = 1…K`, period `2π`; `include_zero` adds
    /// the nondegenerate `n = 0` level.
    pub fn ring(k: usize, include_zero: bool) -> Result<Self> {
        let e: Vec<f64> = (1..=k).map(|n| (n * n) as f64).collect();
        Self::from_sectors(&e, &e, include_zero.then_some(0.0), 2.0 * PI)
    }

    /// Replaces the mixing matrices; each must be in SU(2).
    pub fn with_mixing(mut self, mixing: Vec<Mixing>) -> Result<Self> {
        if mixing.len() != self.energies.len() {
            return Err(Error::DimensionMismatch(self.energies.len(), mixing.len()));
        }
        for u in &mixing {
            let (unitarity, det) = su2_defect(u);
            if unitarity > SU2_TOL || det > SU2_TOL {
                return Err(Error::InvalidArgument(format!(
                    "mixing matrix not in SU(2): unitarity defect {unitarity:e}, det defect {det:e}"
                )));
            }
        }
        self.mixing = mixing;
        Ok(self)
    }

    /// Replaces the gauge `f(ε)` of the degenerate levels and of the single level.
    pub fn with_gauge(mut self, gauge: Vec<f64>, single_gauge: f64) -> Result<Self> {
        if gauge.len() != self.energies.len() {
            return Err(Error::DimensionMismatch(self.energies.len(), gauge.len()));
        }
        self.gauge = gauge;
        self.single_gauge = single_gauge;
        Ok(self)
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn single(&self) -> Option<f64> {
        self.single
    }

    pub fn mixing(&self) -> &[Mixing] {
        &self.mixing
    }

    pub fn gauge(&self) -> &[f64] {
        &self.gauge
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Hilbert-space dimension.
    pub fn dim(&self) -> usize {
        2 * self.energies.len() + usize::from(self.single.is_some())
    }

    /// Number of distinct energies.
    pub fn levels(&self) -> usize {
        self.energies.len() + usize::from(self.single.is_some())
    }

    /// Energy of level `l` (degenerate levels first, then the single one).
    pub fn level_energy(&self, l: usize) -> f64 {
        if l < self.energies.len() {
            self.energies[l]
        } else {
            self.single.expect("level index in range")
        }
    }

    /// Energy of every basis vector.
    pub fn basis_energies(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.energies.iter().flat_map(|&e| [e, e]).collect();
        out.extend(self.single);
        out
    }

    /// `Ĥ`, diagonal in the `|ε, σ⟩` basis.
    pub fn hamiltonian(&self) -> Result<HermitianOperator> {
        HermitianOperator::from_real_diagonal(&self.basis_energies())
    }

    /// `⟨ε, σ|t = 0, γ⟩ = e^{if(ε)} U_σγ(ε)` for every basis index.
    pub fn amplitudes(&self) -> Vec<[C64; 2]> {
        let mut out = Vec::with_capacity(self.dim());
        for (u, &f) in self.mixing.iter().zip(&self.gauge) {
            let phase = C64::from_polar(1.0, f);
            out.push([phase * u[0][0], phase * u[0][1]]);
            out.push([phase * u[1][0], phase * u[1][1]]);
        }
        if self.single.is_some() {
            out.push([C64::from_polar(1.0, self.single_gauge), C64::new(0.0, 0.0)]);
        }
        out
    }

    /// Integer multiples `ε · period / 2π`.
    fn integer_levels(&self) -> Vec<i64> {
        (0..self.levels()).map(|l| (self.level_energy(l) * self.period / (2.0 * PI)).round() as i64).collect()
    }

    /// `max |ε − ε'|` in units of `2π/period`.
    pub fn span(&self) -> i64 {
        let n = self.integer_levels();
        n.iter().max().unwrap() - n.iter().min().unwrap()
    }
}

/// Two-label covariant time POVM on a uniform grid over one period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoSectorTimePovm {
    spectrum: TwoSectorSpectrum,
    grid: Vec<f64>,
    amplitudes: Vec<[C64; 2]>,
}

/// Channel amplitudes `c_γ(ε) = Σ_σ e^{−if(ε)} U*_σγ(ε) ⟨ε, σ|ψ⟩`, one
/// `[c₊, c₋]` pair per level.
pub type ChannelCoefficients = Vec<[C64; 2]>;

/// Builds the time POVM. The grid sum cancels every cross term between
/// distinct energies exactly when `M > max|ε − ε'|` (in units of
/// `2π/period`), which is the accepted minimum.
pub fn two_sector_time_povm(spectrum: TwoSectorSpectrum, m: usize) -> Result<TwoSectorTimePovm> {
    let minimum = spectrum.span() as usize + 1;
    if m < minimum {
        return Err(Error::GridTooCoarse { grid: m, minimum });
    }
    let p = spectrum.period;
    let grid = (0..m).map(|k| -0.5 * p + k as f64 * p / m as f64).collect();
    let amplitudes = spectrum.amplitudes();
    Ok(TwoSectorTimePovm { spectrum, grid, amplitudes })
}

impl TwoSectorTimePovm {
    pub fn spectrum(&self) -> &TwoSectorSpectrum {
        &self.spectrum
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// `C`, equal to the period.
    pub fn normalizer(&self) -> f64 {
        self.spectrum.period
    }

    /// Quadrature weight `C/M`.
    pub fn weight(&self) -> f64 {
        self.spectrum.period / self.grid.len() as f64
    }

    /// Number of outcomes `2M`; outcome `m + γ·M` has `γ = +1` for the first block.
    pub fn len(&self) -> usize {
        2 * self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// `|t, γ⟩` with `gamma ∈ {0, 1}` standing for `γ = +1, −1`.
    pub fn state_vector(&self, t: f64, gamma: usize) -> Vec<C64> {
        self.spectrum
            .basis_energies()
            .iter()
            .zip(&self.amplitudes)
            .map(|(&e, a)| a[gamma] * C64::from_polar(1.0, -t * e))
            .collect()
    }

    /// `max |Σ_{m,γ} (w/C) |t_m,γ⟩⟨t_m,γ| − 1|`.
    pub fn completeness_residual(&self) -> f64 {
        self.to_discrete().weighted_sum().max_abs_diff(&ComplexMatrix::identity(self.spectrum.dim()))
    }

    /// `max_{m,γ} ‖e^{−iTĤ}|t_m,γ⟩ − |t_{m+k},γ⟩‖` for `T = k·w`, indices
    /// taken modulo `M`.
    pub fn displacement_residual(&self, steps: i64) -> f64 {
        let m = self.grid.len() as i64;
        let shift = steps as f64 * self.weight();
        let energies = self.spectrum.basis_energies();
        let mut worst = 0.0f64;
        for (k, &t) in self.grid.iter().enumerate() {
            let target = (k as i64 + steps).rem_euclid(m) as usize;
            for gamma in 0..2 {
                let moved: Vec<C64> = self
                    .state_vector(t, gamma)
                    .iter()
                    .zip(&energies)
                    .map(|(v, &e)| v * C64::from_polar(1.0, -shift * e))
                    .collect();
                let there = self.state_vector(self.grid[target], gamma);
                let gap = moved.iter().zip(&there).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
                worst = worst.max(gap);
            }
        }
        worst
    }

    /// The POVM as `2M` rank-one elements `|t_m, γ⟩/√C` with weight `w`.
    pub fn to_discrete(&self) -> DiscretePOVM {
        let s = 1.0 / self.normalizer().sqrt();
        let mut elements = Vec::with_capacity(self.len());
        let mut labels = Vec::with_capacity(self.len());
        for gamma in 0..2 {
            for &t in &self.grid {
                elements.push(PovmElement::RankOne(self.state_vector(t, gamma).into_iter().map(|z| z * s).collect()));
                labels.push(t);
            }
        }
        DiscretePOVM::new(elements, labels, vec![self.weight(); self.len()]).expect("consistent shapes")
    }

    pub fn channel_coefficients(&self, psi: &PureState) -> Result<ChannelCoefficients> {
        if psi.dim() != self.spectrum.dim() {
            return Err(Error::DimensionMismatch(self.spectrum.dim(), psi.dim()));
        }
        let mut out = vec![[C64::new(0.0, 0.0); 2]; self.spectrum.levels()];
        for (i, (a, v)) in self.amplitudes.iter().zip(psi.amplitudes()).enumerate() {
            let level = if i < 2 * self.spectrum.energies.len() { i / 2 } else { self.spectrum.energies.len() };
            for gamma in 0..2 {
                out[level][gamma] += a[gamma].conj() * v;
            }
        }
        Ok(out)
    }

    /// `ψ(t, γ) = C^{−1/2} Σ_ε e^{itε} c_γ(ε)`.
    pub fn wavefunction(&self, coefficients: &[[C64; 2]], t: f64, gamma: usize) -> C64 {
        let s: C64 = coefficients
            .iter()
            .enumerate()
            .map(|(l, c)| c[gamma] * C64::from_polar(1.0, t * self.spectrum.level_energy(l)))
            .sum();
        s / self.normalizer().sqrt()
    }

    /// `p(t_m, γ | T) = w |ψ(t_m − T, γ)|²`, `γ = +1` block first.
    pub fn distribution(&self, coefficients: &[[C64; 2]], x: f64) -> Vec<f64> {
        let w = self.weight();
        (0..2)
            .flat_map(|gamma| self.grid.iter().map(move |&t| (gamma, t)))
            .map(|(gamma, t)| w * self.wavefunction(coefficients, t - x, gamma).norm_sqr())
            .collect()
    }

    /// Total probability of each channel, `[P(γ = +1), P(γ = −1)]`, at `T`.
    pub fn gamma_marginal(&self, coefficients: &[[C64; 2]], x: f64) -> [f64; 2] {
        let p = self.distribution(coefficients, x);
        let m = self.grid.len();
        [pairwise_sum(&p[..m]), pairwise_sum(&p[m..])]
    }

    /// Fisher information of the outcome law at `T = x` from the exact time
    /// derivative of the wavefunction.
    pub fn analytic_fisher(&self, coefficients: &[[C64; 2]], x: f64) -> f64 {
        FisherKernel::new(self, coefficients, x).fisher(coefficients)
    }
}

/// Precomputed `e^{i t_m ε_l}` for a fast Fisher objective.
struct FisherKernel {
    phases: Vec<Vec<C64>>,
    energies: Vec<f64>,
    weight: f64,
    scale: f64,
}

impl FisherKernel {
    fn new(povm: &TwoSectorTimePovm, coefficients: &[[C64; 2]], x: f64) -> Self {
        let energies: Vec<f64> = (0..coefficients.len()).map(|l| povm.spectrum.level_energy(l)).collect();
        let phases =
            povm.grid.iter().map(|&t| energies.iter().map(|&e| C64::from_polar(1.0, (t - x) * e)).collect()).collect();
        Self { phases, energies, weight: povm.weight(), scale: 1.0 / povm.normalizer() }
    }

    /// `Σ_{m,γ} w (∂_T p)²/p`, with the node limit `4|ψ'|²` below the floor.
    fn fisher(&self, c: &[[C64; 2]]) -> f64 {
        let mut terms = Vec::with_capacity(2 * self.phases.len());
        for row in &self.phases {
            for gamma in 0..2 {
                let mut psi = C64::new(0.0, 0.0);
                let mut dpsi = C64::new(0.0, 0.0);
                for (l, (z, cl)) in row.iter().zip(c).enumerate() {
                    let v = z * cl[gamma];
                    psi += v;
                    dpsi += v * C64::new(0.0, self.energies[l]);
                }
                let p = self.scale * psi.norm_sqr();
                if p < P_FLOOR {
                    terms.push(self.weight * 4.0 * self.scale * dpsi.norm_sqr());
                } else {
                    let dp = 2.0 * self.scale * (psi.conj() * dpsi).re;
                    terms.push(self.weight * dp * dp / p);
                }
            }
        }
        pairwise_sum(&terms)
    }
}

/// `max_u |P(⟨Ĥ⟩ + u) − P(⟨Ĥ⟩ − u)|` over the total (σ-summed) energy law;
/// a level without a mirror partner counts against probability zero.
pub fn energy_symmetry_residual(spectrum: &TwoSectorSpectrum, psi: &PureState) -> Result<f64> {
    let probs = level_probabilities(spectrum, psi)?;
    let mean: f64 = probs.iter().enumerate().map(|(l, p)| p * spectrum.level_energy(l)).sum();
    let mut worst = 0.0f64;
    for (l, &p) in probs.iter().enumerate() {
        let mirror = 2.0 * mean - spectrum.level_energy(l);
        let partner = (0..probs.len())
            .find(|&j| (spectrum.level_energy(j) - mirror).abs() <= SPECTRUM_TOL)
            .map_or(0.0, |j| probs[j]);
        worst = worst.max((p - partner).abs());
    }
    Ok(worst)
}

/// Total probability of each level.
pub fn level_probabilities(spectrum: &TwoSectorSpectrum, psi: &PureState) -> Result<Vec<f64>> {
    if psi.dim() != spectrum.dim() {
        return Err(Error::DimensionMismatch(spectrum.dim(), psi.dim()));
    }
    let a = psi.amplitudes();
    let mut out: Vec<f64> =
        (0..spectrum.energies.len()).map(|l| a[2 * l].norm_sqr() + a[2 * l + 1].norm_sqr()).collect();
    if spectrum.single.is_some() {
        out.push(a[a.len() - 1].norm_sqr());
    }
    Ok(out)
}

/// A ring state `Σ √w_n (a_n|ε_n,+⟩ + b_n|ε_n,−⟩)/‖(a_n, b_n)‖`.
///
/// Each entry is `(n, w_n, a_n, b_n)` with `1 ≤ n ≤ K`.
pub fn ring_state(spectrum: &TwoSectorSpectrum, levels: &[(usize, f64, C64, C64)]) -> Result<PureState> {
    let k = spectrum.energies.len();
    let mut v = vec![C64::new(0.0, 0.0); spectrum.dim()];
    for &(n, w, a, b) in levels {
        if n == 0 || n > k {
            return Err(Error::InvalidArgument(format!("ring level {n} outside 1..={k}")));
        }
        let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
        if !(w >= 0.0) || norm == 0.0 {
            return Err(Error::InvalidArgument(format!("level {n} needs w ≥ 0 and a nonzero sector vector")));
        }
        v[2 * (n - 1)] += a * (w.sqrt() / norm);
        v[2 * (n - 1) + 1] += b * (w.sqrt() / norm);
    }
    PureState::normalized(v)
}

/// Levels `n = 1, 5, 7` (`ε = 1, 25, 49`) with weights `0.3, 0.4, 0.3`:
/// symmetric about `⟨Ĥ⟩ = 25`, with different complex sector mixtures.
pub fn symmetric_ring_fiducial(spectrum: &TwoSectorSpectrum) -> Result<PureState> {
    ring_state(
        spectrum,
        &[
            (1, 0.3, C64::new(1.0, 0.0), C64::new(0.0, 1.0)),
            (5, 0.4, C64::new(0.6, 0.0), C64::from_polar(0.8, 0.7)),
            (7, 0.3, C64::from_polar(1.0, 0.3), C64::new(0.5, 0.0)),
        ],
    )
}

/// Levels `n = 1, 2, 3` (`ε = 1, 4, 9`) with weights `0.5, 0.3, 0.2`.
pub fn asymmetric_ring_fiducial(spectrum: &TwoSectorSpectrum) -> Result<PureState> {
    ring_state(
        spectrum,
        &[
            (1, 0.5, C64::new(1.0, 0.0), C64::new(0.4, 0.0)),
            (2, 0.3, C64::new(0.0, 1.0), C64::new(1.0, 0.0)),
            (3, 0.2, C64::new(0.3, 0.0), C64::from_polar(1.0, -1.1)),
        ],
    )
}

/// Options for [`search_mixing`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Random starting points tried after the aligned seed.
    pub restarts: usize,
    /// Maximum coordinate sweeps per start.
    pub sweeps: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { restarts: 8, sweeps: 12, seed: 0 }
    }
}

/// Result of [`search_mixing`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// `F/QFI` with the aligned seed (all of each level in the `γ = +1` channel).
    pub seed_ratio: f64,
    /// Best `F/QFI` found.
    pub best_ratio: f64,
    /// Best `F/QFI` from each start, seed first.
    pub start_ratios: Vec<f64>,
    pub evaluations: usize,
    /// The spectrum carrying the best `(U, f)`.
    pub spectrum: TwoSectorSpectrum,
}

/// Per occupied level: `(η, α, β, f)` for a degenerate level, `f` alone for
/// the single one.
#[derive(Clone, Debug)]
struct Params {
    occupied: Vec<usize>,
    values: Vec<f64>,
}

impl Params {
    fn apply(&self, base: &TwoSectorSpectrum) -> TwoSectorSpectrum {
        let mut s = base.clone();
        let mut i = 0;
        for &l in &self.occupied {
            if l < s.energies.len() {
                s.mixing[l] = su2(self.values[i], self.values[i + 1], self.values[i + 2]);
                s.gauge[l] = self.values[i + 3];
                i += 4;
            } else {
                s.single_gauge = self.values[i];
                i += 1;
            }
        }
        s
    }
}

/// Maximizes `F/QFI` of the time POVM over the gauge `f(ε)` and the SU(2)
/// mixing `U(ε)` of every occupied level.
///
/// Starts from the aligned seed `U = [[a₁, −a₂*], [a₂, a₁*]]/s`,
/// `(a₁, a₂) = (⟨ε,+|ψ⟩, ⟨ε,−|ψ⟩)`, `f = 0`, which sends each level entirely
/// into `γ = +1` with a real positive amplitude; then tries random starts.
/// Each start runs cyclic coordinate ascent (coarse scan plus golden
/// section per coordinate) until a sweep gains less than `1e-12`.
pub fn search_mixing(povm: &TwoSectorTimePovm, psi: &PureState, config: &SearchConfig) -> Result<SearchResult> {
    let spectrum = &povm.spectrum;
    let qfi = 4.0 * variance(&spectrum.hamiltonian()?, psi)?;
    if qfi <= 0.0 {
        return Err(Error::InvalidArgument("fiducial is stationary; F/QFI undefined".into()));
    }
    let probs = level_probabilities(spectrum, psi)?;
    let occupied: Vec<usize> = (0..probs.len()).filter(|&l| probs[l] > 1e-15).collect();
    let a = psi.amplitudes();

    let mut seed_values = Vec::new();
    for &l in &occupied {
        if l < spectrum.energies.len() {
            let (a1, a2) = (a[2 * l], a[2 * l + 1]);
            seed_values.extend([a2.norm().atan2(a1.norm()), a1.arg(), a2.arg(), 0.0]);
        } else {
            seed_values.push(0.0);
        }
    }
    let kernel = FisherKernel::new(povm, &vec![[C64::new(0.0, 0.0); 2]; spectrum.levels()], 0.0);
    let evaluations = Cell::new(0usize);
    let objective = |values: &[f64]| -> f64 {
        evaluations.set(evaluations.get() + 1);
        let params = Params { occupied: occupied.clone(), values: values.to_vec() };
        let s = params.apply(spectrum);
        let trial = TwoSectorTimePovm { amplitudes: s.amplitudes(), spectrum: s, grid: Vec::new() };
        let c = trial.channel_coefficients(psi).expect("dimensions checked");
        kernel.fisher(&c) / qfi
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut starts = vec![seed_values.clone()];
    for _ in 0..config.restarts {
        starts.push((0..seed_values.len()).map(|_| rng.random::<f64>() * 2.0 * PI).collect());
    }
    let mut start_ratios = Vec::with_capacity(starts.len());
    let mut best = (f64::NEG_INFINITY, seed_values.clone());
    let mut seed_ratio = f64::NAN;
    for (s, mut values) in starts.into_iter().enumerate() {
        let mut current = objective(&values);
        if s == 0 {
            seed_ratio = current;
        }
        for _ in 0..config.sweeps {
            let before = current;
            for i in 0..values.len() {
                let centre = values[i];
                let line = |v: f64| {
                    let mut trial = values.clone();
                    trial[i] = v;
                    objective(&trial)
                };
                let (v, fv, _) = grid_then_golden_max(line, centre - PI, centre + PI, 13, 1e-10);
                if fv > current {
                    values[i] = v;
                    current = fv;
                }
            }
            if current - before < 1e-12 {
                break;
            }
        }
        start_ratios.push(current);
        if current > best.0 {
            best = (current, values);
        }
    }
    let params = Params { occupied, values: best.1 };
    Ok(SearchResult {
        seed_ratio,
        best_ratio: best.0,
        start_ratios,
        evaluations: evaluations.get(),
        spectrum: params.apply(spectrum),
    })
}

/// The time POVM measured on `e^{−iTĤ}|ψ⟩`, as an estimation model named `"time"`.
pub struct TimeModel {
    povm: TwoSectorTimePovm,
    fiducial: PureState,
    coefficients: ChannelCoefficients,
    hamiltonian: HermitianOperator,
    labels: Vec<f64>,
}

impl TimeModel {
    pub fn new(povm: TwoSectorTimePovm, fiducial: PureState) -> Result<Self> {
        let coefficients = povm.channel_coefficients(&fiducial)?;
        let hamiltonian = povm.spectrum.hamiltonian()?;
        let labels = povm.grid.iter().chain(&povm.grid).copied().collect();
        Ok(Self { povm, fiducial, coefficients, hamiltonian, labels })
    }

    pub fn povm(&self) -> &TwoSectorTimePovm {
        &self.povm
    }

    pub fn fiducial(&self) -> &PureState {
        &self.fiducial
    }

    pub fn coefficients(&self) -> &[[C64; 2]] {
        &self.coefficients
    }

    pub fn distribution(&self, x: f64) -> Vec<f64> {
        self.povm.distribution(&self.coefficients, x)
    }
}

impl ParametricModel for TimeModel {
    fn name(&self) -> &str {
        "time"
    }

    fn period(&self) -> Option<f64> {
        Some(self.povm.normalizer())
    }

    fn sampler(&self, x: f64) -> Result<Sampler> {
        self.coupled_sampler(x, x)
    }

    fn coupled_sampler(&self, x: f64, anchor: f64) -> Result<Sampler> {
        // each channel is its own circle, entered opposite the expected reading
        let m = self.povm.grid.len();
        let start = antipode_index(&self.povm.grid, self.povm.normalizer(), anchor + self.outcome_bias()?);
        let ring = circular_order(m, start);
        let order = ring.iter().copied().chain(ring.iter().map(|k| k + m)).collect();
        Sampler::discrete_in_order(self.labels.clone(), &self.distribution(x), order)
    }

    fn log_likelihood<'a>(&'a self, data: &'a Dataset) -> Result<LogLikelihood<'a>> {
        if data.indices.is_none() {
            return Err(Error::InvalidArgument("dataset has no outcome indices".into()));
        }
        let counts = data.counts();
        let m = self.povm.grid.len();
        Ok(Box::new(move |x| {
            counts
                .iter()
                .map(|&(k, c)| {
                    let t = self.povm.grid[k % m];
                    let p = self.povm.weight() * self.povm.wavefunction(&self.coefficients, t - x, k / m).norm_sqr();
                    c as f64 * p.ln()
                })
                .sum()
        }))
    }

    fn fisher(&self, x: f64) -> Result<f64> {
        Ok(self.povm.analytic_fisher(&self.coefficients, x))
    }

    fn qfi(&self) -> Result<f64> {
        Ok(4.0 * self.generator_variance()?)
    }

    fn generator_variance(&self) -> Result<f64> {
        variance(&self.hamiltonian, &self.fiducial)
    }

    fn outcome_bias(&self) -> Result<f64> {
        let p = self.distribution(0.0);
        let (mut re, mut im) = (Vec::with_capacity(p.len()), Vec::with_capacity(p.len()));
        let k = 2.0 * PI / self.povm.normalizer();
        for (w, &t) in p.iter().zip(&self.labels) {
            re.push(w * (k * t).cos());
            im.push(w * (k * t).sin());
        }
        Ok(pairwise_sum(&im).atan2(pairwise_sum(&re)) / k)
    }

    fn mle_window(&self, _data: &Dataset) -> (f64, f64) {
        let p = self.povm.normalizer();
        (-0.5 * p, 0.5 * p)
    }
}

/// Exact quantities emitted next to a time run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSidecar {
    pub k: usize,
    pub grid: usize,
    pub completeness_residual: f64,
    pub displacement_residual: f64,
    pub energy_symmetry_residual: f64,
    pub gamma_marginal: [f64; 2],
    pub fisher: f64,
    pub qfi: f64,
    pub search: Option<SearchResult>,
}

/// Monte-Carlo run of the ring scenario. With `search`, the `(U, f)` search
/// runs first and the measurement uses its best mixing.
pub fn time_mc_scenario(
    k: usize,
    m: usize,
    asymmetric: bool,
    search: Option<&SearchConfig>,
    estimator: &Estimator,
    config: &RunConfig,
) -> Result<(EstimationReport, AuditVerdict, TimeSidecar)> {
    let base = TwoSectorSpectrum::ring(k, false)?;
    let psi = if asymmetric { asymmetric_ring_fiducial(&base)? } else { symmetric_ring_fiducial(&base)? };
    let mut povm = two_sector_time_povm(base.clone(), m)?;
    let mut found = None;
    if let Some(cfg) = search {
        let result = search_mixing(&povm, &psi, cfg)?;
        povm = two_sector_time_povm(result.spectrum.clone(), m)?;
        found = Some(result);
    }
    let model = TimeModel::new(povm, psi.clone())?;
    let mut report = deviation_moment(&model, estimator, config)?;
    let sidecar = TimeSidecar {
        k,
        grid: m,
        completeness_residual: model.povm.completeness_residual(),
        displacement_residual: model.povm.displacement_residual(1),
        energy_symmetry_residual: energy_symmetry_residual(&base, &psi)?,
        gamma_marginal: model.povm.gamma_marginal(&model.coefficients, config.x),
        fisher: report.fisher,
        qfi: report.qfi,
        search: found,
    };
    if report.qfi > 0.0 {
        report.extras.insert("efficiency".into(), report.fisher / report.qfi);
    }
    report.extras.insert("energy_symmetry_residual".into(), sidecar.energy_symmetry_residual);
    let verdict = bound_audit(&report);
    Ok((report, verdict, sidecar))
}
