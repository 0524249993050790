//! Monte-Carlo measurement simulation, estimators and the deviation statistic.
//!
//! For an estimator `X_est` the deviation
//!
//! ```text
//! δX = X_est / |d⟨X_est⟩/dX| − X
//! ```
//!
//! removes units and first-order bias; its second moment over `N`-sample
//! datasets obeys `⟨(δX)²⟩ ≥ 1/(N F) ≥ 1/(N QFI)`.
//!
//! Trial `t` draws its data from `ChaCha8Rng::seed_from_u64(seed ^ splitmix64(t))`
//! so results do not depend on thread scheduling. The runs at `X ± step` used
//! for the slope reuse the same per-trial seeds.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hilbert::PureState;
use crate::metric::{qfi_unitary, StateFamily};
use crate::optimize::grid_then_golden_max;
use crate::povm::{
    classical_fisher, default_fisher_step, fisher_from_samples, outcome_distribution, pairwise_sum, CovariantPOVM,
    DiscretePOVM,
};
use crate::{Error, Result, C64};

/// Coarse grid size of the maximum-likelihood search.
pub const MLE_GRID: usize = 64;
/// Golden-section refinement stops at this fraction of the window.
pub const MLE_REL_TOL: f64 = 1e-8;
/// Slopes below this make the deviation statistic divergent.
pub const SLOPE_FLOOR: f64 = 1e-6;
/// Smallest number of trials accepted by [`deviation_moment`].
pub const MIN_TRIALS: usize = 100;

/// Sebastiano Vigna's splitmix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for trial `t` of a run seeded with `seed`.
pub fn trial_seed(seed: u64, t: u64) -> u64 {
    seed ^ splitmix64(t)
}

/// `a` reduced to `(−P/2, P/2]`.
pub fn wrap_period(a: f64, period: f64) -> f64 {
    let r = a.rem_euclid(period);
    if r > 0.5 * period {
        r - period
    } else {
        r
    }
}

/// `N` measurement results at a known parameter value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub outcomes: Vec<f64>,
    /// Outcome indices for discrete POVMs.
    pub indices: Option<Vec<usize>>,
    pub true_parameter: f64,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// `(index, count)` pairs in increasing index order.
    pub fn counts(&self) -> Vec<(usize, usize)> {
        let mut map = BTreeMap::new();
        for &i in self.indices.as_deref().unwrap_or(&[]) {
            *map.entry(i).or_insert(0usize) += 1;
        }
        map.into_iter().collect()
    }

    /// Every label multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        Self { outcomes: self.outcomes.iter().map(|x| x * factor).collect(), ..self.clone() }
    }
}

/// Outcome law at one parameter value, ready for repeated sampling.
#[derive(Clone, Debug)]
pub enum Sampler {
    /// Inverse CDF over labelled outcomes, accumulated along `order`.
    Discrete {
        labels: Vec<f64>,
        order: Vec<usize>,
        cdf: Vec<f64>,
    },
    Gaussian {
        mean: f64,
        sd: f64,
    },
}

impl Sampler {
    pub fn discrete(labels: Vec<f64>, probabilities: &[f64]) -> Result<Self> {
        let order = (0..labels.len()).collect();
        Self::discrete_in_order(labels, probabilities, order)
    }

    /// Same law, with the CDF accumulated along `order` (a permutation of the
    /// outcome indices). Draws at nearby parameters share random numbers, and
    /// they stay coupled only while no mass moves across the start of the
    /// accumulation, so periodic models start it where the law is thinnest.
    pub fn discrete_in_order(labels: Vec<f64>, probabilities: &[f64], order: Vec<usize>) -> Result<Self> {
        if labels.len() != probabilities.len() || labels.is_empty() {
            return Err(Error::DimensionMismatch(labels.len(), probabilities.len()));
        }
        if order.len() != labels.len() {
            return Err(Error::DimensionMismatch(labels.len(), order.len()));
        }
        let mut seen = vec![false; order.len()];
        for &k in &order {
            if k >= seen.len() || std::mem::replace(&mut seen[k], true) {
                return Err(Error::InvalidArgument(format!("sampling order is not a permutation (index {k})")));
            }
        }
        let mut acc = 0.0;
        let cdf: Vec<f64> = order
            .iter()
            .map(|&k| {
                acc += probabilities[k].max(0.0);
                acc
            })
            .collect();
        if !(acc > 0.0) {
            return Err(Error::AllBelowFloor);
        }
        Ok(Sampler::Discrete { labels, order, cdf })
    }

    /// `n` i.i.d. draws; `x` is recorded as the true parameter.
    pub fn draw(&self, n: usize, seed: u64, x: f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            Sampler::Discrete { labels, order, cdf } => {
                let total = *cdf.last().expect("non-empty");
                let mut indices = Vec::with_capacity(n);
                for _ in 0..n {
                    let u: f64 = rng.random::<f64>() * total;
                    let j = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                    indices.push(order[j]);
                }
                let outcomes = indices.iter().map(|&k| labels[k]).collect();
                Dataset { outcomes, indices: Some(indices), true_parameter: x, seed }
            }
            Sampler::Gaussian { mean, sd } => {
                let normal = rand_distr::Normal::new(*mean, *sd).expect("finite positive sd");
                let outcomes = (0..n).map(|_| rng.sample(normal)).collect();
                Dataset { outcomes, indices: None, true_parameter: x, seed }
            }
        }
    }
}

/// `start, start + 1, …` around a circle of `m` indices.
pub fn circular_order(m: usize, start: usize) -> Vec<usize> {
    (0..m).map(|j| (start + j) % m).collect()
}

/// Index of the grid point opposite `centre` on a uniform periodic grid.
pub(crate) fn antipode_index(grid: &[f64], period: f64, centre: f64) -> usize {
    let m = grid.len();
    let offset = (centre + 0.5 * period - grid[0]).rem_euclid(period);
    (offset / (period / m as f64)).round() as usize % m
}

/// Log-likelihood `X ↦ Σ_i log p(ξ_i|X)` prepared for one dataset.
pub type LogLikelihood<'a> = Box<dyn Fn(f64) -> f64 + Send + Sync + 'a>;

/// A parametrized outcome law with its information quantities.
pub trait ParametricModel: Sync {
    fn name(&self) -> &str;

    /// Period of the parameter, if it is an angle-like variable.
    fn period(&self) -> Option<f64>;

    /// Typical parameter range; sets the default slope step.
    fn parameter_window(&self) -> f64 {
        self.period().unwrap_or(1.0)
    }

    fn sampler(&self, x: f64) -> Result<Sampler>;

    /// Law at `x`, sampled so that draws share random numbers with those at
    /// other points anchored at the same `anchor`.
    fn coupled_sampler(&self, x: f64, anchor: f64) -> Result<Sampler> {
        let _ = anchor;
        self.sampler(x)
    }

    fn log_likelihood<'a>(&'a self, data: &'a Dataset) -> Result<LogLikelihood<'a>>;

    /// Classical Fisher information of the outcome law at `x`.
    fn fisher(&self, x: f64) -> Result<f64>;

    fn qfi(&self) -> Result<f64>;

    /// `var(ĥ)` of the generator in the fiducial.
    fn generator_variance(&self) -> Result<f64>;

    /// `⟨x⟩₀`, the outcome mean at `X = 0` (circular mean when periodic).
    fn outcome_bias(&self) -> Result<f64>;

    /// Default MLE search interval for a dataset.
    fn mle_window(&self, data: &Dataset) -> (f64, f64);
}

fn circular_mean(labels: &[f64], weights: Option<&[f64]>, period: f64) -> f64 {
    let k = 2.0 * PI / period;
    let mut re = Vec::with_capacity(labels.len());
    let mut im = Vec::with_capacity(labels.len());
    for (i, &x) in labels.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        re.push(w * (k * x).cos());
        im.push(w * (k * x).sin());
    }
    pairwise_sum(&im).atan2(pairwise_sum(&re)) / k
}

fn plain_mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

/// Arbitrary POVM measured on a unitary family.
pub struct PovmModel {
    name: String,
    povm: DiscretePOVM,
    family: StateFamily,
    period: Option<f64>,
}

impl PovmModel {
    pub fn new(name: impl Into<String>, povm: DiscretePOVM, family: StateFamily, period: Option<f64>) -> Result<Self> {
        if povm.dim() != family.dim() {
            return Err(Error::DimensionMismatch(povm.dim(), family.dim()));
        }
        Ok(Self { name: name.into(), povm, family, period })
    }

    pub fn distribution(&self, x: f64) -> Result<Vec<f64>> {
        outcome_distribution(&self.povm, &self.family.state_at(x))
    }
}

impl ParametricModel for PovmModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn period(&self) -> Option<f64> {
        self.period
    }

    fn sampler(&self, x: f64) -> Result<Sampler> {
        Sampler::discrete(self.povm.labels().to_vec(), &self.distribution(x)?)
    }

    fn log_likelihood<'a>(&'a self, data: &'a Dataset) -> Result<LogLikelihood<'a>> {
        if data.indices.is_none() {
            return Err(Error::InvalidArgument("dataset has no outcome indices".into()));
        }
        let counts = data.counts();
        Ok(Box::new(move |x| match self.distribution(x) {
            Ok(p) => counts.iter().map(|&(k, c)| c as f64 * p[k].ln()).sum(),
            Err(_) => f64::NEG_INFINITY,
        }))
    }

    fn fisher(&self, x: f64) -> Result<f64> {
        classical_fisher(&self.povm, &self.family, x, default_fisher_step(self.period))
    }

    fn qfi(&self) -> Result<f64> {
        qfi_unitary(&self.family)
    }

    fn generator_variance(&self) -> Result<f64> {
        self.family.generator_variance()
    }

    fn outcome_bias(&self) -> Result<f64> {
        let p = self.distribution(0.0)?;
        Ok(match self.period {
            Some(period) => circular_mean(self.povm.labels(), Some(&p), period),
            None => pairwise_sum(&p.iter().zip(self.povm.labels()).map(|(p, x)| p * x).collect::<Vec<_>>()),
        })
    }

    fn mle_window(&self, data: &Dataset) -> (f64, f64) {
        match self.period {
            Some(p) => (-0.5 * p, 0.5 * p),
            None => {
                let lo = data.outcomes.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = data.outcomes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo - 1.0, hi + 1.0)
            }
        }
    }
}

/// Covariant POVM measured on `e^{−iXĥ}|ψ⟩`, with `ĥ` the POVM's own
/// spectrum. The likelihood is evaluated directly from the `x` wavefunction,
/// `p_m(X) = w |ψ(x_m − X)|²`.
pub struct CovariantModel {
    name: String,
    povm: CovariantPOVM,
    fiducial: PureState,
    coefficients: Vec<C64>,
    levels: Option<(i64, Vec<usize>)>,
    family: StateFamily,
}

impl CovariantModel {
    pub fn new(name: impl Into<String>, povm: CovariantPOVM, fiducial: PureState) -> Result<Self> {
        let coefficients = povm.coefficients(&fiducial)?;
        let family = StateFamily::new(fiducial.clone(), povm.spectrum().operator()?)?;
        // integer levels let e^{−iXh} be built by repeated multiplication
        let levels = povm.spectrum().integer_levels().map(|n| {
            let lo = *n.iter().min().unwrap();
            (lo, n.iter().map(|&v| (v - lo) as usize).collect())
        });
        Ok(Self { name: name.into(), povm, fiducial, coefficients, levels, family })
    }

    pub fn povm(&self) -> &CovariantPOVM {
        &self.povm
    }

    pub fn fiducial(&self) -> &PureState {
        &self.fiducial
    }

    pub fn family(&self) -> &StateFamily {
        &self.family
    }

    pub fn distribution(&self, x: f64) -> Vec<f64> {
        self.povm.shifted_distribution(&self.coefficients, x)
    }

    /// `e^{−iX h_k}` for every eigenvalue.
    fn phases(&self, x: f64) -> Vec<C64> {
        match (&self.levels, self.povm.spectrum().period()) {
            (Some((lo, offsets)), Some(period)) => {
                let span = offsets.iter().copied().max().unwrap_or(0);
                let step = C64::from_polar(1.0, -x * 2.0 * PI / period);
                let mut table = Vec::with_capacity(span + 1);
                let mut z = C64::from_polar(1.0, -x * 2.0 * PI / period * *lo as f64);
                for _ in 0..=span {
                    table.push(z);
                    z *= step;
                }
                offsets.iter().map(|&o| table[o]).collect()
            }
            _ => self.povm.spectrum().eigenvalues().iter().map(|&h| C64::from_polar(1.0, -x * h)).collect(),
        }
    }
}

impl ParametricModel for CovariantModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn period(&self) -> Option<f64> {
        self.povm.period()
    }

    fn parameter_window(&self) -> f64 {
        self.povm.normalizer()
    }

    fn sampler(&self, x: f64) -> Result<Sampler> {
        self.coupled_sampler(x, x)
    }

    fn coupled_sampler(&self, x: f64, anchor: f64) -> Result<Sampler> {
        let grid = self.povm.grid().to_vec();
        let p = self.distribution(x);
        match self.period() {
            Some(period) => {
                let start = antipode_index(&grid, period, anchor + self.outcome_bias()?);
                let order = circular_order(grid.len(), start);
                Sampler::discrete_in_order(grid, &p, order)
            }
            None => Sampler::discrete(grid, &p),
        }
    }

    fn log_likelihood<'a>(&'a self, data: &'a Dataset) -> Result<LogLikelihood<'a>> {
        if data.indices.is_none() {
            return Err(Error::InvalidArgument("dataset has no outcome indices".into()));
        }
        let counts = data.counts();
        let scale = self.povm.weight() / self.povm.normalizer();
        let h = self.povm.spectrum().eigenvalues();
        // a[m][k] = c_k e^{i x_m h_k}; ψ(x_m − X) ∝ Σ_k a[m][k] e^{−iX h_k}
        let rows: Vec<(f64, Vec<f64>, Vec<f64>)> = counts
            .iter()
            .map(|&(m, count)| {
                let xm = self.povm.grid()[m];
                let (re, im): (Vec<f64>, Vec<f64>) = self
                    .coefficients
                    .iter()
                    .zip(h)
                    .map(|(c, &hk)| {
                        let z = c * C64::from_polar(1.0, xm * hk);
                        (z.re, z.im)
                    })
                    .unzip();
                (count as f64, re, im)
            })
            .collect();
        Ok(Box::new(move |x| {
            let b = self.phases(x);
            let (bre, bim): (Vec<f64>, Vec<f64>) = b.iter().map(|z| (z.re, z.im)).unzip();
            let mut total = 0.0;
            for (count, re, im) in &rows {
                let (mut sr, mut si) = (0.0, 0.0);
                for k in 0..re.len() {
                    sr += re[k] * bre[k] - im[k] * bim[k];
                    si += re[k] * bim[k] + im[k] * bre[k];
                }
                total += count * (scale * (sr * sr + si * si)).ln();
            }
            total
        }))
    }

    fn fisher(&self, x: f64) -> Result<f64> {
        let step = default_fisher_step(Some(self.povm.normalizer()));
        fisher_from_samples(&self.distribution(x), &self.distribution(x + step), &self.distribution(x - step), step)
    }

    fn qfi(&self) -> Result<f64> {
        qfi_unitary(&self.family)
    }

    fn generator_variance(&self) -> Result<f64> {
        self.family.generator_variance()
    }

    fn outcome_bias(&self) -> Result<f64> {
        let p = self.distribution(0.0);
        Ok(match self.period() {
            Some(period) => circular_mean(self.povm.grid(), Some(&p), period),
            None => pairwise_sum(&p.iter().zip(self.povm.grid()).map(|(p, x)| p * x).collect::<Vec<_>>()),
        })
    }

    fn mle_window(&self, _data: &Dataset) -> (f64, f64) {
        let g = self.povm.grid();
        match self.period() {
            Some(p) => (-0.5 * p, 0.5 * p),
            None => (g[0], g[0] + self.povm.normalizer()),
        }
    }
}

/// `N` draws from `povm` on `family` at `x`.
pub fn sample_outcomes(povm: &DiscretePOVM, family: &StateFamily, x: f64, n: usize, seed: u64) -> Result<Dataset> {
    let p = outcome_distribution(povm, &family.state_at(x))?;
    Ok(Sampler::discrete(povm.labels().to_vec(), &p)?.draw(n, seed, x))
}

/// `(1/N) Σ (x_i − ⟨x⟩₀)`, or `arg Σ e^{i 2π x_i / P} · P/2π − ⟨x⟩₀` wrapped
/// into `(−P/2, P/2]` for a periodic parameter.
pub fn sample_mean_estimate(data: &Dataset, bias: f64, period: Option<f64>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    Ok(match period {
        Some(p) => wrap_period(circular_mean(&data.outcomes, None, p) - bias, p),
        None => plain_mean(&data.outcomes) - bias,
    })
}

/// Maximum-likelihood estimate inside `window`: a 64-point scan, then
/// golden-section refinement to `1e-8 · width`. Equal coarse maxima resolve
/// toward the window midpoint. A flat scan raises [`Error::NotIdentifiable`].
pub fn mle_estimate(data: &Dataset, model: &dyn ParametricModel, window: (f64, f64)) -> Result<f64> {
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(Error::InvalidArgument(format!("empty search window [{lo}, {hi}]")));
    }
    let ll = model.log_likelihood(data)?;
    let (x, _, coarse) = grid_then_golden_max(&ll, lo, hi, MLE_GRID, MLE_REL_TOL * (hi - lo));
    let max = coarse.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = coarse.iter().copied().fold(f64::INFINITY, f64::min);
    if !max.is_finite() {
        return Err(Error::Numerical("log-likelihood is not finite anywhere in the window".into()));
    }
    if max - min <= 1e-12 * (1.0 + max.abs()) {
        return Err(Error::NotIdentifiable);
    }
    Ok(match model.period() {
        Some(p) => wrap_period(x, p),
        None => x,
    })
}

/// Estimator choices for [`deviation_moment`].
#[derive(Clone, Debug, PartialEq)]
pub enum Estimator {
    /// Sample mean minus the model's `⟨x⟩₀` (circular when periodic).
    SampleMean,
    /// Maximum likelihood over the given window, or the model's default.
    MaxLikelihood { window: Option<(f64, f64)> },
    /// Another estimator multiplied by a constant (a change of units).
    Scaled { factor: f64, inner: Box<Estimator> },
}

impl Estimator {
    pub fn label(&self) -> String {
        match self {
            Estimator::SampleMean => "mean".into(),
            Estimator::MaxLikelihood { .. } => "mle".into(),
            Estimator::Scaled { factor, inner } => format!("{}x{}", factor, inner.label()),
        }
    }

    pub fn estimate(&self, model: &dyn ParametricModel, data: &Dataset, bias: f64) -> Result<f64> {
        match self {
            Estimator::SampleMean => sample_mean_estimate(data, bias, model.period()),
            Estimator::MaxLikelihood { window } => {
                mle_estimate(data, model, window.unwrap_or_else(|| model.mle_window(data)))
            }
            Estimator::Scaled { factor, inner } => Ok(factor * inner.estimate(model, data, bias)?),
        }
    }
}

/// Parameters of a Monte-Carlo run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub x: f64,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    /// Central-difference step for the slope; defaults to `1e-3 × window`.
    pub slope_step: Option<f64>,
}

/// Result of [`deviation_moment`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub scenario: String,
    pub estimator: String,
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    pub trials: usize,
    #[serde(rename = "X")]
    pub x: f64,
    /// `⟨(δX)²⟩`; absent when the statistic diverges.
    pub mse: Option<f64>,
    /// Standard error of `mse`.
    pub mse_stderr: Option<f64>,
    /// `d⟨X_est⟩/dX` by central difference.
    pub slope: Option<f64>,
    pub divergent: bool,
    pub fisher: f64,
    pub qfi: f64,
    pub generator_variance: f64,
    /// `⟨(δX)²⟩ · N · F`.
    pub ratio_classical: Option<f64>,
    /// `⟨(δX)²⟩ · N · QFI`.
    pub ratio_quantum: Option<f64>,
    /// Scenario-specific columns appended to the CSV row.
    #[serde(default)]
    pub extras: BTreeMap<String, f64>,
}

/// Fixed CSV columns; scenario extras follow in key order.
pub const CSV_COLUMNS: [&str; 10] =
    ["scenario", "seed", "N", "trials", "mse", "slope", "fisher", "qfi", "ratio_classical", "ratio_quantum"];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl EstimationReport {
    /// `N · ⟨(δX)²⟩`.
    pub fn n_mse(&self) -> Option<f64> {
        self.mse.map(|m| m * self.n as f64)
    }

    pub fn csv_header(&self) -> String {
        let mut cols: Vec<String> = CSV_COLUMNS.iter().map(|s| s.to_string()).collect();
        cols.extend(self.extras.keys().cloned());
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![
            self.scenario.clone(),
            self.seed.to_string(),
            self.n.to_string(),
            self.trials.to_string(),
            opt(self.mse),
            opt(self.slope),
            self.fisher.to_string(),
            self.qfi.to_string(),
            opt(self.ratio_classical),
            opt(self.ratio_quantum),
        ];
        cols.extend(self.extras.values().map(|v| v.to_string()));
        cols.join(",")
    }
}

fn mean_about(estimates: &[Option<f64>], x: f64, period: Option<f64>) -> f64 {
    let values: Vec<f64> = estimates
        .iter()
        .flatten()
        .map(|&e| match period {
            Some(p) => wrap_period(e - x, p),
            None => e - x,
        })
        .collect();
    x + plain_mean(&values)
}

/// Runs `trials` independent `N`-sample experiments at `X` (and at `X ± step`
/// for the slope) and reports `⟨(δX)²⟩` with the information quantities.
///
/// A flat likelihood or a slope below [`SLOPE_FLOOR`] marks the report as
/// divergent instead of failing.
pub fn deviation_moment(
    model: &dyn ParametricModel,
    estimator: &Estimator,
    config: &RunConfig,
) -> Result<EstimationReport> {
    if config.trials < MIN_TRIALS {
        return Err(Error::InvalidArgument(format!("need at least {MIN_TRIALS} trials, got {}", config.trials)));
    }
    if config.n == 0 {
        return Err(Error::InvalidArgument("N must be positive".into()));
    }
    let x = config.x;
    let step = config.slope_step.unwrap_or(1e-3 * model.parameter_window());
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("slope step must be positive, got {step}")));
    }
    let period = model.period();
    let bias = model.outcome_bias()?;
    let samplers =
        [model.coupled_sampler(x, x)?, model.coupled_sampler(x + step, x)?, model.coupled_sampler(x - step, x)?];
    let points = [x, x + step, x - step];

    let per_trial: Vec<Result<[Option<f64>; 3]>> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(config.seed, t);
            let mut out = [None; 3];
            for i in 0..3 {
                let data = samplers[i].draw(config.n, seed, points[i]);
                out[i] = match estimator.estimate(model, &data, bias) {
                    Ok(v) => Some(v),
                    Err(Error::NotIdentifiable) => None,
                    Err(e) => return Err(e),
                };
            }
            Ok(out)
        })
        .collect();
    let per_trial = per_trial.into_iter().collect::<Result<Vec<_>>>()?;

    let fisher = model.fisher(x)?;
    let qfi = model.qfi()?;
    let generator_variance = model.generator_variance()?;
    let mut report = EstimationReport {
        scenario: model.name().to_string(),
        estimator: estimator.label(),
        seed: config.seed,
        n: config.n,
        trials: config.trials,
        x,
        mse: None,
        mse_stderr: None,
        slope: None,
        divergent: true,
        fisher,
        qfi,
        generator_variance,
        ratio_classical: None,
        ratio_quantum: None,
        extras: BTreeMap::new(),
    };
    if per_trial.iter().any(|r| r.iter().any(Option::is_none)) {
        return Ok(report);
    }
    let column = |i: usize| per_trial.iter().map(|r| r[i]).collect::<Vec<_>>();
    // both ends wrap around the same centre so an estimate near the seam
    // cannot jump by a period between them
    let slope = (mean_about(&column(1), x, period) - mean_about(&column(2), x, period)) / (2.0 * step);
    report.slope = Some(slope);
    if slope.abs() < SLOPE_FLOOR {
        return Ok(report);
    }
    let sq: Vec<f64> = per_trial
        .iter()
        .map(|r| {
            let e = r[0].expect("checked above");
            let local = match period {
                Some(p) => x + wrap_period(e - x, p),
                None => e,
            };
            (local / slope.abs() - x).powi(2)
        })
        .collect();
    let mse = plain_mean(&sq);
    let spread: Vec<f64> = sq.iter().map(|v| (v - mse).powi(2)).collect();
    let sd = (pairwise_sum(&spread) / (sq.len() - 1) as f64).sqrt();
    report.mse = Some(mse);
    report.mse_stderr = Some(sd / (sq.len() as f64).sqrt());
    report.divergent = false;
    report.ratio_classical = Some(mse * config.n as f64 * fisher);
    report.ratio_quantum = Some(mse * config.n as f64 * qfi);
    Ok(report)
}

/// One checked inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    /// Left-hand side; absent when the statistic diverged (the bound then holds).
    pub value: Option<f64>,
    pub bound: f64,
    pub holds: bool,
}

/// Outcome of [`bound_audit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditVerdict {
    /// `3/√trials`.
    pub tolerance: f64,
    pub checks: Vec<InequalityCheck>,
}

impl AuditVerdict {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn failures(&self) -> Vec<&InequalityCheck> {
        self.checks.iter().filter(|c| !c.holds).collect()
    }
}

/// Checks, with relative Monte-Carlo tolerance `3/√trials`,
///
/// - `N F ⟨(δX)²⟩ ≥ 1`,
/// - `N QFI ⟨(δX)²⟩ ≥ N F ⟨(δX)²⟩`,
/// - `4 N var(ĥ) ⟨(δX)²⟩ ≥ 1`.
pub fn bound_audit(report: &EstimationReport) -> AuditVerdict {
    let tol = 3.0 / (report.trials as f64).sqrt();
    let check = |name: &str, value: Option<f64>, bound: f64| InequalityCheck {
        name: name.to_string(),
        value,
        bound,
        holds: value.is_none_or(|v| v >= bound - tol * bound.abs().max(1.0)),
    };
    let generator = report.mse.map(|m| 4.0 * report.n as f64 * report.generator_variance * m);
    let classical = check("N*F*mse >= 1", report.ratio_classical, 1.0);
    let quantum = check("N*QFI*mse >= N*F*mse", report.ratio_quantum, report.ratio_classical.unwrap_or(1.0));
    let heisenberg = check("4*N*var(h)*mse >= 1", generator, 1.0);
    AuditVerdict { tolerance: tol, checks: vec![classical, quantum, heisenberg] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::HermitianOperator;
    use crate::povm::{build_covariant, SpectrumModel};

    struct Gauss {
        sd: f64,
    }

    impl ParametricModel for Gauss {
        fn name(&self) -> &str {
            "gauss"
        }
        fn period(&self) -> Option<f64> {
            None
        }
        fn sampler(&self, x: f64) -> Result<Sampler> {
            Ok(Sampler::Gaussian { mean: x, sd: self.sd })
        }
        fn log_likelihood<'a>(&'a self, data: &'a Dataset) -> Result<LogLikelihood<'a>> {
            Ok(Box::new(move |x| data.outcomes.iter().map(|o| -(o - x).powi(2) / (2.0 * self.sd * self.sd)).sum()))
        }
        fn fisher(&self, _x: f64) -> Result<f64> {
            Ok(1.0 / (self.sd * self.sd))
        }
        fn qfi(&self) -> Result<f64> {
            Ok(1.0 / (self.sd * self.sd))
        }
        fn generator_variance(&self) -> Result<f64> {
            Ok(0.25 / (self.sd * self.sd))
        }
        fn outcome_bias(&self) -> Result<f64> {
            Ok(0.0)
        }
        fn mle_window(&self, data: &Dataset) -> (f64, f64) {
            let m = plain_mean(&data.outcomes);
            (m - 10.0 * self.sd, m + 10.0 * self.sd)
        }
    }

    fn phase_model(amps: &[f64], m: usize) -> CovariantModel {
        let d = amps.len();
        let spectrum = SpectrumModel::diagonal((0..d).map(|n| -(n as f64)).collect(), Some(2.0 * PI)).unwrap();
        let povm = build_covariant(spectrum, &vec![0.0; d], m).unwrap();
        CovariantModel::new("phase", povm, PureState::from_real(amps).unwrap()).unwrap()
    }

    #[test]
    fn splitmix_reference_values() {
        // first outputs of splitmix64 seeded with 0 (state advances by the golden gamma)
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(0x9E37_79B9_7F4A_7C15), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn indicator_distribution_gives_constant_outcomes() {
        let s = Sampler::discrete(vec![1.0, 2.0, 3.0], &[0.0, 1.0, 0.0]).unwrap();
        let d = s.draw(1000, 3, 0.0);
        assert!(d.outcomes.iter().all(|&x| x == 2.0));
    }

    #[test]
    fn ordered_sampler_keeps_the_law() {
        let p = [0.1, 0.2, 0.3, 0.4];
        let s = Sampler::discrete_in_order(vec![10.0, 11.0, 12.0, 13.0], &p, vec![2, 3, 0, 1]).unwrap();
        let n = 400_000;
        let d = s.draw(n, 5, 0.0);
        for (k, c) in d.counts() {
            assert_eq!(d.outcomes.iter().filter(|&&x| x == 10.0 + k as f64).count(), c);
            let sigma = (n as f64 * p[k] * (1.0 - p[k])).sqrt();
            assert!((c as f64 - n as f64 * p[k]).abs() < 5.0 * sigma, "outcome {k}: {c}");
        }
    }

    #[test]
    fn sampling_order_must_be_a_permutation() {
        let p = [0.5, 0.25, 0.25];
        assert!(Sampler::discrete_in_order(vec![0.0; 3], &p, vec![0, 0, 1]).is_err());
        assert!(Sampler::discrete_in_order(vec![0.0; 3], &p, vec![0, 1, 3]).is_err());
        assert!(Sampler::discrete_in_order(vec![0.0; 3], &p, vec![0, 1]).is_err());
    }

    #[test]
    fn draws_across_the_seam_stay_coupled() {
        // the outcome peak straddles ±π; shared random numbers should move each draw by at most a cell or two
        let amps: Vec<f64> = (0..16).map(|n| (-(n as f64 - 4.0).powi(2) / 4.0).exp()).collect();
        let model = phase_model(&amps, 64);
        let m = 64;
        let (a, b) = (model.coupled_sampler(PI - 0.03, PI).unwrap(), model.coupled_sampler(PI + 0.03, PI).unwrap());
        let (da, db) = (a.draw(20_000, 4, 0.0), b.draw(20_000, 4, 0.0));
        let far = da
            .indices
            .unwrap()
            .iter()
            .zip(db.indices.unwrap())
            .filter(|&(&i, j)| {
                let gap = i.abs_diff(j);
                gap.min(m - gap) > 2
            })
            .count();
        assert!(far < 200, "{far} of 20000 draws jumped");
    }

    #[test]
    fn uniform_frequencies_within_five_sigma() {
        let m = 16;
        let s = Sampler::discrete((0..m).map(|k| k as f64).collect(), &vec![1.0 / m as f64; m]).unwrap();
        let n = 1_000_000;
        let d = s.draw(n, 11, 0.0);
        let p = 1.0 / m as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for (_, c) in d.counts() {
            assert!((c as f64 - n as f64 * p).abs() < 5.0 * sigma);
        }
        assert_eq!(d.counts().len(), m);
    }

    #[test]
    fn same_seed_same_dataset() {
        let povm = DiscretePOVM::computational(2).unwrap();
        let family = StateFamily::new(
            PureState::from_real(&[1.0, 1.0]).unwrap(),
            HermitianOperator::from_real_diagonal(&[0.0, 1.0]).unwrap(),
        )
        .unwrap();
        let a = sample_outcomes(&povm, &family, 0.3, 50, 9).unwrap();
        let b = sample_outcomes(&povm, &family, 0.3, 50, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_mean_examples() {
        let d = Dataset { outcomes: vec![2.5; 7], indices: None, true_parameter: 0.0, seed: 0 };
        assert_eq!(sample_mean_estimate(&d, 0.0, None).unwrap(), 2.5);

        // clustered on both sides of the wrap point
        let outcomes: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { PI - 0.1 } else { -(PI - 0.1) }).collect();
        let d = Dataset { outcomes, indices: None, true_parameter: PI, seed: 0 };
        let est = sample_mean_estimate(&d, 0.0, Some(2.0 * PI)).unwrap();
        assert!((est.abs() - PI).abs() < 1e-12, "{est}");
        assert!((plain_mean(&d.outcomes)).abs() < 1e-12);
    }

    #[test]
    fn mle_single_symmetric_peak() {
        let model = Gauss { sd: 1.0 };
        let d = Dataset { outcomes: vec![0.37], indices: None, true_parameter: 0.0, seed: 0 };
        let x = mle_estimate(&d, &model, (-5.0, 5.0)).unwrap();
        assert!((x - 0.37).abs() < 1e-7);
    }

    #[test]
    fn gaussian_mle_equals_sample_mean() {
        let model = Gauss { sd: 0.4 };
        let d = model.sampler(1.3).unwrap().draw(25, 5, 1.3);
        let window = model.mle_window(&d);
        let mle = mle_estimate(&d, &model, window).unwrap();
        let mean = sample_mean_estimate(&d, 0.0, None).unwrap();
        assert!((mle - mean).abs() <= 2.0 * MLE_REL_TOL * (window.1 - window.0));
    }

    #[test]
    fn flat_likelihood_is_not_identifiable() {
        let mut amps = vec![0.0; 6];
        amps[3] = 1.0;
        let model = phase_model(&amps, 32);
        let d = model.sampler(0.0).unwrap().draw(20, 1, 0.0);
        assert_eq!(mle_estimate(&d, &model, (-PI, PI)).unwrap_err(), Error::NotIdentifiable);
    }

    #[test]
    fn covariant_likelihood_matches_distribution() {
        let model = phase_model(&[0.2, 0.5, 1.0, 0.7, 0.1], 32);
        let d = model.sampler(0.4).unwrap().draw(30, 2, 0.4);
        let ll = model.log_likelihood(&d).unwrap();
        for &x in &[-2.0, 0.1, 0.4, 2.9] {
            let p = model.distribution(x);
            let direct: f64 = d.indices.as_ref().unwrap().iter().map(|&k| p[k].ln()).sum();
            assert!((ll(x) - direct).abs() < 1e-10 * direct.abs());
        }
    }

    #[test]
    fn unbiased_unit_slope_gives_plain_mse() {
        let model = Gauss { sd: 0.5 };
        let cfg = RunConfig { x: 0.0, n: 4, trials: 2000, seed: 1, slope_step: Some(1e-3) };
        let r = deviation_moment(&model, &Estimator::SampleMean, &cfg).unwrap();
        // with common random numbers the sample-mean slope is exactly one
        assert!((r.slope.unwrap() - 1.0).abs() < 1e-9);
        let mut sq = Vec::new();
        for t in 0..cfg.trials as u64 {
            let d = model.sampler(0.0).unwrap().draw(4, trial_seed(1, t), 0.0);
            sq.push(plain_mean(&d.outcomes).powi(2));
        }
        assert!((r.mse.unwrap() - plain_mean(&sq)).abs() < 1e-9 * r.mse.unwrap());
    }

    #[test]
    fn scaled_estimator_has_identical_deviation() {
        let model = Gauss { sd: 0.5 };
        let cfg = RunConfig { x: 0.7, n: 3, trials: 500, seed: 4, slope_step: None };
        let plain = deviation_moment(&model, &Estimator::SampleMean, &cfg).unwrap();
        let scaled = Estimator::Scaled { factor: 2.0, inner: Box::new(Estimator::SampleMean) };
        let twice = deviation_moment(&model, &scaled, &cfg).unwrap();
        assert!((plain.mse.unwrap() - twice.mse.unwrap()).abs() <= 1e-12 * plain.mse.unwrap());
        assert!((twice.slope.unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic_reports() {
        let model = phase_model(&[0.3, 1.0, 1.0, 0.3], 16);
        let cfg = RunConfig { x: 0.0, n: 5, trials: 100, seed: 77, slope_step: None };
        let est = Estimator::MaxLikelihood { window: None };
        let a = deviation_moment(&model, &est, &cfg).unwrap();
        let b = deviation_moment(&model, &est, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(bound_audit(&a).passed(), "{:?}", bound_audit(&a));
    }

    #[test]
    fn number_state_is_divergent_not_an_error() {
        let mut amps = vec![0.0; 6];
        amps[2] = 1.0;
        let model = phase_model(&amps, 32);
        let cfg = RunConfig { x: 0.0, n: 10, trials: 100, seed: 3, slope_step: None };
        let r = deviation_moment(&model, &Estimator::MaxLikelihood { window: None }, &cfg).unwrap();
        assert!(r.divergent && r.mse.is_none());
        assert!(r.fisher.abs() < 1e-12);
        assert!(bound_audit(&r).passed());
        let r = deviation_moment(&model, &Estimator::SampleMean, &cfg).unwrap();
        assert!(r.divergent);
    }

    #[test]
    fn too_few_trials_rejected() {
        let cfg = RunConfig { x: 0.0, n: 1, trials: 99, seed: 0, slope_step: None };
        assert!(matches!(
            deviation_moment(&Gauss { sd: 1.0 }, &Estimator::SampleMean, &cfg),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn audit_flags_violations() {
        let mut r = EstimationReport {
            scenario: "t".into(),
            estimator: "mean".into(),
            seed: 0,
            n: 10,
            trials: 10_000,
            x: 0.0,
            mse: Some(0.05),
            mse_stderr: None,
            slope: Some(1.0),
            divergent: false,
            fisher: 2.0,
            qfi: 2.0,
            generator_variance: 0.5,
            ratio_classical: Some(1.0),
            ratio_quantum: Some(1.0),
            extras: BTreeMap::new(),
        };
        assert!(bound_audit(&r).passed());
        r.mse = Some(0.04);
        r.ratio_classical = Some(0.8);
        r.ratio_quantum = Some(0.8);
        let v = bound_audit(&r);
        assert!(!v.passed());
        assert_eq!(v.failures().len(), 2);
        assert_eq!(v.failures()[0].name, "N*F*mse >= 1");
    }

    #[test]
    fn csv_layout() {
        let mut extras = BTreeMap::new();
        extras.insert("var_xhat".to_string(), 0.25);
        let r = EstimationReport {
            scenario: "squeezed".into(),
            estimator: "mean".into(),
            seed: 7,
            n: 10,
            trials: 100,
            x: 0.0,
            mse: None,
            mse_stderr: None,
            slope: Some(1.0),
            divergent: true,
            fisher: 4.0,
            qfi: 4.0,
            generator_variance: 1.0,
            ratio_classical: None,
            ratio_quantum: None,
            extras,
        };
        assert_eq!(
            r.csv_header(),
            "scenario,seed,N,trials,mse,slope,fisher,qfi,ratio_classical,ratio_quantum,var_xhat"
        );
        assert_eq!(r.csv_row(), "squeezed,7,10,100,,1,4,4,,,0.25");
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["N"], 10);
        assert!(json["mse"].is_null());
    }
}
