//! End-to-end acceptance run. One PASS/FAIL line per criterion; exits
//! non-zero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use paramest::estimate::{deviation_moment, Estimator, ParametricModel, RunConfig};
use paramest::hilbert::{commutator_path_tangent, ComplexMatrix, DensityOperator, HermitianOperator, PureState};
use paramest::metric::{additivity_check, fubini_angle, qfi_unitary, sld, StateFamily, DEFAULT_ZERO_TOL};
use paramest::povm::{classical_fisher, sld_projective_povm, DiscretePOVM, PovmElement};
use paramest::scenarios::clock::{
    asymmetric_ring_fiducial, mandelstam_tamm, search_mixing, symmetric_ring_fiducial, two_sector_time_povm,
    SearchConfig, TwoSectorSpectrum,
};
use paramest::scenarios::phase::{binomial_state, chirped, number_state, pair_state, pascal_state, phase_model};
use paramest::scenarios::squeezed::{
    gamma_forms, minimize_nsr, squeezed_covariance, squeezed_mc_scenario, squeezed_optimal, SqueezedParams,
};
use paramest::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn gaussian(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

fn random_matrix(rng: &mut ChaCha8Rng, d: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(d, |_, _| gaussian(rng))
}

fn random_hermitian(rng: &mut ChaCha8Rng, d: usize) -> HermitianOperator {
    HermitianOperator::hermitian_part(&random_matrix(rng, d))
}

fn random_pure(rng: &mut ChaCha8Rng, d: usize) -> PureState {
    PureState::normalized((0..d).map(|_| gaussian(rng)).collect()).unwrap()
}

/// `G G† / tr G G†` with `G` of `rank` columns.
fn random_density(rng: &mut ChaCha8Rng, d: usize, rank: usize) -> DensityOperator {
    let g = ComplexMatrix::from_fn(d, |_, j| if j < rank { gaussian(rng) } else { C64::new(0.0, 0.0) });
    let m = &g * &g.adjoint();
    let tr = m.trace().re;
    DensityOperator::new(HermitianOperator::hermitian_part(&m.scale(C64::new(1.0 / tr, 0.0))).matrix().clone()).unwrap()
}

fn random_family(rng: &mut ChaCha8Rng, d: usize) -> StateFamily {
    let h = random_hermitian(rng, d);
    if rng.random_bool(0.5) {
        StateFamily::new(random_pure(rng, d), h).unwrap()
    } else {
        StateFamily::new(random_density(rng, d, d), h).unwrap()
    }
}

/// `tr(ρh²) − tr(ρh)²` by plain matrix products.
fn trace_variance(rho: &ComplexMatrix, h: &ComplexMatrix) -> f64 {
    let rh = rho * h;
    let m1 = rh.trace().re;
    let m2 = (&rh * h).trace().re;
    m2 - m1 * m1
}

/// `‖hψ‖² − ⟨ψ|h|ψ⟩²`.
fn vector_variance(psi: &PureState, h: &HermitianOperator) -> f64 {
    let a = psi.amplitudes();
    let hpsi = h.matrix().apply(a);
    let mean: f64 = a.iter().zip(&hpsi).map(|(x, y)| (x.conj() * y).re).sum();
    let second: f64 = hpsi.iter().map(|y| y.norm_sqr()).sum();
    second - mean * mean
}

fn sld_qfi(family: &StateFamily) -> f64 {
    let rho = family.density_at(0.0);
    let tangent = commutator_path_tangent(&rho, family.generator()).unwrap();
    sld(&rho, &tangent, DEFAULT_ZERO_TOL).unwrap().qfi
}

fn pure_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let d = 2 + i % 15;
        let psi = random_pure(&mut rng, d);
        let h = random_hermitian(&mut rng, d);
        let oracle = 4.0 * vector_variance(&psi, &h);
        let family = StateFamily::new(psi, h).unwrap();
        let scale = oracle.max(1e-12);
        worst = worst
            .max((qfi_unitary(&family).unwrap() - oracle).abs() / scale)
            .max((sld_qfi(&family) - oracle).abs() / scale);
    }
    let msg = format!("max relative deviation {worst:.2e} (qfi_unitary and SLD against 4 var)");
    if worst <= 1e-10 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn mixed_inequality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut excess, mut pure_gap, mut min_full_gap, mut route) = (f64::NEG_INFINITY, 0.0f64, f64::INFINITY, 0.0f64);
    for i in 0..100 {
        let d = 2 + i % 2;
        let rank = 1 + (i / 2) % d;
        let rho = random_density(&mut rng, d, rank);
        let h = random_hermitian(&mut rng, d);
        let four_var = 4.0 * trace_variance(rho.matrix(), h.matrix());
        let family = StateFamily::new(rho, h).unwrap();
        let q = qfi_unitary(&family).unwrap();
        route = route.max((q - sld_qfi(&family)).abs());
        excess = excess.max(q - four_var);
        let gap = four_var - q;
        if rank == 1 {
            pure_gap = pure_gap.max(gap.abs());
        } else if rank == d && four_var > 1e-9 {
            min_full_gap = min_full_gap.min(gap);
        }
    }
    let msg = format!(
        "max(qfi − 4var) {excess:.2e}; pure gap {pure_gap:.2e}; min full-rank gap {min_full_gap:.3e}; eigen vs SLD {route:.1e}"
    );
    if excess <= 1e-9 && pure_gap <= 1e-9 && min_full_gap > 0.0 && route <= 1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn additivity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let family = random_family(&mut rng, 2 + i % 2);
        for copies in [2, 3] {
            let (lhs, rhs) = additivity_check(&family, copies).unwrap();
            worst = worst.max(rel(lhs, rhs));
        }
    }
    let msg = format!("max relative deviation {worst:.2e} over 50 families × N ∈ {{2, 3}}");
    if worst <= 1e-8 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// `E_k = S^{−1/2} G_k†G_k S^{−1/2}`.
fn random_povm(rng: &mut ChaCha8Rng, d: usize, outcomes: usize) -> DiscretePOVM {
    loop {
        let parts: Vec<ComplexMatrix> = (0..outcomes)
            .map(|_| {
                let g = random_matrix(rng, d);
                &g.adjoint() * &g
            })
            .collect();
        let mut s = ComplexMatrix::zeros(d);
        for p in &parts {
            s = &s + p;
        }
        let eig = paramest::hilbert::eig_hermitian(&HermitianOperator::hermitian_part(&s)).unwrap();
        if eig.eigenvalues[0] < 1e-3 {
            continue;
        }
        let inv_sqrt = eig.map(|l| C64::new(1.0 / l.sqrt(), 0.0));
        let elements = parts
            .iter()
            .map(|p| PovmElement::Dense(HermitianOperator::hermitian_part(&(&(&inv_sqrt * p) * &inv_sqrt))))
            .collect();
        return DiscretePOVM::new(elements, (0..outcomes).map(|k| k as f64).collect(), vec![1.0; outcomes]).unwrap();
    }
}

fn fisher_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut excess, mut sld_dev) = (f64::NEG_INFINITY, 0.0f64);
    for i in 0..100 {
        let d = 2 + i % 3;
        let family = random_family(&mut rng, d);
        let q = qfi_unitary(&family).unwrap();
        let povm = random_povm(&mut rng, d, 2 + i % 5);
        let f = classical_fisher(&povm, &family, 0.0, 1e-5).unwrap();
        excess = excess.max((f - q) / q.max(1.0));
        let rho = family.density_at(0.0);
        let sld_povm = sld_projective_povm(&rho, &family.tangent_at(0.0).unwrap()).unwrap();
        let f_sld = classical_fisher(&sld_povm, &family, 0.0, 1e-5).unwrap();
        sld_dev = sld_dev.max(rel(f_sld, q));
    }
    let msg = format!("max (F − QFI)/max(1, QFI) {excess:.2e}; SLD POVM max relative deviation {sld_dev:.2e}");
    if excess <= 1e-6 && sld_dev <= 1e-6 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn fubini_convergence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst, mut min_order, mut max_order) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..20 {
        let d = 2 + i % 7;
        let family = StateFamily::new(random_pure(&mut rng, d), random_hermitian(&mut rng, d)).unwrap();
        let q = qfi_unitary(&family).unwrap();
        let psi0 = family.pure_at(0.0).unwrap();
        let err = |eps: f64| {
            let theta = fubini_angle(&psi0, &family.pure_at(eps).unwrap()).unwrap();
            rel((2.0 * theta / eps).powi(2), q)
        };
        let (coarse, fine) = (err(1e-3), err(1e-4));
        worst = worst.max(fine);
        // below ~1e-9 the error is round-off and carries no order information
        if coarse > 1e-9 {
            let order = (coarse / fine).log10();
            min_order = min_order.min(order);
            max_order = max_order.max(order);
        }
    }
    let msg =
        format!("max relative error at step 1e-4 {worst:.2e}; observed order in [{min_order:.3}, {max_order:.3}]");
    if worst <= 1e-6 && min_order >= 1.8 && max_order <= 2.2 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn optimal_fiducial() -> Outcome {
    let d = 16;
    let amps = pascal_state(d, 10, 3).unwrap();
    let model = phase_model(d, &amps, None).unwrap();
    let psi = PureState::normalized(amps.clone()).unwrap();
    let n = HermitianOperator::from_real_diagonal(&(0..d).map(|k| k as f64).collect::<Vec<_>>()).unwrap();
    let four_var = 4.0 * vector_variance(&psi, &n);
    let f = model.fisher(0.0).unwrap();
    let chirp = phase_model(d, &chirped(&amps, 0.3), None).unwrap().fisher(0.0).unwrap();
    let msg = format!("F {f:.9} vs 4 var {four_var:.9} (relative {:.1e}); chirped F {chirp:.6}", rel(f, four_var));
    if rel(f, four_var) <= 1e-5 && chirp < f * (1.0 - 1e-6) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn squeezed_closed_forms() -> Outcome {
    let (mut forms, mut det, mut tan, mut product) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..20 {
        for j in 0..20 {
            let p = SqueezedParams::new(2.0 * i as f64 / 19.0, PI * j as f64 / 20.0).unwrap();
            let [a, b, c] = gamma_forms(&p);
            // |γ| reaches ~1.5e3 at r = 2, so agreement is measured relative to it
            forms = forms.max((a - b).norm() / a.norm()).max((a - c).norm() / a.norm());
            let cov = squeezed_covariance(&p);
            det = det.max((cov.var_x * cov.var_p - cov.cov_xp * cov.cov_xp - 0.25).abs());
            let opt = squeezed_optimal(&p);
            let closed_tan = -(C64::new(1.0, 0.0) / a).im;
            tan = tan.max((minimize_nsr(&p).0 - closed_tan).abs());
            product = product.max((opt.var_xhat * cov.var_p - 0.25).abs());
        }
    }
    let msg =
        format!("forms (relative) {forms:.1e}; det − ¼ {det:.1e}; tanθ {tan:.1e}; var_xhat·var_p − ¼ {product:.1e}");
    if forms <= 1e-12 && det <= 1e-12 && tan <= 1e-6 && product <= 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn squeezed_monte_carlo() -> Outcome {
    let start = Instant::now();
    let cfg = RunConfig { x: 0.0, n: 10, trials: 100_000, seed: 20_240_601, slope_step: None };
    let (_, _, sidecar) = squeezed_mc_scenario(SqueezedParams::new(1.0, 0.3).unwrap(), &cfg).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let bands: Vec<String> = sidecar
        .checks
        .iter()
        .map(|c| format!("{} {:.5} vs {:.5} ± {:.5}", c.name, c.observed, c.expected, c.sigma))
        .collect();
    let ok = sidecar.checks.len() == 2 && sidecar.checks.iter().all(|c| c.within) && elapsed < 60.0;
    let msg = format!("{}; {elapsed:.1} s", bands.join("; "));
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn phase_scenario() -> Outcome {
    let number = phase_model(16, &number_state(16, 5).unwrap(), None).unwrap();
    let f_number = number.fisher(0.0).unwrap();
    let cfg = RunConfig { x: 0.4, n: 10, trials: 200, seed: 9, slope_step: None };
    let divergent = [Estimator::SampleMean, Estimator::MaxLikelihood { window: None }]
        .iter()
        .all(|e| deviation_moment(&number, e, &cfg).unwrap().divergent);
    let pair_amps = pair_state(6, 2, 3).unwrap();
    let pair = phase_model(6, &pair_amps, None).unwrap();
    let f_pair = pair.fisher(0.0).unwrap();
    let n6 = HermitianOperator::from_real_diagonal(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    let var_pair = 4.0 * vector_variance(&PureState::normalized(pair_amps).unwrap(), &n6);
    let binomial = phase_model(128, &binomial_state(128, 32.0).unwrap(), None).unwrap();
    let efficiency = binomial.fisher(0.0).unwrap() / binomial.qfi().unwrap();
    let msg = format!(
        "number F {f_number:.1e}, divergent {divergent}; pair F {f_pair:.9}, 4 var {var_pair:.9}; binomial F/QFI {efficiency:.6}"
    );
    let ok = f_number.abs() <= 1e-12
        && divergent
        && (f_pair - 1.0).abs() <= 1e-6
        && (var_pair - 1.0).abs() <= 1e-12
        && efficiency >= 0.98;
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn mle_efficiency() -> Outcome {
    let start = Instant::now();
    let model = phase_model(128, &binomial_state(128, 32.0).unwrap(), None).unwrap();
    let cfg = RunConfig { x: 0.7, n: 100, trials: 10_000, seed: 77, slope_step: None };
    let report = deviation_moment(&model, &Estimator::MaxLikelihood { window: None }, &cfg).unwrap();
    let Some(ratio) = report.ratio_classical else {
        return Err("estimator diverged".into());
    };
    let se = report.mse_stderr.unwrap() * report.n as f64 * report.fisher;
    let msg = format!(
        "N·F·MSE {ratio:.4} ± {se:.4} (slope {:.4}); {:.1} s",
        report.slope.unwrap(),
        start.elapsed().as_secs_f64()
    );
    if (0.9..=1.1).contains(&ratio) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn mandelstam_tamm_clocks() -> Outcome {
    let omega = 1.3;
    let h = HermitianOperator::from_real_diagonal(&[0.0, omega]).unwrap();
    let sigma_x = HermitianOperator::new(
        ComplexMatrix::from_rows(&[
            vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
            vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        ])
        .unwrap(),
    )
    .unwrap();
    let family = StateFamily::new(PureState::from_real(&[1.0, 1.0]).unwrap(), h.clone()).unwrap();
    // ⟨σx⟩ crosses zero at ωT = π/2, where its rate is largest
    let t = PI / (2.0 * omega);
    let two_level = mandelstam_tamm(&sigma_x, &h, &family.pure_at(t).unwrap()).unwrap().product;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut lowest = f64::INFINITY;
    let mut counted = 0;
    while counted < 100 {
        let a = random_hermitian(&mut rng, 3);
        let h = random_hermitian(&mut rng, 3);
        let psi = random_pure(&mut rng, 3);
        if let Ok(r) = mandelstam_tamm(&a, &h, &psi) {
            lowest = lowest.min(r.product);
            counted += 1;
        }
    }
    let msg = format!("two-level ΔT·ΔH − ½ = {:.1e}; min over 100 qutrit clocks {lowest:.6}", two_level - 0.5);
    if (two_level - 0.5).abs() <= 1e-9 && lowest >= 0.5 - 1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn two_sector_time() -> Outcome {
    let start = Instant::now();
    let base = TwoSectorSpectrum::ring(16, false).unwrap();
    let povm = two_sector_time_povm(base.clone(), 256).unwrap();
    let completeness = povm.completeness_residual();
    let displacement = (1..4).map(|s| povm.displacement_residual(s)).fold(0.0, f64::max);
    let cfg = SearchConfig::default();
    let sym_psi = symmetric_ring_fiducial(&base).unwrap();
    let sym = search_mixing(&povm, &sym_psi, &cfg).unwrap();
    // the best (U, f) again through the generic finite-difference Fisher
    let best = two_sector_time_povm(sym.spectrum.clone(), 256).unwrap();
    let family = StateFamily::new(sym_psi.clone(), best.spectrum().hamiltonian().unwrap()).unwrap();
    let generic = classical_fisher(&best.to_discrete(), &family, 0.0, 1e-6).unwrap() / qfi_unitary(&family).unwrap();
    let asym = search_mixing(&povm, &asymmetric_ring_fiducial(&base).unwrap(), &cfg).unwrap();
    let asym_max = asym.start_ratios.iter().copied().fold(asym.best_ratio, f64::max);
    let msg = format!(
        "completeness {completeness:.1e}; displacement {displacement:.1e}; symmetric F/QFI {:.10} (generic {generic:.10}); asymmetric max {asym_max:.6} over {} starts; {:.1} s",
        sym.best_ratio,
        asym.start_ratios.len(),
        start.elapsed().as_secs_f64()
    );
    let ok = completeness <= 1e-8
        && displacement <= 1e-9
        && sym.best_ratio >= 1.0 - 1e-4
        && (generic - sym.best_ratio).abs() <= 1e-6
        && asym_max <= 0.999;
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("pure-state QFI equals four variances", pure_identity),
        ("mixed-state QFI inequality and equality condition", mixed_inequality),
        ("QFI additivity over copies", additivity),
        ("classical Fisher bounded by QFI, SLD POVM attains it", fisher_bound),
        ("Fubini-Study angle converges to QFI", fubini_convergence),
        ("real-wavefunction fiducial saturates, chirp does not", optimal_fiducial),
        ("squeezed closed forms on a 20x20 grid", squeezed_closed_forms),
        ("squeezed Monte-Carlo saturation", squeezed_monte_carlo),
        ("phase scenario fiducials", phase_scenario),
        ("MLE asymptotic efficiency", mle_efficiency),
        ("Mandelstam-Tamm clocks", mandelstam_tamm_clocks),
        ("two-sector time POVM", two_sector_time),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS [{:>2}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{:>2}] {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
