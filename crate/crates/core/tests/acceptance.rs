//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails or overruns its time limit.

use std::f64::consts::PI;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use alpha_vqe::bayes::{
    bayes_risk, bayes_risk_quadrature, find_g_max, ExperimentSetting, NormalBelief, Outcome,
    DEFAULT_PARTICLES, GRID_HALF_WIDTH, GRID_POINTS,
};
use alpha_vqe::expectation::{
    branch_for, collapse_state, collapse_table, random_instance_in, simulated_collapse_table,
    single_qubit_with_expectation, two_stage_estimate, TwoStageConfig,
};
use alpha_vqe::optimizer::NelderMeadConfig;
use alpha_vqe::phase::{ensemble_run, run_estimation, EnsembleConfig, StopRule, SyntheticOracle};
use alpha_vqe::rng::{derive_seed, substream};
use alpha_vqe::schedule::{
    alpha_max, analytic_risk_curve, n_min, n_min_restarts, predicted_iterations, SchedulePolicy,
};
use alpha_vqe::statevector::{
    build_prop2_operator, fig1_branches, prepare, Ansatz, PauliString, PowerSign, StateVector,
};
use alpha_vqe::stats::median;
use alpha_vqe::vqe::{load_hamiltonian_file, optimize, EstimationMode};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

const SEED: u64 = 20_190_425;

fn bundled(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

// 1. Closed-form Bayes risk against grid quadrature.
fn bayes_risk_identity() -> Verdict {
    let mut rng = substream(SEED, "risk", &[]);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let m: f64 = rng.random_range(1.0..20.0);
        let sigma = rng.random_range(0.01..(5.0 / m).min(1.5));
        let mu = rng.random_range(-PI..PI);
        let theta = rng.random_range(-PI..PI);
        let s = ExperimentSetting::new(m, theta);
        let b = NormalBelief::new(mu, sigma).unwrap();
        let quad = bayes_risk_quadrature(&s, &b, GRID_HALF_WIDTH, GRID_POINTS).unwrap();
        worst = worst.max(((bayes_risk(&s, &b) - quad) / quad).abs());
    }
    verdict(worst <= 1e-6, format!("max relative error {worst:.2e} over 1000 settings (limit 1e-6)"))
}

// 2. Per-iteration variance contraction of the 1/sigma schedule.
fn contraction_constants() -> Verdict {
    let (a0, _) = find_g_max();
    let mut ratios = Vec::new();
    for (i, scale) in [1.0, a0].into_iter().enumerate() {
        let ens = ensemble_run(&EnsembleConfig {
            policy: SchedulePolicy::alpha_qpe_scaled(1.0, scale).unwrap(),
            prior: NormalBelief::default(),
            n_phases: 200,
            iterations: 40,
            particles: DEFAULT_PARTICLES,
            seed: derive_seed(SEED, "contraction", &[i as u64]),
        })
        .unwrap();
        ratios.push(ens.variance_ratio(10..=40));
    }
    let ok = (0.66..=0.76).contains(&ratios[0]) && (0.65..=0.74).contains(&ratios[1]);
    verdict(
        ok,
        format!(
            "a = 1: {:.4} (window [0.66, 0.76]); a = {a0:.4}: {:.4} (window [0.65, 0.74])",
            ratios[0], ratios[1]
        ),
    )
}

// 3. Iterations to precision and the analytic precision curve.
fn precision_law() -> Verdict {
    let eps = 0.05;
    let mut pass = true;
    let mut parts = Vec::new();
    for (ai, alpha) in [0.0, 0.5, 0.75, 1.0].into_iter().enumerate() {
        let policy = SchedulePolicy::alpha_qpe(alpha).unwrap();
        let iterations: Vec<f64> = (0..100u64)
            .into_par_iter()
            .map(|s| {
                let phi = substream(SEED, "law-phase", &[ai as u64, s]).random_range(-PI..PI);
                let mut oracle = SyntheticOracle::new(phi).unwrap();
                let est = run_estimation(
                    &mut oracle,
                    &policy,
                    NormalBelief::default(),
                    StopRule::precision(eps),
                    DEFAULT_PARTICLES,
                    derive_seed(SEED, "law-run", &[ai as u64, s]),
                )
                .unwrap();
                est.trace.rows.len() as f64
            })
            .collect();
        let predicted = predicted_iterations(eps, alpha);
        let med = median(&iterations);
        let ratio = med / predicted;
        let count_ok = (1.0 / 1.5..=1.5).contains(&ratio);

        let ens = ensemble_run(&EnsembleConfig {
            policy,
            prior: NormalBelief::default(),
            n_phases: 100,
            iterations: 60,
            particles: DEFAULT_PARTICLES,
            seed: derive_seed(SEED, "law-curve", &[ai as u64]),
        })
        .unwrap();
        let rows = ens.rows();
        let anchor = rows[20].mean_sigma;
        let sq: Vec<f64> = (20..=60)
            .map(|k| {
                let analytic = analytic_risk_curve(k as f64, 20.0, anchor, alpha, 1.0).unwrap();
                (rows[k].mean_sigma.ln() - analytic.ln()).powi(2)
            })
            .collect();
        let rms = (sq.iter().sum::<f64>() / sq.len() as f64).sqrt();
        let curve_ok = rms <= 0.5;
        pass &= count_ok && curve_ok;
        parts.push(format!(
            "alpha {alpha}: median {med} vs {predicted:.2} (x{ratio:.2}{}), log-RMS {rms:.3}{}",
            if count_ok { "" } else { " OUT" },
            if curve_ok { "" } else { " OUT" }
        ));
    }
    verdict(pass, parts.join("; "))
}

// 4. Measurement trade-off with and without restarts.
fn tradeoff_tables() -> Verdict {
    let a = n_min(0.01, 10.0);
    let b = n_min_restarts(0.01, 10.0);
    let spot = (a - 396.0).abs() <= 1e-9 && (b - (2.0 * 99.0 + 4.0 * 10f64.ln())).abs() <= 1e-9;
    let mut violations = 0;
    for i in 0..100 {
        let eps = 10f64.powf(-3.0 + 2.5 * i as f64 / 99.0);
        for j in 0..100 {
            // depth budgets above one, where restarts can help
            let d = 10f64.powf(0.05 + 3.95 * j as f64 / 99.0);
            let (full, restarts) = (n_min(eps, d), n_min_restarts(eps, d));
            let ok = if d >= 1.0 / eps { restarts == full } else { restarts < full };
            violations += (!ok) as usize;
        }
    }
    verdict(
        spot && violations == 0,
        format!("n_min(0.01, 10) = {a}, n_min_restarts(0.01, 10) = {b:.6}; {violations} grid violations of 10000"),
    )
}

fn random_ansatz(rng: &mut impl Rng, n: usize, layers: usize) -> Ansatz {
    Ansatz::new(n, layers, (0..n * layers).map(|_| rng.random_range(-PI..PI)).collect()).unwrap()
}

fn random_pauli(rng: &mut impl Rng, n: usize) -> PauliString {
    loop {
        let word: String = (0..n).map(|_| ['I', 'X', 'Y', 'Z'][rng.random_range(0..4)]).collect();
        let p: PauliString = word.parse().unwrap();
        if !p.is_identity() {
            return p;
        }
    }
}

// 5. Ancilla circuit against the likelihood, and eigenphase against diagonalisation.
fn circuit_equivalence() -> Verdict {
    let mut rng = substream(SEED, "circuit", &[]);
    let (mut worst_lik, mut worst_phase): (f64, f64) = (0.0, 0.0);
    let mut instances = 0;
    while instances < 100 {
        let a = random_ansatz(&mut rng, 2, 2);
        let p = random_pauli(&mut rng, 2);
        let op = build_prop2_operator(&a, &p).unwrap();
        let Some((plus, _)) = op.eigenstates() else { continue };
        instances += 1;
        let phi = op.eigenphase();
        for m in [1u32, 2, 4, 8, 16] {
            let theta = rng.random_range(-PI..PI);
            let s = ExperimentSetting::new(m as f64, theta);
            let [(p0, _), _] = fig1_branches(&plus, &op, &s, PowerSign::Forward).unwrap();
            worst_lik = worst_lik.max((p0 - 0.5 * (1.0 + (m as f64 * (phi - theta)).cos())).abs());
        }
        let mut u = DMatrix::<Complex64>::zeros(4, 4);
        for c in 0..4 {
            let mut v = StateVector::basis(2, c).unwrap();
            op.apply(&mut v).unwrap();
            for (r, amp) in v.amplitudes().iter().enumerate() {
                u[(r, c)] = *amp;
            }
        }
        let (_, t) = u.schur().unpack();
        let widest = (0..4).map(|i| t[(i, i)].arg().abs()).fold(0.0, f64::max);
        worst_phase = worst_phase.max((widest - phi).abs());
    }
    verdict(
        worst_lik <= 1e-10 && worst_phase <= 1e-10,
        format!("max outcome-probability deviation {worst_lik:.2e}, max eigenphase deviation {worst_phase:.2e} (limit 1e-10)"),
    )
}

// 6. Collapse measurement table and branch confidence.
fn collapse_protocol() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut min_conf: f64 = 1.0;
    let (mut agree, mut total, mut expected) = (0usize, 0usize, 0.0);
    let mut rng = substream(SEED, "collapse", &[]);
    for j in 0..=40 {
        let phi = PI / 6.0 + j as f64 * (2.0 * PI / 3.0) / 40.0;
        let (a, p) = single_qubit_with_expectation((0.5 * phi).cos()).unwrap();
        let op = build_prop2_operator(&a, &p).unwrap();
        for (s, c) in simulated_collapse_table(&op).unwrap().iter().zip(collapse_table(phi)) {
            worst = worst.max((s.probability - c.probability).abs()).max((s.plus_probability - c.plus_probability).abs());
        }
        for _ in 0..200 {
            let c = collapse_state(op.psi(), &op, 2, &mut rng).unwrap();
            if c.b2 != Outcome::One {
                continue;
            }
            min_conf = min_conf.min(c.confidence);
            // project onto the eigenbasis and check the outcome-implied branch
            let plus_prob = c.state.fidelity(&op.eigenstates().unwrap().0);
            let landed_plus = rng.random::<f64>() < plus_prob;
            let implied_plus = branch_for(c.b2, c.b1) == Some(alpha_vqe::expectation::Branch::Plus);
            agree += (landed_plus == implied_plus) as usize;
            total += 1;
            expected += 0.5 * (1.0 + phi.sin());
        }
    }
    // a multi-qubit instance as well
    let mut irng = substream(SEED, "collapse-2q", &[]);
    let (a, p) = random_instance_in(2, 2, &TwoStageConfig::new(0.5, 32.0, 0.02).unwrap().target, &mut irng).unwrap();
    let op = build_prop2_operator(&a, &p).unwrap();
    for (s, c) in simulated_collapse_table(&op).unwrap().iter().zip(collapse_table(op.eigenphase())) {
        worst = worst.max((s.probability - c.probability).abs()).max((s.plus_probability - c.plus_probability).abs());
    }
    let rate = agree as f64 / total as f64;
    let theory = expected / total as f64;
    let se = (0.25 / total as f64).sqrt();
    let ok = worst <= 1e-10 && min_conf >= 0.75 - 1e-12 && rate >= 0.75 && (rate - theory).abs() <= 4.0 * se;
    verdict(
        ok,
        format!(
            "max table deviation {worst:.2e}; min confidence after b2 = 1: {min_conf:.4}; empirical branch agreement {rate:.4} (theory {theory:.4}, {total} collapses)"
        ),
    )
}

// 7. Two-stage estimator on random states.
fn two_stage_end_to_end() -> Verdict {
    let config = TwoStageConfig::new(0.5, 32.0, 0.02).unwrap();
    let results: Vec<(bool, f64, bool)> = (0..50u64)
        .into_par_iter()
        .map(|i| {
            let mut irng = substream(SEED, "two-stage-instance", &[i]);
            let (a, p) = random_instance_in(2, 2, &config.target, &mut irng).unwrap();
            let exact = build_prop2_operator(&a, &p).unwrap().expectation();
            let r = two_stage_estimate(&a, &p, &config, &mut substream(SEED, "two-stage", &[i])).unwrap();
            ((r.value - exact).abs() <= config.epsilon, r.measurements as f64, r.path == alpha_vqe::expectation::EstimatePath::AlphaQpe)
        })
        .collect();
    let within = results.iter().filter(|r| r.0).count();
    let alpha_path = results.iter().filter(|r| r.2).count();
    let med = median(&results.iter().map(|r| r.1).collect::<Vec<_>>());
    verdict(
        within >= 45 && med < 2500.0,
        format!("{within}/50 within epsilon (need 45); median measurements {med} (need < 2500); {alpha_path}/50 on the phase path"),
    )
}

// 8. Variational loop on the bundled one-qubit Hamiltonian.
fn vqe_end_to_end() -> Verdict {
    let h = load_hamiltonian_file(&bundled("one_qubit.txt")).unwrap();
    let e_min = h.ground_energy();
    let template = Ansatz::zeros(1, 1).unwrap();
    let exact = optimize(&h, &template, &NelderMeadConfig::default(), &EstimationMode::Exact, 0.0, SEED).unwrap();
    let exact_gap = (exact.best_energy - e_min).abs();

    let mode = EstimationMode::Alpha(TwoStageConfig::new(0.5, 32.0, 0.01).unwrap());
    let nm = NelderMeadConfig { max_iters: 200, initial_spread: 0.5, tolerance: 1e-3 };
    let outcomes: Vec<(bool, f64, f64)> = (0..20u64)
        .into_par_iter()
        .map(|s| {
            let r = optimize(&h, &template, &nm, &mode, 0.01, derive_seed(SEED, "vqe", &[s])).unwrap();
            let true_energy = h.expectation(&prepare(&template.with_params(r.best_lambda.clone()).unwrap())).unwrap();
            let ok = (r.best_energy - e_min).abs() <= 0.02 && (true_energy - e_min).abs() <= 0.02 && r.history.len() <= 201;
            (ok, r.best_energy - e_min, true_energy - e_min)
        })
        .collect();
    let hits = outcomes.iter().filter(|o| o.0).count();
    let worst_true = outcomes.iter().map(|o| o.2.abs()).fold(0.0, f64::max);
    verdict(
        hits >= 16 && exact_gap <= 1e-6,
        format!(
            "exact mode gap {exact_gap:.2e} (limit 1e-6); alpha mode {hits}/20 seeds within 0.02 (need 16), worst true-energy gap {worst_true:.4}"
        ),
    )
}

// 9. More depth, fewer measurements.
fn acceleration_monotonicity() -> Verdict {
    let (eps, d_max) = (0.05, 16.0);
    let a_max = alpha_max(eps, d_max);
    let mut medians = Vec::new();
    for (ai, alpha) in [0.0, a_max / 2.0, a_max].into_iter().enumerate() {
        let policy = SchedulePolicy::alpha_qpe(alpha).unwrap().with_depth_cap(d_max).unwrap();
        let counts: Vec<f64> = (0..50u64)
            .into_par_iter()
            .map(|s| {
                let phi = substream(SEED, "accel-phase", &[ai as u64, s]).random_range(-PI..PI);
                let mut oracle = SyntheticOracle::new(phi).unwrap();
                run_estimation(
                    &mut oracle,
                    &policy,
                    NormalBelief::default(),
                    StopRule::precision(eps),
                    DEFAULT_PARTICLES,
                    derive_seed(SEED, "accel-run", &[ai as u64, s]),
                )
                .unwrap()
                .trace
                .measurements() as f64
            })
            .collect();
        medians.push(median(&counts));
    }
    verdict(
        medians[0] > medians[1] && medians[1] > medians[2],
        format!(
            "alpha 0 / {:.4} / {a_max:.4}: median measurements {} / {} / {}",
            a_max / 2.0,
            medians[0],
            medians[1],
            medians[2]
        ),
    )
}

type Criterion = (&'static str, fn() -> Verdict, Duration);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("bayes-risk identity", bayes_risk_identity, Duration::from_secs(10)),
        ("contraction constants", contraction_constants, Duration::from_secs(120)),
        ("precision law", precision_law, Duration::from_secs(600)),
        ("trade-off tables", tradeoff_tables, Duration::from_secs(1)),
        ("circuit-formula equivalence", circuit_equivalence, Duration::from_secs(60)),
        ("collapse protocol", collapse_protocol, Duration::from_secs(30)),
        ("two-stage estimator", two_stage_end_to_end, Duration::from_secs(300)),
        ("variational loop", vqe_end_to_end, Duration::from_secs(300)),
        ("acceleration monotonicity", acceleration_monotonicity, Duration::from_secs(300)),
    ];
    let only: Option<usize> = std::env::args().nth(1).and_then(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        if only.is_some_and(|n| n != i + 1) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *limit;
        let pass = v.pass && in_time;
        failed += (!pass) as usize;
        println!(
            "criterion {}: {} [{}] {} ({:.1} s, limit {} s{})",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            name,
            v.detail,
            elapsed.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { ", over time" }
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
