//! The iterative phase-estimation loop.
//!
//! Each iteration asks the policy for a setting `(M, theta)` given the current
//! belief, obtains one outcome from a [`PhaseOracle`], and replaces the belief
//! with the rejection-filter posterior. Settings depend on the previous
//! posterior, so a single run is strictly sequential; independent runs in an
//! [`ensemble_run`] fan out across threads, each on its own random stream.

use std::f64::consts::PI;
use std::ops::RangeInclusive;

use rand::Rng;
use rayon::prelude::*;

use crate::bayes::{
    likelihood, rejection_filter_update_with, ExperimentSetting, NormalBelief, Outcome,
};
use crate::error::{Error, Result};
use crate::rng::{stream, substream, StreamRng};
use crate::schedule::{PowerMode, SchedulePolicy};
use crate::statevector::{run_fig1_circuit, PowerSign, Prop2Operator, StateVector};
use crate::stats::{mean, median};

/// Iteration cap that turns a run that never meets its stopping rule into an error.
pub const MAX_ITERATIONS: usize = 1_000_000;

/// One ancilla outcome together with the number of circuit executions it cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub outcome: Outcome,
    pub shots: usize,
}

/// Source of measurement outcomes for the estimator.
pub trait PhaseOracle {
    fn power_mode(&self) -> PowerMode;

    fn observe(&mut self, setting: &ExperimentSetting, rng: &mut StreamRng) -> Result<Observation>;

    /// Likelihood the estimator assumes for `e` under hypothesis `phi`.
    fn likelihood(&self, e: Outcome, phi: f64, setting: &ExperimentSetting) -> f64 {
        likelihood(e, phi, setting)
    }
}

/// Samples outcomes straight from the single-ancilla likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticOracle {
    true_phi: f64,
}

impl SyntheticOracle {
    pub fn new(true_phi: f64) -> Result<Self> {
        if !(-PI..PI).contains(&true_phi) {
            return Err(Error::invalid(format!("true phase must lie in [-pi, pi), got {true_phi}")));
        }
        Ok(Self { true_phi })
    }

    pub fn true_phi(&self) -> f64 {
        self.true_phi
    }
}

impl PhaseOracle for SyntheticOracle {
    fn power_mode(&self) -> PowerMode {
        PowerMode::Real
    }

    fn observe(&mut self, setting: &ExperimentSetting, rng: &mut StreamRng) -> Result<Observation> {
        let p0 = likelihood(Outcome::Zero, self.true_phi, setting);
        let outcome = if rng.random::<f64>() < p0 { Outcome::Zero } else { Outcome::One };
        Ok(Observation { outcome, shots: 1 })
    }
}

/// Runs the ancilla circuit on a freshly prepared eigenstate every iteration.
#[derive(Debug, Clone)]
pub struct EigenstateOracle<'a> {
    op: &'a Prop2Operator,
    eigenstate: StateVector,
    sign: PowerSign,
}

impl<'a> EigenstateOracle<'a> {
    pub fn new(op: &'a Prop2Operator, eigenstate: StateVector, sign: PowerSign) -> Result<Self> {
        if eigenstate.n_qubits() != op.n_qubits() {
            return Err(Error::DimensionMismatch {
                expected: op.n_qubits(),
                actual: eigenstate.n_qubits(),
            });
        }
        Ok(Self { op, eigenstate, sign })
    }

    /// Oracle on the `+phi` eigenstate of `op`, driven by forward powers.
    pub fn plus_branch(op: &'a Prop2Operator) -> Result<Self> {
        let (plus, _) = op
            .eigenstates()
            .ok_or_else(|| Error::invalid("operator has no rotation plane (|A| = 1)"))?;
        Self::new(op, plus, PowerSign::Forward)
    }
}

impl PhaseOracle for EigenstateOracle<'_> {
    fn power_mode(&self) -> PowerMode {
        PowerMode::Integer
    }

    fn observe(&mut self, setting: &ExperimentSetting, rng: &mut StreamRng) -> Result<Observation> {
        let prepared = self.eigenstate.clone();
        let run = run_fig1_circuit(&prepared, self.op, setting, self.sign, rng)?;
        Ok(Observation { outcome: run.outcome, shots: 1 })
    }
}

/// When to stop iterating. Whichever condition is met first wins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub target_sigma: Option<f64>,
    pub max_iterations: Option<usize>,
    pub hard_cap: usize,
}

impl StopRule {
    pub fn precision(epsilon: f64) -> Self {
        Self { target_sigma: Some(epsilon), max_iterations: None, hard_cap: MAX_ITERATIONS }
    }

    pub fn iterations(k_max: usize) -> Self {
        Self { target_sigma: None, max_iterations: Some(k_max), hard_cap: MAX_ITERATIONS }
    }

    pub fn with_max_iterations(mut self, k_max: usize) -> Self {
        self.max_iterations = Some(k_max);
        self
    }

    pub fn with_hard_cap(mut self, cap: usize) -> Self {
        self.hard_cap = cap;
        self
    }

    fn validate(&self) -> Result<()> {
        match (self.target_sigma, self.max_iterations) {
            (None, None) => Err(Error::invalid("stop rule needs a precision or an iteration limit")),
            (Some(eps), _) if !(eps > 0.0) => {
                Err(Error::invalid(format!("target sigma must be positive, got {eps}")))
            }
            _ => Ok(()),
        }
    }

    fn reached(&self, k: usize, belief: &NormalBelief) -> bool {
        self.target_sigma.is_some_and(|eps| belief.sigma() <= eps)
            || self.max_iterations.is_some_and(|k_max| k >= k_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    /// Power used.
    pub m: f64,
    /// Power the policy asked for before integer rounding.
    pub m_unrounded: f64,
    pub theta: f64,
    pub outcome: Outcome,
    /// Posterior after this iteration.
    pub mu: f64,
    pub sigma: f64,
    pub starvation: bool,
    pub shots: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationTrace {
    pub seed: Option<u64>,
    pub prior: NormalBelief,
    pub rows: Vec<TraceRow>,
}

impl EstimationTrace {
    pub fn new(prior: NormalBelief, seed: Option<u64>) -> Self {
        Self { seed, prior, rows: Vec::new() }
    }

    /// Posterior standard deviation after `k` iterations (`k = 0` is the prior).
    pub fn sigma_at(&self, k: usize) -> Option<f64> {
        match k {
            0 => Some(self.prior.sigma()),
            _ => self.rows.get(k - 1).map(|r| r.sigma),
        }
    }

    pub fn mu_at(&self, k: usize) -> Option<f64> {
        match k {
            0 => Some(self.prior.mu()),
            _ => self.rows.get(k - 1).map(|r| r.mu),
        }
    }

    /// First iteration whose posterior standard deviation is at most `epsilon`.
    pub fn iterations_to(&self, epsilon: f64) -> Option<usize> {
        if self.prior.sigma() <= epsilon {
            return Some(0);
        }
        self.rows.iter().find(|r| r.sigma <= epsilon).map(|r| r.k)
    }

    pub fn measurements(&self) -> usize {
        self.rows.iter().map(|r| r.shots).sum()
    }

    pub fn final_belief(&self) -> NormalBelief {
        self.rows
            .last()
            .map(|r| NormalBelief::new(r.mu, r.sigma).expect("trace rows hold valid beliefs"))
            .unwrap_or(self.prior)
    }

    pub fn starved_updates(&self) -> usize {
        self.rows.iter().filter(|r| r.starvation).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimation {
    pub belief: NormalBelief,
    pub trace: EstimationTrace,
}

/// Runs the estimator on a stream seeded with `seed`.
pub fn run_estimation<O: PhaseOracle + ?Sized>(
    oracle: &mut O,
    policy: &SchedulePolicy,
    prior: NormalBelief,
    stop: StopRule,
    particles: usize,
    seed: u64,
) -> Result<Estimation> {
    let mut rng = stream(seed);
    let mut est = run_estimation_with(oracle, policy, prior, stop, particles, &mut rng)?;
    est.trace.seed = Some(seed);
    Ok(est)
}

/// Runs the estimator on a caller-owned stream.
pub fn run_estimation_with<O: PhaseOracle + ?Sized>(
    oracle: &mut O,
    policy: &SchedulePolicy,
    prior: NormalBelief,
    stop: StopRule,
    particles: usize,
    rng: &mut StreamRng,
) -> Result<Estimation> {
    stop.validate()?;
    let mode = oracle.power_mode();
    let mut trace = EstimationTrace::new(prior, None);
    let mut belief = prior;
    let mut k = 0;
    while !stop.reached(k, &belief) {
        if k >= stop.hard_cap {
            return Err(Error::Timeout { iterations: k, partial: Box::new(trace) });
        }
        let setting = policy.next_setting(&belief, mode);
        let obs = oracle.observe(&setting, rng)?;
        let update = rejection_filter_update_with(
            &belief,
            |phi| oracle.likelihood(obs.outcome, phi, &setting),
            particles,
            rng,
        )?;
        k += 1;
        trace.rows.push(TraceRow {
            k,
            m: setting.m,
            m_unrounded: policy.proposed_power(&belief),
            theta: setting.theta,
            outcome: obs.outcome,
            mu: update.belief.mu(),
            sigma: update.belief.sigma(),
            starvation: update.starved,
            shots: obs.shots,
        });
        belief = update.belief;
    }
    Ok(Estimation { belief, trace })
}

/// `min_j |a - b - 2 pi j|`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    (a - b + PI).rem_euclid(2.0 * PI) - PI
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    pub policy: SchedulePolicy,
    pub prior: NormalBelief,
    pub n_phases: usize,
    pub iterations: usize,
    pub particles: usize,
    pub seed: u64,
}

impl EnsembleConfig {
    pub fn new(policy: SchedulePolicy) -> Self {
        Self {
            policy,
            prior: NormalBelief::default(),
            n_phases: 200,
            iterations: 60,
            particles: crate::bayes::DEFAULT_PARTICLES,
            seed: 0,
        }
    }
}

/// Fixed-length synthetic runs over uniformly random true phases.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub true_phases: Vec<f64>,
    pub traces: Vec<EstimationTrace>,
}

/// Per-iteration aggregates across an ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleRow {
    pub k: usize,
    pub mean_sigma: f64,
    pub median_sigma: f64,
    pub median_error: f64,
    /// Mean of `sigma_k^2 / sigma_{k-1}^2`; NaN at `k = 0`.
    pub variance_ratio: f64,
}

pub fn ensemble_run(config: &EnsembleConfig) -> Result<Ensemble> {
    if config.n_phases == 0 {
        return Err(Error::invalid("ensemble needs at least one phase"));
    }
    let runs: Vec<(f64, EstimationTrace)> = (0..config.n_phases as u64)
        .into_par_iter()
        .map(|i| {
            let phi = substream(config.seed, "true-phase", &[i]).random_range(-PI..PI);
            let mut oracle = SyntheticOracle::new(phi)?;
            let mut rng = substream(config.seed, "run", &[i]);
            let est = run_estimation_with(
                &mut oracle,
                &config.policy,
                config.prior,
                StopRule::iterations(config.iterations),
                config.particles,
                &mut rng,
            )?;
            Ok((phi, est.trace))
        })
        .collect::<Result<_>>()?;
    let (true_phases, traces) = runs.into_iter().unzip();
    Ok(Ensemble { true_phases, traces })
}

impl Ensemble {
    pub fn iterations(&self) -> usize {
        self.traces.iter().map(|t| t.rows.len()).min().unwrap_or(0)
    }

    pub fn rows(&self) -> Vec<EnsembleRow> {
        (0..=self.iterations())
            .map(|k| {
                let sigmas: Vec<f64> = self.traces.iter().filter_map(|t| t.sigma_at(k)).collect();
                let errors: Vec<f64> = self
                    .traces
                    .iter()
                    .zip(&self.true_phases)
                    .filter_map(|(t, &phi)| t.mu_at(k).map(|mu| circular_distance(mu, phi).abs()))
                    .collect();
                EnsembleRow {
                    k,
                    mean_sigma: mean(&sigmas),
                    median_sigma: median(&sigmas),
                    median_error: median(&errors),
                    variance_ratio: if k == 0 { f64::NAN } else { self.variance_ratio(k..=k) },
                }
            })
            .collect()
    }

    /// Mean of `sigma_k^2 / sigma_{k-1}^2` over all runs and `k` in `ks`.
    pub fn variance_ratio(&self, ks: RangeInclusive<usize>) -> f64 {
        let ratios: Vec<f64> = self
            .traces
            .iter()
            .flat_map(|t| {
                ks.clone().filter_map(move |k| {
                    let prev = t.sigma_at(k.checked_sub(1)?)?;
                    let cur = t.sigma_at(k)?;
                    Some((cur / prev).powi(2))
                })
            })
            .collect();
        mean(&ratios)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::predicted_iterations;
    use crate::statevector::{build_prop2_operator, Ansatz, PauliString};
    use crate::stats::median;

    fn prior(mu: f64, sigma: f64) -> NormalBelief {
        NormalBelief::new(mu, sigma).unwrap()
    }

    #[test]
    fn zero_iterations_returns_prior() {
        let mut oracle = SyntheticOracle::new(0.4).unwrap();
        let p = prior(0.1, 0.9);
        let est = run_estimation(&mut oracle, &SchedulePolicy::alpha_qpe(1.0).unwrap(), p, StopRule::iterations(0), 600, 1).unwrap();
        assert_eq!(est.belief, p);
        assert!(est.trace.rows.is_empty());
    }

    #[test]
    fn runs_are_deterministic() {
        let policy = SchedulePolicy::alpha_qpe(0.5).unwrap();
        let run = || {
            let mut oracle = SyntheticOracle::new(-1.2).unwrap();
            run_estimation(&mut oracle, &policy, NormalBelief::default(), StopRule::iterations(40), 600, 42).unwrap()
        };
        assert_eq!(run().trace, run().trace);
    }

    #[test]
    fn trace_rows_follow_the_policy() {
        let policy = SchedulePolicy::alpha_qpe(0.75).unwrap();
        let mut oracle = SyntheticOracle::new(0.7).unwrap();
        let est = run_estimation(&mut oracle, &policy, NormalBelief::default(), StopRule::iterations(50), 600, 3).unwrap();
        let mut belief = est.trace.prior;
        for (i, row) in est.trace.rows.iter().enumerate() {
            assert_eq!(row.k, i + 1);
            let s = policy.next_setting(&belief, PowerMode::Real);
            assert_eq!((row.m, row.theta), (s.m, s.theta));
            assert!(row.sigma > 0.0);
            belief = NormalBelief::new(row.mu, row.sigma).unwrap();
        }
    }

    #[test]
    fn statistical_sampling_stays_at_unit_power() {
        let mut oracle = SyntheticOracle::new(2.0).unwrap();
        let est = run_estimation(&mut oracle, &SchedulePolicy::statistical(), NormalBelief::default(), StopRule::iterations(200), 300, 9).unwrap();
        assert!(est.trace.rows.iter().all(|r| r.m == 1.0));
    }

    #[test]
    fn synthetic_outcomes_follow_likelihood() {
        let mut oracle = SyntheticOracle::new(0.3).unwrap();
        let s = ExperimentSetting::new(3.0, -0.2);
        let mut rng = stream(17);
        let n = 100_000;
        let zeros = (0..n)
            .filter(|_| oracle.observe(&s, &mut rng).unwrap().outcome == Outcome::Zero)
            .count() as f64;
        let p = likelihood(Outcome::Zero, 0.3, &s);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((zeros / n as f64 - p).abs() < 3.0 * se);
    }

    #[test]
    fn invalid_true_phase() {
        assert!(SyntheticOracle::new(PI).is_err());
        assert!(SyntheticOracle::new(-PI).is_ok());
    }

    #[test]
    fn timeout_carries_partial_trace() {
        let mut oracle = SyntheticOracle::new(0.0).unwrap();
        let stop = StopRule::precision(1e-9).with_hard_cap(25);
        let err = run_estimation(&mut oracle, &SchedulePolicy::statistical(), NormalBelief::default(), stop, 100, 0).unwrap_err();
        match err {
            Error::Timeout { iterations, partial } => {
                assert_eq!(iterations, 25);
                assert_eq!(partial.rows.len(), 25);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn alpha_one_reaches_fine_precision_near_prediction() {
        // Start at sigma0 = 0.5; the law measured from sigma0 predicts 4 ln(sigma0 / eps).
        let eps = 1e-3;
        let predicted = 4.0 * (0.5f64 / eps).ln();
        let policy = SchedulePolicy::alpha_qpe(1.0).unwrap();
        let ks: Vec<f64> = (0..100)
            .map(|seed| {
                let mut oracle = SyntheticOracle::new(0.0).unwrap();
                let est = run_estimation(&mut oracle, &policy, prior(0.0, 0.5), StopRule::precision(eps), 600, seed).unwrap();
                est.trace.rows.len() as f64
            })
            .collect();
        let med = median(&ks);
        assert!(med <= 1.5 * predicted && med >= predicted / 1.5, "median {med} vs {predicted}");
    }

    #[test]
    fn alpha_half_matches_law() {
        let policy = SchedulePolicy::alpha_qpe(0.5).unwrap();
        let ks: Vec<f64> = (0..60)
            .map(|seed| {
                let phi = substream(5, "phi", &[seed]).random_range(-PI..PI);
                let mut oracle = SyntheticOracle::new(phi).unwrap();
                let est = run_estimation(&mut oracle, &policy, NormalBelief::default(), StopRule::precision(0.05), 600, seed).unwrap();
                est.trace.rows.len() as f64
            })
            .collect();
        let f = predicted_iterations(0.05, 0.5);
        let med = median(&ks);
        assert!(med <= 1.5 * f && med >= f / 1.5, "median {med} vs {f}");
    }

    #[test]
    fn circular_distance_wraps() {
        assert!((circular_distance(3.1, -3.1) - (6.2 - 2.0 * PI)).abs() < 1e-12);
        assert!((circular_distance(0.5, 0.2) - 0.3).abs() < 1e-12);
        assert!(circular_distance(7.0, 7.0 - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn empty_ensemble_keeps_prior() {
        let mut cfg = EnsembleConfig::new(SchedulePolicy::alpha_qpe(1.0).unwrap());
        cfg.n_phases = 5;
        cfg.iterations = 0;
        let ens = ensemble_run(&cfg).unwrap();
        let rows = ens.rows();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].mean_sigma, 1.0);
        assert_eq!(rows[0].median_sigma, 1.0);
    }

    #[test]
    fn ensemble_error_decreases_for_alpha_one() {
        let mut cfg = EnsembleConfig::new(SchedulePolicy::alpha_qpe(1.0).unwrap());
        cfg.n_phases = 60;
        cfg.iterations = 40;
        cfg.seed = 8;
        let rows = ensemble_run(&cfg).unwrap().rows();
        assert!(rows[40].median_error < 0.1 * rows[0].median_error);
        assert!(rows[40].mean_sigma < rows[10].mean_sigma);
    }

    #[test]
    fn eigenstate_oracle_estimates_rotation_angle() {
        let ansatz = Ansatz::new(2, 1, vec![0.9, -0.4]).unwrap();
        let op = build_prop2_operator(&ansatz, &"ZX".parse::<PauliString>().unwrap()).unwrap();
        let mut oracle = EigenstateOracle::plus_branch(&op).unwrap();
        let phi = op.eigenphase();
        let est = run_estimation(
            &mut oracle,
            &SchedulePolicy::alpha_qpe(0.5).unwrap(),
            prior(phi + 0.3, 0.5),
            StopRule::precision(0.02),
            600,
            4,
        )
        .unwrap();
        assert!(est.trace.rows.iter().all(|r| r.m.fract() == 0.0 && r.m >= 1.0));
        assert!((est.belief.mu() - phi).abs() < 0.1, "{} vs {phi}", est.belief.mu());
    }
}
