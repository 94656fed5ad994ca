//! Signed expectation values `<psi|P|psi>` under a depth budget.
//!
//! Stage 1 estimates `A = <psi|P|psi>` by plain sampling. If `|A|` lands in the
//! gate interval, the sign is taken from that estimate and the magnitude is
//! refined by phase estimation on the rotation `U`, whose eigenphase is
//! `phi = 2 arccos |A|`. Each phase-estimation step first collapses the prepared
//! state onto one eigenvector with two fixed ancilla measurements. Otherwise
//! the estimate falls back to sampling.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::bayes::{likelihood, ExperimentSetting, NormalBelief, Outcome, DEFAULT_PARTICLES};
use crate::error::{Error, Result};
use crate::phase::{run_estimation_with, Observation, PhaseOracle, StopRule, MAX_ITERATIONS};
use crate::rng::StreamRng;
use crate::schedule::{PowerMode, SchedulePolicy};
use crate::statevector::{
    build_prop2_operator, fig1_branches, pauli_expectation, prepare, run_fig1_circuit, Ansatz,
    PauliString, PowerSign, Prop2Operator, StateVector,
};

/// Closed real interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::invalid(format!("empty interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoStageConfig {
    pub stage1_samples: usize,
    pub stage1_tolerance: f64,
    /// Stage 1 passes when `|A_hat|` lies here.
    pub gate: Interval,
    /// Range `|A|` is assumed to occupy once the gate passes.
    pub target: Interval,
    pub alpha: f64,
    /// Largest power of `U` allowed in any circuit.
    pub d_max: f64,
    pub epsilon: f64,
    pub collapse_measurements: usize,
    /// Model an imperfect collapse in the likelihood.
    pub likelihood_mixture: bool,
    /// Feed the exact eigenstate instead of collapsing (for isolating the estimator).
    pub idealized: bool,
    pub particles: usize,
    /// Number of standard deviations `epsilon` should span: phase estimation
    /// stops at posterior sigma `2 epsilon / coverage` and the fallback takes
    /// `(coverage / epsilon)^2` shots. `1.0` gives the bare one-sigma budget.
    pub coverage: f64,
    pub max_iterations: usize,
}

/// Coverage factor used by [`TwoStageConfig::new`].
pub const DEFAULT_COVERAGE: f64 = 1.96;

impl TwoStageConfig {
    pub fn new(alpha: f64, d_max: f64, epsilon: f64) -> Result<Self> {
        let config = Self {
            stage1_samples: 1000,
            stage1_tolerance: 0.1,
            gate: Interval { lo: 0.36, hi: 0.85 },
            target: Interval { lo: (5.0 * PI / 12.0).cos(), hi: (PI / 12.0).cos() },
            alpha,
            d_max,
            epsilon,
            collapse_measurements: 2,
            likelihood_mixture: true,
            idealized: false,
            particles: DEFAULT_PARTICLES,
            coverage: DEFAULT_COVERAGE,
            max_iterations: MAX_ITERATIONS,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.stage1_tolerance;
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::invalid(format!("stage-1 tolerance must lie in (0, 1), got {t}")));
        }
        if !(self.gate.lo > 0.0 && self.gate.hi < 1.0 && self.gate.lo <= self.gate.hi) {
            return Err(Error::invalid("gate interval must lie inside (0, 1)"));
        }
        if !(self.target.lo > 0.0 && self.target.hi < 1.0 && self.target.lo <= self.target.hi) {
            return Err(Error::invalid("target interval must lie inside (0, 1)"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.d_max >= 2.0) {
            return Err(Error::invalid(format!(
                "d_max must be at least 2 to fit the collapse circuit, got {}",
                self.d_max
            )));
        }
        if self.collapse_measurements != 2 {
            return Err(Error::invalid("only the two-measurement collapse is supported"));
        }
        if self.stage1_samples == 0 {
            return Err(Error::invalid("stage 1 needs at least one sample"));
        }
        if !(self.coverage > 0.0) {
            return Err(Error::invalid("coverage factor must be positive"));
        }
        Ok(())
    }

    /// Stop threshold on the posterior sigma of `phi`.
    pub fn phase_precision(&self) -> f64 {
        2.0 * self.epsilon / self.coverage
    }

    /// Total shots on the sampling fallback, stage-1 shots included:
    /// `ceil((coverage / epsilon)^2)`.
    pub fn fallback_shots(&self) -> usize {
        (self.coverage / self.epsilon).powi(2).ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatePath {
    AlphaQpe,
    StatisticalFallback,
}

impl EstimatePath {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatePath::AlphaQpe => "alpha_qpe",
            EstimatePath::StatisticalFallback => "statistical_fallback",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectationResult {
    pub value: f64,
    /// Sign taken from the stage-1 estimate.
    pub sign: f64,
    pub stage1_estimate: f64,
    pub path: EstimatePath,
    pub measurements: usize,
    /// Largest coherent depth, in gate layers.
    pub max_depth: f64,
    /// Posterior sigma of `phi` on the phase path; standard error of the mean on the fallback.
    pub posterior_sigma: f64,
    pub iterations: usize,
    /// Collapse attempts discarded because the first outcome was 0.
    pub collapse_retries: usize,
}

/// Sample mean and standard error of `shots` Pauli measurements on `R(lambda)|0>`.
pub fn statistical_estimate(
    ansatz: &Ansatz,
    p: &PauliString,
    shots: usize,
    rng: &mut StreamRng,
) -> Result<(f64, f64)> {
    let a = pauli_expectation(&prepare(ansatz), p)?;
    sample_mean_of(a, shots, rng)
}

/// Mean and standard error of `shots` draws of ±1 with mean `a`.
pub fn sample_mean_of(a: f64, shots: usize, rng: &mut StreamRng) -> Result<(f64, f64)> {
    if shots == 0 {
        return Err(Error::invalid("need at least one shot"));
    }
    let p_plus = (0.5 * (1.0 + a)).clamp(0.0, 1.0);
    let plus = Binomial::new(shots as u64, p_plus)
        .map_err(|e| Error::invalid(e.to_string()))?
        .sample(rng);
    let n = shots as f64;
    let mean = (2.0 * plus as f64 - n) / n;
    let var = if shots > 1 { (1.0 - mean * mean) * n / (n - 1.0) } else { 0.0 };
    Ok((mean, (var / n).sqrt()))
}

/// `2 exp(-n t^2 / 2)`: bound on `P(|A - A_hat| >= t)` after `n` samples.
pub fn hoeffding_bound(n: usize, t: f64) -> f64 {
    2.0 * (-(n as f64) * t * t / 2.0).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage1 {
    pub passed: bool,
    pub a_hat: f64,
    pub sign: f64,
    pub shots: usize,
}

pub fn stage1_gate(ansatz: &Ansatz, p: &PauliString, config: &TwoStageConfig, rng: &mut StreamRng) -> Result<Stage1> {
    let a = pauli_expectation(&prepare(ansatz), p)?;
    stage1_from_expectation(a, config, rng)
}

fn stage1_from_expectation(a: f64, config: &TwoStageConfig, rng: &mut StreamRng) -> Result<Stage1> {
    let (a_hat, _) = sample_mean_of(a, config.stage1_samples, rng)?;
    Ok(Stage1 {
        passed: config.gate.contains(a_hat.abs()),
        a_hat,
        sign: if a_hat < 0.0 { -1.0 } else { 1.0 },
        shots: config.stage1_samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    fn power_sign(self) -> PowerSign {
        match self {
            Branch::Plus => PowerSign::Forward,
            Branch::Minus => PowerSign::Inverse,
        }
    }
}

/// First collapse measurement `(M, theta) = (2, 0)`.
pub fn first_collapse_setting() -> ExperimentSetting {
    ExperimentSetting::new(2.0, 0.0)
}

/// Second collapse measurement `(M, theta) = (1, b2 pi / 2)`.
pub fn second_collapse_setting(b2: Outcome) -> ExperimentSetting {
    ExperimentSetting::new(1.0, b2.bit() as f64 * FRAC_PI_2)
}

/// Branch the outcome pair points at; `None` when `b2 = 0` leaves both equally likely.
pub fn branch_for(b2: Outcome, b1: Outcome) -> Option<Branch> {
    match (b2, b1) {
        (Outcome::Zero, _) => None,
        (Outcome::One, Outcome::Zero) => Some(Branch::Plus),
        (Outcome::One, Outcome::One) => Some(Branch::Minus),
    }
}

/// One row of the collapse table: outcome probability and the probability that
/// the post-measurement state is `|+phi>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapseRow {
    pub b2: Outcome,
    pub b1: Outcome,
    pub probability: f64,
    pub plus_probability: f64,
}

/// Closed-form outcome table for the input `(|+phi> + |-phi>) / sqrt 2`, in the
/// order `(0,0), (0,1), (1,0), (1,1)`.
pub fn collapse_table(phi: f64) -> [CollapseRow; 4] {
    let (s, c) = phi.sin_cos();
    let (half_s, half_c) = (0.5 * phi).sin_cos();
    let row = |b2, b1, probability, plus_probability| CollapseRow { b2, b1, probability, plus_probability };
    [
        row(Outcome::Zero, Outcome::Zero, c * c * half_c * half_c, 0.5),
        row(Outcome::Zero, Outcome::One, c * c * half_s * half_s, 0.5),
        row(Outcome::One, Outcome::Zero, 0.5 * s * s, 0.5 * (1.0 + s)),
        row(Outcome::One, Outcome::One, 0.5 * s * s, 0.5 * (1.0 - s)),
    ]
}

/// The same table computed by running both measurements on the simulator.
pub fn simulated_collapse_table(op: &Prop2Operator) -> Result<[CollapseRow; 4]> {
    let (plus, _) = op
        .eigenstates()
        .ok_or_else(|| Error::invalid("operator has no rotation plane (|A| = 1)"))?;
    let mut rows = Vec::with_capacity(4);
    let first = fig1_branches(op.psi(), op, &first_collapse_setting(), PowerSign::Forward)?;
    for (b2, (p2, post2)) in [Outcome::Zero, Outcome::One].into_iter().zip(first) {
        let second = match &post2 {
            Some(state) => Some(fig1_branches(state, op, &second_collapse_setting(b2), PowerSign::Forward)?),
            None => None,
        };
        for (i, b1) in [Outcome::Zero, Outcome::One].into_iter().enumerate() {
            let (p1, post1) = match &second {
                Some(branches) => branches[i].clone(),
                None => (0.0, None),
            };
            let plus_probability = post1.map(|s| s.fidelity(&plus)).unwrap_or(0.5);
            rows.push(CollapseRow { b2, b1, probability: p2 * p1, plus_probability });
        }
    }
    Ok(rows.try_into().expect("four rows"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Collapse {
    pub state: StateVector,
    pub b2: Outcome,
    pub b1: Outcome,
    /// The eigenvector the state is closer to.
    pub branch: Branch,
    /// Exact overlap with that eigenvector.
    pub confidence: f64,
}

/// Runs the two collapse measurements on `psi`.
pub fn collapse_state(psi: &StateVector, op: &Prop2Operator, m: usize, rng: &mut StreamRng) -> Result<Collapse> {
    if m != 2 {
        return Err(Error::invalid(format!("only the two-measurement collapse is supported, got {m}")));
    }
    let first = run_fig1_circuit(psi, op, &first_collapse_setting(), PowerSign::Forward, rng)?;
    let second = run_fig1_circuit(&first.state, op, &second_collapse_setting(first.outcome), PowerSign::Forward, rng)?;
    let (branch, confidence) = match op.eigenstates() {
        Some((plus, minus)) => {
            let (fp, fm) = (second.state.fidelity(&plus), second.state.fidelity(&minus));
            if fp >= fm {
                (Branch::Plus, fp)
            } else {
                (Branch::Minus, fm)
            }
        }
        None => (Branch::Plus, 1.0),
    };
    Ok(Collapse { state: second.state, b2: first.outcome, b1: second.outcome, branch, confidence })
}

/// Phase oracle that re-prepares `|psi>`, collapses it and then runs the
/// policy's measurement with `U` or `U†` according to the collapse outcome.
#[derive(Debug, Clone)]
pub struct CollapsedOracle<'a> {
    op: &'a Prop2Operator,
    eigenstate: Option<StateVector>,
    mixture: bool,
    retries: usize,
}

impl<'a> CollapsedOracle<'a> {
    pub fn new(op: &'a Prop2Operator, mixture: bool) -> Self {
        Self { op, eigenstate: None, mixture, retries: 0 }
    }

    /// Skips the collapse and measures the exact `|+phi>` eigenstate.
    pub fn idealized(op: &'a Prop2Operator) -> Result<Self> {
        let (plus, _) = op
            .eigenstates()
            .ok_or_else(|| Error::invalid("operator has no rotation plane (|A| = 1)"))?;
        Ok(Self { op, eigenstate: Some(plus), mixture: false, retries: 0 })
    }

    pub fn retries(&self) -> usize {
        self.retries
    }
}

/// Probability that the state after outcomes `(1, b1)` is the branch the
/// outcome points at, as a function of the hypothesised phase.
fn branch_confidence(phi: f64) -> f64 {
    0.5 * (1.0 + phi.sin())
}

impl PhaseOracle for CollapsedOracle<'_> {
    fn power_mode(&self) -> PowerMode {
        PowerMode::Integer
    }

    fn observe(&mut self, setting: &ExperimentSetting, rng: &mut StreamRng) -> Result<Observation> {
        if let Some(state) = &self.eigenstate {
            let run = run_fig1_circuit(state, self.op, setting, PowerSign::Forward, rng)?;
            return Ok(Observation { outcome: run.outcome, shots: 1 });
        }
        let mut shots = 0;
        loop {
            let first = run_fig1_circuit(self.op.psi(), self.op, &first_collapse_setting(), PowerSign::Forward, rng)?;
            shots += 1;
            if first.outcome == Outcome::Zero {
                self.retries += 1;
                continue;
            }
            let second = run_fig1_circuit(&first.state, self.op, &second_collapse_setting(first.outcome), PowerSign::Forward, rng)?;
            shots += 1;
            let branch = branch_for(first.outcome, second.outcome).expect("first outcome is 1");
            let run = run_fig1_circuit(&second.state, self.op, setting, branch.power_sign(), rng)?;
            shots += 1;
            return Ok(Observation { outcome: run.outcome, shots });
        }
    }

    fn likelihood(&self, e: Outcome, phi: f64, setting: &ExperimentSetting) -> f64 {
        if !self.mixture {
            return likelihood(e, phi, setting);
        }
        let p = branch_confidence(phi);
        p * likelihood(e, phi, setting) + (1.0 - p) * likelihood(e, -phi, setting)
    }
}

/// Prior over `phi` implied by a passed stage 1: `|A|` within the Hoeffding
/// tolerance of `|A_hat|`, clipped to the target interval.
pub fn stage1_prior(a_hat: f64, config: &TwoStageConfig) -> Result<NormalBelief> {
    let t = config.stage1_tolerance;
    let hi = (a_hat.abs() + t).min(config.target.hi);
    let lo = (a_hat.abs() - t).max(config.target.lo);
    let (lo, hi) = if lo <= hi { (lo, hi) } else { (config.target.lo, config.target.hi) };
    let phi_lo = 2.0 * hi.acos();
    let phi_hi = 2.0 * lo.acos();
    NormalBelief::new(0.5 * (phi_lo + phi_hi), 0.5 * (phi_hi - phi_lo))
}

/// Full two-stage estimate of `<psi|P|psi>` for `|psi> = R(lambda)|0>`.
pub fn two_stage_estimate(
    ansatz: &Ansatz,
    p: &PauliString,
    config: &TwoStageConfig,
    rng: &mut StreamRng,
) -> Result<ExpectationResult> {
    config.validate()?;
    let op = build_prop2_operator(ansatz, p)?;
    let a = op.expectation();
    let stage1 = stage1_from_expectation(a, config, rng)?;
    let unit_depth = op.depth() as f64;

    if !stage1.passed {
        let total = config.fallback_shots().max(stage1.shots);
        let extra = total - stage1.shots;
        let (value, se) = if extra == 0 {
            let n = stage1.shots as f64;
            (stage1.a_hat, ((1.0 - stage1.a_hat.powi(2)) / (n - 1.0).max(1.0)).sqrt())
        } else {
            let (more, _) = sample_mean_of(a, extra, rng)?;
            let value = (stage1.a_hat * stage1.shots as f64 + more * extra as f64) / total as f64;
            let n = total as f64;
            (value, ((1.0 - value * value) / (n - 1.0)).sqrt())
        };
        return Ok(ExpectationResult {
            value,
            sign: stage1.sign,
            stage1_estimate: stage1.a_hat,
            path: EstimatePath::StatisticalFallback,
            measurements: total,
            max_depth: 0.0,
            posterior_sigma: se,
            iterations: 0,
            collapse_retries: 0,
        });
    }

    let prior = stage1_prior(stage1.a_hat, config)?;
    let policy = SchedulePolicy::alpha_qpe(config.alpha)?.with_depth_cap(config.d_max)?;
    let stop = StopRule::precision(config.phase_precision()).with_hard_cap(config.max_iterations);
    let mut oracle = if config.idealized {
        CollapsedOracle::idealized(&op)?
    } else {
        CollapsedOracle::new(&op, config.likelihood_mixture)
    };
    let est = run_estimation_with(&mut oracle, &policy, prior, stop, config.particles, rng)?;
    let phi_hat = est.belief.mu().clamp(0.0, PI);
    let max_power = est.trace.rows.iter().map(|r| r.m).fold(0.0, f64::max);
    let collapse_power = if config.idealized { 0.0 } else { 2.0 };
    Ok(ExpectationResult {
        value: stage1.sign * (0.5 * phi_hat).cos(),
        sign: stage1.sign,
        stage1_estimate: stage1.a_hat,
        path: EstimatePath::AlphaQpe,
        measurements: stage1.shots + est.trace.measurements(),
        max_depth: max_power.max(collapse_power) * unit_depth,
        posterior_sigma: est.belief.sigma(),
        iterations: est.trace.rows.len(),
        collapse_retries: oracle.retries(),
    })
}

/// Ansatz on one qubit whose `Z` expectation is `a`.
pub fn single_qubit_with_expectation(a: f64) -> Result<(Ansatz, PauliString)> {
    if !(-1.0..=1.0).contains(&a) {
        return Err(Error::invalid(format!("expectation must lie in [-1, 1], got {a}")));
    }
    Ok((Ansatz::new(1, 1, vec![a.acos()])?, "Z".parse()?))
}

/// Draws a random ansatz/Pauli pair on `n` qubits with `|A|` inside `within`.
pub fn random_instance_in(
    n: usize,
    layers: usize,
    within: &Interval,
    rng: &mut StreamRng,
) -> Result<(Ansatz, PauliString)> {
    const LETTERS: [char; 4] = ['I', 'X', 'Y', 'Z'];
    for _ in 0..100_000 {
        let params = (0..n * layers).map(|_| rng.random_range(-PI..PI)).collect();
        let ansatz = Ansatz::new(n, layers, params)?;
        let word: String = (0..n).map(|_| LETTERS[rng.random_range(0..4)]).collect();
        let p: PauliString = word.parse()?;
        if within.contains(pauli_expectation(&prepare(&ansatz), &p)?.abs()) {
            return Ok((ansatz, p));
        }
    }
    Err(Error::invalid("no instance found in the requested interval"))
}
