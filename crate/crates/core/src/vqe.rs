//! Hamiltonians as weighted Pauli sums, energy estimation and the variational loop.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expectation::{sample_mean_of, two_stage_estimate, EstimatePath, TwoStageConfig};
use crate::optimizer::{nelder_mead, Evaluation, NelderMeadConfig};
use crate::rng::{substream, StreamRng};
use crate::statevector::{pauli_expectation, prepare, Ansatz, PauliString, StateVector};

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coefficient: f64,
    pub pauli: PauliString,
}

/// `H = sum_i a_i P_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    terms: Vec<Term>,
    n_qubits: usize,
}

impl Hamiltonian {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        let first = terms.first().ok_or_else(|| Error::invalid("Hamiltonian has no terms"))?;
        let n_qubits = first.pauli.n_qubits();
        for t in &terms {
            if t.pauli.n_qubits() != n_qubits {
                return Err(Error::DimensionMismatch { expected: n_qubits, actual: t.pauli.n_qubits() });
            }
            if !t.coefficient.is_finite() || t.coefficient == 0.0 {
                return Err(Error::invalid(format!("coefficient of {} must be finite and nonzero", t.pauli)));
            }
        }
        Ok(Self { terms, n_qubits })
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// `sum_i |a_i|`.
    pub fn one_norm(&self) -> f64 {
        self.terms.iter().map(|t| t.coefficient.abs()).sum()
    }

    /// Exact `<psi|H|psi>`.
    pub fn expectation(&self, state: &StateVector) -> Result<f64> {
        self.terms
            .iter()
            .map(|t| Ok(t.coefficient * pauli_expectation(state, &t.pauli)?))
            .sum()
    }

    /// Dense matrix in the computational basis.
    pub fn matrix(&self) -> DMatrix<Complex64> {
        let dim = 1 << self.n_qubits;
        let mut m = DMatrix::<Complex64>::zeros(dim, dim);
        for c in 0..dim {
            for t in &self.terms {
                let mut v = StateVector::basis(self.n_qubits, c).expect("valid basis index");
                v.apply_pauli(&t.pauli).expect("dimensions match");
                for (r, amp) in v.amplitudes().iter().enumerate() {
                    m[(r, c)] += amp * t.coefficient;
                }
            }
        }
        m
    }

    /// Smallest eigenvalue, by dense Hermitian diagonalisation.
    pub fn ground_energy(&self) -> f64 {
        self.matrix().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl fmt::Display for Hamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.terms.iter().try_for_each(|t| writeln!(f, "{} {}", t.coefficient, t.pauli))
    }
}

impl FromStr for Hamiltonian {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        load_hamiltonian(s)
    }
}

/// Parses one term per line as `<coefficient> <pauli-letters>`; `#` starts a
/// comment and blank lines are skipped.
pub fn load_hamiltonian(text: &str) -> Result<Hamiltonian> {
    let mut terms = Vec::new();
    let mut n_qubits = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| Error::Parse { line: line_no, message };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [coef, letters] = fields[..] else {
            return Err(err(format!("expected `<coefficient> <pauli>`, got \"{line}\"")));
        };
        let coefficient: f64 = coef.parse().map_err(|_| err(format!("invalid coefficient \"{coef}\"")))?;
        if !coefficient.is_finite() || coefficient == 0.0 {
            return Err(err(format!("coefficient must be finite and nonzero, got {coef}")));
        }
        let pauli: PauliString = letters.parse().map_err(|e: Error| err(e.to_string()))?;
        match n_qubits {
            None => n_qubits = Some(pauli.n_qubits()),
            Some(n) if n != pauli.n_qubits() => {
                return Err(err(format!("term {pauli} acts on {} qubits, earlier terms on {n}", pauli.n_qubits())));
            }
            Some(_) => {}
        }
        terms.push(Term { coefficient, pauli });
    }
    if terms.is_empty() {
        return Err(Error::Parse { line: 0, message: "no terms".into() });
    }
    Hamiltonian::new(terms)
}

pub fn load_hamiltonian_file(path: &Path) -> Result<Hamiltonian> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    load_hamiltonian(&text)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimationMode {
    Exact,
    Statistical,
    /// Two-stage estimator; its `epsilon` is replaced by the per-term share.
    Alpha(TwoStageConfig),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermEstimate {
    pub value: f64,
    pub measurements: u64,
    pub path: Option<EstimatePath>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyEstimate {
    pub energy: f64,
    pub measurements: u64,
    pub terms: Vec<TermEstimate>,
}

/// Per-term precision under the uniform split `epsilon_total / sum |a_i|`.
pub fn term_precision(h: &Hamiltonian, epsilon_total: f64) -> f64 {
    epsilon_total / h.one_norm()
}

/// Estimates `<psi(lambda)|H|psi(lambda)>`. Terms run concurrently, each on
/// its own substream of a seed drawn from `rng`.
pub fn estimate_energy(
    h: &Hamiltonian,
    ansatz: &Ansatz,
    mode: &EstimationMode,
    epsilon_total: f64,
    rng: &mut StreamRng,
) -> Result<EnergyEstimate> {
    if ansatz.n_qubits() != h.n_qubits() {
        return Err(Error::DimensionMismatch { expected: h.n_qubits(), actual: ansatz.n_qubits() });
    }
    let state = prepare(ansatz);
    if let EstimationMode::Exact = mode {
        let terms: Vec<TermEstimate> = h
            .terms
            .iter()
            .map(|t| Ok(TermEstimate { value: pauli_expectation(&state, &t.pauli)?, measurements: 0, path: None }))
            .collect::<Result<_>>()?;
        let energy = h.terms.iter().zip(&terms).map(|(t, e)| t.coefficient * e.value).sum();
        return Ok(EnergyEstimate { energy, measurements: 0, terms });
    }
    if !(epsilon_total > 0.0) {
        return Err(Error::invalid(format!("epsilon_total must be positive, got {epsilon_total}")));
    }
    let eps = term_precision(h, epsilon_total);
    let seed: u64 = rng.random();
    let terms: Vec<TermEstimate> = h
        .terms
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            if t.pauli.is_identity() {
                return Ok(TermEstimate { value: 1.0, measurements: 0, path: None });
            }
            let mut term_rng = substream(seed, "term", &[i as u64]);
            match mode {
                EstimationMode::Exact => unreachable!("handled above"),
                EstimationMode::Statistical => {
                    let shots = (1.0 / (eps * eps)).ceil() as usize;
                    let a = pauli_expectation(&state, &t.pauli)?;
                    let (value, _) = sample_mean_of(a, shots, &mut term_rng)?;
                    Ok(TermEstimate { value, measurements: shots as u64, path: Some(EstimatePath::StatisticalFallback) })
                }
                EstimationMode::Alpha(config) => {
                    let config = TwoStageConfig { epsilon: eps, ..*config };
                    let r = two_stage_estimate(ansatz, &t.pauli, &config, &mut term_rng)?;
                    Ok(TermEstimate { value: r.value, measurements: r.measurements as u64, path: Some(r.path) })
                }
            }
        })
        .collect::<Result<_>>()?;
    let energy = h.terms.iter().zip(&terms).map(|(t, e)| t.coefficient * e.value).sum();
    let measurements = terms.iter().map(|e| e.measurements).sum();
    Ok(EnergyEstimate { energy, measurements, terms })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub lambda: Vec<f64>,
    pub energy: f64,
    /// Measurements spent so far.
    pub measurements: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VqeResult {
    pub best_lambda: Vec<f64>,
    pub best_energy: f64,
    pub history: Vec<HistoryEntry>,
    pub converged: bool,
    pub evaluations: usize,
}

/// Minimises the estimated energy over the ansatz parameters, starting from
/// the template's parameters. Evaluation `j` uses substream `("energy", j)`.
pub fn optimize(
    h: &Hamiltonian,
    template: &Ansatz,
    config: &NelderMeadConfig,
    mode: &EstimationMode,
    epsilon_total: f64,
    seed: u64,
) -> Result<VqeResult> {
    let mut calls = 0u64;
    let objective = |lambda: &[f64]| {
        let ansatz = template.with_params(lambda.to_vec())?;
        let mut rng = substream(seed, "energy", &[calls]);
        calls += 1;
        let e = estimate_energy(h, &ansatz, mode, epsilon_total, &mut rng)?;
        Ok(Evaluation { value: e.energy, cost: e.measurements })
    };
    let m = nelder_mead(objective, template.params(), config)?;
    let history: Vec<HistoryEntry> = m
        .history
        .into_iter()
        .map(|s| HistoryEntry { iteration: s.iteration, lambda: s.point, energy: s.value, measurements: s.cost })
        .collect();
    let best = history
        .iter()
        .min_by(|a, b| a.energy.total_cmp(&b.energy))
        .expect("history holds the starting point");
    Ok(VqeResult {
        best_lambda: best.lambda.clone(),
        best_energy: best.energy,
        converged: m.converged,
        evaluations: m.evaluations,
        history,
    })
}
