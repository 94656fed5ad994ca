//! Dense statevector simulation for small registers.
//!
//! Qubit `q` of an `n`-qubit register is bit `n - 1 - q` of the basis index, so
//! the Pauli string `"XZ"` is the Kronecker product `X ⊗ Z`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;

use crate::bayes::{ExperimentSetting, Outcome};
use crate::error::{Error, Result};

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Tensor product of single-qubit Paulis.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    letters: Vec<Pauli>,
}

impl PauliString {
    pub fn new(letters: Vec<Pauli>) -> Result<Self> {
        if letters.is_empty() || letters.len() > MAX_QUBITS {
            return Err(Error::invalid(format!(
                "Pauli string length must be 1..={MAX_QUBITS}, got {}",
                letters.len()
            )));
        }
        Ok(Self { letters })
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn n_qubits(&self) -> usize {
        self.letters.len()
    }

    pub fn is_identity(&self) -> bool {
        self.letters.iter().all(|&p| p == Pauli::I)
    }

    /// `(flip mask, sign mask, number of Y letters)` in basis-index bit positions.
    fn masks(&self) -> (usize, usize, usize) {
        let n = self.letters.len();
        let mut flip = 0;
        let mut sign = 0;
        let mut n_y = 0;
        for (q, &p) in self.letters.iter().enumerate() {
            let bit = 1 << (n - 1 - q);
            match p {
                Pauli::I => {}
                Pauli::X => flip |= bit,
                Pauli::Y => {
                    flip |= bit;
                    sign |= bit;
                    n_y += 1;
                }
                Pauli::Z => sign |= bit,
            }
        }
        (flip, sign, n_y)
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .chars()
            .map(|c| {
                Pauli::from_char(c)
                    .ok_or_else(|| Error::invalid(format!("invalid Pauli letter '{c}' in \"{s}\"")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(letters)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.letters.iter().try_for_each(|p| write!(f, "{}", p.as_char()))
    }
}

/// Normalised amplitude vector of an `n`-qubit register.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>`.
    pub fn zero(n: usize) -> Result<Self> {
        Self::basis(n, 0)
    }

    pub fn basis(n: usize, index: usize) -> Result<Self> {
        check_qubits(n)?;
        if index >= 1 << n {
            return Err(Error::invalid(format!("basis index {index} out of range for {n} qubits")));
        }
        let mut amps = vec![ZERO; 1 << n];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(Self { n, amps })
    }

    /// Normalises `amps`, whose length must be a power of two.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::invalid(format!("amplitude count {len} is not a power of two >= 2")));
        }
        let n = len.trailing_zeros() as usize;
        check_qubits(n)?;
        let mut state = Self { n, amps };
        state.normalise()?;
        Ok(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    /// `|<self|other>|^2`; insensitive to global phase.
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    fn normalise(&mut self) -> Result<f64> {
        let norm = self.norm_sqr().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::invalid("state has zero norm"));
        }
        self.amps.iter_mut().for_each(|a| *a /= norm);
        Ok(norm)
    }

    fn mask(&self, q: usize) -> usize {
        1 << (self.n - 1 - q)
    }

    pub fn apply_ry(&mut self, q: usize, angle: f64) {
        let (s, c) = (0.5 * angle).sin_cos();
        let bit = self.mask(q);
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | bit]);
                self.amps[i] = a0 * c - a1 * s;
                self.amps[i | bit] = a0 * s + a1 * c;
            }
        }
    }

    pub fn apply_cz(&mut self, a: usize, b: usize) {
        let mask = self.mask(a) | self.mask(b);
        self.amps.iter_mut().enumerate().for_each(|(i, amp)| {
            if i & mask == mask {
                *amp = -*amp;
            }
        });
    }

    pub fn apply_pauli(&mut self, p: &PauliString) -> Result<()> {
        self.check_dims(p.n_qubits())?;
        let (flip, sign, n_y) = p.masks();
        let global = Complex64::i().powu(n_y as u32);
        let mut out = vec![ZERO; self.amps.len()];
        for (b, &amp) in self.amps.iter().enumerate() {
            let parity = if (b & sign).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            out[b ^ flip] = amp * global * parity;
        }
        self.amps = out;
        Ok(())
    }

    /// `Pi = I - 2|0><0|`.
    pub fn reflect_about_zero(&mut self) {
        self.amps[0] = -self.amps[0];
    }

    fn check_dims(&self, n: usize) -> Result<()> {
        if n != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, actual: n });
        }
        Ok(())
    }
}

fn check_qubits(n: usize) -> Result<()> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::invalid(format!("qubit count must be 1..={MAX_QUBITS}, got {n}")));
    }
    Ok(())
}

/// Hardware-efficient preparation circuit `R(lambda)`.
///
/// Each layer applies `Ry(lambda)` to every qubit followed by a ring of CZ
/// gates (a single CZ for two qubits, none for one).
#[derive(Debug, Clone, PartialEq)]
pub struct Ansatz {
    n_qubits: usize,
    layers: usize,
    params: Vec<f64>,
}

impl Ansatz {
    pub fn new(n_qubits: usize, layers: usize, params: Vec<f64>) -> Result<Self> {
        check_qubits(n_qubits)?;
        if layers == 0 {
            return Err(Error::invalid("ansatz needs at least one layer"));
        }
        if params.len() != n_qubits * layers {
            return Err(Error::invalid(format!(
                "ansatz with {n_qubits} qubits and {layers} layers takes {} parameters, got {}",
                n_qubits * layers,
                params.len()
            )));
        }
        Ok(Self { n_qubits, layers, params })
    }

    pub fn zeros(n_qubits: usize, layers: usize) -> Result<Self> {
        Self::new(n_qubits, layers, vec![0.0; n_qubits * layers])
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn with_params(&self, params: Vec<f64>) -> Result<Self> {
        Self::new(self.n_qubits, self.layers, params)
    }

    /// Circuit depth in layers of gates.
    pub fn depth(&self) -> usize {
        let entangler = match self.n_qubits {
            1 => 0,
            2 => 1,
            n if n % 2 == 0 => 2,
            _ => 3,
        };
        self.layers * (1 + entangler)
    }

    fn entangle(&self, state: &mut StateVector) {
        match self.n_qubits {
            1 => {}
            2 => state.apply_cz(0, 1),
            n => (0..n).for_each(|q| state.apply_cz(q, (q + 1) % n)),
        }
    }

    pub fn apply(&self, state: &mut StateVector) -> Result<()> {
        state.check_dims(self.n_qubits)?;
        for layer in self.params.chunks(self.n_qubits) {
            for (q, &angle) in layer.iter().enumerate() {
                state.apply_ry(q, angle);
            }
            self.entangle(state);
        }
        Ok(())
    }

    pub fn apply_inverse(&self, state: &mut StateVector) -> Result<()> {
        state.check_dims(self.n_qubits)?;
        for layer in self.params.chunks(self.n_qubits).rev() {
            self.entangle(state);
            for (q, &angle) in layer.iter().enumerate() {
                state.apply_ry(q, -angle);
            }
        }
        Ok(())
    }
}

/// `R(lambda)|0...0>`.
pub fn prepare(ansatz: &Ansatz) -> StateVector {
    let mut state = StateVector::zero(ansatz.n_qubits).expect("ansatz qubit count is valid");
    ansatz.apply(&mut state).expect("dimensions match by construction");
    state
}

/// Exact `<psi|P|psi>`.
pub fn pauli_expectation(state: &StateVector, p: &PauliString) -> Result<f64> {
    let mut moved = state.clone();
    moved.apply_pauli(p)?;
    Ok(state.inner(&moved).re)
}

/// Draws `+1` or `-1` with probabilities `(1 ± <P>) / 2`.
pub fn sample_pauli_outcome<R: Rng + ?Sized>(state: &StateVector, p: &PauliString, rng: &mut R) -> Result<i8> {
    let a = pauli_expectation(state, p)?;
    Ok(if rng.random::<f64>() < 0.5 * (1.0 + a) { 1 } else { -1 })
}

/// Direction of the controlled power in the ancilla circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerSign {
    /// controlled-`U^M`
    Forward,
    /// controlled-`U^{-M}`
    Inverse,
}

/// `U = (R Pi R†)(P R Pi R† P)` for a fixed ansatz and Pauli string.
///
/// On the plane spanned by `|psi>` and `P|psi>` this is a rotation by
/// `2 arccos |<psi|P|psi>|`; it acts as the identity on the complement.
#[derive(Debug, Clone, PartialEq)]
pub struct Prop2Operator {
    ansatz: Ansatz,
    pauli: PauliString,
    psi: StateVector,
    overlap: f64,
}

pub fn build_prop2_operator(ansatz: &Ansatz, p: &PauliString) -> Result<Prop2Operator> {
    if p.n_qubits() != ansatz.n_qubits() {
        return Err(Error::DimensionMismatch { expected: ansatz.n_qubits(), actual: p.n_qubits() });
    }
    let psi = prepare(ansatz);
    let overlap = pauli_expectation(&psi, p)?;
    Ok(Prop2Operator { ansatz: ansatz.clone(), pauli: p.clone(), psi, overlap })
}

impl Prop2Operator {
    pub fn n_qubits(&self) -> usize {
        self.ansatz.n_qubits()
    }

    pub fn ansatz(&self) -> &Ansatz {
        &self.ansatz
    }

    pub fn pauli(&self) -> &PauliString {
        &self.pauli
    }

    /// The prepared state `|psi>`.
    pub fn psi(&self) -> &StateVector {
        &self.psi
    }

    /// `A = <psi|P|psi>`.
    pub fn expectation(&self) -> f64 {
        self.overlap
    }

    /// Gate layers in one application of `U`: four ansatz passes, two
    /// reflections and two Pauli layers.
    pub fn depth(&self) -> u64 {
        4 * self.ansatz.depth() as u64 + 4
    }

    /// `phi = 2 arccos |A|`, in `[0, pi]`.
    pub fn eigenphase(&self) -> f64 {
        2.0 * self.overlap.abs().min(1.0).acos()
    }

    // R Pi R†
    fn reflect_psi(&self, v: &mut StateVector) -> Result<()> {
        self.ansatz.apply_inverse(v)?;
        v.reflect_about_zero();
        self.ansatz.apply(v)
    }

    // P R Pi R† P
    fn reflect_moved(&self, v: &mut StateVector) -> Result<()> {
        v.apply_pauli(&self.pauli)?;
        self.reflect_psi(v)?;
        v.apply_pauli(&self.pauli)
    }

    pub fn apply(&self, v: &mut StateVector) -> Result<()> {
        self.reflect_moved(v)?;
        self.reflect_psi(v)
    }

    pub fn apply_inverse(&self, v: &mut StateVector) -> Result<()> {
        self.reflect_psi(v)?;
        self.reflect_moved(v)
    }

    /// `U^{±m}` as `m` successive applications.
    pub fn apply_power(&self, v: &mut StateVector, m: u32, sign: PowerSign) -> Result<()> {
        for _ in 0..m {
            match sign {
                PowerSign::Forward => self.apply(v)?,
                PowerSign::Inverse => self.apply_inverse(v)?,
            }
        }
        Ok(())
    }

    /// Eigenvectors `(|+phi>, |-phi>)` with `U|±phi> = e^{±i phi}|±phi>`, phases
    /// chosen so that `|psi> = (|+phi> + |-phi>) / sqrt 2`. `None` when `P|psi>`
    /// is parallel to `|psi>`.
    pub fn eigenstates(&self) -> Option<(StateVector, StateVector)> {
        let mut moved = self.psi.clone();
        moved.apply_pauli(&self.pauli).ok()?;
        let orth: Vec<Complex64> = moved
            .amps
            .iter()
            .zip(&self.psi.amps)
            .map(|(m, p)| m - p * self.overlap)
            .collect();
        let norm = orth.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return None;
        }
        let e2 = StateVector { n: self.psi.n, amps: orth.iter().map(|a| a / norm).collect() };
        let mut rotated = self.psi.clone();
        self.apply(&mut rotated).ok()?;
        let sin_beta = e2.inner(&rotated).re;

        let combine = |sign: f64| StateVector {
            n: self.psi.n,
            amps: self
                .psi
                .amps
                .iter()
                .zip(&e2.amps)
                .map(|(a, b)| (a + Complex64::i() * sign * b) * std::f64::consts::FRAC_1_SQRT_2)
                .collect(),
        };
        // (e1 - i e2)/sqrt2 has eigenvalue e^{i beta}
        let (lower, upper) = (combine(-1.0), combine(1.0));
        Some(if sin_beta >= 0.0 { (lower, upper) } else { (upper, lower) })
    }
}

/// Result of one execution of the single-ancilla circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig1Outcome {
    pub outcome: Outcome,
    /// Renormalised system state after the ancilla measurement.
    pub state: StateVector,
    /// Exact probability of `E = 0`.
    pub p0: f64,
}

/// Both measurement branches of the ancilla circuit: `(probability, post-state)`
/// for `E = 0` and `E = 1`. The post-state is `None` for a zero-probability branch.
pub fn fig1_branches(
    state: &StateVector,
    op: &Prop2Operator,
    setting: &ExperimentSetting,
    sign: PowerSign,
) -> Result<[(f64, Option<StateVector>); 2]> {
    state.check_dims(op.n_qubits())?;
    let m = setting.integer_power().ok_or_else(|| {
        Error::invalid(format!("circuit power must be a positive integer, got {}", setting.m))
    })?;
    let mut powered = state.clone();
    op.apply_power(&mut powered, m, sign)?;
    // ancilla |+>, Z(M theta) = diag(1, e^{-i M theta}), controlled U^{±M}, X-basis readout
    let kick = Complex64::from_polar(1.0, -setting.m * setting.theta);
    let branch = |parity: f64| {
        let amps: Vec<Complex64> = state
            .amps
            .iter()
            .zip(&powered.amps)
            .map(|(a, b)| 0.5 * (a + parity * kick * b))
            .collect();
        let p: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        let post = (p > 1e-300).then(|| StateVector::from_amplitudes(amps).expect("nonzero branch"));
        (p, post)
    };
    Ok([branch(1.0), branch(-1.0)])
}

/// Samples the ancilla circuit once.
pub fn run_fig1_circuit<R: Rng + ?Sized>(
    state: &StateVector,
    op: &Prop2Operator,
    setting: &ExperimentSetting,
    sign: PowerSign,
    rng: &mut R,
) -> Result<Fig1Outcome> {
    let [(p0, post0), (_, post1)] = fig1_branches(state, op, setting, sign)?;
    let p0 = p0.clamp(0.0, 1.0);
    let (outcome, post) = if rng.random::<f64>() < p0 {
        (Outcome::Zero, post0)
    } else {
        (Outcome::One, post1)
    };
    // the sampled branch has positive probability unless p0 rounds to 0 or 1
    let state = match (post, outcome) {
        (Some(s), _) => s,
        (None, _) => state.clone(),
    };
    Ok(Fig1Outcome { outcome, state, p0 })
}
