//! Measurement likelihood, Bayesian updates and the Bayes risk of a normal prior.
//!
//! Two update routes are provided. [`exact_update`] reweights a dense uniform
//! grid and is used as the reference; [`rejection_filter_update`] is the
//! particle approximation the estimator actually runs: candidates are drawn
//! from the normal prior, kept with probability equal to the likelihood, and
//! the accepted samples are refitted by a normal.
//!
//! Phases live on the unwrapped real line throughout.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Half-width of the reference grid, in prior standard deviations.
pub const GRID_HALF_WIDTH: f64 = 8.0;
/// Point count of the reference grid.
pub const GRID_POINTS: usize = 4001;
/// Accepted samples per rejection-filter update.
pub const DEFAULT_PARTICLES: usize = 600;
/// The rejection filter gives up after `DRAW_CAP_FACTOR * particles` candidates.
pub const DRAW_CAP_FACTOR: usize = 100;

/// Gaussian belief `N(mu, sigma^2)` over an eigenphase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalBelief {
    mu: f64,
    sigma: f64,
}

impl NormalBelief {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::invalid(format!(
                "normal belief needs finite mu and sigma > 0, got ({mu}, {sigma})"
            )));
        }
        Ok(Self { mu, sigma })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }
}

impl Default for NormalBelief {
    fn default() -> Self {
        Self { mu: 0.0, sigma: 1.0 }
    }
}

/// The controllable pair `(M, theta)` of one circuit execution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentSetting {
    pub m: f64,
    pub theta: f64,
}

impl ExperimentSetting {
    pub fn new(m: f64, theta: f64) -> Self {
        Self { m, theta }
    }

    /// `M` as a circuit power, if it is a positive integer.
    pub fn integer_power(&self) -> Option<u32> {
        if self.m >= 1.0 && self.m.fract() == 0.0 && self.m <= f64::from(u32::MAX) {
            Some(self.m as u32)
        } else {
            None
        }
    }
}

/// Ancilla measurement result `E`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Zero,
    One,
}

impl Outcome {
    pub fn from_bit(bit: u8) -> Result<Self> {
        match bit {
            0 => Ok(Outcome::Zero),
            1 => Ok(Outcome::One),
            other => Err(Error::invalid(format!("outcome must be 0 or 1, got {other}"))),
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Outcome::Zero => 0,
            Outcome::One => 1,
        }
    }

    /// `(-1)^E`.
    pub fn parity(self) -> f64 {
        match self {
            Outcome::Zero => 1.0,
            Outcome::One => -1.0,
        }
    }
}

/// `P(E | phi; M, theta) = (1 + (-1)^E cos(M (phi - theta))) / 2`.
pub fn likelihood(e: Outcome, phi: f64, s: &ExperimentSetting) -> f64 {
    let p = 0.5 * (1.0 + e.parity() * (s.m * (phi - s.theta)).cos());
    p.clamp(0.0, 1.0)
}

/// Discretised belief on a uniform grid. Serves as the exact-update reference.
#[derive(Debug, Clone, PartialEq)]
pub struct GridBelief {
    start: f64,
    step: f64,
    weights: Vec<f64>,
}

impl GridBelief {
    /// Grids `prior` over `[mu - w*sigma, mu + w*sigma]` with `points` nodes.
    pub fn from_normal(prior: &NormalBelief, half_width: f64, points: usize) -> Result<Self> {
        if points < 3 || !(half_width > 0.0) {
            return Err(Error::invalid("grid needs at least 3 points and a positive half-width"));
        }
        let start = prior.mu - half_width * prior.sigma;
        let step = 2.0 * half_width * prior.sigma / (points - 1) as f64;
        let weights = (0..points)
            .map(|i| {
                let z = (start + i as f64 * step - prior.mu) / prior.sigma;
                (-0.5 * z * z).exp()
            })
            .collect();
        Self::normalised(start, step, weights)
    }

    /// Reference grid with the default half-width and point count.
    pub fn reference(prior: &NormalBelief) -> Self {
        Self::from_normal(prior, GRID_HALF_WIDTH, GRID_POINTS).expect("default grid is valid")
    }

    fn normalised(start: f64, step: f64, mut weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegenerateUpdate);
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { start, step, weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn support(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> f64 {
        self.support().zip(&self.weights).map(|(x, w)| x * w).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.support()
            .zip(&self.weights)
            .map(|(x, w)| w * (x - mean) * (x - mean))
            .sum()
    }

    /// Moment-matched normal.
    pub fn to_normal(&self) -> Result<NormalBelief> {
        NormalBelief::new(self.mean(), self.variance().sqrt())
    }

    /// Multiplies the weights by `lik` and renormalises.
    pub fn update_with(&self, lik: impl Fn(f64) -> f64) -> Result<Self> {
        let weights = self
            .support()
            .zip(&self.weights)
            .map(|(x, w)| w * lik(x))
            .collect();
        Self::normalised(self.start, self.step, weights)
    }

    /// Probability of the data under the current weights, `sum_i w_i lik(x_i)`.
    pub fn evidence(&self, lik: impl Fn(f64) -> f64) -> f64 {
        self.support().zip(&self.weights).map(|(x, w)| w * lik(x)).sum()
    }
}

/// Exact Bayesian update of a grid belief.
pub fn exact_update(prior: &GridBelief, e: Outcome, s: &ExperimentSetting) -> Result<GridBelief> {
    prior.update_with(|phi| likelihood(e, phi, s))
}

/// Result of one rejection-filter step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterUpdate {
    pub belief: NormalBelief,
    /// The draw cap was exhausted and the moments came from the grid route.
    pub starved: bool,
    pub draws: usize,
}

/// Rejection-filtering update for the single-ancilla likelihood.
pub fn rejection_filter_update<R: Rng + ?Sized>(
    prior: &NormalBelief,
    e: Outcome,
    s: &ExperimentSetting,
    particles: usize,
    rng: &mut R,
) -> Result<FilterUpdate> {
    rejection_filter_update_with(prior, |phi| likelihood(e, phi, s), particles, rng)
}

/// Rejection-filtering update for an arbitrary likelihood with values in `[0, 1]`.
///
/// `particles` counts accepted samples. After `DRAW_CAP_FACTOR * particles`
/// candidates without enough acceptances the update falls back to the grid
/// route and flags the result as starved.
pub fn rejection_filter_update_with<R, F>(
    prior: &NormalBelief,
    lik: F,
    particles: usize,
    rng: &mut R,
) -> Result<FilterUpdate>
where
    R: Rng + ?Sized,
    F: Fn(f64) -> f64,
{
    if particles < 2 {
        return Err(Error::invalid("rejection filter needs at least 2 particles"));
    }
    let normal = Normal::new(prior.mu, prior.sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let cap = DRAW_CAP_FACTOR * particles;
    let mut accepted = Vec::with_capacity(particles);
    let mut draws = 0;
    while accepted.len() < particles && draws < cap {
        let phi = normal.sample(rng);
        draws += 1;
        if rng.random::<f64>() < lik(phi) {
            accepted.push(phi);
        }
    }

    if accepted.len() < particles {
        let posterior = GridBelief::reference(prior).update_with(lik)?;
        return Ok(FilterUpdate {
            belief: posterior.to_normal()?,
            starved: true,
            draws,
        });
    }

    let n = accepted.len() as f64;
    let mean = accepted.iter().sum::<f64>() / n;
    let var = accepted.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    Ok(FilterUpdate {
        belief: NormalBelief::new(mean, var.sqrt())?,
        starved: false,
        draws,
    })
}

/// Closed-form expected posterior variance after one measurement at `s`.
pub fn bayes_risk(s: &ExperimentSetting, belief: &NormalBelief) -> f64 {
    let var = belief.variance();
    let y = s.m * s.m * var;
    let x = s.m * (belief.mu - s.theta);
    let sin2 = x.sin().powi(2);
    // e^y - cos^2 x = expm1(y) + sin^2 x
    let denom = y.exp_m1() + sin2;
    if denom == 0.0 || !denom.is_finite() {
        return var;
    }
    var * (1.0 - y * sin2 / denom)
}

/// Bayes risk by explicit enumeration of both outcomes on the reference grid.
pub fn bayes_risk_quadrature(
    s: &ExperimentSetting,
    belief: &NormalBelief,
    half_width: f64,
    points: usize,
) -> Result<f64> {
    let grid = GridBelief::from_normal(belief, half_width, points)?;
    let mut risk = 0.0;
    for e in [Outcome::Zero, Outcome::One] {
        let lik = |phi: f64| likelihood(e, phi, s);
        let evidence = grid.evidence(lik);
        if evidence > 0.0 {
            risk += evidence * grid.update_with(lik)?.variance();
        }
    }
    Ok(risk)
}

/// Lower envelope `sigma^2 (1 - M^2 sigma^2 e^{-M^2 sigma^2})` of the Bayes risk over `theta`.
pub fn risk_envelope(m: f64, sigma: f64) -> f64 {
    let y = m * m * sigma * sigma;
    sigma * sigma * (1.0 - y * (-y).exp())
}

/// `g(x) = x^2 sin^2 x / (e^{x^2} - cos^2 x)`, with `g(0) = 0`.
pub fn g(x: f64) -> f64 {
    let y = x * x;
    let sin2 = x.sin().powi(2);
    let denom = y.exp_m1() + sin2;
    if denom == 0.0 || !denom.is_finite() {
        return 0.0;
    }
    y * sin2 / denom
}

/// Maximiser and maximum of `g` on `(0, 3]`, by golden-section search.
pub fn find_g_max() -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (1e-6, 3.0);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut gc, mut gd) = (g(c), g(d));
    while hi - lo > 1e-12 {
        if gc > gd {
            hi = d;
            d = c;
            gd = gc;
            c = hi - inv_phi * (hi - lo);
            gc = g(c);
        } else {
            lo = c;
            c = d;
            gc = gd;
            d = lo + inv_phi * (hi - lo);
            gd = g(d);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, g(x))
}
