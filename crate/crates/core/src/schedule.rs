//! Experiment-setting policies and the measurement/depth trade-off laws.

use crate::bayes::{g, ExperimentSetting, NormalBelief};
use crate::error::{Error, Result};
use crate::phase::EstimationTrace;

/// Scale used by RFPE, `M = ceil(1.25 / sigma)`.
pub const RFPE_SCALE: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    /// `M = scale * sigma^-alpha`.
    AlphaQpe { alpha: f64, scale: f64 },
    /// `M = ceil(1.25 / sigma)`.
    Rfpe,
    /// `M = min(ceil(scale / sigma), d_max)`: RFPE with restarts.
    BetaQpe { d_max: f64, scale: f64 },
    /// `M = 1` at every iteration.
    StatisticalSampling,
}

/// Whether settings are fed to a real-valued likelihood or to a circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerMode {
    /// `M` stays real; used by the synthetic likelihood.
    Real,
    /// `M` is rounded to the nearest integer `>= 1`.
    Integer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulePolicy {
    pub kind: ScheduleKind,
    pub depth_cap: Option<f64>,
}

impl SchedulePolicy {
    pub fn new(kind: ScheduleKind, depth_cap: Option<f64>) -> Result<Self> {
        match kind {
            ScheduleKind::AlphaQpe { alpha, scale } => {
                if !(0.0..=1.0).contains(&alpha) {
                    return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
                }
                if !(scale > 0.0) || !scale.is_finite() {
                    return Err(Error::invalid(format!("scale must be positive, got {scale}")));
                }
            }
            ScheduleKind::BetaQpe { d_max, scale } => {
                if !(d_max >= 1.0) {
                    return Err(Error::invalid(format!("d_max must be >= 1, got {d_max}")));
                }
                if !(scale > 0.0) || !scale.is_finite() {
                    return Err(Error::invalid(format!("scale must be positive, got {scale}")));
                }
            }
            ScheduleKind::Rfpe | ScheduleKind::StatisticalSampling => {}
        }
        if let Some(cap) = depth_cap {
            if !(cap > 0.0) {
                return Err(Error::invalid(format!("depth cap must be positive, got {cap}")));
            }
        }
        Ok(Self { kind, depth_cap })
    }

    pub fn alpha_qpe(alpha: f64) -> Result<Self> {
        Self::new(ScheduleKind::AlphaQpe { alpha, scale: 1.0 }, None)
    }

    pub fn alpha_qpe_scaled(alpha: f64, scale: f64) -> Result<Self> {
        Self::new(ScheduleKind::AlphaQpe { alpha, scale }, None)
    }

    pub fn rfpe() -> Self {
        Self { kind: ScheduleKind::Rfpe, depth_cap: None }
    }

    pub fn beta_qpe(d_max: f64) -> Result<Self> {
        Self::new(ScheduleKind::BetaQpe { d_max, scale: 1.0 }, None)
    }

    pub fn statistical() -> Self {
        Self { kind: ScheduleKind::StatisticalSampling, depth_cap: None }
    }

    pub fn with_depth_cap(self, cap: f64) -> Result<Self> {
        Self::new(self.kind, Some(cap))
    }

    /// The power the policy asks for before integer rounding, depth cap applied.
    pub fn proposed_power(&self, belief: &NormalBelief) -> f64 {
        let sigma = belief.sigma();
        let m = match self.kind {
            ScheduleKind::AlphaQpe { alpha, scale } => scale * sigma.powf(-alpha),
            ScheduleKind::Rfpe => (RFPE_SCALE / sigma).ceil(),
            ScheduleKind::BetaQpe { d_max, scale } => (scale / sigma).ceil().min(d_max),
            ScheduleKind::StatisticalSampling => 1.0,
        };
        match self.depth_cap {
            Some(cap) => m.min(cap),
            None => m,
        }
    }

    /// Setting for the next iteration: `theta = mu - sigma` for every policy.
    pub fn next_setting(&self, belief: &NormalBelief, mode: PowerMode) -> ExperimentSetting {
        let mut m = self.proposed_power(belief);
        if mode == PowerMode::Integer {
            m = m.round().max(1.0);
            if let Some(cap) = self.depth_cap {
                m = m.min(cap.floor().max(1.0));
            }
        }
        ExperimentSetting::new(m, belief.mu() - belief.sigma())
    }
}

/// Predicted iterations `f(eps, alpha)` to reach posterior standard deviation `eps` from 1.
pub fn predicted_iterations(epsilon: f64, alpha: f64) -> f64 {
    if alpha >= 1.0 {
        return 4.0 * (1.0 / epsilon).ln();
    }
    let c = 1.0 - alpha;
    // eps^{-2c} - 1, without cancellation as c -> 0
    2.0 / c * (-2.0 * c * epsilon.ln()).exp_m1()
}

/// Largest usable `alpha` under a depth budget: `min(ln d_max / ln(1/eps), 1)`.
pub fn alpha_max(epsilon: f64, d_max: f64) -> f64 {
    (d_max.ln() / (1.0 / epsilon).ln()).clamp(0.0, 1.0)
}

/// Minimum α-QPE measurement count under a depth budget.
pub fn n_min(epsilon: f64, d_max: f64) -> f64 {
    predicted_iterations(epsilon, alpha_max(epsilon, d_max))
}

/// Minimum iteration count of RFPE with restarts (β-QPE).
pub fn n_min_restarts(epsilon: f64, d_max: f64) -> f64 {
    if d_max < 1.0 / epsilon {
        2.0 * ((1.0 / (epsilon * d_max)).powi(2) - 1.0) + 4.0 * d_max.ln()
    } else {
        4.0 * (1.0 / epsilon).ln()
    }
}

/// One point of the trade-off surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffPoint {
    pub epsilon: f64,
    pub d_max: f64,
    pub alpha_max: f64,
    pub n_measurements: f64,
    pub n_measurements_restarts: f64,
    pub max_depth: f64,
}

impl TradeoffPoint {
    pub fn new(epsilon: f64, d_max: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        if !(d_max >= 1.0) {
            return Err(Error::invalid(format!("d_max must be >= 1, got {d_max}")));
        }
        let a = alpha_max(epsilon, d_max);
        Ok(Self {
            epsilon,
            d_max,
            alpha_max: a,
            n_measurements: n_min(epsilon, d_max),
            n_measurements_restarts: n_min_restarts(epsilon, d_max),
            max_depth: epsilon.powf(-a),
        })
    }

    /// `N'_min / N_min`.
    pub fn ratio(&self) -> f64 {
        self.n_measurements_restarts / self.n_measurements
    }
}

/// Expected posterior standard deviation at iteration `k`, anchored at `(k0, r_k0)`.
///
/// For `alpha < 1` this is the continuous solution of the logistic recurrence;
/// for `alpha = 1` it is geometric decay with per-iteration variance
/// contraction `1 - g(scale)`.
pub fn analytic_risk_curve(k: f64, k0: f64, r_k0: f64, alpha: f64, scale: f64) -> Result<f64> {
    if k < k0 {
        return Err(Error::invalid(format!("k = {k} precedes the anchor k0 = {k0}")));
    }
    if !(r_k0 > 0.0) {
        return Err(Error::invalid(format!("anchor r_k0 must be positive, got {r_k0}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if alpha >= 1.0 {
        let contraction = 1.0 - g(scale);
        return Ok(r_k0 * contraction.powf(0.5 * (k - k0)));
    }
    let c = 1.0 - alpha;
    let log_r = r_k0.ln() - (r_k0.powf(2.0 * c) * 0.5 * c * (k - k0)).ln_1p() / (2.0 * c);
    Ok(log_r.exp())
}

/// Resource summary of one estimation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResourceReport {
    pub iterations: usize,
    pub measurements: usize,
    /// Largest power used, as executed.
    pub max_power: f64,
    /// Largest power the policy asked for before integer rounding.
    pub max_power_unrounded: f64,
    /// `max_power * depth_of_u`.
    pub max_depth: f64,
    pub max_depth_unrounded: f64,
    /// `sum_k M_k * depth_of_u`.
    pub runtime: f64,
}

/// Coherent-depth accounting: `U^M` costs `M` times the depth of `U`.
pub fn depth_accounting(trace: &EstimationTrace, depth_of_u: u64) -> Result<ResourceReport> {
    if trace.rows.is_empty() {
        return Err(Error::invalid("depth accounting needs a nonempty trace"));
    }
    let d = depth_of_u as f64;
    let max_power = trace.rows.iter().map(|r| r.m).fold(0.0, f64::max);
    let max_unrounded = trace.rows.iter().map(|r| r.m_unrounded).fold(0.0, f64::max);
    Ok(ResourceReport {
        iterations: trace.rows.len(),
        measurements: trace.measurements(),
        max_power,
        max_power_unrounded: max_unrounded,
        max_depth: max_power * d,
        max_depth_unrounded: max_unrounded * d,
        runtime: trace.rows.iter().map(|r| r.m * d).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::find_g_max;
    use proptest::prelude::*;

    fn b(mu: f64, sigma: f64) -> NormalBelief {
        NormalBelief::new(mu, sigma).unwrap()
    }

    #[test]
    fn next_setting_examples() {
        let belief = b(0.2, 0.01);
        let s = SchedulePolicy::alpha_qpe(0.0).unwrap().next_setting(&belief, PowerMode::Real);
        assert_eq!(s.m, 1.0);
        assert!((s.theta - 0.19).abs() < 1e-15);
        let s = SchedulePolicy::alpha_qpe(1.0).unwrap().next_setting(&belief, PowerMode::Real);
        assert!((s.m - 100.0).abs() < 1e-9);
        let s = SchedulePolicy::rfpe().next_setting(&b(0.0, 0.3), PowerMode::Real);
        assert_eq!(s.m, 5.0);
        let s = SchedulePolicy::beta_qpe(16.0).unwrap().next_setting(&belief, PowerMode::Real);
        assert_eq!(s.m, 16.0);
        let s = SchedulePolicy::statistical().next_setting(&belief, PowerMode::Integer);
        assert_eq!(s.m, 1.0);
    }

    #[test]
    fn depth_cap_and_rounding() {
        let p = SchedulePolicy::alpha_qpe(1.0).unwrap().with_depth_cap(10.5).unwrap();
        let belief = b(0.0, 0.01);
        assert_eq!(p.next_setting(&belief, PowerMode::Real).m, 10.5);
        assert_eq!(p.next_setting(&belief, PowerMode::Integer).m, 10.0);
        let p = SchedulePolicy::alpha_qpe(0.5).unwrap();
        assert_eq!(p.next_setting(&b(0.0, 4.0), PowerMode::Integer).m, 1.0);
        assert_eq!(p.next_setting(&b(0.0, 0.1), PowerMode::Integer).m, 3.0);
    }

    #[test]
    fn invalid_policies() {
        assert!(SchedulePolicy::alpha_qpe(1.5).is_err());
        assert!(SchedulePolicy::alpha_qpe_scaled(0.5, 0.0).is_err());
        assert!(SchedulePolicy::beta_qpe(0.5).is_err());
        assert!(SchedulePolicy::rfpe().with_depth_cap(-1.0).is_err());
    }

    #[test]
    fn predicted_iterations_examples() {
        assert!((predicted_iterations(0.1, 0.0) - 198.0).abs() < 1e-9);
        assert!((predicted_iterations(0.1, 1.0) - 4.0 * 10f64.ln()).abs() < 1e-12);
        assert!((predicted_iterations(0.1, 1.0) - 9.2103).abs() < 1e-4);
        for a in [0.0, 0.3, 0.999, 1.0] {
            assert_eq!(predicted_iterations(1.0, a), 0.0);
        }
        assert!((predicted_iterations(0.05, 0.5) - 76.0).abs() < 1e-9);
    }

    #[test]
    fn predicted_iterations_decrease_in_alpha() {
        for eps in [0.01, 0.05, 0.1] {
            let vals: Vec<f64> = (0..=20).map(|i| predicted_iterations(eps, i as f64 * 0.05)).collect();
            assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
        }
    }

    #[test]
    fn predicted_iterations_continuous_at_one() {
        for eps in [0.1, 0.01] {
            assert!((predicted_iterations(eps, 0.9999) - 4.0 * (1.0 / eps).ln()).abs() < 1e-2);
        }
    }

    #[test]
    fn alpha_max_examples() {
        assert!((alpha_max(0.01, 10.0) - 0.5).abs() < 1e-15);
        assert_eq!(alpha_max(0.1, 100.0), 1.0);
        assert_eq!(alpha_max(0.1, 1.0), 0.0);
    }

    #[test]
    fn n_min_examples() {
        assert!((n_min(0.01, 10.0) - 396.0).abs() < 1e-9);
        assert!((n_min(0.01, 100.0) - 4.0 * 100f64.ln()).abs() < 1e-12);
        assert!((n_min(0.01, 1.0) - 19998.0).abs() < 1e-7);
        assert!((n_min_restarts(0.01, 10.0) - (198.0 + 4.0 * 10f64.ln())).abs() < 1e-9);
        assert!((n_min_restarts(0.01, 10.0) - 207.21).abs() < 1e-2);
        assert!((n_min_restarts(0.01, 100.0) - 18.421).abs() < 1e-3);
    }

    #[test]
    fn restarts_never_worse() {
        for i in 0..100 {
            let eps = 10f64.powf(-3.0 + 2.9 * i as f64 / 99.0);
            for j in 0..100 {
                let d_max = 10f64.powf(0.01 + 4.0 * j as f64 / 99.0);
                let p = TradeoffPoint::new(eps, d_max).unwrap();
                if d_max < 1.0 / eps {
                    assert!(p.ratio() < 1.0, "eps {eps} d_max {d_max} ratio {}", p.ratio());
                } else {
                    assert!((p.ratio() - 1.0).abs() < 1e-12);
                }
            }
        }
        // no depth budget: both reduce to pure sampling
        let p = TradeoffPoint::new(0.05, 1.0).unwrap();
        assert!((p.ratio() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn analytic_curve_examples() {
        assert!((analytic_risk_curve(5.0, 5.0, 0.3, 0.5, 1.0).unwrap() - 0.3).abs() < 1e-15);
        assert!((analytic_risk_curve(198.0, 0.0, 1.0, 0.0, 1.0).unwrap() - 0.1).abs() < 1e-12);
        let r = analytic_risk_curve(10.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        assert!((r - 0.178).abs() < 1e-3, "{r}");
        let (a0, gmax) = find_g_max();
        let r = analytic_risk_curve(2.0, 0.0, 1.0, 1.0, a0).unwrap();
        assert!((r - (1.0 - gmax)).abs() < 1e-12);
        assert!(analytic_risk_curve(1.0, 2.0, 1.0, 0.5, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn curve_inverts_predicted_iterations(k in 0.5f64..5000.0, alpha in 0.0f64..0.99) {
            let r = analytic_risk_curve(k, 0.0, 1.0, alpha, 1.0).unwrap();
            let back = predicted_iterations(r, alpha);
            prop_assert!(((back - k) / k).abs() < 1e-9, "{} vs {}", back, k);
        }

        #[test]
        fn alpha_max_in_unit_interval(eps in 1e-6f64..0.999, d in 1.0f64..1e8) {
            let a = alpha_max(eps, d);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
