//! Optimizers and their hyper-parameter mathematics.
//!
//! MaSS is implemented in its two equivalent parameterizations:
//!
//! - practical `(eta1, eta2, gamma)`: Nesterov's two-variable update plus a
//!   compensation term `+ eta2 * grad` in the lookahead update;
//! - analytic `(eta, alpha, delta)`: a three-variable averaging form that
//!   the convergence analysis works in.
//!
//! [`to_analytic`] / [`to_practical`] implement the exact bijection between
//! them. [`optimal_hyperparams`] evaluates the closed-form optimal selection
//! for a given spectral profile and batch size, and
//! [`check_convergence_conditions`] tests the two sufficient conditions for
//! exponential convergence of the Lyapunov function.

mod run;
mod steps;

pub use run::{
    run, run_with_geometry, BatchScheme, Geometry, Method, OptimizerSpec, RunSettings, Trajectory,
    TrajectoryRecord, DIVERGENCE_FACTOR,
};
pub use steps::{
    step_heavy_ball, step_mass_analytic, step_mass_practical, step_nesterov, step_sgd,
    stochastic_gradient, OptimizerState,
};

use crate::problem::{batch_constants, BatchSize, SpectralProfile};
use crate::{Error, Result};

/// Practical-form hyper-parameters `(eta1, eta2, gamma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParamsPractical {
    /// Step size (> 0).
    pub eta1: f64,
    /// Compensation coefficient (any real; 0 recovers plain SGD+Nesterov).
    pub eta2: f64,
    /// Momentum parameter in `[0, 1)`; 0 for plain SGD.
    pub gamma: f64,
}

/// Analytic-form hyper-parameters `(eta, alpha, delta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParamsAnalytic {
    /// Step size (> 0).
    pub eta: f64,
    /// Averaging parameter in `(0, 1]`.
    pub alpha: f64,
    /// Secondary step size (> 0).
    pub delta: f64,
}

impl HyperParamsPractical {
    pub fn validate(&self) -> Result<()> {
        if !crate::finite_positive(self.eta1) {
            return Err(Error::InvalidArgument(format!(
                "eta1 must be positive, got {}",
                self.eta1
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidArgument(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if !self.eta2.is_finite() {
            return Err(Error::InvalidArgument("eta2 must be finite".into()));
        }
        Ok(())
    }
}

impl HyperParamsAnalytic {
    pub fn validate(&self) -> Result<()> {
        if !crate::finite_positive(self.eta) {
            return Err(Error::InvalidArgument(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !crate::finite_positive(self.alpha) || self.alpha > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !crate::finite_positive(self.delta) {
            return Err(Error::InvalidArgument(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Practical -> analytic: `alpha = (1-gamma)/(1+gamma)`, `eta = eta1`,
/// `delta = (eta - eta2 (1+alpha)) / alpha`. Requires `gamma < 1`.
pub fn to_analytic(p: &HyperParamsPractical) -> Result<HyperParamsAnalytic> {
    if p.gamma >= 1.0 {
        return Err(Error::InvalidArgument(
            "gamma = 1 has no analytic-form counterpart (alpha would be 0)".into(),
        ));
    }
    let alpha = (1.0 - p.gamma) / (1.0 + p.gamma);
    Ok(HyperParamsAnalytic {
        eta: p.eta1,
        alpha,
        delta: (p.eta1 - p.eta2 * (1.0 + alpha)) / alpha,
    })
}

/// Analytic -> practical: `gamma = (1-alpha)/(1+alpha)`, `eta1 = eta`,
/// `eta2 = (eta - alpha delta)/(1+alpha)`. Requires `alpha > 0`.
pub fn to_practical(p: &HyperParamsAnalytic) -> Result<HyperParamsPractical> {
    if !crate::finite_positive(p.alpha) {
        return Err(Error::InvalidArgument(
            "alpha must be positive to convert to practical form".into(),
        ));
    }
    Ok(HyperParamsPractical {
        eta1: p.eta,
        eta2: (p.eta - p.alpha * p.delta) / (1.0 + p.alpha),
        gamma: (1.0 - p.alpha) / (1.0 + p.alpha),
    })
}

/// Closed-form optimal hyper-parameters for a profile and batch size:
/// `eta* = 1/L_m`, `alpha* = 1/sqrt(kappa_m kappa_tilde_m)`,
/// `delta* = eta*/(alpha* kappa_tilde_m)`, with the practical form given by
/// the matching closed forms (so that `eta2* = 0` exactly in the full-batch
/// limit, where the method reduces to classical Nesterov).
pub fn optimal_hyperparams(
    profile: &SpectralProfile,
    m: BatchSize,
) -> Result<(HyperParamsAnalytic, HyperParamsPractical)> {
    let c = batch_constants(profile, m)?;
    let eta = 1.0 / c.l_m;
    let s = (c.kappa_m * c.kappa_tilde_m).sqrt();
    let alpha = 1.0 / s;
    let delta = eta / (alpha * c.kappa_tilde_m);
    let analytic = HyperParamsAnalytic { eta, alpha, delta };
    let practical = HyperParamsPractical {
        eta1: eta,
        eta2: eta * (1.0 - 1.0 / c.kappa_tilde_m) * s / (s + 1.0),
        gamma: (s - 1.0) / (s + 1.0),
    };
    analytic.validate()?;
    practical.validate()?;
    Ok((analytic, practical))
}

/// Slack report for the two sufficient convergence conditions:
/// `alpha/delta <= mu` and `alpha delta ktm + eta (eta L_m - 2) <= 0`.
/// Positive slack means the condition holds with room to spare.
#[derive(Debug, Clone, Copy)]
pub struct ConditionReport {
    pub satisfied: bool,
    /// `mu - alpha/delta`.
    pub contraction_slack: f64,
    /// `-(alpha delta ktm + eta (eta L_m - 2))`.
    pub step_slack: f64,
}

/// Relative tolerance used when testing the conditions; the optimal
/// selection satisfies both with equality, so exact zero slack must count
/// as satisfied despite floating-point noise.
pub const CONDITION_RTOL: f64 = 1e-12;

pub fn check_convergence_conditions(
    p: &HyperParamsAnalytic,
    profile: &SpectralProfile,
    m: BatchSize,
) -> Result<ConditionReport> {
    p.validate()?;
    let c = batch_constants(profile, m)?;
    let contraction_slack = profile.mu - p.alpha / p.delta;
    let step_term = p.alpha * p.delta * c.kappa_tilde_m + p.eta * (p.eta * c.l_m - 2.0);
    let step_slack = -step_term;
    let scale1 = profile.mu.abs();
    let scale2 = p.alpha * p.delta * c.kappa_tilde_m + p.eta * (p.eta * c.l_m + 2.0);
    Ok(ConditionReport {
        satisfied: contraction_slack >= -CONDITION_RTOL * scale1
            && step_slack >= -CONDITION_RTOL * scale2,
        contraction_slack,
        step_slack,
    })
}
