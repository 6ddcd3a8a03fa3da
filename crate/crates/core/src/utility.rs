//! Normalized utility functions for real-time and delay-tolerant traffic.
//!
//! Two families are supported:
//!
//! - **Sigmoidal** (real-time, e.g. VoIP or video):
//!   `U(r) = c·(σ(r) − d)` with `σ(r) = 1 / (1 + e^{−a(r−b)})`,
//!   `d = 1 / (1 + e^{ab})` and `c = (1 + e^{ab}) / e^{ab}`, so that `U(0) = 0`
//!   and `U(∞) = 1`.
//! - **Logarithmic** (delay-tolerant, e.g. FTP):
//!   `U(r) = ln(1 + k·r) / ln(1 + k·r_max)`, reaching exactly 1 at `r_max`.
//!
//! The sigmoidal form simplifies to `U(r) = (1 − e^{−ar}) · σ(r)`, which is what
//! every routine below evaluates. `e^{ab}` is never materialized, so the
//! functions stay finite for the steepest parameters in use (`a·b = 54`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default normalization rate for logarithmic utilities.
pub const DEFAULT_LOG_R_MAX: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UtilityError {
    #[error("invalid utility parameter `{name}` = {value} (must be finite and > 0)")]
    Parameter { name: &'static str, value: f64 },
    #[error("rate {rate} is outside the domain of `{op}`")]
    Domain { op: &'static str, rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UtilityKind {
    Sigmoidal,
    Logarithmic,
}

/// A user's satisfaction curve over allocated rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UtilityFunction {
    /// `a` is the steepness, `b` the inflection rate.
    Sigmoidal { a: f64, b: f64 },
    /// `k` is the rate of increase, `r_max` the rate at which utility reaches 1.
    Logarithmic { k: f64, r_max: f64 },
}

fn check_param(name: &'static str, value: f64) -> Result<(), UtilityError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(UtilityError::Parameter { name, value })
    }
}

/// `ln σ(z)` without overflow for either sign of `z`.
fn ln_logistic(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

/// `σ(z) = 1 / (1 + e^{−z})` without overflow.
fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 − e^{−x})` for `x > 0`.
fn ln_one_minus_exp_neg(x: f64) -> f64 {
    if x < std::f64::consts::LN_2 {
        (-(-x).exp_m1()).ln()
    } else {
        (-(-x).exp()).ln_1p()
    }
}

impl UtilityFunction {
    pub fn sigmoidal(a: f64, b: f64) -> Result<Self, UtilityError> {
        let u = UtilityFunction::Sigmoidal { a, b };
        u.validate()?;
        Ok(u)
    }

    pub fn logarithmic(k: f64, r_max: f64) -> Result<Self, UtilityError> {
        let u = UtilityFunction::Logarithmic { k, r_max };
        u.validate()?;
        Ok(u)
    }

    pub fn kind(&self) -> UtilityKind {
        match self {
            UtilityFunction::Sigmoidal { .. } => UtilityKind::Sigmoidal,
            UtilityFunction::Logarithmic { .. } => UtilityKind::Logarithmic,
        }
    }

    pub fn validate(&self) -> Result<(), UtilityError> {
        match *self {
            UtilityFunction::Sigmoidal { a, b } => {
                check_param("a", a)?;
                check_param("b", b)
            }
            UtilityFunction::Logarithmic { k, r_max } => {
                check_param("k", k)?;
                check_param("r_max", r_max)
            }
        }
    }

    /// Utility at rate `r ≥ 0`. `eval(0)` is exactly zero.
    pub fn eval(&self, r: f64) -> Result<f64, UtilityError> {
        self.validate()?;
        if !(r.is_finite() && r >= 0.0) {
            return Err(UtilityError::Domain { op: "eval", rate: r });
        }
        Ok(match *self {
            UtilityFunction::Sigmoidal { a, b } => -(-a * r).exp_m1() * logistic(a * (r - b)),
            UtilityFunction::Logarithmic { k, r_max } => (k * r).ln_1p() / (k * r_max).ln_1p(),
        })
    }

    /// `ln U(r)` for `r > 0`, evaluated directly rather than as `ln(eval(r))`
    /// so that tiny utilities do not underflow to `−∞`.
    pub fn log_eval(&self, r: f64) -> Result<f64, UtilityError> {
        self.validate()?;
        if !(r.is_finite() && r > 0.0) {
            return Err(UtilityError::Domain { op: "log_eval", rate: r });
        }
        Ok(match *self {
            UtilityFunction::Sigmoidal { a, b } => ln_one_minus_exp_neg(a * r) + ln_logistic(a * (r - b)),
            UtilityFunction::Logarithmic { k, r_max } => (k * r).ln_1p().ln() - (k * r_max).ln_1p().ln(),
        })
    }

    /// `d/dr ln U(r)` for `r > 0`.
    pub fn log_deriv(&self, r: f64) -> Result<f64, UtilityError> {
        self.validate()?;
        if !(r.is_finite() && r > 0.0) {
            return Err(UtilityError::Domain { op: "log_deriv", rate: r });
        }
        Ok(self.log_deriv_unchecked(r))
    }

    /// Marginal log-utility without argument checks. Callers guarantee valid
    /// parameters and `r > 0`; this sits inside every bisection step.
    pub(crate) fn log_deriv_unchecked(&self, r: f64) -> f64 {
        match *self {
            // a·σ(a(b−r))·(1 + e^{−ab}) / (1 − e^{−ar})
            UtilityFunction::Sigmoidal { a, b } => {
                a * logistic(a * (b - r)) * (1.0 + (-a * b).exp()) / -(-a * r).exp_m1()
            }
            UtilityFunction::Logarithmic { k, .. } => k / ((1.0 + k * r) * (k * r).ln_1p()),
        }
    }
}

/// Free-function form of [`UtilityFunction::eval`].
pub fn eval_utility(u: &UtilityFunction, r: f64) -> Result<f64, UtilityError> {
    u.eval(r)
}

/// Free-function form of [`UtilityFunction::log_eval`].
pub fn log_utility(u: &UtilityFunction, r: f64) -> Result<f64, UtilityError> {
    u.log_eval(r)
}

/// Free-function form of [`UtilityFunction::log_deriv`].
pub fn log_deriv(u: &UtilityFunction, r: f64) -> Result<f64, UtilityError> {
    u.log_deriv(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sig(a: f64, b: f64) -> UtilityFunction {
        UtilityFunction::sigmoidal(a, b).unwrap()
    }

    fn log(k: f64) -> UtilityFunction {
        UtilityFunction::logarithmic(k, DEFAULT_LOG_R_MAX).unwrap()
    }

    #[test]
    fn reference_points() {
        assert_abs_diff_eq!(log(0.5).eval(10.0).unwrap(), 0.4557, epsilon = 1e-3);
        assert_abs_diff_eq!(sig(3.0, 20.0).eval(20.1).unwrap(), 0.5744, epsilon = 1e-3);
    }

    #[test]
    fn normalization_is_exact() {
        for u in [sig(3.0, 18.0), sig(1.0, 30.0), log(0.5), log(18.0)] {
            assert_eq!(u.eval(0.0).unwrap(), 0.0);
        }
        assert_eq!(log(3.0).eval(100.0).unwrap(), 1.0);
        assert_eq!(log(3.0).log_eval(100.0).unwrap(), 0.0);
    }

    #[test]
    fn log_eval_at_inflection() {
        // d = 1/(1+e^30) is far below double resolution relative to 1/2.
        assert_abs_diff_eq!(sig(3.0, 10.0).log_eval(10.0).unwrap(), 0.5f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn log_eval_small_rate_matches_high_precision() {
        // Reference values from 60-digit evaluation of ln(c·(σ(r) − d)).
        assert_abs_diff_eq!(
            sig(3.0, 10.0).log_eval(0.001).unwrap(),
            -35.807_642_615_314_15,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            sig(3.0, 18.0).log_eval(1e-9).unwrap(),
            -73.624_653_546_778_3,
            epsilon = 1e-9
        );
    }

    #[test]
    fn log_deriv_closed_forms() {
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(log(1.0).log_deriv(e - 1.0).unwrap(), 1.0 / e, epsilon = 1e-9);
        assert_abs_diff_eq!(sig(3.0, 10.0).log_deriv(10.0).unwrap(), 1.5, epsilon = 1e-9);
        // 60-digit numerical derivative of ln U.
        assert_abs_diff_eq!(
            sig(3.0, 10.0).log_deriv(0.001).unwrap(),
            1_001.500_749_999_887,
            epsilon = 1e-9
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            UtilityFunction::sigmoidal(0.0, 1.0),
            Err(UtilityError::Parameter { name: "a", .. })
        ));
        assert!(matches!(
            UtilityFunction::logarithmic(1.0, -2.0),
            Err(UtilityError::Parameter { name: "r_max", .. })
        ));
        assert!(UtilityFunction::logarithmic(f64::NAN, 1.0).is_err());
        assert!(matches!(log(1.0).eval(-1.0), Err(UtilityError::Domain { .. })));
        assert!(matches!(sig(3.0, 10.0).log_eval(0.0), Err(UtilityError::Domain { .. })));
        assert!(matches!(sig(3.0, 10.0).log_deriv(-1e-3), Err(UtilityError::Domain { .. })));
        // Unvalidated construction is still caught at evaluation time.
        let bad = UtilityFunction::Sigmoidal { a: -1.0, b: 2.0 };
        assert!(bad.eval(1.0).is_err());
    }

    #[test]
    fn extreme_parameters_stay_finite() {
        let u = sig(3.0, 18.0);
        let mut r = 1e-9;
        while r <= 1e6 {
            assert!(u.eval(r).unwrap().is_finite());
            assert!(u.log_eval(r).unwrap().is_finite());
            assert!(u.log_deriv(r).unwrap().is_finite());
            r *= 1.7;
        }
    }
}
