//! Centralized reference solver.
//!
//! With a single common price `p`, the optimum of `Σ ln U_i(r_i)` subject to
//! `Σ r_i = R` is the point where every user's marginal log-utility equals `p`
//! and the resulting demands add up to `R`. This module finds that point by
//! nested bisection, working in log-coordinates for both the per-user rate and
//! the price. It shares nothing with the agent code except the utility
//! functions, so agreement with the distributed protocol is a real check.

use thiserror::Error;

use crate::engine::ConvergenceReport;
use crate::ue::UserEquipment;
use crate::utility::{UtilityError, UtilityFunction};

/// Target on `|Σ r_i(p) − R| / R`.
pub const DEMAND_TOLERANCE: f64 = 1e-9;

const LN_RATE_MIN: f64 = -80.0; // e^-80 ≈ 1.8e-35
const LN_RATE_MAX: f64 = 80.0;
const PRICE_LO: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("no users to allocate")]
    NoUsers,
    #[error("total rate must be finite and > 0, got {0}")]
    TotalRate(f64),
    #[error(transparent)]
    Utility(#[from] UtilityError),
    #[error("price bracket failed: demand at p = {price} is still {demand}")]
    Bracket { price: f64, demand: f64 },
    #[error("rosters differ: {0}")]
    RosterMismatch(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleAllocation {
    pub id: String,
    pub sector: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub price: f64,
    /// Users in input order.
    pub allocations: Vec<OracleAllocation>,
    /// `Σ r_i` per direction; index `l − 1`.
    pub sector_rates: Vec<f64>,
}

impl OracleSolution {
    pub fn rate_of(&self, id: &str) -> Option<f64> {
        self.allocations.iter().find(|a| a.id == id).map(|a| a.rate)
    }

    pub fn total(&self) -> f64 {
        self.allocations.iter().map(|a| a.rate).sum()
    }
}

/// Rate at which `d ln U / dr` falls to `price`, by bisection on `ln r`.
pub fn demand(utility: &UtilityFunction, price: f64) -> Result<f64, UtilityError> {
    let (mut lo, mut hi) = (LN_RATE_MIN, LN_RATE_MAX);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if utility.log_deriv(mid.exp())? > price {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

fn total_demand(users: &[UserEquipment], price: f64) -> Result<f64, UtilityError> {
    users.iter().map(|u| demand(&u.utility, price)).sum()
}

/// Single-price KKT solution for `users` sharing `total_rate`.
///
/// Stops when total demand is within [`DEMAND_TOLERANCE`]·R of the budget, or
/// when the price bracket has collapsed to adjacent doubles. The latter happens
/// where demand is so steep in price that one ulp of `p` moves it by more than
/// the tolerance.
pub fn solve_centralized(users: &[UserEquipment], total_rate: f64) -> Result<OracleSolution, OracleError> {
    if users.is_empty() {
        return Err(OracleError::NoUsers);
    }
    if !(total_rate.is_finite() && total_rate > 0.0) {
        return Err(OracleError::TotalRate(total_rate));
    }
    for u in users {
        u.utility.validate()?;
    }

    // Purely sigmoidal rosters saturate near their inflection points, so the
    // lower end may have to move well below PRICE_LO.
    let mut lo = PRICE_LO;
    loop {
        let d = total_demand(users, lo)?;
        if d >= total_rate {
            break;
        }
        lo *= 1e-3;
        if lo < 1e-290 {
            return Err(OracleError::Bracket { price: lo, demand: d });
        }
    }
    let mut hi = 1.0;
    loop {
        let d = total_demand(users, hi)?;
        if d < total_rate {
            break;
        }
        hi *= 2.0;
        if hi > 1e300 {
            return Err(OracleError::Bracket { price: hi, demand: d });
        }
    }

    let (mut ln_lo, mut ln_hi) = (lo.ln(), hi.ln());
    let mut best = (f64::INFINITY, hi);
    for _ in 0..400 {
        let ln_mid = 0.5 * (ln_lo + ln_hi);
        let price = ln_mid.exp();
        let d = total_demand(users, price)?;
        let gap = (d - total_rate).abs();
        if gap < best.0 {
            best = (gap, price);
        }
        if gap <= DEMAND_TOLERANCE * total_rate {
            break;
        }
        if d > total_rate {
            ln_lo = ln_mid;
        } else {
            ln_hi = ln_mid;
        }
        let (p_lo, p_hi) = (ln_lo.exp(), ln_hi.exp());
        if p_hi - p_lo <= 2.0 * f64::EPSILON * p_hi {
            break;
        }
    }

    let price = best.1;
    let sectors = users.iter().map(|u| u.sector).max().unwrap_or(0);
    let mut sector_rates = vec![0.0; sectors];
    let mut allocations = Vec::with_capacity(users.len());
    for u in users {
        let rate = demand(&u.utility, price)?;
        sector_rates[u.sector - 1] += rate;
        allocations.push(OracleAllocation { id: u.id.as_str().to_string(), sector: u.sector, rate });
    }
    Ok(OracleSolution { price, allocations, sector_rates })
}

/// Largest discrepancies between a distributed report and the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Discrepancy {
    /// `max_i |Δr_i|`.
    pub max_rate: f64,
    /// `max_i |Δr_i| / max(1, r_i)`, using the oracle rate.
    pub max_rate_scaled: f64,
    /// `max_l |p_l − p*|`.
    pub max_price: f64,
    /// `max_l |p_l − p*| / p*`.
    pub max_price_rel: f64,
    /// `max_l |ΔR^l|`.
    pub max_sector_rate: f64,
}

impl Discrepancy {
    /// True when every user is within `max(abs, rel·r_i)` and prices within `price_rel`.
    pub fn within(&self, report: &ConvergenceReport, oracle: &OracleSolution, abs: f64, rel: f64, price_rel: f64) -> bool {
        report.allocations.iter().all(|a| {
            let o = oracle.rate_of(a.id.as_str()).unwrap_or(f64::NAN);
            (a.rate - o).abs() <= abs.max(rel * o)
        }) && self.max_price_rel <= price_rel
    }
}

pub fn compare(report: &ConvergenceReport, oracle: &OracleSolution) -> Result<Discrepancy, OracleError> {
    if report.allocations.len() != oracle.allocations.len() {
        return Err(OracleError::RosterMismatch(format!(
            "report has {} users, oracle has {}",
            report.allocations.len(),
            oracle.allocations.len()
        )));
    }
    let mut out = Discrepancy::default();
    for a in &report.allocations {
        let o = oracle
            .rate_of(a.id.as_str())
            .ok_or_else(|| OracleError::RosterMismatch(format!("user {} missing from oracle", a.id)))?;
        let d = (a.rate - o).abs();
        out.max_rate = out.max_rate.max(d);
        out.max_rate_scaled = out.max_rate_scaled.max(d / o.max(1.0));
    }
    for &p in &report.prices {
        let d = (p - oracle.price).abs();
        out.max_price = out.max_price.max(d);
        out.max_price_rel = out.max_price_rel.max(d / oracle.price);
    }
    if report.sector_rates.len() != oracle.sector_rates.len() {
        return Err(OracleError::RosterMismatch("sector counts differ".into()));
    }
    for (r, o) in report.sector_rates.iter().zip(&oracle.sector_rates) {
        out.max_sector_rate = out.max_sector_rate.max((r - o).abs());
    }
    Ok(out)
}

/// `Σ_i (ln U_i(r_i(p)) − p·r_i(p)) + p·R`, the dual function at `p`.
pub fn dual_value(users: &[UserEquipment], total_rate: f64, price: f64) -> Result<f64, UtilityError> {
    let mut value = price * total_rate;
    for u in users {
        let r = demand(&u.utility, price)?;
        value += u.utility.log_eval(r)? - price * r;
    }
    Ok(value)
}

/// `Σ_i ln U_i(r_i)` for an allocation given in the same order as `users`.
pub fn primal_value(users: &[UserEquipment], rates: &[f64]) -> Result<f64, UtilityError> {
    users.iter().zip(rates).map(|(u, &r)| u.utility.log_eval(r)).sum()
}
