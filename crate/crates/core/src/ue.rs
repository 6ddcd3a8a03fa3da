//! User-equipment side of the bidding protocol.
//!
//! A UE receives the shadow price of its sector, picks the rate maximizing
//! `ln U(r) − p·r`, and bids `w = p·r`. Since `ln U` is strictly concave with
//! unbounded slope at zero, the maximizer is the unique root of
//! `ln U'(r) = p` and is always strictly positive.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

use crate::utility::{UtilityError, UtilityFunction};

/// Relative tolerance of the rate bisection.
pub const RATE_TOLERANCE: f64 = 1e-10;
/// Iteration cap of the rate bisection.
pub const MAX_BISECTION_STEPS: usize = 200;

const BRACKET_LO: f64 = 1e-12;
const BRACKET_HI: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UeError {
    #[error("shadow price must be finite and > 0, got {0}")]
    Price(f64),
    #[error(transparent)]
    Utility(#[from] UtilityError),
    #[error("rate bracket exceeded {limit} without crossing price {price}; utility implementation is broken")]
    Bracket { price: f64, limit: f64 },
}

/// User label such as `A7`. Ordered naturally: alphabetic prefix first, then the
/// numeric suffix by value, so `A2 < A10 < B1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UserId(String);

impl UserId {
    pub fn new(id: impl Into<String>) -> Self {
        UserId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn split(&self) -> (&str, Option<u64>, &str) {
        let digits_at = self.0.find(|c: char| c.is_ascii_digit()).unwrap_or(self.0.len());
        let (prefix, rest) = self.0.split_at(digits_at);
        let digits_end = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
        let (num, tail) = rest.split_at(digits_end);
        (prefix, num.parse().ok(), tail)
    }
}

impl Ord for UserId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.split()
            .cmp(&other.split())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for UserId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(&self.0)
    }
}

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        UserId::new(s)
    }
}

/// A user homed in exactly one (cell, sector). Indices are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct UserEquipment {
    pub id: UserId,
    pub cell: usize,
    pub sector: usize,
    pub utility: UtilityFunction,
}

/// One UE response to a price: the chosen rate and the matching bid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BidUpdate {
    pub rate: f64,
    pub bid: f64,
}

/// Rate maximizing `ln U(r) − price·r`.
///
/// `bracket_cap` bounds the search: the upper bracket end is doubled from 1
/// and may not pass `2^60 · bracket_cap`.
pub fn solve_rate(utility: &UtilityFunction, price: f64, bracket_cap: f64) -> Result<f64, UeError> {
    if !(price.is_finite() && price > 0.0) {
        return Err(UeError::Price(price));
    }
    utility.validate()?;
    let excess = |r: f64| utility.log_deriv_unchecked(r) - price;

    let limit = bracket_cap.max(BRACKET_HI) * 2f64.powi(60);
    let mut hi = BRACKET_HI;
    while excess(hi) > 0.0 {
        hi *= 2.0;
        if hi > limit {
            return Err(UeError::Bracket { price, limit });
        }
    }
    let mut lo = BRACKET_LO;
    while excess(lo) < 0.0 {
        // Only reachable for prices beyond ~1e12.
        lo *= 0.5;
        if lo < f64::MIN_POSITIVE {
            return Err(UeError::Bracket { price, limit });
        }
    }
    if lo > hi {
        lo = hi * 0.5;
    }

    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= RATE_TOLERANCE * lo {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Solves for the rate and returns it together with the bid `price · rate`.
pub fn make_bid(utility: &UtilityFunction, price: f64, bracket_cap: f64) -> Result<BidUpdate, UeError> {
    let rate = solve_rate(utility, price, bracket_cap)?;
    Ok(BidUpdate { rate, bid: price * rate })
}
