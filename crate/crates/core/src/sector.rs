//! eNodeB sector agent: sums member bids and turns the MME's rate grant into
//! a shadow price.

use crate::ProtocolError;

/// Per-(cell, sector) state held by an eNodeB.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorState {
    pub cell: usize,
    pub sector: usize,
    /// `W_k^l(n)`, this sector's bid total.
    pub aggregated_bid: f64,
    /// `p_l(n)`; zero until the first MME response.
    pub price: f64,
}

impl SectorState {
    pub fn new(cell: usize, sector: usize) -> Self {
        SectorState { cell, sector, aggregated_bid: 0.0, price: 0.0 }
    }
}

/// Left-to-right sum of bids. The caller supplies them in user-id order.
pub fn aggregate_bids(bids: &[f64]) -> Result<f64, ProtocolError> {
    let mut total = 0.0;
    for (index, &bid) in bids.iter().enumerate() {
        if !(bid.is_finite() && bid > 0.0) {
            return Err(ProtocolError::NonPositiveBid { index, bid });
        }
        total += bid;
    }
    Ok(total)
}

/// `p_l = W^l / R^l`, where `W^l` is the direction total over all cells as
/// forwarded by the MME.
pub fn compute_price(total_direction_bid: f64, sector_rate: f64) -> Result<f64, ProtocolError> {
    if !(total_direction_bid.is_finite() && total_direction_bid > 0.0) {
        return Err(ProtocolError::NonPositive { what: "direction bid", value: total_direction_bid });
    }
    if !(sector_rate.is_finite() && sector_rate > 0.0) {
        return Err(ProtocolError::NonPositive { what: "sector rate", value: sector_rate });
    }
    Ok(total_direction_bid / sector_rate)
}
