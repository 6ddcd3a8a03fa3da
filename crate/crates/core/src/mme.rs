//! MME agent: totals the sector bids per direction, splits the eNodeB rate
//! budget proportionally to those totals, and decides when bidding stops.

use crate::ProtocolError;

/// Default exit threshold on per-direction bid changes.
pub const DEFAULT_DELTA: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct MmeState {
    pub total_rate: f64,
    /// `W^l(n)`.
    pub direction_bids: Vec<f64>,
    /// `W^l(n − 1)`.
    pub prev_direction_bids: Vec<f64>,
    /// `R^l(n)`.
    pub sector_rates: Vec<f64>,
    pub delta: f64,
}

impl MmeState {
    /// Round-zero state: `R^l(0) = R/L` and `W^l(0) = 0`.
    pub fn new(total_rate: f64, sectors: usize, delta: f64) -> Self {
        MmeState {
            total_rate,
            direction_bids: vec![0.0; sectors],
            prev_direction_bids: vec![0.0; sectors],
            sector_rates: vec![total_rate / sectors as f64; sectors],
            delta,
        }
    }

    /// Shifts the current totals into history and installs the new ones.
    pub fn receive(&mut self, direction_bids: Vec<f64>) {
        self.prev_direction_bids = std::mem::replace(&mut self.direction_bids, direction_bids);
    }
}

/// Column sums of the per-cell aggregate matrix, accumulated in cell order.
pub fn total_direction_bids(per_cell: &[Vec<f64>]) -> Result<Vec<f64>, ProtocolError> {
    let Some(first) = per_cell.first() else {
        return Err(ProtocolError::EmptyMatrix);
    };
    let sectors = first.len();
    if sectors == 0 {
        return Err(ProtocolError::EmptyMatrix);
    }
    let mut totals = vec![0.0; sectors];
    for (cell, row) in per_cell.iter().enumerate() {
        if row.len() != sectors {
            return Err(ProtocolError::Ragged { cell, expected: sectors, found: row.len() });
        }
        for (t, w) in totals.iter_mut().zip(row) {
            *t += w;
        }
    }
    Ok(totals)
}

/// `R^l = W^l · R / Σ W`.
pub fn allocate_sector_rates(direction_bids: &[f64], total_rate: f64) -> Result<Vec<f64>, ProtocolError> {
    if !(total_rate.is_finite() && total_rate > 0.0) {
        return Err(ProtocolError::NonPositive { what: "total rate", value: total_rate });
    }
    if direction_bids.is_empty() {
        return Err(ProtocolError::EmptyMatrix);
    }
    for (sector, &w) in direction_bids.iter().enumerate() {
        if !(w.is_finite() && w > 0.0) {
            return Err(ProtocolError::EmptyDirectionBid { sector: sector + 1, bid: w });
        }
    }
    let sum: f64 = direction_bids.iter().sum();
    Ok(direction_bids.iter().map(|w| w * total_rate / sum).collect())
}

/// True iff every direction moved by less than `delta` since the last round.
pub fn check_convergence(state: &MmeState) -> bool {
    state
        .direction_bids
        .iter()
        .zip(&state.prev_direction_bids)
        .all(|(now, prev)| (now - prev).abs() < state.delta)
}
