//! Context-aware rate allocation for sectorized cellular networks.
//!
//! Users run real-time (sigmoidal) or delay-tolerant (logarithmic) traffic and
//! the network maximizes the product of their utilities. The optimum is reached
//! by a bidding protocol between three kinds of agents:
//!
//! - UEs ([`ue`]) answer a shadow price with the rate maximizing
//!   `ln U(r) − p·r` and bid `p·r`;
//! - eNodeB sectors ([`sector`]) aggregate bids and turn the MME's rate grant
//!   into a price;
//! - the MME ([`mme`]) splits the total rate across sector directions in
//!   proportion to their bids and stops the rounds once bids settle.
//!
//! [`engine`] drives the rounds, [`oracle`] solves the same problem centrally
//! for verification, [`scenario`] holds network descriptions (including the
//! built-in 54-user experiment), and [`results`] renders sweeps as CSV.

use thiserror::Error;

pub mod engine;
pub mod mme;
pub mod oracle;
pub mod results;
pub mod scenario;
pub mod sector;
pub mod ue;
pub mod utility;

pub use engine::{run_sweep, run_to_convergence, ConvergenceReport, EngineError, Simulation, SweepError};
pub use oracle::{compare, solve_centralized, OracleSolution};
pub use results::SweepResult;
pub use scenario::{builtin_table1, builtin_table1_unbalanced, parse_scenario, write_scenario, Scenario};
pub use ue::{UserEquipment, UserId};
pub use utility::UtilityFunction;

/// Violations of the message contract between agents.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("bid #{index} is {bid}; every user must bid a positive amount")]
    NonPositiveBid { index: usize, bid: f64 },
    #[error("{what} must be finite and > 0, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("direction {sector} has total bid {bid}; proportional split needs every W^l > 0")]
    EmptyDirectionBid { sector: usize, bid: f64 },
    #[error("aggregate matrix is empty")]
    EmptyMatrix,
    #[error("cell {cell} reported {found} sectors, expected {expected}")]
    Ragged { cell: usize, expected: usize, found: usize },
}
