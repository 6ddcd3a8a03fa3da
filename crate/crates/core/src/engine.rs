//! Synchronous bidding rounds between UEs, eNodeB sectors, and the MME.
//!
//! Every round follows the same message order: UE bids, per-sector aggregates,
//! the MME response (or stop), sector prices, new UE bids. The loop itself is
//! sequential; only the independent UE solves inside a round may run on a
//! worker pool, and their results are always collected in user-id order, so
//! the worker count never changes a single bit of the output.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::mme::{allocate_sector_rates, check_convergence, total_direction_bids, MmeState};
use crate::results::SweepResult;
use crate::scenario::{Scenario, ScenarioError};
use crate::sector::{aggregate_bids, compute_price, SectorState};
use crate::ue::{make_bid, UeError, UserId};
use crate::ProtocolError;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("total rate must be finite and > 0, got {0}")]
    TotalRate(f64),
    #[error("user {user}: {source}")]
    Ue { user: UserId, source: UeError },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("bidding did not converge within {max_iterations} rounds at R = {total_rate}")]
    NonConvergence {
        total_rate: f64,
        max_iterations: usize,
        /// `W^l(n)` for every round that ran.
        bid_history: Vec<Vec<f64>>,
    },
    #[error("initial bid vector has {found} entries, scenario has {expected} users")]
    InitialBids { expected: usize, found: usize },
    #[error("failed to write message trace: {0}")]
    Trace(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep needs at least one rate")]
    Empty,
    #[error("sweep rates must be strictly increasing ({prev} then {next})")]
    NotIncreasing { prev: f64, next: f64 },
    #[error("at R = {rate}: {source}")]
    Point { rate: f64, source: EngineError },
}

/// Protocol participant, used as sender/receiver in traces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Entity {
    Ue(UserId),
    Sector { cell: usize, sector: usize },
    Mme,
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entity::Ue(id) => write!(f, "ue:{id}"),
            Entity::Sector { cell, sector } => write!(f, "enb:{cell}/{sector}"),
            Entity::Mme => f.write_str("mme"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RoundMessage {
    BidSubmit { user: UserId, bid: f64 },
    SectorAggregate { cell: usize, sector: usize, bid: f64 },
    MmeResponse { sector: usize, sector_rate: f64, direction_bid: f64 },
    PriceBroadcast { sector: usize, price: f64 },
    Stop,
}

impl RoundMessage {
    pub fn variant(&self) -> &'static str {
        match self {
            RoundMessage::BidSubmit { .. } => "BidSubmit",
            RoundMessage::SectorAggregate { .. } => "SectorAggregate",
            RoundMessage::MmeResponse { .. } => "MmeResponse",
            RoundMessage::PriceBroadcast { .. } => "PriceBroadcast",
            RoundMessage::Stop => "Stop",
        }
    }

    fn payload(&self) -> serde_json::Value {
        match self {
            RoundMessage::BidSubmit { user, bid } => json!({ "user": user.as_str(), "bid": bid }),
            RoundMessage::SectorAggregate { cell, sector, bid } => {
                json!({ "cell": cell, "sector": sector, "aggregated_bid": bid })
            }
            RoundMessage::MmeResponse { sector, sector_rate, direction_bid } => {
                json!({ "sector": sector, "sector_rate": sector_rate, "direction_bid": direction_bid })
            }
            RoundMessage::PriceBroadcast { sector, price } => json!({ "sector": sector, "price": price }),
            RoundMessage::Stop => json!({}),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub round: usize,
    pub sender: Entity,
    pub receiver: Entity,
    pub message: RoundMessage,
}

impl TraceRecord {
    /// One JSON object: `round`, `sender`, `receiver`, `variant`, `payload`.
    pub fn to_json(&self) -> String {
        json!({
            "round": self.round,
            "sender": self.sender.to_string(),
            "receiver": self.receiver.to_string(),
            "variant": self.message.variant(),
            "payload": self.message.payload(),
        })
        .to_string()
    }
}

/// Receives every protocol message as it is sent.
pub trait MessageSink {
    fn record(&mut self, record: TraceRecord) -> std::io::Result<()>;
}

impl MessageSink for Vec<TraceRecord> {
    fn record(&mut self, record: TraceRecord) -> std::io::Result<()> {
        self.push(record);
        Ok(())
    }
}

/// Writes one JSON record per line.
pub struct JsonLinesSink<W: Write>(pub W);

impl<W: Write> MessageSink for JsonLinesSink<W> {
    fn record(&mut self, record: TraceRecord) -> std::io::Result<()> {
        writeln!(self.0, "{}", record.to_json())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserAllocation {
    pub id: UserId,
    pub cell: usize,
    pub sector: usize,
    pub rate: f64,
    pub bid: f64,
}

/// Outcome of one converged run.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub total_rate: f64,
    /// Stopping round `n*`.
    pub iterations: usize,
    /// Users in id order with their final allocation `r_i = w_i / p_l`.
    pub allocations: Vec<UserAllocation>,
    /// `p_l` per direction.
    pub prices: Vec<f64>,
    /// `R^l` per direction.
    pub sector_rates: Vec<f64>,
    /// `W^l` per direction at the stopping round.
    pub direction_bids: Vec<f64>,
    /// `W^l(n)` for `n = 1..=n*`.
    pub bid_history: Vec<Vec<f64>>,
}

impl ConvergenceReport {
    pub fn rate_of(&self, id: &str) -> Option<f64> {
        self.allocations.iter().find(|a| a.id.as_str() == id).map(|a| a.rate)
    }

    pub fn rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.allocations.iter().map(|a| a.rate)
    }

    pub fn total_allocated(&self) -> f64 {
        self.rates().sum()
    }

    /// Mean of the per-direction prices (they agree up to rounding).
    pub fn price(&self) -> f64 {
        self.prices.iter().sum::<f64>() / self.prices.len() as f64
    }
}

/// A configured bidding run over one scenario.
pub struct Simulation<'a> {
    scenario: &'a Scenario,
    workers: usize,
    warm_start: bool,
    sink: Option<&'a mut dyn MessageSink>,
}

struct Roster<'a> {
    users: Vec<&'a crate::ue::UserEquipment>,
    /// Indices into `users`, per cell then sector, each in id order.
    members: Vec<Vec<Vec<usize>>>,
}

impl<'a> Roster<'a> {
    fn new(scenario: &'a Scenario) -> Self {
        let mut users: Vec<_> = scenario.users.iter().collect();
        users.sort_by(|a, b| a.id.cmp(&b.id));
        let mut members = vec![vec![Vec::new(); scenario.sectors]; scenario.cells];
        for (i, u) in users.iter().enumerate() {
            members[u.cell - 1][u.sector - 1].push(i);
        }
        Roster { users, members }
    }
}

impl<'a> Simulation<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        Simulation { scenario, workers: 1, warm_start: false, sink: None }
    }

    /// Number of threads used for the per-round UE solves.
    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    /// In sweeps, seed each point with the previous point's final bids.
    pub fn warm_start(mut self, enabled: bool) -> Self {
        self.warm_start = enabled;
        self
    }

    pub fn trace(mut self, sink: &'a mut dyn MessageSink) -> Self {
        self.sink = Some(sink);
        self
    }

    fn emit(&mut self, round: usize, sender: Entity, receiver: Entity, message: RoundMessage) -> Result<(), EngineError> {
        if let Some(sink) = self.sink.as_mut() {
            sink.record(TraceRecord { round, sender, receiver, message })?;
        }
        Ok(())
    }

    /// Runs the protocol at total rate `total_rate` from the scenario's initial bid.
    pub fn run(&mut self, total_rate: f64) -> Result<ConvergenceReport, EngineError> {
        self.run_from(total_rate, None)
    }

    /// Like [`run`](Self::run) with explicit first-round bids, given in user-id order.
    pub fn run_from(&mut self, total_rate: f64, initial_bids: Option<&[f64]>) -> Result<ConvergenceReport, EngineError> {
        let scenario = self.scenario;
        scenario.validate()?;
        if !(total_rate.is_finite() && total_rate > 0.0) {
            return Err(EngineError::TotalRate(total_rate));
        }
        let roster = Roster::new(scenario);
        let n_users = roster.users.len();
        let sectors = scenario.sectors;
        let theta = scenario.damping;

        let mut bids = match initial_bids {
            Some(b) if b.len() != n_users => {
                return Err(EngineError::InitialBids { expected: n_users, found: b.len() })
            }
            Some(b) => b.to_vec(),
            None => vec![scenario.initial_bid; n_users],
        };

        let pool = if self.workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(self.workers)
                    .build()
                    .expect("worker pool"),
            )
        } else {
            None
        };

        let mut mme = MmeState::new(total_rate, sectors, scenario.delta);
        let mut states: Vec<Vec<SectorState>> = (1..=scenario.cells)
            .map(|k| (1..=sectors).map(|l| SectorState::new(k, l)).collect())
            .collect();

        // Round 0: initial split, then the first bids.
        for k in 1..=scenario.cells {
            for l in 1..=sectors {
                let msg = RoundMessage::MmeResponse { sector: l, sector_rate: mme.sector_rates[l - 1], direction_bid: 0.0 };
                self.emit(0, Entity::Mme, Entity::Sector { cell: k, sector: l }, msg)?;
            }
        }
        self.emit_bids(1, &roster, &bids)?;

        let mut history = Vec::new();
        for round in 1..=scenario.max_iterations {
            let mut per_cell = Vec::with_capacity(scenario.cells);
            for (k, cell) in roster.members.iter().enumerate() {
                let mut row = Vec::with_capacity(sectors);
                for (l, members) in cell.iter().enumerate() {
                    let member_bids: Vec<f64> = members.iter().map(|&i| bids[i]).collect();
                    let w = aggregate_bids(&member_bids)?;
                    states[k][l].aggregated_bid = w;
                    let msg = RoundMessage::SectorAggregate { cell: k + 1, sector: l + 1, bid: w };
                    self.emit(round, Entity::Sector { cell: k + 1, sector: l + 1 }, Entity::Mme, msg)?;
                    row.push(w);
                }
                per_cell.push(row);
            }
            let direction_bids = total_direction_bids(&per_cell)?;
            history.push(direction_bids.clone());
            mme.receive(direction_bids);

            let sector_rates = allocate_sector_rates(&mme.direction_bids, total_rate)?;
            mme.sector_rates = sector_rates;
            let prices = mme
                .direction_bids
                .iter()
                .zip(&mme.sector_rates)
                .map(|(&w, &r)| compute_price(w, r))
                .collect::<Result<Vec<_>, _>>()?;

            if check_convergence(&mme) {
                self.emit_stop(round, &roster)?;
                let allocations = roster
                    .users
                    .iter()
                    .zip(&bids)
                    .map(|(u, &bid)| UserAllocation {
                        id: u.id.clone(),
                        cell: u.cell,
                        sector: u.sector,
                        rate: bid / prices[u.sector - 1],
                        bid,
                    })
                    .collect();
                return Ok(ConvergenceReport {
                    total_rate,
                    iterations: round,
                    allocations,
                    prices,
                    sector_rates: mme.sector_rates,
                    direction_bids: mme.direction_bids,
                    bid_history: history,
                });
            }

            for k in 1..=scenario.cells {
                for l in 1..=sectors {
                    let msg = RoundMessage::MmeResponse {
                        sector: l,
                        sector_rate: mme.sector_rates[l - 1],
                        direction_bid: mme.direction_bids[l - 1],
                    };
                    self.emit(round, Entity::Mme, Entity::Sector { cell: k, sector: l }, msg)?;
                }
            }
            for row in states.iter_mut() {
                for s in row.iter_mut() {
                    s.price = prices[s.sector - 1];
                }
            }
            for u in &roster.users {
                let msg = RoundMessage::PriceBroadcast { sector: u.sector, price: prices[u.sector - 1] };
                self.emit(round, Entity::Sector { cell: u.cell, sector: u.sector }, Entity::Ue(u.id.clone()), msg)?;
            }

            let solve = |i: usize| {
                let u = roster.users[i];
                make_bid(&u.utility, prices[u.sector - 1], total_rate)
                    .map_err(|source| EngineError::Ue { user: u.id.clone(), source })
            };
            let updates: Vec<_> = match &pool {
                Some(pool) => pool.install(|| (0..n_users).into_par_iter().map(solve).collect()),
                None => (0..n_users).map(solve).collect(),
            };
            for (bid, update) in bids.iter_mut().zip(updates) {
                let fresh = update?.bid;
                *bid = if theta == 1.0 { fresh } else { (1.0 - theta) * *bid + theta * fresh };
            }
            self.emit_bids(round + 1, &roster, &bids)?;
        }
        Err(EngineError::NonConvergence {
            total_rate,
            max_iterations: scenario.max_iterations,
            bid_history: history,
        })
    }

    fn emit_bids(&mut self, round: usize, roster: &Roster<'_>, bids: &[f64]) -> Result<(), EngineError> {
        if self.sink.is_none() {
            return Ok(());
        }
        for (u, &bid) in roster.users.iter().zip(bids) {
            let msg = RoundMessage::BidSubmit { user: u.id.clone(), bid };
            self.emit(round, Entity::Ue(u.id.clone()), Entity::Sector { cell: u.cell, sector: u.sector }, msg)?;
        }
        Ok(())
    }

    fn emit_stop(&mut self, round: usize, roster: &Roster<'_>) -> Result<(), EngineError> {
        if self.sink.is_none() {
            return Ok(());
        }
        for k in 1..=self.scenario.cells {
            for l in 1..=self.scenario.sectors {
                self.emit(round, Entity::Mme, Entity::Sector { cell: k, sector: l }, RoundMessage::Stop)?;
            }
        }
        for u in &roster.users {
            self.emit(round, Entity::Sector { cell: u.cell, sector: u.sector }, Entity::Ue(u.id.clone()), RoundMessage::Stop)?;
        }
        Ok(())
    }

    /// One independent run per rate, in input order.
    pub fn sweep(&mut self, rates: &[f64]) -> Result<SweepResult, SweepError> {
        let Some(&first) = rates.first() else {
            return Err(SweepError::Empty);
        };
        let mut prev = first;
        for &next in &rates[1..] {
            if next.partial_cmp(&prev) != Some(std::cmp::Ordering::Greater) {
                return Err(SweepError::NotIncreasing { prev, next });
            }
            prev = next;
        }
        let mut points = Vec::with_capacity(rates.len());
        let mut seed: Option<Vec<f64>> = None;
        for &rate in rates {
            let report = self
                .run_from(rate, seed.as_deref())
                .map_err(|source| SweepError::Point { rate, source })?;
            if self.warm_start {
                seed = Some(report.allocations.iter().map(|a| a.bid).collect());
            }
            points.push((rate, report));
        }
        Ok(SweepResult::new(self.scenario, points))
    }
}

/// Runs the protocol on one worker.
pub fn run_to_convergence(scenario: &Scenario, total_rate: f64) -> Result<ConvergenceReport, EngineError> {
    Simulation::new(scenario).run(total_rate)
}

/// Independent runs over an increasing list of total rates.
pub fn run_sweep(scenario: &Scenario, rates: &[f64]) -> Result<SweepResult, SweepError> {
    Simulation::new(scenario).sweep(rates)
}
