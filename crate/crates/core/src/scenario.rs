//! Network scenarios: data model, validation, the built-in experiments, and
//! the JSON scenario document.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::mme::DEFAULT_DELTA;
use crate::ue::{UserEquipment, UserId};
use crate::utility::{UtilityFunction, UtilityKind, DEFAULT_LOG_R_MAX};

pub const DEFAULT_MAX_ITERATIONS: usize = 1000;
pub const DEFAULT_INITIAL_BID: f64 = 1.0;
pub const DEFAULT_DAMPING: f64 = 1.0;

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 2] = ["table1", "table1-unbalanced"];

/// Users removed from the balanced experiment to unbalance sector 1.
pub const UNBALANCED_EXITS: [&str; 9] = ["A4", "A5", "A6", "B4", "B5", "B6", "C4", "C5", "C6"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("malformed scenario document: {0}")]
    Syntax(String),
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("sector direction(s) {directions:?} have no users in any cell")]
    EmptyDirections { directions: Vec<usize> },
    #[error("unknown builtin scenario `{0}` (valid: table1, table1-unbalanced)")]
    UnknownBuiltin(String),
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Schema { path: path.into(), message: message.into() }
}

/// A complete network description plus solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub cells: usize,
    pub sectors: usize,
    pub users: Vec<UserEquipment>,
    pub delta: f64,
    pub max_iterations: usize,
    pub initial_bid: f64,
    pub damping: f64,
    pub log_r_max: f64,
}

impl Scenario {
    /// Empty network with default solver settings.
    pub fn new(cells: usize, sectors: usize) -> Self {
        Scenario {
            cells,
            sectors,
            users: Vec::new(),
            delta: DEFAULT_DELTA,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            initial_bid: DEFAULT_INITIAL_BID,
            damping: DEFAULT_DAMPING,
            log_r_max: DEFAULT_LOG_R_MAX,
        }
    }

    pub fn with_user(mut self, id: &str, cell: usize, sector: usize, utility: UtilityFunction) -> Self {
        self.users.push(UserEquipment { id: UserId::new(id), cell, sector, utility });
        self
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.cells == 0 {
            return Err(schema("cells", "must be at least 1"));
        }
        if self.sectors == 0 {
            return Err(schema("sectors", "must be at least 1"));
        }
        positive("delta", self.delta)?;
        if self.max_iterations == 0 {
            return Err(schema("max_iterations", "must be at least 1"));
        }
        positive("initial_bid", self.initial_bid)?;
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(schema("damping", format!("must lie in (0, 1], got {}", self.damping)));
        }
        positive("log_r_max", self.log_r_max)?;

        let mut seen = HashSet::new();
        let mut populated = vec![false; self.sectors];
        for (i, user) in self.users.iter().enumerate() {
            let path = format!("users[{i}] ({})", user.id);
            let id = user.id.as_str();
            if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(schema(format!("users[{i}].id"), format!("`{id}` must be non-empty [A-Za-z0-9_-]")));
            }
            if !seen.insert(id) {
                return Err(schema(format!("users[{i}].id"), format!("duplicate user id `{id}`")));
            }
            if user.cell == 0 || user.cell > self.cells {
                return Err(schema(
                    format!("{path}.cell"),
                    format!("cell {} outside 1..={}", user.cell, self.cells),
                ));
            }
            if user.sector == 0 || user.sector > self.sectors {
                return Err(schema(
                    format!("{path}.sector"),
                    format!("sector {} outside 1..={}", user.sector, self.sectors),
                ));
            }
            user.utility
                .validate()
                .map_err(|e| schema(format!("{path}.utility"), e.to_string()))?;
            populated[user.sector - 1] = true;
        }
        let empty: Vec<usize> = populated
            .iter()
            .enumerate()
            .filter(|(_, &p)| !p)
            .map(|(l, _)| l + 1)
            .collect();
        if !empty.is_empty() {
            return Err(ScenarioError::EmptyDirections { directions: empty });
        }
        Ok(())
    }

    pub fn user(&self, id: &str) -> Option<&UserEquipment> {
        self.users.iter().find(|u| u.id.as_str() == id)
    }

    /// SHA-256 of the canonical document, hex encoded.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(write_scenario(self).as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn positive(path: &str, value: f64) -> Result<(), ScenarioError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(schema(path, format!("must be finite and > 0, got {value}")))
    }
}

// Table 1 layout: per cell and sector, three sigmoidal (a, b) users followed by
// three logarithmic k users. User numbers run 1..=18 within a cell.
const TABLE1_SIGMOIDAL: [[[(f64, f64); 3]; 3]; 3] = [
    [
        [(3.0, 10.0), (3.0, 10.3), (1.0, 10.6)],
        [(3.0, 10.0), (3.0, 11.0), (1.0, 12.0)],
        [(3.0, 15.1), (3.0, 15.3), (3.0, 15.5)],
    ],
    [
        [(3.0, 10.9), (3.0, 11.2), (1.0, 11.5)],
        [(3.0, 13.0), (3.0, 14.0), (1.0, 15.0)],
        [(3.0, 15.7), (3.0, 15.9), (3.0, 17.3)],
    ],
    [
        [(3.0, 11.8), (3.0, 12.1), (1.0, 12.4)],
        [(3.0, 16.0), (3.0, 17.0), (1.0, 18.0)],
        [(3.0, 17.5), (3.0, 17.7), (3.0, 17.9)],
    ],
];

const TABLE1_LOGARITHMIC: [[[f64; 3]; 3]; 3] = [
    [[1.1, 1.2, 1.3], [1.0, 2.0, 3.0], [10.0, 11.0, 12.0]],
    [[1.4, 1.5, 1.6], [4.0, 5.0, 6.0], [13.0, 14.0, 15.0]],
    [[1.7, 1.8, 1.9], [7.0, 8.0, 9.0], [16.0, 17.0, 18.0]],
];

const CELL_LABELS: [char; 3] = ['A', 'B', 'C'];

/// The 3-cell, 3-sector, 54-user balanced experiment.
pub fn builtin_table1() -> Scenario {
    let mut s = Scenario::new(3, 3);
    for (c, label) in CELL_LABELS.iter().enumerate() {
        for l in 0..3 {
            let base = 6 * l;
            for (j, &(a, b)) in TABLE1_SIGMOIDAL[c][l].iter().enumerate() {
                let id = format!("{label}{}", base + j + 1);
                s = s.with_user(&id, c + 1, l + 1, UtilityFunction::Sigmoidal { a, b });
            }
            for (j, &k) in TABLE1_LOGARITHMIC[c][l].iter().enumerate() {
                let id = format!("{label}{}", base + j + 4);
                s = s.with_user(&id, c + 1, l + 1, UtilityFunction::Logarithmic { k, r_max: DEFAULT_LOG_R_MAX });
            }
        }
    }
    s
}

/// Table 1 without the nine logarithmic sector-1 users.
pub fn builtin_table1_unbalanced() -> Scenario {
    let mut s = builtin_table1();
    s.users.retain(|u| !UNBALANCED_EXITS.contains(&u.id.as_str()));
    s
}

pub fn builtin(name: &str) -> Result<Scenario, ScenarioError> {
    match name {
        "table1" => Ok(builtin_table1()),
        "table1-unbalanced" => Ok(builtin_table1_unbalanced()),
        other => Err(ScenarioError::UnknownBuiltin(other.to_string())),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    cells: usize,
    sectors: usize,
    #[serde(default = "default_delta")]
    delta: f64,
    #[serde(default = "default_max_iterations")]
    max_iterations: usize,
    #[serde(default = "default_initial_bid")]
    initial_bid: f64,
    #[serde(default = "default_damping")]
    damping: f64,
    #[serde(default = "default_log_r_max")]
    log_r_max: f64,
    users: Vec<UserDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UserDoc {
    id: String,
    cell: usize,
    sector: usize,
    kind: UtilityKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r_max: Option<f64>,
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}
fn default_max_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}
fn default_initial_bid() -> f64 {
    DEFAULT_INITIAL_BID
}
fn default_damping() -> f64 {
    DEFAULT_DAMPING
}
fn default_log_r_max() -> f64 {
    DEFAULT_LOG_R_MAX
}

impl UserDoc {
    fn resolve(&self, index: usize, log_r_max: f64) -> Result<UserEquipment, ScenarioError> {
        let path = format!("users[{index}] ({})", self.id);
        let require = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| schema(format!("{path}.{name}"), format!("{:?} user `{}` is missing `{name}`", self.kind, self.id)))
        };
        let reject = |name: &str, v: Option<f64>| match v {
            Some(_) => Err(schema(
                format!("{path}.{name}"),
                format!("`{name}` does not apply to {:?} user `{}`", self.kind, self.id),
            )),
            None => Ok(()),
        };
        let utility = match self.kind {
            UtilityKind::Sigmoidal => {
                reject("k", self.k)?;
                reject("r_max", self.r_max)?;
                UtilityFunction::Sigmoidal { a: require("a", self.a)?, b: require("b", self.b)? }
            }
            UtilityKind::Logarithmic => {
                reject("a", self.a)?;
                reject("b", self.b)?;
                UtilityFunction::Logarithmic {
                    k: require("k", self.k)?,
                    r_max: self.r_max.unwrap_or(log_r_max),
                }
            }
        };
        Ok(UserEquipment { id: UserId::new(self.id.clone()), cell: self.cell, sector: self.sector, utility })
    }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDoc = serde_json::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))?;
    let users = doc
        .users
        .iter()
        .enumerate()
        .map(|(i, u)| u.resolve(i, doc.log_r_max))
        .collect::<Result<Vec<_>, _>>()?;
    let scenario = Scenario {
        cells: doc.cells,
        sectors: doc.sectors,
        users,
        delta: doc.delta,
        max_iterations: doc.max_iterations,
        initial_bid: doc.initial_bid,
        damping: doc.damping,
        log_r_max: doc.log_r_max,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Canonical document: every field explicit, pretty-printed, trailing newline.
pub fn write_scenario(s: &Scenario) -> String {
    let users = s
        .users
        .iter()
        .map(|u| {
            let (a, b, k, r_max) = match u.utility {
                UtilityFunction::Sigmoidal { a, b } => (Some(a), Some(b), None, None),
                UtilityFunction::Logarithmic { k, r_max } => (None, None, Some(k), Some(r_max)),
            };
            UserDoc {
                id: u.id.as_str().to_string(),
                cell: u.cell,
                sector: u.sector,
                kind: u.utility.kind(),
                a,
                b,
                k,
                r_max,
            }
        })
        .collect();
    let doc = ScenarioDoc {
        cells: s.cells,
        sectors: s.sectors,
        delta: s.delta,
        max_iterations: s.max_iterations,
        initial_bid: s.initial_bid,
        damping: s.damping,
        log_r_max: s.log_r_max,
        users,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("scenario document serializes");
    text.push('\n');
    text
}

/// Users grouped by sector direction (1-based key), each group in id order.
pub fn users_by_direction(s: &Scenario) -> BTreeMap<usize, Vec<&UserEquipment>> {
    let mut map: BTreeMap<usize, Vec<&UserEquipment>> = BTreeMap::new();
    for u in &s.users {
        map.entry(u.sector).or_default().push(u);
    }
    for group in map.values_mut() {
        group.sort_by(|x, y| x.id.cmp(&y.id));
    }
    map
}
