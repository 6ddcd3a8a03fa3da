//! Tabular outputs for sweeps over the total rate `R`.
//!
//! CSV dialect: comma separator, `.` decimal point, LF line endings, no
//! quoting. Numbers use Rust's shortest round-trip formatting, so every value
//! reads back bit-identical. Prices are written unscaled.

use std::fmt::Write as _;

use thiserror::Error;

use crate::engine::ConvergenceReport;
use crate::oracle::Discrepancy;
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResultsError {
    #[error("direction {direction} out of range 1..={sectors}")]
    Direction { direction: usize, sectors: usize },
}

/// Reports over an increasing list of `R`, tied to the scenario that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    fingerprint: String,
    sectors: usize,
    points: Vec<(f64, ConvergenceReport)>,
}

impl SweepResult {
    pub fn new(scenario: &Scenario, points: Vec<(f64, ConvergenceReport)>) -> Self {
        SweepResult { fingerprint: scenario.fingerprint(), sectors: scenario.sectors, points }
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn sectors(&self) -> usize {
        self.sectors
    }

    pub fn points(&self) -> &[(f64, ConvergenceReport)] {
        &self.points
    }

    pub fn report_at(&self, rate: f64) -> Option<&ConvergenceReport> {
        self.points.iter().find(|(r, _)| *r == rate).map(|(_, rep)| rep)
    }

    pub fn matches(&self, scenario: &Scenario) -> bool {
        self.fingerprint == scenario.fingerprint()
    }
}

/// Per-user rates of one direction: header `R,<id>,...`, one row per `R`.
///
/// Column ids come from the scenario's users in that direction, in id order.
pub fn to_rates_csv(sweep: &SweepResult, scenario: &Scenario, direction: usize) -> Result<String, ResultsError> {
    if direction == 0 || direction > scenario.sectors {
        return Err(ResultsError::Direction { direction, sectors: scenario.sectors });
    }
    let mut ids: Vec<_> = scenario.users.iter().filter(|u| u.sector == direction).map(|u| &u.id).collect();
    ids.sort();

    let mut out = String::from("R");
    for id in &ids {
        out.push(',');
        out.push_str(id.as_str());
    }
    out.push('\n');
    for (rate, report) in sweep.points() {
        write!(out, "{rate}").unwrap();
        for id in &ids {
            let r = report.rate_of(id.as_str()).unwrap_or(f64::NAN);
            write!(out, ",{r}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

/// Sector rates and prices: header `R,R1..RL,p1..pL,iterations`.
pub fn to_sector_csv(sweep: &SweepResult) -> String {
    let l = sweep.sectors();
    let mut out = String::from("R");
    for i in 1..=l {
        write!(out, ",R{i}").unwrap();
    }
    for i in 1..=l {
        write!(out, ",p{i}").unwrap();
    }
    out.push_str(",iterations\n");
    for (rate, report) in sweep.points() {
        write!(out, "{rate}").unwrap();
        for r in &report.sector_rates {
            write!(out, ",{r}").unwrap();
        }
        for p in &report.prices {
            write!(out, ",{p}").unwrap();
        }
        writeln!(out, ",{}", report.iterations).unwrap();
    }
    out
}

/// Distributed-vs-centralized discrepancies: header
/// `R,max_rate_diff,max_rate_diff_scaled,max_price_rel_diff,max_sector_rate_diff`.
pub fn to_oracle_diff_csv(rows: &[(f64, Discrepancy)]) -> String {
    let mut out = String::from("R,max_rate_diff,max_rate_diff_scaled,max_price_rel_diff,max_sector_rate_diff\n");
    for (rate, d) in rows {
        writeln!(
            out,
            "{rate},{},{},{},{}",
            d.max_rate, d.max_rate_scaled, d.max_price_rel, d.max_sector_rate
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run_sweep;
    use crate::scenario::builtin_table1;
    use crate::utility::UtilityFunction;

    #[test]
    fn empty_sweep_is_header_only() {
        let s = builtin_table1();
        let sweep = SweepResult::new(&s, vec![]);
        let csv = to_rates_csv(&sweep, &s, 2).unwrap();
        assert_eq!(csv.lines().count(), 1);
        assert_eq!(csv.trim_end().split(',').count(), 1 + 18);
        assert!(csv.starts_with("R,A7,A8,A9,A10,A11,A12,B7"));
        assert_eq!(to_sector_csv(&sweep), "R,R1,R2,R3,p1,p2,p3,iterations\n");
    }

    #[test]
    fn direction_bounds() {
        let s = builtin_table1();
        let sweep = SweepResult::new(&s, vec![]);
        assert!(to_rates_csv(&sweep, &s, 0).is_err());
        assert_eq!(
            to_rates_csv(&sweep, &s, 4),
            Err(ResultsError::Direction { direction: 4, sectors: 3 })
        );
    }

    #[test]
    fn rows_round_trip_numbers() {
        let u = UtilityFunction::Logarithmic { k: 1.5, r_max: 100.0 };
        let s = Scenario::new(1, 2).with_user("X1", 1, 1, u).with_user("X2", 1, 2, u).with_user("X3", 1, 2, u);
        let sweep = run_sweep(&s, &[10.0, 20.0]).unwrap();
        assert!(sweep.matches(&s));
        let csv = to_sector_csv(&sweep);
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows.len(), 3);
        let cols: Vec<f64> = rows[1].split(',').map(|c| c.parse().unwrap()).collect();
        let rep = sweep.report_at(10.0).unwrap();
        assert_eq!(cols[1], rep.sector_rates[0]);
        assert_eq!(cols[4], rep.prices[1]);
        assert!((cols[1] + cols[2] - 10.0).abs() <= 1e-9 * 10.0);
        let rates = to_rates_csv(&sweep, &s, 2).unwrap();
        assert!(rates.starts_with("R,X2,X3\n10,"));
        assert!(!csv.contains('\r'));
    }
}
