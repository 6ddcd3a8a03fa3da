//! `ctxalloc`: run, sweep, and verify the context-aware bidding protocol.
//!
//! Exit codes: 0 success, 1 input or I/O error, 2 the protocol did not
//! converge, 3 the oracle check found a discrepancy beyond tolerance.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ctxalloc::engine::{EngineError, JsonLinesSink, Simulation, SweepError};
use ctxalloc::oracle::{self, Discrepancy};
use ctxalloc::results::{to_oracle_diff_csv, to_rates_csv, to_sector_csv, SweepResult};
use ctxalloc::scenario::{self, Scenario, BUILTIN_NAMES};
use ctxalloc::ConvergenceReport;

/// Oracle agreement: per-user `max(ABS, REL·r)`, prices within `REL`.
const ORACLE_ABS: f64 = 1e-3;
const ORACLE_REL: f64 = 1e-3;

#[derive(Parser, Debug)]
#[command(name = "ctxalloc", version, about = "Context-aware cellular rate allocation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the bidding protocol at one total rate.
    Run {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        solver: SolverFlags,
        /// Total eNodeB rate R.
        #[arg(long, allow_negative_numbers = true)]
        rate: f64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Write every protocol message as a JSON line.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run independent points over a range of R and write CSV tables.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        solver: SolverFlags,
        /// Range `start:stop:step`, inclusive of `stop`.
        #[arg(long)]
        sweep: String,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Also solve centrally and write oracle_diff.csv.
        #[arg(long)]
        oracle: bool,
        /// Skip points that fail to converge instead of stopping (exit code stays 2).
        #[arg(long)]
        keep_going: bool,
        /// Seed each point with the previous point's final bids.
        #[arg(long)]
        warm_start: bool,
    },
    /// Compare the distributed result against the centralized solution.
    OracleCheck {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        solver: SolverFlags,
        #[arg(long, allow_negative_numbers = true, conflicts_with = "sweep")]
        rate: Option<f64>,
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Write a built-in scenario as a scenario document.
    Scenario {
        #[arg(long)]
        builtin: String,
        /// Destination file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct Source {
    /// Scenario document (JSON).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Built-in scenario: table1 or table1-unbalanced.
    #[arg(long)]
    builtin: Option<String>,
}

#[derive(Args, Debug)]
struct SolverFlags {
    /// Stop once every direction's total bid moves by less than this [default: 1e-3]
    #[arg(long, allow_negative_numbers = true)]
    delta: Option<f64>,
    /// Round limit before giving up [default: 1000]
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    /// Bid damping θ in (0, 1]; 1 is plain iteration [default: 1]
    #[arg(long, allow_negative_numbers = true)]
    damping: Option<f64>,
    /// Bid every user submits before the first price [default: 1]
    #[arg(long = "initial-bid", allow_negative_numbers = true)]
    initial_bid: Option<f64>,
    /// Threads for the per-round UE solves; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    NonConvergence(String),
    Mismatch(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::NonConvergence(_) => 2,
            Failure::Mismatch(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::NonConvergence(m) | Failure::Mismatch(m) => m,
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::NonConvergence { .. } => Failure::NonConvergence(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<SweepError> for Failure {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Point { source: EngineError::NonConvergence { .. }, .. } => Failure::NonConvergence(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { source, solver, rate, format, trace } => cmd_run(&source, &solver, rate, format, trace.as_deref()),
        Command::Sweep { source, solver, sweep, out, oracle, keep_going, warm_start } => {
            cmd_sweep(&source, &solver, &sweep, &out, oracle, keep_going, warm_start)
        }
        Command::OracleCheck { source, solver, rate, sweep } => cmd_oracle_check(&source, &solver, rate, sweep.as_deref()),
        Command::Scenario { builtin, out } => cmd_scenario(&builtin, out.as_deref()),
    }
}

fn builtin_scenario(name: &str) -> Result<Scenario, Failure> {
    scenario::builtin(name).map_err(|_| {
        Failure::Input(format!("unknown builtin `{name}`; valid names: {}", BUILTIN_NAMES.join(", ")))
    })
}

fn load(source: &Source, flags: &SolverFlags) -> Result<Scenario, Failure> {
    let mut s = match (&source.scenario, &source.builtin) {
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
            scenario::parse_scenario(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?
        }
        (None, Some(name)) => builtin_scenario(name)?,
        _ => return Err(Failure::Input("exactly one of --scenario or --builtin is required".into())),
    };

    fn apply<T: PartialEq + std::fmt::Display + Copy>(flag: &str, value: Option<T>, slot: &mut T, from_file: bool) {
        if let Some(v) = value {
            if from_file && v != *slot {
                eprintln!("warning: --{flag} {v} overrides scenario value {slot}");
            }
            *slot = v;
        }
    }
    let from_file = source.scenario.is_some();
    apply("delta", flags.delta, &mut s.delta, from_file);
    apply("max-iter", flags.max_iter, &mut s.max_iterations, from_file);
    apply("damping", flags.damping, &mut s.damping, from_file);
    apply("initial-bid", flags.initial_bid, &mut s.initial_bid, from_file);
    if flags.workers == 0 {
        return Err(Failure::Input("--workers must be at least 1".into()));
    }
    s.validate().map_err(|e| Failure::Input(e.to_string()))?;
    Ok(s)
}

fn check_rate(rate: f64) -> Result<(), Failure> {
    if rate > 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(Failure::Input(format!("--rate must be a finite value > 0, got {rate}")))
    }
}

/// Parses `start:stop:step` into the inclusive list of rates.
fn parse_range(spec: &str) -> Result<Vec<f64>, Failure> {
    let bad = |why: &str| Failure::Input(format!("--sweep `{spec}`: {why}"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, stop, step] = parts[..] else {
        return Err(bad("expected start:stop:step"));
    };
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
    if !(start.is_finite() && start > 0.0 && stop.is_finite()) {
        return Err(bad("start must be > 0"));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(bad("step must be > 0"));
    }
    if start > stop {
        return Err(bad("start exceeds stop"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

fn print_report(report: &ConvergenceReport, format: Format) {
    match format {
        Format::Text => {
            println!("converged in {} rounds at R = {}", report.iterations, report.total_rate);
            println!("{:>9} {:>16} {:>16} {:>16}", "direction", "sector_rate", "price", "direction_bid");
            for (l, ((r, p), w)) in report.sector_rates.iter().zip(&report.prices).zip(&report.direction_bids).enumerate() {
                println!("{:>9} {:>16.6} {:>16.8} {:>16.6}", l + 1, r, p, w);
            }
            println!("{:>6} {:>5} {:>7} {:>14} {:>14}", "user", "cell", "sector", "rate", "bid");
            for a in &report.allocations {
                println!("{:>6} {:>5} {:>7} {:>14.6} {:>14.6}", a.id, a.cell, a.sector, a.rate, a.bid);
            }
        }
        Format::Csv => {
            println!("id,cell,sector,rate,bid,price");
            for a in &report.allocations {
                println!("{},{},{},{},{},{}", a.id, a.cell, a.sector, a.rate, a.bid, report.prices[a.sector - 1]);
            }
        }
    }
}

fn cmd_run(source: &Source, flags: &SolverFlags, rate: f64, format: Format, trace: Option<&Path>) -> Result<(), Failure> {
    check_rate(rate)?;
    let s = load(source, flags)?;
    let report = match trace {
        Some(path) => {
            let file = fs::File::create(path)
                .map_err(|e| Failure::Input(format!("cannot create {}: {e}", path.display())))?;
            let mut sink = JsonLinesSink(BufWriter::new(file));
            let result = Simulation::new(&s).workers(flags.workers).trace(&mut sink).run(rate);
            use std::io::Write;
            sink.0.flush().map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))?;
            result?
        }
        None => Simulation::new(&s).workers(flags.workers).run(rate)?,
    };
    print_report(&report, format);
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
}

fn oracle_rows(s: &Scenario, sweep: &SweepResult) -> Result<Vec<(f64, Discrepancy)>, Failure> {
    sweep
        .points()
        .iter()
        .map(|(rate, report)| {
            let sol = oracle::solve_centralized(&s.users, *rate).map_err(|e| Failure::Input(e.to_string()))?;
            let d = oracle::compare(report, &sol).map_err(|e| Failure::Input(e.to_string()))?;
            Ok((*rate, d))
        })
        .collect()
}

fn cmd_sweep(
    source: &Source,
    flags: &SolverFlags,
    range: &str,
    out: &Path,
    with_oracle: bool,
    keep_going: bool,
    warm_start: bool,
) -> Result<(), Failure> {
    let rates = parse_range(range)?;
    let s = load(source, flags)?;
    fs::create_dir_all(out).map_err(|e| Failure::Input(format!("cannot create {}: {e}", out.display())))?;

    let mut sim = Simulation::new(&s).workers(flags.workers).warm_start(warm_start);
    let mut failed = Vec::new();
    let sweep = if keep_going {
        let mut points = Vec::new();
        for &rate in &rates {
            match sim.run(rate) {
                Ok(report) => points.push((rate, report)),
                Err(e @ EngineError::NonConvergence { .. }) => {
                    eprintln!("warning: R = {rate}: {e}");
                    failed.push(rate);
                }
                Err(e) => return Err(Failure::Input(format!("at R = {rate}: {e}"))),
            }
        }
        SweepResult::new(&s, points)
    } else {
        sim.sweep(&rates)?
    };

    write_file(&out.join("sector.csv"), &to_sector_csv(&sweep))?;
    for l in 1..=s.sectors {
        let csv = to_rates_csv(&sweep, &s, l).map_err(|e| Failure::Input(e.to_string()))?;
        write_file(&out.join(format!("rates_sector_{l}.csv")), &csv)?;
    }
    if with_oracle {
        let rows = oracle_rows(&s, &sweep)?;
        write_file(&out.join("oracle_diff.csv"), &to_oracle_diff_csv(&rows))?;
    }
    eprintln!("wrote {} of {} points to {}", sweep.points().len(), rates.len(), out.display());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::NonConvergence(format!("no convergence at R = {failed:?}")))
    }
}

fn cmd_oracle_check(source: &Source, flags: &SolverFlags, rate: Option<f64>, range: Option<&str>) -> Result<(), Failure> {
    let rates = match (rate, range) {
        (Some(r), None) => {
            check_rate(r)?;
            vec![r]
        }
        (None, Some(spec)) => parse_range(spec)?,
        _ => return Err(Failure::Input("oracle-check needs --rate or --sweep".into())),
    };
    let s = load(source, flags)?;
    let mut sim = Simulation::new(&s).workers(flags.workers);
    let mut unconverged = Vec::new();
    let mut mismatched = Vec::new();
    println!("R,iterations,max_rate_diff,max_price_rel_diff,within_tolerance");
    for rate in rates {
        let sol = oracle::solve_centralized(&s.users, rate).map_err(|e| Failure::Input(e.to_string()))?;
        match sim.run(rate) {
            Ok(report) => {
                let d = oracle::compare(&report, &sol).map_err(|e| Failure::Input(e.to_string()))?;
                let ok = d.within(&report, &sol, ORACLE_ABS, ORACLE_REL, ORACLE_REL);
                println!("{rate},{},{},{},{ok}", report.iterations, d.max_rate, d.max_price_rel);
                if !ok {
                    mismatched.push(rate);
                }
            }
            Err(EngineError::NonConvergence { .. }) => {
                println!("{rate},,,,false");
                unconverged.push(rate);
            }
            Err(e) => return Err(e.into()),
        }
    }
    if !unconverged.is_empty() {
        return Err(Failure::NonConvergence(format!("no convergence at R = {unconverged:?}")));
    }
    if !mismatched.is_empty() {
        return Err(Failure::Mismatch(format!("oracle disagreement beyond tolerance at R = {mismatched:?}")));
    }
    Ok(())
}

fn cmd_scenario(name: &str, out: Option<&Path>) -> Result<(), Failure> {
    let text = scenario::write_scenario(&builtin_scenario(name)?);
    match out {
        Some(path) => write_file(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
