//! `ehwsn` command line.
//!
//! Errors go to stderr as `error[<category>]: <message>`. Exit codes:
//! 0 success, 2 usage, 3 config, 4 io, 5 infeasible, 6 not converged,
//! 7 check failed, 8 oracle.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ehwsn::config::{ChannelMode, ScenarioConfig};
use ehwsn::export::{self, sig6};
use ehwsn::sim::{RoundResult, Scenario, SlotStatus};
use ehwsn_core::oracle::{brute_force_solve, GridSpec};
use ehwsn_core::solver::kkt_report;
use ehwsn_core::{SlotProblem, Solution, TransferMode};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "ehwsn", version, about = "Delay-minimizing power and energy-transfer allocation per time slot")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one time slot.
    Solve {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// 1-based time slot.
        #[arg(long, default_value_t = 1)]
        slot: usize,
        /// Link CSV output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Store problem and solution as JSON for `check`.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Simulate a data collection round.
    Round {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Link CSV output; the summary goes to `<stem>.summary.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Brute-force a small slot problem and print the best point as CSV.
    Oracle {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 1)]
        slot: usize,
        /// Grid points per power dimension.
        #[arg(long, default_value_t = GridSpec::default().power_points)]
        points: usize,
        /// Grid points per transfer dimension.
        #[arg(long, default_value_t = GridSpec::default().transfer_points)]
        transfer_points: usize,
        /// Step halvings of the local refinement.
        #[arg(long, default_value_t = GridSpec::default().refinements)]
        refinements: usize,
    },
    /// Recompute the KKT report of a stored solution.
    Check {
        /// JSON written by `solve --save`.
        solution: PathBuf,
        /// Residual bound for certification.
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    channel: Option<ChannelMode>,
    #[arg(long, value_parser = parse_transfer)]
    transfer: Option<TransferMode>,
    #[arg(long)]
    seed_gains: Option<u64>,
    #[arg(long)]
    seed_flows: Option<u64>,
    #[arg(long)]
    seed_energy: Option<u64>,
    /// Duality-gap tolerance of the barrier method.
    #[arg(long)]
    tol: Option<f64>,
    /// Time slots to simulate.
    #[arg(long)]
    slots: Option<usize>,
}

fn parse_transfer(s: &str) -> Result<TransferMode, String> {
    match s {
        "on" => Ok(TransferMode::On),
        "off" => Ok(TransferMode::Off),
        _ => Err(format!("expected `on` or `off`, got `{s}`")),
    }
}

/// What `solve --save` writes and `check` reads.
#[derive(Serialize, Deserialize)]
struct StoredSolution {
    schema_version: u32,
    slot: usize,
    problem: SlotProblem,
    solution: Solution,
}

enum Failure {
    Config(String),
    Io(String),
    Infeasible(String),
    NotConverged(String),
    Check(String),
    Oracle(String),
}

impl Failure {
    fn report(&self) -> ExitCode {
        let (category, code, msg) = match self {
            Failure::Config(m) => ("config", 3, m),
            Failure::Io(m) => ("io", 4, m),
            Failure::Infeasible(m) => ("infeasible", 5, m),
            Failure::NotConverged(m) => ("not_converged", 6, m),
            Failure::Check(m) => ("check", 7, m),
            Failure::Oracle(m) => ("oracle", 8, m),
        };
        eprintln!("error[{category}]: {msg}");
        ExitCode::from(code)
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario, Failure> {
        let mut cfg = ScenarioConfig::load(&self.config).map_err(|e| match e {
            ehwsn::ConfigError::Read { .. } => Failure::Io(e.to_string()),
            e => Failure::Config(e.to_string()),
        })?;
        if let Some(m) = self.channel {
            cfg.channel.mode = m;
        }
        if let Some(m) = self.transfer {
            cfg.transfer.mode = m;
        }
        cfg.seeds.gains = self.seed_gains.or(cfg.seeds.gains);
        cfg.seeds.flows = self.seed_flows.or(cfg.seeds.flows);
        cfg.seeds.energy = self.seed_energy.or(cfg.seeds.energy);
        if let Some(t) = self.tol {
            cfg.solver.gap_tolerance = t;
        }
        if let Some(n) = self.slots {
            cfg.round.slots = Some(n);
        }
        Scenario::new(cfg).map_err(|e| match e {
            ehwsn::ConfigError::Read { .. } => Failure::Io(e.to_string()),
            e => Failure::Config(e.to_string()),
        })
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let stdout = io::stdout();
    match cli.command {
        Command::Solve { scenario, slot, out, save } => {
            let sc = scenario.load()?;
            let outcome = sc.run_slot(slot).map_err(|e| Failure::Config(e.to_string()))?;
            let single = RoundResult { cumulative_delay: vec![outcome.delay], slots: vec![outcome] };
            export::write_links(stdout.lock(), sc.topology(), &single.slots).map_err(|e| Failure::Io(e.to_string()))?;
            let outcome = &single.slots[0];
            if let Some(s) = &outcome.solution {
                let mut w = stdout.lock();
                let _ = writeln!(w, "# total delay {}", sig6(s.objective));
                for (t, x) in outcome.problem.transfers().iter().zip(&s.transfer) {
                    let donor = outcome.problem.nodes()[t.donor].id;
                    let recipient = outcome.problem.nodes()[t.recipient].id;
                    let _ = writeln!(w, "# transfer {donor}->{recipient} {}", sig6(*x));
                }
            }
            if let Some(path) = out {
                export::export_results(&single, sc.topology(), &path).map_err(|e| Failure::Io(e.to_string()))?;
            }
            if let (Some(path), Some(s)) = (save, &outcome.solution) {
                let stored = StoredSolution {
                    schema_version: ehwsn::config::SCHEMA_VERSION,
                    slot,
                    problem: outcome.problem.clone(),
                    solution: s.clone(),
                };
                write_json(&path, &stored)?;
            }
            let msg = || outcome.diagnostics.message.clone().unwrap_or_default();
            match outcome.diagnostics.status {
                SlotStatus::Solved => Ok(()),
                SlotStatus::NotConverged => Err(Failure::NotConverged(format!("slot {slot}: {}", msg()))),
                SlotStatus::Infeasible => Err(Failure::Infeasible(format!("slot {slot}: {}", msg()))),
            }
        }
        Command::Round { scenario, out } => {
            let sc = scenario.load()?;
            let result = sc.run_round();
            match &out {
                Some(path) => {
                    let summary =
                        export::export_results(&result, sc.topology(), path).map_err(|e| Failure::Io(e.to_string()))?;
                    log::info!("wrote {} and {}", path.display(), summary.display());
                }
                None => export::write_summary(stdout.lock(), &result).map_err(|e| Failure::Io(e.to_string()))?,
            }
            Ok(())
        }
        Command::Oracle { scenario, slot, points, transfer_points, refinements } => {
            let sc = scenario.load()?;
            if slot == 0 || slot > sc.n_slots() {
                return Err(Failure::Config(format!("slot {slot} is out of range 1..={}", sc.n_slots())));
            }
            let t = slot - 1;
            let problem = sc.slot_problem(t, &sc.arrivals(t));
            let grid = GridSpec { power_points: points, transfer_points, refinements };
            let mode = sc.config().transfer.mode;
            let best = brute_force_solve(&problem, mode, &grid).map_err(|e| Failure::Oracle(e.to_string()))?;
            let mut header = vec!["slot".to_owned(), "objective".to_owned()];
            let mut row = vec![slot.to_string(), sig6(best.objective)];
            for (l, &lp) in best.log_power.iter().enumerate() {
                header.push(format!("power_{}", ehwsn::export::link_label_of(sc.topology(), problem.links()[l].label)));
                row.push(sig6(lp.exp()));
            }
            let transfers = if mode == TransferMode::On { problem.transfers() } else { &[] };
            for (t, &x) in transfers.iter().zip(&best.transfer) {
                header.push(format!("transfer_{}_{}", problem.nodes()[t.donor].id, problem.nodes()[t.recipient].id));
                row.push(sig6(x));
            }
            let mut w = csv::Writer::from_writer(stdout.lock());
            w.write_record(&header).and_then(|_| w.write_record(&row)).map_err(|e| Failure::Io(e.to_string()))?;
            w.flush().map_err(|e| Failure::Io(e.to_string()))
        }
        Command::Check { solution, tol } => {
            let text = fs::read_to_string(&solution).map_err(|e| io_err(&solution, e))?;
            let stored: StoredSolution = serde_json::from_str(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", solution.display())))?;
            if stored.schema_version != ehwsn::config::SCHEMA_VERSION {
                return Err(Failure::Config(format!("schema_version {} is not supported", stored.schema_version)));
            }
            let dims = stored.problem.n_links();
            if stored.solution.power.len() != dims || stored.solution.log_power.len() != dims {
                return Err(Failure::Config("solution does not match its problem".into()));
            }
            let report = kkt_report(&stored.problem, &stored.solution);
            let mut w = stdout.lock();
            let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_owned(), sig6);
            let _ = writeln!(w, "slot                 {}", stored.slot);
            let _ = writeln!(w, "max_stationarity     {}", sig6(report.max_stationarity));
            let _ = writeln!(w, "max_complementarity  {}", sig6(report.max_complementarity));
            let _ = writeln!(w, "max_rate_multiplier  {}", sig6(report.max_rate_multiplier));
            let _ = writeln!(w, "max_marginal_spread  {}", opt(report.max_marginal_spread));
            let _ = writeln!(w, "max_lambda_residual  {}", sig6(report.max_lambda_residual()));
            let _ = writeln!(w, "max_violation        {}", sig6(report.max_violation));
            let _ = writeln!(w, "min_dual             {}", sig6(report.min_dual));
            if report.certifies(tol) && report.max_violation <= 1e-8 {
                let _ = writeln!(w, "certified            true");
                Ok(())
            } else {
                let _ = writeln!(w, "certified            false");
                Err(Failure::Check(format!("KKT residuals exceed {tol:e}")))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
