//! Slot and round simulation.
//!
//! Every sampled quantity has its own seed. Gains and energy arrivals of time
//! slot `t` come from ChaCha8 stream `t` of their seed, flows of round `r`
//! from stream `r` of the flow seed, so changing one factor (channel mode,
//! transfer mode, one seed) leaves the others' draws untouched.

use std::collections::BTreeMap;

use ehwsn_core::channel::{sample_gains_with, GainModel};
use ehwsn_core::energy::sample_arrivals;
use ehwsn_core::feasibility::Infeasibility;
use ehwsn_core::network::Slot;
use ehwsn_core::solver::{kkt_report, solve, SolveError};
use ehwsn_core::{ChannelState, EnergyState, Schedule, SlotProblem, Solution, Topology, TransferMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::config::{parse_node, ChannelMode, ConfigError, ScenarioConfig};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("slot {slot} is out of range 1..={max}")]
    SlotRange { slot: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotStatus {
    Solved,
    /// Iteration cap hit; the last iterate is kept.
    NotConverged,
    Infeasible,
}

/// Largest optimality residuals of a slot solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktSummary {
    pub max_stationarity: f64,
    pub max_complementarity: f64,
    pub max_rate_multiplier: f64,
    pub max_marginal_spread: Option<f64>,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotDiagnostics {
    pub status: SlotStatus,
    pub message: Option<String>,
    pub kkt: Option<KktSummary>,
    pub min_sinr: Option<f64>,
    /// Topology data links whose SINR is below the high-SINR threshold.
    pub low_sinr_links: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    /// 1-based time slot.
    pub slot: usize,
    /// 0-based index into the schedule.
    pub schedule_slot: usize,
    pub problem: SlotProblem,
    pub solution: Option<Solution>,
    /// Total slot delay, `+inf` when the slot could not be solved.
    pub delay: f64,
    pub diagnostics: SlotDiagnostics,
}

impl SlotOutcome {
    pub fn feasible(&self) -> bool {
        self.solution.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundResult {
    pub slots: Vec<SlotOutcome>,
    /// Running total of slot delays, one entry per slot.
    pub cumulative_delay: Vec<f64>,
}

impl RoundResult {
    pub fn total_delay(&self) -> f64 {
        self.cumulative_delay.last().copied().unwrap_or(0.0)
    }
}

/// A loaded scenario, ready to simulate.
#[derive(Debug, Clone)]
pub struct Scenario {
    config: ScenarioConfig,
    topology: Topology,
    schedule: Schedule,
    explicit_flows: Vec<Option<f64>>,
    explicit_energy: Vec<Option<f64>>,
    explicit_gains: BTreeMap<usize, ChannelState>,
}

fn stream(seed: Option<u64>, index: usize) -> Option<ChaCha8Rng> {
    seed.map(|s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        rng.set_stream(index as u64);
        rng
    })
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let (topology, schedule) = config.build_topology()?;

        let mut explicit_flows = vec![None; topology.data_links().len()];
        for (key, &flow) in &config.explicit.flows {
            let id = parse_node(key)?;
            let link = topology
                .node_index(id)
                .and_then(|i| topology.uplink(i))
                .ok_or_else(|| ConfigError::Invalid(format!("explicit flow for {id}, which has no data link")))?;
            explicit_flows[link] = Some(flow);
        }
        let mut explicit_energy = vec![None; topology.nodes().len()];
        for (key, &energy) in &config.explicit.energy {
            let id = parse_node(key)?;
            let n = topology
                .node_index(id)
                .ok_or_else(|| ConfigError::Invalid(format!("explicit energy for unknown node {id}")))?;
            explicit_energy[n] = Some(energy);
        }
        let mut explicit_gains = BTreeMap::new();
        for g in &config.explicit.gains {
            let slot = g
                .slot
                .checked_sub(1)
                .filter(|&s| s < schedule.slots.len())
                .ok_or_else(|| ConfigError::Invalid(format!("explicit gains for slot {} outside the schedule", g.slot)))?;
            let n = schedule.slots[slot].data_links.len();
            if g.rows.len() != n || g.rows.iter().any(|r| r.len() != n) {
                return Err(ConfigError::Invalid(format!("explicit gains for slot {} must be {n}x{n}", g.slot)));
            }
            let ch = ChannelState::from_rows(&g.rows, config.channel.noise)
                .map_err(|e| ConfigError::Invalid(format!("explicit gains for slot {}: {e}", g.slot)))?;
            explicit_gains.insert(slot, ch);
        }

        let seeds = config.seeds;
        let need = |what: &str, seed: Option<u64>, sampled: bool| {
            if sampled && seed.is_none() {
                Err(ConfigError::Invalid(format!("seeds.{what} is required: some {what} are not given explicitly")))
            } else {
                Ok(())
            }
        };
        need("flows", seeds.flows, explicit_flows.iter().any(Option::is_none))?;
        need("energy", seeds.energy, explicit_energy.iter().any(Option::is_none))?;
        need("gains", seeds.gains, explicit_gains.len() < schedule.slots.len())?;

        Ok(Self { config, topology, schedule, explicit_flows, explicit_energy, explicit_gains })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    /// Time slots in one run: `round.slots`, else one pass over the schedule.
    pub fn n_slots(&self) -> usize {
        self.config.round.slots.unwrap_or(self.schedule.slots.len())
    }

    fn schedule_slot(&self, t: usize) -> usize {
        t % self.schedule.slots.len()
    }

    /// Per-link flows of the round containing time slot `t` (0-based).
    pub fn flows(&self, t: usize) -> Vec<f64> {
        let round = t / self.schedule.slots.len();
        let mut rng = stream(self.config.seeds.flows, round);
        self.explicit_flows
            .iter()
            .map(|explicit| {
                // always draw, so explicit entries do not shift the others
                let drawn = rng.as_mut().map(|r| self.config.flows.max * (1.0 - r.random::<f64>()));
                explicit.or(drawn).expect("seed presence checked at load")
            })
            .collect()
    }

    /// Harvested energy of time slot `t` (0-based), before any carry-over.
    pub fn arrivals(&self, t: usize) -> EnergyState {
        let e = &self.config.energy;
        let n = self.topology.nodes().len();
        let sampled = stream(self.config.seeds.energy, t)
            .map(|mut rng| sample_arrivals(&mut rng, n, e.arrival_rate, e.battery_capacity).expect("validated rate"));
        let energy = (0..n)
            .map(|i| {
                self.explicit_energy[i]
                    .or_else(|| sampled.as_ref().map(|s| s.energy()[i]))
                    .expect("seed presence checked at load")
            })
            .collect();
        EnergyState::new(energy, e.battery_capacity).expect("validated energies")
    }

    /// Channel of time slot `t` (0-based) in the configured mode.
    pub fn channel(&self, t: usize) -> ChannelState {
        let s = self.schedule_slot(t);
        let ch = match self.explicit_gains.get(&s) {
            Some(ch) => ch.clone(),
            None => {
                let c = &self.config.channel;
                let model = GainModel { primary_gain: c.primary_gain, max_cross_gain: c.max_cross_gain, noise: c.noise };
                let mut rng = stream(self.config.seeds.gains, t).expect("seed presence checked at load");
                sample_gains_with(&mut rng, self.schedule.slots[s].data_links.len(), &model)
            }
        };
        match self.config.channel.mode {
            ChannelMode::Ifc => ch,
            ChannelMode::Oc => ch.orthogonal(),
        }
    }

    fn slot_of(&self, t: usize) -> &Slot {
        &self.schedule.slots[self.schedule_slot(t)]
    }

    /// Problem of time slot `t` (0-based) for the given energy state.
    pub fn slot_problem(&self, t: usize, energy: &EnergyState) -> SlotProblem {
        let flows = self.flows(t);
        SlotProblem::for_slot(&self.topology, self.slot_of(t), &flows, self.channel(t), energy)
            .expect("schedule, flows and energies are validated")
    }

    /// Solves one time slot (1-based) on fresh arrivals.
    pub fn run_slot(&self, slot: usize) -> Result<SlotOutcome, SimError> {
        let max = self.n_slots();
        if slot == 0 || slot > max {
            return Err(SimError::SlotRange { slot, max });
        }
        let t = slot - 1;
        Ok(self.solve_slot(t, &self.arrivals(t)))
    }

    fn solve_slot(&self, t: usize, energy: &EnergyState) -> SlotOutcome {
        let problem = self.slot_problem(t, energy);
        let mode = self.config.transfer.mode;
        let opts = &self.config.solver;
        let (solution, status, message) = match solve(&problem, mode, opts) {
            Ok(s) => (Some(s), SlotStatus::Solved, None),
            Err(SolveError::NotConverged(s)) => {
                let msg = format!("duality gap {:.3e} above tolerance", s.duality_gap);
                (Some(*s), SlotStatus::NotConverged, Some(msg))
            }
            Err(SolveError::Infeasible(report)) => {
                let msg = report.issues.iter().map(describe).collect::<Vec<_>>().join("; ");
                (None, SlotStatus::Infeasible, Some(msg))
            }
            Err(e) => (None, SlotStatus::Infeasible, Some(e.to_string())),
        };
        if let Some(msg) = &message {
            log::warn!("slot {}: {msg}", t + 1);
        }

        let diagnostics = match &solution {
            Some(s) => {
                let r = kkt_report(&problem, s);
                SlotDiagnostics {
                    status,
                    message,
                    kkt: Some(KktSummary {
                        max_stationarity: r.max_stationarity,
                        max_complementarity: r.max_complementarity,
                        max_rate_multiplier: r.max_rate_multiplier,
                        max_marginal_spread: r.max_marginal_spread,
                        max_violation: r.max_violation,
                    }),
                    min_sinr: s.sinr.iter().copied().reduce(f64::min),
                    low_sinr_links: s.low_sinr_links.iter().map(|&l| problem.links()[l].label).collect(),
                }
            }
            None => SlotDiagnostics { status, message, kkt: None, min_sinr: None, low_sinr_links: Vec::new() },
        };
        SlotOutcome {
            slot: t + 1,
            schedule_slot: self.schedule_slot(t),
            delay: solution.as_ref().map_or(f64::INFINITY, |s| s.objective),
            problem,
            solution,
            diagnostics,
        }
    }

    /// Runs every slot in order, carrying unspent energy forward when enabled.
    pub fn run_round(&self) -> RoundResult {
        let mut slots = Vec::with_capacity(self.n_slots());
        let mut cumulative_delay = Vec::with_capacity(self.n_slots());
        let mut leftover: Option<Vec<f64>> = None;
        let mut total = 0.0;
        for t in 0..self.n_slots() {
            let fresh = self.arrivals(t);
            let energy = match &leftover {
                Some(rest) => fresh.with_carry_over(rest).expect("one entry per node"),
                None => fresh,
            };
            let outcome = self.solve_slot(t, &energy);
            if self.config.energy.carry_over {
                leftover = Some(self.unspent(&outcome, &energy));
            }
            total += outcome.delay;
            cumulative_delay.push(total);
            slots.push(outcome);
        }
        RoundResult { slots, cumulative_delay }
    }

    /// Energy left in each node's battery after the slot.
    fn unspent(&self, outcome: &SlotOutcome, energy: &EnergyState) -> Vec<f64> {
        let mut rest = energy.energy().to_vec();
        let Some(s) = &outcome.solution else { return rest };
        let p = &outcome.problem;
        let index = |n: usize| self.topology.node_index(p.nodes()[n].id).expect("slot nodes are topology nodes");
        for (link, &power) in p.links().iter().zip(&s.power) {
            rest[index(link.owner)] -= power;
        }
        for (t, &x) in p.transfers().iter().zip(&s.transfer) {
            rest[index(t.donor)] -= x;
            rest[index(t.recipient)] += t.efficiency * x;
        }
        rest.iter().map(|r| r.max(0.0)).collect()
    }

    /// Same scenario with a different transfer mode.
    pub fn with_transfer(&self, mode: TransferMode) -> Self {
        let mut s = self.clone();
        s.config.transfer.mode = mode;
        s
    }

    /// Same scenario with a different channel mode.
    pub fn with_channel(&self, mode: ChannelMode) -> Self {
        let mut s = self.clone();
        s.config.channel.mode = mode;
        s
    }
}

fn describe(issue: &Infeasibility) -> String {
    match issue {
        Infeasibility::Rate { spectral_radius } => {
            format!("rates unreachable at any power (spectral radius {spectral_radius:.4})")
        }
        Infeasibility::EnergyShort { id, slack, .. } => format!("{id} is {:.4e} short of its minimum power", -slack),
        Infeasibility::NoStrictInterior => "budgets leave no strictly feasible point".into(),
    }
}
