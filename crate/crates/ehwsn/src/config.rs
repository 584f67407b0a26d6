//! Scenario files.
//!
//! A scenario is a TOML document with a `schema_version` field. The topology
//! is either inline under `[topology]` or in a separate file referenced by
//! `topology.path` (resolved against the scenario's directory):
//!
//! ```toml
//! schema_version = 1
//!
//! [topology]
//! nodes = 3                                   # v0 (sink), v1, v2
//! data_links = [[1, 0], [2, 0]]               # child -> parent
//! energy_links = [{ from = 2, to = 1 }]       # optional `eta` per link
//! schedule = [[1], [2]]                       # optional; child of each active link
//!
//! [channel]
//! mode = "ifc"                                # or "oc"
//!
//! [transfer]
//! mode = "on"
//! efficiency = 0.6                            # for links without `eta`
//!
//! [seeds]
//! gains = 1
//! flows = 2
//! energy = 3
//! ```
//!
//! Anything under `[explicit]` replaces the sampled value.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ehwsn_core::network::{DataLink, EnergyLink, Schedule, ScheduleError, TopologyError};
use ehwsn_core::{NodeId, SolverOptions, Topology, TransferMode};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {}: {source}", path.display())]
    Parse { path: PathBuf, source: Box<toml::de::Error> },
    #[error("{}: schema_version {found} is not supported (expected {SCHEMA_VERSION})", path.display())]
    Version { path: PathBuf, found: u32 },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("{0}")]
    Invalid(String),
}

/// Whether cross gains are kept (`ifc`) or zeroed (`oc`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ChannelMode {
    #[value(name = "oc")]
    Oc,
    #[default]
    #[value(name = "ifc")]
    Ifc,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub topology: TopologySpec,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub transfer: TransferConfig,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub flows: FlowConfig,
    #[serde(default)]
    pub energy: EnergyConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub round: RoundConfig,
    #[serde(default)]
    pub explicit: Explicit,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Node count, links and an optional schedule, with nodes numbered `0..nodes`.
///
/// The same table is the `[topology]` section of a scenario and the body of
/// a standalone topology file (which must carry `schema_version`).
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub schema_version: Option<u32>,
    /// Topology file, only valid in a scenario.
    pub path: Option<PathBuf>,
    pub nodes: Option<u32>,
    #[serde(default)]
    pub data_links: Vec<[u32; 2]>,
    #[serde(default)]
    pub energy_links: Vec<EnergyLinkSpec>,
    /// Child node of every active data link, slot by slot.
    pub schedule: Option<Vec<Vec<u32>>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyLinkSpec {
    pub from: u32,
    pub to: u32,
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub mode: ChannelMode,
    pub noise: f64,
    pub primary_gain: f64,
    /// Cross gains are drawn from `U(0, max_cross_gain]`.
    pub max_cross_gain: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self { mode: ChannelMode::Ifc, noise: 1e-5, primary_gain: 1.0, max_cross_gain: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub mode: TransferMode,
    /// Efficiency of energy links that do not set their own.
    pub efficiency: f64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self { mode: TransferMode::Off, efficiency: 0.6 }
    }
}

/// Independent seeds for the three sampled quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub gains: Option<u64>,
    pub flows: Option<u64>,
    pub energy: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    /// Flows are drawn from `U(0, max]`.
    pub max: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { max: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConfig {
    /// Poisson mean of the per-slot arrivals.
    pub arrival_rate: f64,
    pub battery_capacity: f64,
    /// Unspent energy stays in the battery for the next slot.
    pub carry_over: bool,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self { arrival_rate: 8.0, battery_capacity: 20.0, carry_over: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundConfig {
    /// Slots to simulate; defaults to one pass over the schedule.
    pub slots: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Explicit {
    /// Flow per data link, keyed by the link's child node (`v8` or `8`).
    #[serde(default)]
    pub flows: BTreeMap<String, f64>,
    /// Energy per node, applied in every slot.
    #[serde(default)]
    pub energy: BTreeMap<String, f64>,
    #[serde(default)]
    pub gains: Vec<SlotGains>,
}

/// Full gain matrix of one slot, rows and columns in the slot's link order.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotGains {
    /// 1-based slot number.
    pub slot: usize,
    pub rows: Vec<Vec<f64>>,
}

/// Accepts `v12` or `12`.
pub fn parse_node(key: &str) -> Result<NodeId, ConfigError> {
    key.strip_prefix('v')
        .unwrap_or(key)
        .parse()
        .map(NodeId)
        .map_err(|_| ConfigError::Invalid(format!("`{key}` is not a node id")))
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = read(path)?;
        let mut cfg = Self::parse(&text, path)?;
        cfg.base_dir = path.parent().map(Path::to_owned).unwrap_or_default();
        Ok(cfg)
    }

    /// Parses a scenario; `origin` only labels errors.
    pub fn parse(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_owned(), source: Box::new(e) })?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Version { path: origin.to_owned(), found: cfg.schema_version });
        }
        Ok(cfg)
    }

    fn topology_spec(&self) -> Result<TopologySpec, ConfigError> {
        let Some(rel) = &self.topology.path else {
            return Ok(self.topology.clone());
        };
        if self.topology != (TopologySpec { path: Some(rel.clone()), ..TopologySpec::default() }) {
            return Err(ConfigError::Invalid("topology.path excludes inline topology keys".into()));
        }
        let path = self.base_dir.join(rel);
        let file: TopologySpec =
            toml::from_str(&read(&path)?).map_err(|e| ConfigError::Parse { path: path.clone(), source: Box::new(e) })?;
        match file.schema_version {
            Some(SCHEMA_VERSION) => {}
            found => return Err(ConfigError::Version { path, found: found.unwrap_or(0) }),
        }
        if file.path.is_some() {
            return Err(ConfigError::Invalid(format!("{}: a topology file cannot reference another", path.display())));
        }
        Ok(file)
    }

    /// Validated topology and the schedule to run (explicit or generated).
    pub fn build_topology(&self) -> Result<(Topology, Schedule), ConfigError> {
        let spec = self.topology_spec()?;
        let n = spec.nodes.ok_or_else(|| ConfigError::Invalid("topology.nodes is missing".into()))?;
        let nodes = (0..n).map(NodeId).collect();
        let data = spec.data_links.iter().map(|&[c, p]| DataLink { child: NodeId(c), parent: NodeId(p) }).collect();
        let energy = spec
            .energy_links
            .iter()
            .map(|e| EnergyLink {
                donor: NodeId(e.from),
                recipient: NodeId(e.to),
                efficiency: e.eta.unwrap_or(self.transfer.efficiency),
            })
            .collect();
        let topology = Topology::new(nodes, data, energy)?;
        let schedule = match &spec.schedule {
            None => ehwsn_core::network::half_duplex_schedule(&topology),
            Some(slots) => {
                let slots = slots
                    .iter()
                    .map(|children| {
                        children
                            .iter()
                            .map(|&c| {
                                topology
                                    .node_index(NodeId(c))
                                    .and_then(|i| topology.uplink(i))
                                    .ok_or_else(|| ConfigError::Invalid(format!("schedule names v{c}, which has no data link")))
                            })
                            .collect::<Result<Vec<_>, _>>()
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Schedule::from_data_slots(&topology, slots)?
            }
        };
        Ok((topology, schedule))
    }

    /// Checks value ranges that the type system does not.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |what: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{what} must be positive, got {v}")))
            }
        };
        positive("channel.noise", self.channel.noise)?;
        positive("channel.primary_gain", self.channel.primary_gain)?;
        positive("flows.max", self.flows.max)?;
        positive("energy.arrival_rate", self.energy.arrival_rate)?;
        positive("energy.battery_capacity", self.energy.battery_capacity)?;
        positive("solver.gap_tolerance", self.solver.gap_tolerance)?;
        if !(self.channel.max_cross_gain >= 0.0 && self.channel.max_cross_gain.is_finite()) {
            return Err(ConfigError::Invalid("channel.max_cross_gain must be non-negative".into()));
        }
        if !(self.transfer.efficiency > 0.0 && self.transfer.efficiency <= 1.0) {
            return Err(ConfigError::Invalid("transfer.efficiency must lie in (0, 1]".into()));
        }
        if self.round.slots == Some(0) {
            return Err(ConfigError::Invalid("round.slots must be at least 1".into()));
        }
        for (key, &v) in &self.explicit.flows {
            parse_node(key)?;
            positive(&format!("explicit flow {key}"), v)?;
        }
        for (key, &v) in &self.explicit.energy {
            parse_node(key)?;
            if !(v > 0.0 && v <= self.energy.battery_capacity) {
                return Err(ConfigError::Invalid(format!(
                    "explicit energy {key} = {v} is outside (0, {}]",
                    self.energy.battery_capacity
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        schema_version = 1
        [topology]
        nodes = 3
        data_links = [[1, 0], [2, 1]]
        energy_links = [{ from = 2, to = 1, eta = 0.5 }]
    "#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ScenarioConfig::parse(MINIMAL, Path::new("inline")).unwrap();
        assert_eq!(cfg.channel.mode, ChannelMode::Ifc);
        assert_eq!(cfg.transfer.mode, TransferMode::Off);
        assert_eq!(cfg.energy.arrival_rate, 8.0);
        assert_eq!(cfg.energy.battery_capacity, 20.0);
        assert_eq!(cfg.channel.noise, 1e-5);
        assert_eq!(cfg.solver, SolverOptions::default());
        let (topo, schedule) = cfg.build_topology().unwrap();
        assert_eq!(topo.energy_links()[0].efficiency, 0.5);
        assert_eq!(schedule.slots.len(), 2);
    }

    #[test]
    fn rejects_wrong_version_and_unknown_keys() {
        let bumped = MINIMAL.replace("schema_version = 1", "schema_version = 2");
        assert!(matches!(ScenarioConfig::parse(&bumped, Path::new("x")), Err(ConfigError::Version { found: 2, .. })));
        let typo = format!("{MINIMAL}\n[energy]\narival_rate = 3\n");
        assert!(matches!(ScenarioConfig::parse(&typo, Path::new("x")), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn explicit_schedule_by_child() {
        let text = format!("{}\nschedule = [[2], [1]]\n", MINIMAL.trim_end());
        let cfg = ScenarioConfig::parse(&text, Path::new("x")).unwrap();
        let (_, schedule) = cfg.build_topology().unwrap();
        assert_eq!(schedule.slots[0].data_links, vec![1]);
        assert_eq!(schedule.slots[1].data_links, vec![0]);
        assert_eq!(schedule.slots[1].energy_links, vec![0]);
    }

    #[test]
    fn node_keys() {
        assert_eq!(parse_node("v12").unwrap(), NodeId(12));
        assert_eq!(parse_node("3").unwrap(), NodeId(3));
        assert!(parse_node("x").is_err());
    }

    #[test]
    fn range_checks() {
        let mut cfg = ScenarioConfig::parse(MINIMAL, Path::new("x")).unwrap();
        cfg.explicit.energy.insert("v1".into(), 25.0);
        assert!(cfg.validate().is_err());
        cfg.explicit.energy.clear();
        cfg.transfer.efficiency = 0.0;
        assert!(cfg.validate().is_err());
    }
}
