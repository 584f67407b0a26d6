//! Scenario configuration, round simulation and CSV export on top of
//! `ehwsn-core`.
//!
//! A scenario names a topology, the channel and transfer modes, seeds and
//! distribution parameters. [`sim::Scenario`] turns it into per-slot problems
//! and solves them; [`export`] writes the results.

pub mod config;
pub mod export;
pub mod sim;

pub use config::{ChannelMode, ConfigError, ScenarioConfig};
pub use export::{export_results, ExportError};
pub use sim::{RoundResult, Scenario, SimError, SlotOutcome};
