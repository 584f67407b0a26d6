//! Delay-minimizing power allocation and energy transfer for energy
//! harvesting wireless sensor networks with an interference channel.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure
//! computation over small dense problems: the network model and its
//! incidence matrices, the SINR/capacity/delay channel model, energy
//! accounting, minimum-power feasibility, a log-domain barrier solver with
//! KKT verification, and a brute-force oracle for tiny instances.
//!
//! File formats, configuration, the round simulator and the CLI live in the
//! `ehwsn` companion crate.
#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` is how NaN inputs get rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod math;

pub mod channel;
pub mod energy;
pub mod error;
pub mod feasibility;
pub mod network;
pub mod oracle;
pub mod solver;

pub use channel::{ChannelState, PowerVector};
pub use energy::{EnergyState, TransferVector};
pub use error::DimensionError;
pub use network::{IncidenceMatrices, NodeId, Schedule, Topology};
pub use solver::{KktReport, SlotProblem, Solution, SolverOptions, TransferMode};
