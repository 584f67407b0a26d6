use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, ChannelState};
use crate::energy::EnergyState;
use crate::error::DimensionError;
use crate::network::{NodeId, Slot, Topology};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Dimension(#[from] DimensionError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("slot has no active links")]
    Empty,
    #[error("flow on active link {link} is {flow}, must be positive and finite")]
    BadFlow { link: usize, flow: f64 },
    #[error("active link {link} is owned by unknown budget node {owner}")]
    UnknownOwner { link: usize, owner: usize },
    #[error("budget node {node} has energy {energy}, must be positive and finite")]
    BadEnergy { node: usize, energy: f64 },
    #[error("transfer {transfer} references unknown budget node {node}")]
    UnknownTransferNode { transfer: usize, node: usize },
    #[error("transfer {transfer} has efficiency {efficiency}, expected [0, 1]")]
    BadEfficiency { transfer: usize, efficiency: f64 },
    #[error("transfer {transfer} loops on node {node}")]
    SelfTransfer { transfer: usize, node: usize },
    #[error("donor {node} of transfer {transfer} also transmits data")]
    BusyDonor { transfer: usize, node: usize },
    #[error("donor {node} of transfer {transfer} also receives energy")]
    RelayDonor { transfer: usize, node: usize },
}

/// An active data link of a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ActiveLink {
    pub flow: f64,
    /// Index into the problem's budget nodes; the transmitter.
    pub owner: usize,
    /// Topology data-link index, for reporting.
    pub label: usize,
}

/// A node with an energy budget in the slot: a transmitter or a donor.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BudgetNode {
    pub energy: f64,
    pub id: NodeId,
}

/// An energy link usable in the slot, between budget nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TransferLink {
    pub donor: usize,
    pub recipient: usize,
    pub efficiency: f64,
    /// Topology energy-link index, for reporting.
    pub label: usize,
}

/// One slot's convex delay-minimization instance.
///
/// Donors are pure energy sources: they own no active link and receive no
/// energy in the slot.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(Serialize, Deserialize),
    serde(try_from = "ProblemParts", into = "ProblemParts")
)]
pub struct SlotProblem {
    links: Vec<ActiveLink>,
    channel: ChannelState,
    nodes: Vec<BudgetNode>,
    transfers: Vec<TransferLink>,
}

#[cfg(feature = "serde")]
#[derive(Serialize, Deserialize)]
struct ProblemParts {
    links: Vec<ActiveLink>,
    channel: ChannelState,
    nodes: Vec<BudgetNode>,
    transfers: Vec<TransferLink>,
}

#[cfg(feature = "serde")]
impl TryFrom<ProblemParts> for SlotProblem {
    type Error = ProblemError;

    fn try_from(p: ProblemParts) -> Result<Self, ProblemError> {
        Self::new(p.links, p.channel, p.nodes, p.transfers)
    }
}

#[cfg(feature = "serde")]
impl From<SlotProblem> for ProblemParts {
    fn from(p: SlotProblem) -> Self {
        Self { links: p.links, channel: p.channel, nodes: p.nodes, transfers: p.transfers }
    }
}

impl SlotProblem {
    pub fn new(
        links: Vec<ActiveLink>,
        channel: ChannelState,
        nodes: Vec<BudgetNode>,
        transfers: Vec<TransferLink>,
    ) -> Result<Self, ProblemError> {
        if links.is_empty() {
            return Err(ProblemError::Empty);
        }
        DimensionError::check("channel links", links.len(), channel.n_links())?;
        let mut transmits = alloc::vec![false; nodes.len()];
        for (l, link) in links.iter().enumerate() {
            if !(link.flow > 0.0 && link.flow.is_finite()) {
                return Err(ProblemError::BadFlow { link: l, flow: link.flow });
            }
            if link.owner >= nodes.len() {
                return Err(ProblemError::UnknownOwner { link: l, owner: link.owner });
            }
            transmits[link.owner] = true;
        }
        for (n, node) in nodes.iter().enumerate() {
            if !(node.energy > 0.0 && node.energy.is_finite()) {
                return Err(ProblemError::BadEnergy { node: n, energy: node.energy });
            }
        }
        let mut receives = alloc::vec![false; nodes.len()];
        for (q, t) in transfers.iter().enumerate() {
            for node in [t.donor, t.recipient] {
                if node >= nodes.len() {
                    return Err(ProblemError::UnknownTransferNode { transfer: q, node });
                }
            }
            if t.donor == t.recipient {
                return Err(ProblemError::SelfTransfer { transfer: q, node: t.donor });
            }
            if !(0.0..=1.0).contains(&t.efficiency) {
                return Err(ProblemError::BadEfficiency { transfer: q, efficiency: t.efficiency });
            }
            if transmits[t.donor] {
                return Err(ProblemError::BusyDonor { transfer: q, node: t.donor });
            }
            receives[t.recipient] = true;
        }
        if let Some((q, t)) = transfers.iter().enumerate().find(|(_, t)| receives[t.donor]) {
            return Err(ProblemError::RelayDonor { transfer: q, node: t.donor });
        }
        Ok(Self { links, channel, nodes, transfers })
    }

    /// Assembles the problem for one scheduled slot.
    ///
    /// `flows` is indexed by topology data link, `energy` by topology node and
    /// `channel` by position in `slot.data_links`. Budget nodes are the slot's
    /// transmitters followed by the idle donors of energy links that feed a
    /// transmitter.
    pub fn for_slot(
        topology: &Topology,
        slot: &Slot,
        flows: &[f64],
        channel: ChannelState,
        energy: &EnergyState,
    ) -> Result<Self, ProblemError> {
        DimensionError::check("flow vector", topology.data_links().len(), flows.len())?;
        DimensionError::check("energy vector", topology.nodes().len(), energy.energy().len())?;
        let energy_of = |id: NodeId| energy.energy()[topology.node_index(id).expect("validated topology")];

        let mut nodes = Vec::new();
        let mut local: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut links = Vec::with_capacity(slot.data_links.len());
        for &l in &slot.data_links {
            let child = topology.data_links()[l].child;
            let owner = *local.entry(child).or_insert_with(|| {
                nodes.push(BudgetNode { energy: energy_of(child), id: child });
                nodes.len() - 1
            });
            links.push(ActiveLink { flow: flows[l], owner, label: l });
        }
        let n_transmitters = nodes.len();

        let mut transfers = Vec::new();
        for &q in &slot.energy_links {
            let link = topology.energy_links()[q];
            let Some(&recipient) = local.get(&link.recipient) else { continue };
            if recipient >= n_transmitters || local.get(&link.donor).is_some_and(|&d| d < n_transmitters) {
                continue;
            }
            let donor = *local.entry(link.donor).or_insert_with(|| {
                nodes.push(BudgetNode { energy: energy_of(link.donor), id: link.donor });
                nodes.len() - 1
            });
            transfers.push(TransferLink { donor, recipient, efficiency: link.efficiency, label: q });
        }
        Self::new(links, channel, nodes, transfers)
    }

    pub fn links(&self) -> &[ActiveLink] {
        &self.links
    }

    pub fn channel(&self) -> &ChannelState {
        &self.channel
    }

    pub fn nodes(&self) -> &[BudgetNode] {
        &self.nodes
    }

    pub fn transfers(&self) -> &[TransferLink] {
        &self.transfers
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    pub fn flows(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.flow).collect()
    }

    /// Same problem with all cross gains zeroed.
    pub fn orthogonal(&self) -> Self {
        Self { channel: self.channel.orthogonal(), ..self.clone() }
    }

    /// Same problem with the energy links dropped.
    pub fn without_transfers(&self) -> Self {
        Self { transfers: Vec::new(), ..self.clone() }
    }

    /// Most energy a node could spend if every incoming donor gave it everything.
    pub fn energy_cap(&self, node: usize, with_transfer: bool) -> f64 {
        let mut cap = self.nodes[node].energy;
        if with_transfer {
            for t in self.transfers.iter().filter(|t| t.recipient == node) {
                cap += t.efficiency * self.nodes[t.donor].energy;
            }
        }
        cap
    }
}
