//! Data-collection tree, directed energy links, incidence matrices and the
//! half-duplex slot schedule of a data collection round.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::DimensionError;

/// Sensor node identifier. Node 0 is the sink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(transparent))]
pub struct NodeId(pub u32);

impl NodeId {
    pub const SINK: NodeId = NodeId(0);
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Directed data link `child -> parent` of the collection tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct DataLink {
    pub child: NodeId,
    pub parent: NodeId,
}

/// Directed wireless energy link `donor -> recipient`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EnergyLink {
    pub donor: NodeId,
    pub recipient: NodeId,
    /// Fraction of the sent energy that arrives, in `(0, 1]`.
    pub efficiency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    Data,
    Energy,
}

impl fmt::Display for LinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinkKind::Data => f.write_str("data link"),
            LinkKind::Energy => f.write_str("energy link"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("topology has no sink node {}", NodeId::SINK)]
    MissingSink,
    #[error("node {0} is listed more than once")]
    DuplicateNode(NodeId),
    #[error("{kind} #{index} references unknown node {node}")]
    UnknownEndpoint { kind: LinkKind, index: usize, node: NodeId },
    #[error("{kind} #{index} is a self loop on {node}")]
    SelfLoop { kind: LinkKind, index: usize, node: NodeId },
    #[error("data link #{index} ({child}->{parent}) leaves the sink")]
    SinkHasParent { index: usize, child: NodeId, parent: NodeId },
    #[error("node {node} has several parents: data links #{first} and #{second}")]
    MultipleParents { node: NodeId, first: usize, second: usize },
    #[error("node {0} has no outgoing data link")]
    MissingParent(NodeId),
    #[error("data link #{index} ({child}->{parent}) closes a cycle")]
    Cycle { index: usize, child: NodeId, parent: NodeId },
    #[error("energy link #{index} originates at the sink")]
    SinkDonor { index: usize },
    #[error("energy link #{index} has efficiency {efficiency}, expected (0, 1]")]
    BadEfficiency { index: usize, efficiency: f64 },
}

/// Validated data-collection tree plus energy links.
///
/// Node order, data-link order and energy-link order are preserved from the
/// input; incidence-matrix rows and columns follow them.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: Vec<NodeId>,
    data_links: Vec<DataLink>,
    energy_links: Vec<EnergyLink>,
    index: BTreeMap<NodeId, usize>,
    /// Outgoing data link per node index (None for the sink).
    uplink: Vec<Option<usize>>,
    /// Hop distance to the sink per node index.
    depth: Vec<usize>,
}

impl Topology {
    pub fn new(
        nodes: Vec<NodeId>,
        data_links: Vec<DataLink>,
        energy_links: Vec<EnergyLink>,
    ) -> Result<Self, TopologyError> {
        let mut index = BTreeMap::new();
        for (i, &n) in nodes.iter().enumerate() {
            if index.insert(n, i).is_some() {
                return Err(TopologyError::DuplicateNode(n));
            }
        }
        let sink = *index.get(&NodeId::SINK).ok_or(TopologyError::MissingSink)?;

        let lookup = |kind, index_of_link, node: NodeId| {
            index
                .get(&node)
                .copied()
                .ok_or(TopologyError::UnknownEndpoint { kind, index: index_of_link, node })
        };

        let mut uplink: Vec<Option<usize>> = vec![None; nodes.len()];
        let mut parent_of = vec![usize::MAX; nodes.len()];
        for (l, link) in data_links.iter().enumerate() {
            let c = lookup(LinkKind::Data, l, link.child)?;
            let p = lookup(LinkKind::Data, l, link.parent)?;
            if c == p {
                return Err(TopologyError::SelfLoop { kind: LinkKind::Data, index: l, node: link.child });
            }
            if c == sink {
                return Err(TopologyError::SinkHasParent { index: l, child: link.child, parent: link.parent });
            }
            if let Some(first) = uplink[c] {
                return Err(TopologyError::MultipleParents { node: link.child, first, second: l });
            }
            uplink[c] = Some(l);
            parent_of[c] = p;
        }
        for (i, &n) in nodes.iter().enumerate() {
            if i != sink && uplink[i].is_none() {
                return Err(TopologyError::MissingParent(n));
            }
        }

        // Every node must drain to the sink; a walk that revisits a node is a cycle.
        let mut depth = vec![usize::MAX; nodes.len()];
        depth[sink] = 0;
        for start in 0..nodes.len() {
            let mut path = Vec::new();
            let mut on_path = BTreeSet::new();
            let mut v = start;
            while depth[v] == usize::MAX {
                if !on_path.insert(v) {
                    let l = uplink[v].expect("non-sink nodes have an uplink");
                    let link = data_links[l];
                    return Err(TopologyError::Cycle { index: l, child: link.child, parent: link.parent });
                }
                path.push(v);
                v = parent_of[v];
            }
            let mut d = depth[v];
            for &u in path.iter().rev() {
                d += 1;
                depth[u] = d;
            }
        }

        for (q, link) in energy_links.iter().enumerate() {
            let donor = lookup(LinkKind::Energy, q, link.donor)?;
            let recipient = lookup(LinkKind::Energy, q, link.recipient)?;
            if donor == recipient {
                return Err(TopologyError::SelfLoop { kind: LinkKind::Energy, index: q, node: link.donor });
            }
            if donor == sink {
                return Err(TopologyError::SinkDonor { index: q });
            }
            if !(link.efficiency > 0.0 && link.efficiency <= 1.0) {
                return Err(TopologyError::BadEfficiency { index: q, efficiency: link.efficiency });
            }
        }

        Ok(Self { nodes, data_links, energy_links, index, uplink, depth })
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn data_links(&self) -> &[DataLink] {
        &self.data_links
    }

    pub fn energy_links(&self) -> &[EnergyLink] {
        &self.energy_links
    }

    pub fn node_index(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn sink_index(&self) -> usize {
        self.index[&NodeId::SINK]
    }

    /// Outgoing data link of a node (by node index).
    pub fn uplink(&self, node: usize) -> Option<usize> {
        self.uplink[node]
    }

    /// Hop distance from a node to the sink.
    pub fn depth(&self, node: usize) -> usize {
        self.depth[node]
    }

    /// Depth of the child endpoint of a data link.
    pub fn link_depth(&self, link: usize) -> usize {
        self.depth[self.index[&self.data_links[link].child]]
    }

    /// Number of data links incident to each node (tree degree).
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for link in &self.data_links {
            deg[self.index[&link.child]] += 1;
            deg[self.index[&link.parent]] += 1;
        }
        deg
    }

    pub fn max_degree(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }
}

/// Node-by-link incidence structure of the data and energy graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrices {
    /// `N x L`: +1 at the sending node, -1 at the receiving node.
    pub data: DMatrix<f64>,
    /// `N x Q`: +1 at the donor, `-eta` at the recipient.
    pub energy: DMatrix<f64>,
    /// `N x L`: positive part of `data`, selects each node's outgoing links.
    pub outgoing: DMatrix<f64>,
}

/// Incidence matrices of a validated topology; column order follows link order.
pub fn build_incidence(topology: &Topology) -> IncidenceMatrices {
    let n = topology.nodes.len();
    let mut data = DMatrix::zeros(n, topology.data_links.len());
    for (l, link) in topology.data_links.iter().enumerate() {
        data[(topology.index[&link.child], l)] = 1.0;
        data[(topology.index[&link.parent], l)] = -1.0;
    }
    let mut energy = DMatrix::zeros(n, topology.energy_links.len());
    for (q, link) in topology.energy_links.iter().enumerate() {
        energy[(topology.index[&link.donor], q)] = 1.0;
        energy[(topology.index[&link.recipient], q)] = -link.efficiency;
    }
    let outgoing = data.map(|a: f64| a.max(0.0));
    IncidenceMatrices { data, energy, outgoing }
}

/// Fixed per-link flows together with the divergence they induce.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FlowAssignment {
    pub flows: Vec<f64>,
    pub divergence: Vec<f64>,
}

impl FlowAssignment {
    /// Derives the divergence `s = A d` from the flows.
    pub fn from_flows(m: &IncidenceMatrices, flows: Vec<f64>) -> Result<Self, DimensionError> {
        DimensionError::check("flow vector", m.data.ncols(), flows.len())?;
        let s = &m.data * DVector::from_column_slice(&flows);
        Ok(Self { flows, divergence: s.iter().copied().collect() })
    }
}

/// Residual `s - A d`; a max-abs of at most `1e-12` counts as conserved.
pub fn check_flow_conservation(
    m: &IncidenceMatrices,
    flows: &[f64],
    divergence: &[f64],
) -> Result<Vec<f64>, DimensionError> {
    DimensionError::check("flow vector", m.data.ncols(), flows.len())?;
    DimensionError::check("divergence vector", m.data.nrows(), divergence.len())?;
    let ad = &m.data * DVector::from_column_slice(flows);
    Ok(divergence.iter().zip(ad.iter()).map(|(s, a)| s - a).collect())
}

/// One time slot: simultaneously active data links and the energy links
/// whose donors are idle in that slot.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Slot {
    pub data_links: Vec<usize>,
    pub energy_links: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Schedule {
    pub slots: Vec<Slot>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("slot {slot} references unknown {kind} #{index}")]
    UnknownLink { slot: usize, kind: LinkKind, index: usize },
    #[error("slot {slot}: node {node} is an endpoint of several active data links")]
    HalfDuplex { slot: usize, node: NodeId },
    #[error("data link #{0} is never scheduled")]
    Uncovered(usize),
    #[error("slot {slot}: energy link #{index} has donor {donor} transmitting data")]
    BusyDonor { slot: usize, index: usize, donor: NodeId },
}

impl Schedule {
    /// Checks the half-duplex, coverage and idle-donor rules.
    pub fn validate(&self, topology: &Topology) -> Result<(), ScheduleError> {
        let mut covered = vec![false; topology.data_links.len()];
        for (s, slot) in self.slots.iter().enumerate() {
            let mut endpoints = BTreeSet::new();
            let mut transmitters = BTreeSet::new();
            for &l in &slot.data_links {
                let link = topology.data_links.get(l).ok_or(ScheduleError::UnknownLink {
                    slot: s,
                    kind: LinkKind::Data,
                    index: l,
                })?;
                for node in [link.child, link.parent] {
                    if !endpoints.insert(node) {
                        return Err(ScheduleError::HalfDuplex { slot: s, node });
                    }
                }
                transmitters.insert(link.child);
                covered[l] = true;
            }
            for &q in &slot.energy_links {
                let link = topology.energy_links.get(q).ok_or(ScheduleError::UnknownLink {
                    slot: s,
                    kind: LinkKind::Energy,
                    index: q,
                })?;
                if transmitters.contains(&link.donor) {
                    return Err(ScheduleError::BusyDonor { slot: s, index: q, donor: link.donor });
                }
            }
        }
        match covered.iter().position(|c| !c) {
            Some(l) => Err(ScheduleError::Uncovered(l)),
            None => Ok(()),
        }
    }

    /// Builds a schedule from explicit data-link sets, attaching every energy
    /// link whose donor is idle in the slot.
    pub fn from_data_slots(topology: &Topology, slots: Vec<Vec<usize>>) -> Result<Self, ScheduleError> {
        let mut out = Vec::with_capacity(slots.len());
        for (s, mut links) in slots.into_iter().enumerate() {
            if let Some(&bad) = links.iter().find(|&&l| l >= topology.data_links.len()) {
                return Err(ScheduleError::UnknownLink { slot: s, kind: LinkKind::Data, index: bad });
            }
            links.sort_unstable();
            let energy_links = idle_donor_links(topology, &links);
            out.push(Slot { data_links: links, energy_links });
        }
        let schedule = Schedule { slots: out };
        schedule.validate(topology)?;
        Ok(schedule)
    }
}

fn idle_donor_links(topology: &Topology, data_links: &[usize]) -> Vec<usize> {
    let transmitters: BTreeSet<NodeId> =
        data_links.iter().map(|&l| topology.data_links[l].child).collect();
    topology
        .energy_links
        .iter()
        .enumerate()
        .filter(|(_, e)| !transmitters.contains(&e.donor))
        .map(|(q, _)| q)
        .collect()
}

/// Greedy proper edge colouring of the tree, walked from the sink down.
///
/// Each link takes the smallest colour not already used at its parent, so at
/// most `max_degree` colours appear. Colour classes become slots, ordered by
/// the deepest child endpoint they contain (leaf-to-root aggregation), then by
/// size, then by colour.
pub fn half_duplex_schedule(topology: &Topology) -> Schedule {
    let n = topology.nodes.len();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (l, link) in topology.data_links.iter().enumerate() {
        children[topology.index[&link.parent]].push(l);
    }

    let mut colour = vec![usize::MAX; topology.data_links.len()];
    let mut queue = alloc::collections::VecDeque::from([topology.sink_index()]);
    while let Some(u) = queue.pop_front() {
        let mut used = BTreeSet::new();
        if let Some(up) = topology.uplink[u] {
            used.insert(colour[up]);
        }
        for &l in &children[u] {
            let c = (0..).find(|c| !used.contains(c)).expect("unbounded range");
            colour[l] = c;
            used.insert(c);
            queue.push_back(topology.index[&topology.data_links[l].child]);
        }
    }

    let n_colours = colour.iter().copied().max().map_or(0, |c| c + 1);
    let mut classes: Vec<(usize, Vec<usize>)> = (0..n_colours).map(|c| (c, Vec::new())).collect();
    for (l, &c) in colour.iter().enumerate() {
        classes[c].1.push(l);
    }
    classes.sort_by(|(ca, a), (cb, b)| {
        let depth = |ls: &[usize]| ls.iter().map(|&l| topology.link_depth(l)).max().unwrap_or(0);
        depth(b)
            .cmp(&depth(a))
            .then(b.len().cmp(&a.len()))
            .then(ca.cmp(cb))
    });

    let slots = classes
        .into_iter()
        .map(|(_, data_links)| {
            let energy_links = idle_donor_links(topology, &data_links);
            Slot { data_links, energy_links }
        })
        .collect();
    Schedule { slots }
}
