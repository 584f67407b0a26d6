#![allow(dead_code)]

use ehwsn_core::solver::{ActiveLink, BudgetNode, TransferLink};
use ehwsn_core::{ChannelState, NodeId, SlotProblem};
use rand::Rng;

pub const NOISE: f64 = 1e-5;

/// `n` links, one per transmitter, with unit direct gains.
pub fn problem(flows: &[f64], energy: &[f64], cross: &[Vec<f64>]) -> SlotProblem {
    problem_with_donors(flows, energy, cross, &[])
}

/// Like [`problem`], plus donors `(energy, recipient, efficiency)` appended
/// after the transmitters.
pub fn problem_with_donors(
    flows: &[f64],
    energy: &[f64],
    cross: &[Vec<f64>],
    donors: &[(f64, usize, f64)],
) -> SlotProblem {
    let n = flows.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|k| (0..n).map(|l| if k == l { 1.0 } else { cross[k][l] }).collect())
        .collect();
    let channel = ChannelState::from_rows(&rows, NOISE).unwrap();
    let links = flows.iter().enumerate().map(|(l, &flow)| ActiveLink { flow, owner: l, label: l }).collect();
    let mut nodes: Vec<BudgetNode> =
        energy.iter().enumerate().map(|(i, &e)| BudgetNode { energy: e, id: NodeId(i as u32 + 1) }).collect();
    let mut transfers = Vec::new();
    for (q, &(e, recipient, efficiency)) in donors.iter().enumerate() {
        nodes.push(BudgetNode { energy: e, id: NodeId((n + q) as u32 + 1) });
        transfers.push(TransferLink { donor: n + q, recipient, efficiency, label: q });
    }
    SlotProblem::new(links, channel, nodes, transfers).unwrap()
}

pub fn zero_cross(n: usize) -> Vec<Vec<f64>> {
    vec![vec![0.0; n]; n]
}

pub fn uniform_cross(n: usize, g: f64) -> Vec<Vec<f64>> {
    vec![vec![g; n]; n]
}

/// Random high-SINR instance: flows in (0.1, 1], energies in [5, 15],
/// cross gains in (0, max_cross].
pub fn random_problem<R: Rng>(rng: &mut R, n: usize, donors: usize, max_cross: f64) -> SlotProblem {
    let flows: Vec<f64> = (0..n).map(|_| 0.1 + 0.9 * (1.0 - rng.random::<f64>())).collect();
    let energy: Vec<f64> = (0..n).map(|_| rng.random_range(5.0..=15.0)).collect();
    let cross: Vec<Vec<f64>> =
        (0..n).map(|_| (0..n).map(|_| max_cross * (1.0 - rng.random::<f64>())).collect()).collect();
    let donor_list: Vec<(f64, usize, f64)> = (0..donors)
        .map(|_| (rng.random_range(2.0..=12.0), rng.random_range(0..n), rng.random_range(0.3..=0.9)))
        .collect();
    problem_with_donors(&flows, &energy, &cross, &donor_list)
}
