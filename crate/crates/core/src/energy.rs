//! Energy arrivals, transfer accounting and the budget `K p + B x <= E`.

use alloc::vec::Vec;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::DimensionError;
use crate::network::{IncidenceMatrices, NodeId, Topology};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnergyError {
    #[error(transparent)]
    Dimension(#[from] DimensionError),
    #[error("arrival rate must be positive, got {0}")]
    BadRate(f64),
    #[error("battery capacity must be at least 1, got {0}")]
    BadCapacity(f64),
    #[error("energy of node index {node} is {value}, expected (0, {capacity}]")]
    OutOfRange { node: usize, value: f64, capacity: f64 },
    #[error("transfer on energy link #{link} is {value}, must be non-negative")]
    NegativeTransfer { link: usize, value: f64 },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

/// Energy available to each node in the current slot.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EnergyState {
    energy: Vec<f64>,
    battery_capacity: f64,
}

impl EnergyState {
    /// Every entry must lie in `(0, battery_capacity]`; pass the sink's entry
    /// as anything in that range, it is never spent.
    pub fn new(energy: Vec<f64>, battery_capacity: f64) -> Result<Self, EnergyError> {
        if !(battery_capacity >= 1.0) {
            return Err(EnergyError::BadCapacity(battery_capacity));
        }
        if let Some((node, &value)) = energy
            .iter()
            .enumerate()
            .find(|(_, e)| !(**e > 0.0 && **e <= battery_capacity))
        {
            return Err(EnergyError::OutOfRange { node, value, capacity: battery_capacity });
        }
        Ok(Self { energy, battery_capacity })
    }

    pub fn energy(&self) -> &[f64] {
        &self.energy
    }

    pub fn battery_capacity(&self) -> f64 {
        self.battery_capacity
    }

    /// Adds leftover energy, saturating at the battery capacity.
    pub fn with_carry_over(&self, leftover: &[f64]) -> Result<Self, DimensionError> {
        DimensionError::check("leftover energy", self.energy.len(), leftover.len())?;
        let energy = self
            .energy
            .iter()
            .zip(leftover)
            .map(|(e, r)| (e + r.max(0.0)).min(self.battery_capacity))
            .collect();
        Ok(Self { energy, battery_capacity: self.battery_capacity })
    }
}

/// Energy sent on each energy link.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TransferVector {
    amounts: Vec<f64>,
}

impl TransferVector {
    pub fn new(amounts: Vec<f64>) -> Result<Self, EnergyError> {
        if let Some((link, &value)) = amounts.iter().enumerate().find(|(_, x)| !(**x >= 0.0)) {
            return Err(EnergyError::NegativeTransfer { link, value });
        }
        Ok(Self { amounts })
    }

    pub fn zeros(n: usize) -> Self {
        Self { amounts: alloc::vec![0.0; n] }
    }

    pub fn amounts(&self) -> &[f64] {
        &self.amounts
    }
}

/// Poisson(`rate`) harvest per node, redrawn while zero and clamped to the battery.
pub fn sample_arrivals<R: Rng + ?Sized>(
    rng: &mut R,
    n_nodes: usize,
    rate: f64,
    battery_capacity: f64,
) -> Result<EnergyState, EnergyError> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(EnergyError::BadRate(rate));
    }
    if !(battery_capacity >= 1.0) {
        return Err(EnergyError::BadCapacity(battery_capacity));
    }
    let poisson = Poisson::new(rate).map_err(|_| EnergyError::BadRate(rate))?;
    let energy = (0..n_nodes)
        .map(|_| loop {
            let e: f64 = poisson.sample(rng);
            if e > 0.0 {
                break e.min(battery_capacity);
            }
        })
        .collect();
    Ok(EnergyState { energy, battery_capacity })
}

/// `E_n + sum over incoming energy links of eta_q x_q`.
pub fn available_energy(
    node: NodeId,
    energy: &EnergyState,
    transfers: &TransferVector,
    topology: &Topology,
) -> Result<f64, EnergyError> {
    let n = topology.node_index(node).ok_or(EnergyError::UnknownNode(node))?;
    DimensionError::check("energy vector", topology.nodes().len(), energy.energy.len())?;
    DimensionError::check("transfer vector", topology.energy_links().len(), transfers.amounts.len())?;
    Ok(topology
        .energy_links()
        .iter()
        .zip(&transfers.amounts)
        .filter(|(link, _)| link.recipient == node)
        .fold(energy.energy[n], |acc, (link, x)| acc + link.efficiency * x))
}

/// Residual `E - K p - B x`; every entry at least `-1e-9` means the budgets hold.
pub fn check_energy_budget(
    m: &IncidenceMatrices,
    power: &[f64],
    transfers: &[f64],
    energy: &[f64],
) -> Result<Vec<f64>, DimensionError> {
    DimensionError::check("power vector", m.outgoing.ncols(), power.len())?;
    DimensionError::check("transfer vector", m.energy.ncols(), transfers.len())?;
    DimensionError::check("energy vector", m.outgoing.nrows(), energy.len())?;
    let used = &m.outgoing * DVector::from_column_slice(power) + &m.energy * DVector::from_column_slice(transfers);
    Ok(energy.iter().zip(used.iter()).map(|(e, u)| e - u).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_incidence, DataLink, EnergyLink};
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// v1 -> v0 transmits, v2 -> v0 idle donor feeding v1.
    fn pair(eta: f64) -> Topology {
        Topology::new(
            vec![NodeId(0), NodeId(1), NodeId(2)],
            vec![
                DataLink { child: NodeId(1), parent: NodeId(0) },
                DataLink { child: NodeId(2), parent: NodeId(0) },
            ],
            vec![EnergyLink { donor: NodeId(2), recipient: NodeId(1), efficiency: eta }],
        )
        .unwrap()
    }

    #[test]
    fn arrivals_stay_in_range_and_repeat() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = sample_arrivals(&mut rng, 50, 8.0, 20.0).unwrap();
        assert!(s.energy().iter().all(|&e| (1.0..=20.0).contains(&e) && e.fract() == 0.0));
        let again = sample_arrivals(&mut ChaCha8Rng::seed_from_u64(3), 50, 8.0, 20.0).unwrap();
        assert_eq!(s, again);
        assert!(sample_arrivals(&mut rng, 3, 0.0, 20.0).is_err());
        assert!(sample_arrivals(&mut rng, 3, 8.0, 0.5).is_err());
    }

    #[test]
    fn arrival_mean_matches_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = sample_arrivals(&mut rng, 100_000, 8.0, 20.0).unwrap();
        let mean = s.energy().iter().sum::<f64>() / 1e5;
        assert!((7.9..=8.1).contains(&mean), "mean {mean}");
    }

    #[test]
    fn available_energy_adds_efficient_share() {
        let t = pair(0.6);
        let e = EnergyState::new(vec![20.0, 10.0, 11.0], 20.0).unwrap();
        let x = TransferVector::new(vec![10.0]).unwrap();
        assert!((available_energy(NodeId(1), &e, &x, &t).unwrap() - 16.0).abs() < 1e-12);
        let e = EnergyState::new(vec![20.0, 9.0, 11.0], 20.0).unwrap();
        let x = TransferVector::new(vec![11.0]).unwrap();
        assert!((available_energy(NodeId(1), &e, &x, &t).unwrap() - 15.6).abs() < 1e-12);
        let zero = TransferVector::zeros(1);
        assert_eq!(available_energy(NodeId(1), &e, &zero, &t).unwrap(), 9.0);
        assert!(matches!(
            available_energy(NodeId(9), &e, &zero, &t),
            Err(EnergyError::UnknownNode(NodeId(9)))
        ));
    }

    #[test]
    fn budget_residuals() {
        let t = pair(0.6);
        let m = build_incidence(&t);
        let e = [20.0, 9.0, 11.0];
        // no spending: residual is E
        assert_eq!(check_energy_budget(&m, &[0.0, 0.0], &[0.0], &e).unwrap(), e.to_vec());
        // donor drains fully and recipient spends E + eta x
        let r = check_energy_budget(&m, &[15.6, 0.0], &[11.0], &e).unwrap();
        assert!(r[1].abs() < 1e-12 && r[2].abs() < 1e-12);
        assert!(check_energy_budget(&m, &[1.0], &[0.0], &e).is_err());
    }

    #[test]
    fn transfer_loses_energy() {
        let t = pair(0.6);
        let m = build_incidence(&t);
        let e = [20.0, 9.0, 11.0];
        let x = 7.0;
        let before: f64 = e.iter().sum();
        let after: f64 = check_energy_budget(&m, &[0.0, 0.0], &[x], &e).unwrap().iter().sum();
        assert!((before - after - (1.0 - 0.6) * x).abs() < 1e-12);
    }

    #[test]
    fn validates_inputs() {
        assert!(EnergyState::new(vec![0.0], 20.0).is_err());
        assert!(EnergyState::new(vec![21.0], 20.0).is_err());
        assert!(TransferVector::new(vec![-1.0]).is_err());
        let s = EnergyState::new(vec![5.0, 19.0], 20.0).unwrap();
        assert_eq!(s.with_carry_over(&[2.0, 4.0]).unwrap().energy(), &[7.0, 20.0]);
    }
}
