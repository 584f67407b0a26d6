//! Minimum powers meeting per-link SINR targets and feasibility screening of
//! slot problems.
//!
//! A rate `d_l` needs `SINR_l >= gamma_l`, i.e. the linear fixed point
//! `p = M p + b` with `M_{l,k} = gamma_l G_kl / G_ll` (`k != l`) and
//! `b_l = gamma_l sigma_l / G_ll`. A non-negative solution exists iff the
//! Perron root of `M` is below 1, and then it is the componentwise-smallest
//! feasible power vector.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelState, PowerVector};
use crate::math;
use crate::network::NodeId;
use crate::solver::{SlotProblem, TransferMode};

pub const SPECTRAL_TOLERANCE: f64 = 1e-10;
pub const SPECTRAL_MAX_ITERATIONS: usize = 10_000;
/// Scale-up over minimum powers used for the strictly feasible witness.
pub const WITNESS_SCALE: f64 = 0.1;
/// Extra rate headroom (nats) demanded of the witness point.
pub const WITNESS_RATE_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("rate demands are infeasible under interference (spectral radius {spectral_radius:.6})")]
pub struct RateInfeasible {
    pub spectral_radius: f64,
}

/// `gamma_l = e^{2 d_l} - 1`, the SINR that makes `1/2 ln(1 + SINR) = d_l`.
pub fn exact_sinr_targets(flows: &[f64]) -> Vec<f64> {
    flows.iter().map(|&d| math::exp_m1(2.0 * d)).collect()
}

/// `gamma_l = e^{2 (d_l + margin)}`, the SINR that makes `1/2 ln(SINR) = d_l + margin`.
pub fn high_sinr_targets(flows: &[f64], margin: f64) -> Vec<f64> {
    flows.iter().map(|&d| math::exp(2.0 * (d + margin))).collect()
}

/// Normalized interference matrix `M` and offset `b` for the given SINR targets.
pub fn interference_system(ch: &ChannelState, targets: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let n = ch.n_links();
    assert_eq!(targets.len(), n, "one SINR target per link");
    let m = DMatrix::from_fn(n, n, |l, k| {
        if l == k {
            0.0
        } else {
            targets[l] * ch.gain(k, l) / ch.gain(l, l)
        }
    });
    let b = DVector::from_fn(n, |l, _| targets[l] * ch.noise()[l] / ch.gain(l, l));
    (m, b)
}

/// Collatz-Wielandt bounds `(lo, hi)` on the Perron root of a non-negative
/// matrix, from power iteration on `M + I` (the shift removes periodicity).
///
/// Stops once the bracket is narrower than `tol` (relative to `max(1, hi)`),
/// or, when `decide_at` is given, as soon as the bracket excludes it.
fn perron_bounds(m: &DMatrix<f64>, tol: f64, max_iter: usize, decide_at: Option<f64>) -> (f64, f64) {
    let n = m.nrows();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mut x = DVector::from_element(n, 1.0);
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    for _ in 0..max_iter {
        let y = m * &x + &x;
        let (mut r_lo, mut r_hi) = (f64::INFINITY, 0.0_f64);
        for i in 0..n {
            let r = y[i] / x[i];
            r_lo = r_lo.min(r);
            r_hi = r_hi.max(r);
        }
        lo = r_lo - 1.0;
        hi = r_hi - 1.0;
        if hi - lo <= tol * hi.max(1.0) {
            break;
        }
        if let Some(t) = decide_at {
            if hi < t || lo >= t {
                break;
            }
        }
        let scale = y.max();
        x = y / scale;
        // keep every coordinate strictly positive so the ratios stay defined
        x.apply(|v| *v = v.max(f64::MIN_POSITIVE));
    }
    (lo.max(0.0), hi.max(0.0))
}

/// Perron root (spectral radius) of a non-negative square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    let (lo, hi) = perron_bounds(m, SPECTRAL_TOLERANCE, SPECTRAL_MAX_ITERATIONS, None);
    0.5 * (lo + hi)
}

/// Componentwise-minimal powers reaching `targets`, or the reason none exist.
pub fn min_power_for_targets(ch: &ChannelState, targets: &[f64]) -> Result<Vec<f64>, RateInfeasible> {
    let (m, b) = interference_system(ch, targets);
    let (lo, hi) = perron_bounds(&m, SPECTRAL_TOLERANCE, SPECTRAL_MAX_ITERATIONS, Some(1.0));
    let rho = 0.5 * (lo + hi);
    if hi >= 1.0 && (lo >= 1.0 || rho >= 1.0) {
        return Err(RateInfeasible { spectral_radius: rho });
    }
    let n = m.nrows();
    let system = DMatrix::identity(n, n) - m;
    let p = system.lu().solve(&b).ok_or(RateInfeasible { spectral_radius: rho })?;
    if p.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(RateInfeasible { spectral_radius: rho });
    }
    Ok(p.iter().copied().collect())
}

/// Smallest powers meeting every Shannon rate `1/2 ln(1 + SINR_l) >= d_l`.
pub fn min_power_vector(ch: &ChannelState, flows: &[f64]) -> Result<PowerVector, RateInfeasible> {
    let p = min_power_for_targets(ch, &exact_sinr_targets(flows))?;
    Ok(PowerVector::from_power(p).expect("minimum powers are positive"))
}

/// Why a slot problem cannot be solved.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Infeasibility {
    /// No power vector reaches the demanded rates.
    Rate { spectral_radius: f64 },
    /// A node cannot afford the minimum powers of its links.
    EnergyShort { node: usize, id: NodeId, slack: f64 },
    /// Budgets admit the minimum powers only on the boundary.
    NoStrictInterior,
}

/// Strictly feasible starting point for the solver.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Witness {
    pub log_power: Vec<f64>,
    /// One entry per problem transfer; zero when transfer is off or useless.
    pub transfer: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FeasibilityReport {
    pub rate_feasible: bool,
    pub spectral_radius: f64,
    /// Minimum powers for the high-SINR rate model, when they exist.
    pub min_power: Option<Vec<f64>>,
    /// `E_n + sum_in eta E_donor - sum_out p_min` per budget node.
    pub node_slack: Vec<f64>,
    pub witness: Option<Witness>,
    pub issues: Vec<Infeasibility>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.witness.is_some()
    }
}

/// Screens a slot problem under the high-SINR rate model (`SINR_l >= e^{2 d_l}`)
/// and builds a strictly feasible witness when one exists.
pub fn check_problem_feasible(problem: &SlotProblem, mode: TransferMode) -> FeasibilityReport {
    let with_transfer = mode == TransferMode::On;
    let flows = problem.flows();
    let (m, _) = interference_system(problem.channel(), &high_sinr_targets(&flows, 0.0));
    let spectral = spectral_radius(&m);
    let n_nodes = problem.nodes().len();

    let mut report = FeasibilityReport {
        rate_feasible: false,
        spectral_radius: spectral,
        min_power: None,
        node_slack: vec![0.0; n_nodes],
        witness: None,
        issues: Vec::new(),
    };

    let min_power = match min_power_for_targets(problem.channel(), &high_sinr_targets(&flows, 0.0)) {
        Ok(p) => p,
        Err(e) => {
            report.issues.push(Infeasibility::Rate { spectral_radius: e.spectral_radius });
            return report;
        }
    };
    report.rate_feasible = true;

    let mut spend = vec![0.0; n_nodes];
    for (link, &p) in problem.links().iter().zip(&min_power) {
        spend[link.owner] += p;
    }
    for (n, &spent) in spend.iter().enumerate() {
        let slack = problem.energy_cap(n, with_transfer) - spent;
        report.node_slack[n] = slack;
        if slack <= 0.0 {
            report.issues.push(Infeasibility::EnergyShort { node: n, id: problem.nodes()[n].id, slack });
        }
    }
    report.min_power = Some(min_power);
    if !report.issues.is_empty() {
        return report;
    }

    let Ok(base) = min_power_for_targets(problem.channel(), &high_sinr_targets(&flows, WITNESS_RATE_MARGIN))
    else {
        report.issues.push(Infeasibility::NoStrictInterior);
        return report;
    };
    let mut spend = vec![0.0; n_nodes];
    for (link, &p) in problem.links().iter().zip(&base) {
        spend[link.owner] += p;
    }

    let mut out_degree = vec![0usize; n_nodes];
    for t in problem.transfers() {
        if with_transfer && t.efficiency > 0.0 {
            out_degree[t.donor] += 1;
        }
    }
    // half of each donor's budget first; the nearly-full split rescues tight recipients
    for share in [0.5, 1.0 - 1e-6] {
        let transfer: Vec<f64> = problem
            .transfers()
            .iter()
            .map(|t| {
                if with_transfer && t.efficiency > 0.0 {
                    share * problem.nodes()[t.donor].energy / out_degree[t.donor] as f64
                } else {
                    0.0
                }
            })
            .collect();
        let slack = node_slack(problem, &spend, &transfer);
        let mut scale = WITNESS_SCALE;
        let mut ok = true;
        for n in 0..n_nodes {
            if slack[n] <= 0.0 {
                ok = false;
                break;
            }
            if spend[n] > 0.0 {
                scale = scale.min(0.5 * slack[n] / spend[n]);
            }
        }
        if ok {
            let log_power = base.iter().map(|p| math::ln(p * (1.0 + scale))).collect();
            report.witness = Some(Witness { log_power, transfer });
            return report;
        }
    }
    report.issues.push(Infeasibility::NoStrictInterior);
    report
}

/// Budget slack per node for given link spending and transfers.
pub(crate) fn node_slack(problem: &SlotProblem, spend: &[f64], transfer: &[f64]) -> Vec<f64> {
    let mut slack: Vec<f64> = problem.nodes().iter().zip(spend).map(|(n, s)| n.energy - s).collect();
    for (t, &x) in problem.transfers().iter().zip(transfer) {
        slack[t.donor] -= x;
        slack[t.recipient] += t.efficiency * x;
    }
    slack
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent route: iterate `p <- M p + b` from zero.
    fn fixed_point(ch: &ChannelState, targets: &[f64], steps: usize) -> Vec<f64> {
        let n = ch.n_links();
        let mut p = vec![0.0; n];
        for _ in 0..steps {
            p = (0..n)
                .map(|l| {
                    let interference: f64 = (0..n).filter(|&k| k != l).map(|k| ch.gain(k, l) * p[k]).sum();
                    targets[l] * (interference + ch.noise()[l]) / ch.gain(l, l)
                })
                .collect();
        }
        p
    }

    #[test]
    fn single_link_min_power() {
        let ch = ChannelState::from_rows(&[vec![1.0]], 1e-5).unwrap();
        let p = min_power_vector(&ch, &[0.8752]).unwrap();
        let expected = (libm::exp(1.7504) - 1.0) * 1e-5;
        assert!((p.power()[0] - expected).abs() < 1e-18);
        assert!((p.power()[0] - 4.758e-5).abs() / 4.758e-5 < 1e-3);
    }

    #[test]
    fn orthogonal_min_power_is_independent() {
        let ch = ChannelState::from_rows(&[vec![2.0, 0.0], vec![0.0, 0.5]], 1e-3).unwrap();
        let d = [0.3, 0.9];
        let p = min_power_vector(&ch, &d).unwrap();
        assert!((p.power()[0] - libm::expm1(0.6) * 1e-3 / 2.0).abs() < 1e-15);
        assert!((p.power()[1] - libm::expm1(1.8) * 1e-3 / 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_link_linear_solve_matches_fixed_point() {
        let ch = ChannelState::from_rows(&[vec![1.0, 0.01], vec![0.01, 1.0]], 1e-5).unwrap();
        let d = [0.5, 0.5];
        let p = min_power_vector(&ch, &d).unwrap();
        let oracle = fixed_point(&ch, &exact_sinr_targets(&d), 200);
        for (a, b) in p.power().iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-10 * b.max(1e-300), "{a} vs {b}");
        }
        // each link meets its rate exactly
        for l in 0..2 {
            assert!((ch.capacity_exact(p.power(), l) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn spectral_radius_of_symmetric_pair() {
        // [[0, a], [a, 0]] has eigenvalues +-a
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 0.3, 0.3, 0.0]);
        assert!((spectral_radius(&m) - 0.3).abs() < 1e-9);
        let z = DMatrix::<f64>::zeros(3, 3);
        assert!(spectral_radius(&z).abs() < 1e-12);
    }

    #[test]
    fn rate_infeasibility_threshold_by_bisection() {
        // symmetric pair: rho = (e^{2d} - 1) g, so infeasibility begins at d* = ln(1 + 1/g) / 2
        let g = 0.3;
        let ch = ChannelState::from_rows(&[vec![1.0, g], vec![g, 1.0]], 1e-5).unwrap();
        let (mut lo, mut hi) = (0.01, 5.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if min_power_vector(&ch, &[mid, mid]).is_ok() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let analytic = 0.5 * libm::log(1.0 + 1.0 / g);
        assert!((lo - analytic).abs() < 1e-6, "{lo} vs {analytic}");
        let err = min_power_vector(&ch, &[analytic + 0.01, analytic + 0.01]).unwrap_err();
        assert!(err.spectral_radius >= 1.0);
    }
}
