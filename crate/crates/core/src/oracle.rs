//! Brute-force ground truth for tiny slot problems, and midpoint-convexity
//! probes.
//!
//! The oracle shares nothing with the barrier solver beyond the objective
//! itself: it evaluates the convexified delay on a grid (log-spaced powers,
//! linearly spaced transfers) and then refines the best point by coordinate
//! search.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feasibility::{high_sinr_targets, min_power_for_targets, node_slack, Witness};
use crate::math;
use crate::solver::{objective_exact, objective_logdomain, SlotProblem, TransferMode};

pub const MAX_ORACLE_LINKS: usize = 3;
pub const MAX_ORACLE_TRANSFERS: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("oracle handles at most {MAX_ORACLE_LINKS} links and {MAX_ORACLE_TRANSFERS} energy links, got {links} and {transfers}")]
    TooLarge { links: usize, transfers: usize },
    #[error("grid needs at least two points per dimension")]
    BadGrid,
    #[error("no grid point is feasible")]
    EmptyFeasibleGrid,
}

/// Grid resolution of the exhaustive search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GridSpec {
    pub power_points: usize,
    pub transfer_points: usize,
    /// Number of step halvings in the coordinate refinement (0 disables it).
    pub refinements: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { power_points: 24, transfer_points: 9, refinements: 20 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct OracleResult {
    pub log_power: Vec<f64>,
    /// One entry per problem transfer.
    pub transfer: Vec<f64>,
    pub objective: f64,
    /// Grid-only best value, before refinement.
    pub grid_objective: f64,
    pub evaluations: usize,
}

struct Space<'a> {
    problem: &'a SlotProblem,
    /// Transfer index of each search dimension past the powers.
    transfer_dims: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Space<'_> {
    fn n_links(&self) -> usize {
        self.problem.n_links()
    }

    /// Objective at a search point, `+inf` when a budget is violated.
    fn evaluate(&self, point: &[f64]) -> f64 {
        let nl = self.n_links();
        if point.iter().zip(self.lower.iter().zip(&self.upper)).any(|(v, (lo, hi))| v < lo || v > hi) {
            return f64::INFINITY;
        }
        let mut spend = vec![0.0; self.problem.nodes().len()];
        for (link, &pt) in self.problem.links().iter().zip(point) {
            spend[link.owner] += math::exp(pt);
        }
        let transfer = self.transfers(point);
        if node_slack(self.problem, &spend, &transfer).iter().any(|&s| s < 0.0) {
            return f64::INFINITY;
        }
        objective_logdomain(self.problem, &point[..nl])
    }

    fn transfers(&self, point: &[f64]) -> Vec<f64> {
        let nl = self.n_links();
        let mut x = vec![0.0; self.problem.transfers().len()];
        for (d, &q) in self.transfer_dims.iter().enumerate() {
            x[q] = point[nl + d];
        }
        x
    }
}

/// Exhaustive grid search followed by coordinate refinement.
pub fn brute_force_solve(
    problem: &SlotProblem,
    mode: TransferMode,
    grid: &GridSpec,
) -> Result<OracleResult, OracleError> {
    let nl = problem.n_links();
    let transfer_dims: Vec<usize> = match mode {
        TransferMode::Off => Vec::new(),
        TransferMode::On => (0..problem.transfers().len()).collect(),
    };
    if nl > MAX_ORACLE_LINKS || transfer_dims.len() > MAX_ORACLE_TRANSFERS {
        return Err(OracleError::TooLarge { links: nl, transfers: transfer_dims.len() });
    }
    if grid.power_points < 2 || (!transfer_dims.is_empty() && grid.transfer_points < 2) {
        return Err(OracleError::BadGrid);
    }

    let p_min = min_power_for_targets(problem.channel(), &high_sinr_targets(&problem.flows(), 0.0))
        .map_err(|_| OracleError::EmptyFeasibleGrid)?;
    let with_transfer = mode == TransferMode::On;
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for (link, &p) in problem.links().iter().zip(&p_min) {
        lower.push(math::ln(p));
        let cap = problem.energy_cap(link.owner, with_transfer);
        let mut hi = math::ln(cap);
        while math::exp(hi) > cap {
            hi = hi.next_down();
        }
        upper.push(hi);
    }
    if lower.iter().zip(&upper).any(|(lo, hi)| lo >= hi) {
        return Err(OracleError::EmptyFeasibleGrid);
    }
    for &q in &transfer_dims {
        lower.push(0.0);
        upper.push(problem.nodes()[problem.transfers()[q].donor].energy);
    }
    let space = Space { problem, transfer_dims, lower, upper };

    let dims = space.lower.len();
    let points: Vec<usize> = (0..dims).map(|d| if d < nl { grid.power_points } else { grid.transfer_points }).collect();
    let coordinate = |d: usize, i: usize| {
        let t = i as f64 / (points[d] - 1) as f64;
        if i + 1 == points[d] {
            space.upper[d]
        } else {
            space.lower[d] + t * (space.upper[d] - space.lower[d])
        }
    };

    // lexicographic sweep; strict improvement keeps the first index on ties
    let mut index = vec![0usize; dims];
    let mut point = vec![0.0; dims];
    let mut best = f64::INFINITY;
    let mut best_point = vec![0.0; dims];
    let mut evaluations = 0;
    'grid: loop {
        for d in 0..dims {
            point[d] = coordinate(d, index[d]);
        }
        let v = space.evaluate(&point);
        evaluations += 1;
        if v < best {
            best = v;
            best_point.copy_from_slice(&point);
        }
        let mut d = dims;
        loop {
            if d == 0 {
                break 'grid;
            }
            d -= 1;
            index[d] += 1;
            if index[d] < points[d] {
                break;
            }
            index[d] = 0;
        }
    }
    if !best.is_finite() {
        return Err(OracleError::EmptyFeasibleGrid);
    }
    let grid_objective = best;

    let mut step: Vec<f64> = (0..dims).map(|d| (space.upper[d] - space.lower[d]) / (points[d] - 1) as f64).collect();
    let mut trial = best_point.clone();
    for _ in 0..grid.refinements {
        let mut improved = true;
        let mut sweeps = 0;
        while improved && sweeps < 50 {
            improved = false;
            sweeps += 1;
            for d in 0..dims {
                for sign in [1.0, -1.0] {
                    trial.copy_from_slice(&best_point);
                    trial[d] += sign * step[d];
                    let mut v = space.evaluate(&trial);
                    evaluations += 1;
                    // a power move blocked by a budget may go through with more transfer
                    if !v.is_finite() && d < nl {
                        for e in nl..dims {
                            trial[e] = best_point[e] + step[e];
                            let w = space.evaluate(&trial);
                            evaluations += 1;
                            if w < v {
                                v = w;
                                break;
                            }
                            trial[e] = best_point[e];
                        }
                    }
                    if v < best {
                        best = v;
                        best_point.copy_from_slice(&trial);
                        improved = true;
                    }
                }
            }
        }
        for s in &mut step {
            *s *= 0.5;
        }
    }

    Ok(OracleResult {
        log_power: best_point[..nl].to_vec(),
        transfer: space.transfers(&best_point),
        objective: best,
        grid_objective,
        evaluations,
    })
}

/// Coordinates in which a convexity probe draws points and takes midpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeDomain {
    /// Log powers with the high-SINR rate model (the convexified problem).
    LogPower,
    /// Raw powers with Shannon rates (the original problem).
    RawPower,
}

/// Uniformly drawn strictly feasible point, or `None` after `tries` rejections.
pub fn random_interior_point<R: Rng + ?Sized>(
    problem: &SlotProblem,
    mode: TransferMode,
    rng: &mut R,
    tries: usize,
) -> Option<Witness> {
    let with_transfer = mode == TransferMode::On;
    let p_min = min_power_for_targets(problem.channel(), &high_sinr_targets(&problem.flows(), 0.0)).ok()?;
    let mut out_degree = vec![0usize; problem.nodes().len()];
    for t in problem.transfers() {
        out_degree[t.donor] += 1;
    }
    for _ in 0..tries {
        let transfer: Vec<f64> = problem
            .transfers()
            .iter()
            .map(|t| {
                if with_transfer && t.efficiency > 0.0 {
                    rng.random::<f64>() * problem.nodes()[t.donor].energy / out_degree[t.donor] as f64
                } else {
                    0.0
                }
            })
            .collect();
        let log_power: Vec<f64> = problem
            .links()
            .iter()
            .zip(&p_min)
            .map(|(link, &p)| {
                let lo = math::ln(p);
                let hi = math::ln(problem.energy_cap(link.owner, with_transfer));
                lo + rng.random::<f64>() * (hi - lo).max(0.0)
            })
            .collect();
        let mut spend = vec![0.0; problem.nodes().len()];
        for (link, &pt) in problem.links().iter().zip(&log_power) {
            spend[link.owner] += math::exp(pt);
        }
        let budgets_ok = node_slack(problem, &spend, &transfer).iter().all(|&s| s > 0.0);
        let transfers_ok = problem
            .transfers()
            .iter()
            .zip(&transfer)
            .all(|(t, &x)| !with_transfer || t.efficiency == 0.0 || x > 0.0);
        if budgets_ok && transfers_ok && objective_logdomain(problem, &log_power).is_finite() {
            return Some(Witness { log_power, transfer });
        }
    }
    None
}

/// Largest midpoint-convexity violation `f(mid) - (f(a) + f(b)) / 2` over
/// `pairs` random strictly feasible pairs (negative when none is violated).
pub fn convexity_probe<R: Rng + ?Sized>(
    problem: &SlotProblem,
    domain: ProbeDomain,
    pairs: usize,
    rng: &mut R,
) -> f64 {
    let f = |pt: &[f64]| -> f64 {
        match domain {
            ProbeDomain::LogPower => objective_logdomain(problem, pt),
            ProbeDomain::RawPower => {
                let p: Vec<f64> = pt.iter().map(|&x| math::exp(x)).collect();
                objective_exact(problem, &p)
            }
        }
    };
    let mut worst = f64::NEG_INFINITY;
    let mut found = 0;
    let mut attempts = 0;
    while found < pairs && attempts < pairs * 100 {
        attempts += 1;
        let (Some(a), Some(b)) = (
            random_interior_point(problem, TransferMode::Off, rng, 100),
            random_interior_point(problem, TransferMode::Off, rng, 100),
        ) else {
            continue;
        };
        let mid: Vec<f64> = match domain {
            ProbeDomain::LogPower => a.log_power.iter().zip(&b.log_power).map(|(x, y)| 0.5 * (x + y)).collect(),
            ProbeDomain::RawPower => a
                .log_power
                .iter()
                .zip(&b.log_power)
                .map(|(x, y)| math::ln(0.5 * (math::exp(*x) + math::exp(*y))))
                .collect(),
        };
        let (fa, fb, fm) = (f(&a.log_power), f(&b.log_power), f(&mid));
        if !(fa.is_finite() && fb.is_finite() && fm.is_finite()) {
            continue;
        }
        found += 1;
        worst = worst.max(fm - 0.5 * (fa + fb));
    }
    worst
}
