use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::objective::{gradient_logdomain, Capacities};
use super::{SlotProblem, Solution, TransferMode};
use crate::math;

/// Relative budget slack under which a node counts as tight.
const TIGHT_RELATIVE: f64 = 1e-3;

/// Optimality residuals of a solution, all in absolute terms.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct KktReport {
    /// `dL/dpt_l` per link, then `dL/dx_q` per transfer when transfer is on.
    pub stationarity: Vec<f64>,
    /// `lambda_n s_n` per node, `beta_l r_l` per link, then `gamma_q x_q` per transfer.
    pub complementary_slackness: Vec<f64>,
    pub max_stationarity: f64,
    pub max_complementarity: f64,
    /// Largest rate multiplier, including the barrier estimate `mu / r_l`.
    pub max_rate_multiplier: f64,
    /// Largest spread of the marginal delay per unit power over the outgoing
    /// links of a node; `None` when no node owns two or more active links.
    pub max_marginal_spread: Option<f64>,
    /// `-(d f / d pt_l) e^{-pt_l}`, the budget multiplier implied by link `l`.
    pub lambda_formula: Vec<f64>,
    /// `|lambda_formula_l - lambda_owner|` for links whose owner budget is tight.
    pub lambda_residual: Vec<Option<f64>>,
    /// Most negative multiplier (0 if none is negative).
    pub min_dual: f64,
    /// Largest constraint violation (0 if every constraint holds).
    pub max_violation: f64,
}

impl KktReport {
    pub fn max_lambda_residual(&self) -> f64 {
        self.lambda_residual.iter().flatten().fold(0.0, |m, &r| m.max(r))
    }

    /// Whether every residual is within `tol`.
    pub fn certifies(&self, tol: f64) -> bool {
        self.max_stationarity <= tol
            && self.max_complementarity <= tol
            && self.max_rate_multiplier <= tol
            && self.max_marginal_spread.is_none_or(|s| s <= tol)
            && self.min_dual >= -1e-9
    }
}

/// KKT residuals and the equal-marginal-delay diagnostics of a solution.
pub fn kkt_report(problem: &SlotProblem, solution: &Solution) -> KktReport {
    let nl = problem.n_links();
    let n_nodes = problem.nodes().len();
    let ch = problem.channel();
    let power = &solution.power;
    let grad = gradient_logdomain(problem, &solution.log_power);

    let caps = Capacities::new(ch, &solution.log_power);
    let mut stationarity: Vec<f64> = (0..nl)
        .map(|l| {
            let rate_term: f64 = (0..nl).map(|k| solution.beta[k] * caps.jacobian[(k, l)]).sum();
            grad[l] + solution.lambda[problem.links()[l].owner] * power[l] - rate_term
        })
        .collect();
    if solution.mode == TransferMode::On {
        for (q, t) in problem.transfers().iter().enumerate() {
            stationarity.push(
                solution.lambda[t.donor] - t.efficiency * solution.lambda[t.recipient] - solution.gamma[q],
            );
        }
    }

    let mut slack: Vec<f64> = problem.nodes().iter().map(|n| n.energy).collect();
    for (link, &p) in problem.links().iter().zip(power) {
        slack[link.owner] -= p;
    }
    for (t, &x) in problem.transfers().iter().zip(&solution.transfer) {
        slack[t.donor] -= x;
        slack[t.recipient] += t.efficiency * x;
    }
    let rate_slack: Vec<f64> = problem
        .links()
        .iter()
        .enumerate()
        .map(|(l, link)| ch.capacity_approx(&solution.log_power, l) - link.flow)
        .collect();

    let mut complementary: Vec<f64> = slack.iter().zip(&solution.lambda).map(|(s, l)| s * l).collect();
    complementary.extend(rate_slack.iter().zip(&solution.beta).map(|(r, b)| r * b));
    if solution.mode == TransferMode::On {
        complementary.extend(solution.transfer.iter().zip(&solution.gamma).map(|(x, g)| x * g));
    }

    let max_rate_multiplier = rate_slack
        .iter()
        .zip(&solution.beta)
        .map(|(&r, &b)| b.max(if r > 0.0 { solution.barrier_mu / r } else { f64::INFINITY }))
        .fold(0.0, f64::max);

    let lambda_formula: Vec<f64> = (0..nl).map(|l| -grad[l] / power[l]).collect();

    let mut owned: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    for (l, link) in problem.links().iter().enumerate() {
        owned[link.owner].push(l);
    }
    let max_marginal_spread = owned
        .iter()
        .filter(|ls| ls.len() >= 2)
        .map(|ls| {
            let (lo, hi) = ls
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &l| {
                    (lo.min(lambda_formula[l]), hi.max(lambda_formula[l]))
                });
            hi - lo
        })
        .reduce(f64::max);

    let lambda_residual = problem
        .links()
        .iter()
        .enumerate()
        .map(|(l, link)| {
            let n = link.owner;
            let tight = slack[n] <= TIGHT_RELATIVE * problem.nodes()[n].energy.max(1.0);
            tight.then(|| (lambda_formula[l] - solution.lambda[n]).abs())
        })
        .collect();

    let min_dual = solution
        .lambda
        .iter()
        .chain(&solution.beta)
        .chain(&solution.gamma)
        .fold(0.0_f64, |m, &v| m.min(v));

    let mut max_violation = 0.0_f64;
    for &s in &slack {
        max_violation = max_violation.max(-s);
    }
    for &r in &rate_slack {
        max_violation = max_violation.max(-r);
    }
    for &x in &solution.transfer {
        max_violation = max_violation.max(-x);
    }

    KktReport {
        max_stationarity: math::max_abs(&stationarity),
        max_complementarity: math::max_abs(&complementary),
        stationarity,
        complementary_slackness: complementary,
        max_rate_multiplier,
        max_marginal_spread,
        lambda_formula,
        lambda_residual,
        min_dual,
        max_violation,
    }
}
