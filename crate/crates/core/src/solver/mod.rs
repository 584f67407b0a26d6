//! Per-slot delay minimization over log-powers and energy transfers.
//!
//! The convexified problem is
//!
//! ```text
//! minimize    sum_l d_l / (c_l(pt) - d_l)
//! subject to  sum_{l owned by n} e^{pt_l} + sum_{q from n} x_q - sum_{q into n} eta_q x_q <= E_n
//!             c_l(pt) >= d_l + delta
//!             x_q >= 0
//! ```
//!
//! and is solved by a primal log-barrier method with damped Newton
//! centering. The barrier parameter at termination yields the dual estimates
//! used by [`kkt_report`].

mod barrier;
mod kkt;
mod objective;
mod problem;

use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feasibility::FeasibilityReport;

pub use barrier::{solve, solve_from, solve_no_transfer, solve_with_transfer};
pub use kkt::{kkt_report, KktReport};
pub use objective::{gradient_logdomain, hessian_logdomain, objective_exact, objective_logdomain};
pub use problem::{ActiveLink, BudgetNode, ProblemError, SlotProblem, TransferLink};

/// Whether energy may flow over the slot's energy links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "lowercase"))]
pub enum TransferMode {
    Off,
    On,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(default))]
pub struct SolverOptions {
    /// Stop once `(#constraints) * mu` falls below this duality-gap bound.
    pub gap_tolerance: f64,
    pub initial_mu: f64,
    /// `mu` is divided by this after each centering.
    pub mu_decrease: f64,
    pub max_outer_iterations: usize,
    pub max_newton_iterations: usize,
    /// Centering stops when half the squared Newton decrement is below this.
    pub newton_tolerance: f64,
    /// Rate headroom `delta` in `c_l >= d_l + delta`.
    pub rate_margin: f64,
    pub armijo: f64,
    pub backtrack: f64,
    /// Links whose solution SINR falls below this are flagged.
    pub high_sinr_threshold: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            gap_tolerance: 1e-8,
            initial_mu: 1.0,
            mu_decrease: 10.0,
            max_outer_iterations: 60,
            max_newton_iterations: 200,
            newton_tolerance: 1e-13,
            rate_margin: 1e-9,
            armijo: 1e-4,
            backtrack: 0.5,
            high_sinr_threshold: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum Termination {
    /// Duality-gap bound met.
    Converged,
    /// Outer iteration cap hit before the gap bound.
    OuterLimit,
}

/// One centering step of the barrier method.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct OuterRecord {
    pub mu: f64,
    pub objective: f64,
    pub newton_steps: usize,
    /// Infinity norm of the barrier gradient after centering.
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Solution {
    pub mode: TransferMode,
    pub power: Vec<f64>,
    pub log_power: Vec<f64>,
    /// One entry per problem transfer link.
    pub transfer: Vec<f64>,
    pub sinr: Vec<f64>,
    pub capacity_approx: Vec<f64>,
    pub capacity_exact: Vec<f64>,
    pub delay: Vec<f64>,
    pub objective: f64,
    /// Budget multipliers, one per budget node.
    pub lambda: Vec<f64>,
    /// Rate-constraint multipliers; identically zero at a feasible optimum.
    pub beta: Vec<f64>,
    /// Multipliers of `x_q >= 0`.
    pub gamma: Vec<f64>,
    /// Barrier parameter at termination.
    pub barrier_mu: f64,
    /// `(#constraints) * mu` at termination.
    pub duality_gap: f64,
    pub outer_iterations: usize,
    pub newton_iterations: usize,
    pub termination: Termination,
    pub trace: Vec<OuterRecord>,
    /// Links with SINR under [`SolverOptions::high_sinr_threshold`].
    pub low_sinr_links: Vec<usize>,
}

impl Solution {
    /// Total delay under Shannon capacities at the solution powers.
    pub fn exact_delay(&self, problem: &SlotProblem) -> f64 {
        objective_exact(problem, &self.power)
    }

    /// Energy received by each budget node over its incoming transfers (sent amounts).
    pub fn transferred_in(&self, problem: &SlotProblem) -> Vec<f64> {
        let mut incoming = alloc::vec![0.0; problem.nodes().len()];
        for (t, &x) in problem.transfers().iter().zip(&self.transfer) {
            incoming[t.recipient] += x;
        }
        incoming
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("slot problem is infeasible: {:?}", .0.issues)]
    Infeasible(alloc::boxed::Box<FeasibilityReport>),
    #[error("starting point is not strictly feasible: {0}")]
    BadStart(&'static str),
    #[error("barrier method did not reach the gap tolerance (gap {:.3e})", .0.duality_gap)]
    NotConverged(alloc::boxed::Box<Solution>),
}
