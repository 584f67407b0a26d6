use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::objective::{delay_slopes, objective_logdomain, Capacities};
use super::{OuterRecord, SlotProblem, Solution, SolveError, SolverOptions, Termination, TransferMode};
use crate::feasibility::{check_problem_feasible, Witness};
use crate::math;

/// Log-barrier function over `z = (pt, x)`.
struct Barrier<'a> {
    problem: &'a SlotProblem,
    /// Problem transfer index of each `x` variable.
    vars: Vec<usize>,
    /// Budget nodes that carry at least one variable term.
    constrained: Vec<bool>,
    margin: f64,
}

impl<'a> Barrier<'a> {
    fn new(problem: &'a SlotProblem, mode: TransferMode, margin: f64) -> Self {
        let vars: Vec<usize> = match mode {
            TransferMode::Off => Vec::new(),
            TransferMode::On => problem
                .transfers()
                .iter()
                .enumerate()
                .filter(|(_, t)| t.efficiency > 0.0)
                .map(|(q, _)| q)
                .collect(),
        };
        let mut constrained = vec![false; problem.nodes().len()];
        for link in problem.links() {
            constrained[link.owner] = true;
        }
        for &q in &vars {
            let t = problem.transfers()[q];
            constrained[t.donor] = true;
            constrained[t.recipient] = true;
        }
        Self { problem, vars, constrained, margin }
    }

    fn n_links(&self) -> usize {
        self.problem.n_links()
    }

    fn dim(&self) -> usize {
        self.n_links() + self.vars.len()
    }

    fn n_constraints(&self) -> usize {
        self.constrained.iter().filter(|&&c| c).count() + self.n_links() + self.vars.len()
    }

    fn node_slack(&self, z: &[f64]) -> Vec<f64> {
        let nl = self.n_links();
        let mut slack: Vec<f64> = self.problem.nodes().iter().map(|n| n.energy).collect();
        for (l, link) in self.problem.links().iter().enumerate() {
            slack[link.owner] -= math::exp(z[l]);
        }
        for (v, &q) in self.vars.iter().enumerate() {
            let t = self.problem.transfers()[q];
            slack[t.donor] -= z[nl + v];
            slack[t.recipient] += t.efficiency * z[nl + v];
        }
        slack
    }

    fn strictly_feasible(&self, z: &[f64]) -> bool {
        let nl = self.n_links();
        z.iter().all(|v| v.is_finite())
            && z[nl..].iter().all(|&x| x > 0.0)
            && self.node_slack(z).iter().zip(&self.constrained).all(|(&s, &c)| !c || s > 0.0)
            && objective_logdomain_margin(self.problem, &z[..nl], self.margin)
    }

    /// `f(pt) + mu * barrier(z)`, `+inf` outside the strict interior.
    fn value(&self, z: &[f64], mu: f64) -> f64 {
        let nl = self.n_links();
        if !self.strictly_feasible(z) {
            return f64::INFINITY;
        }
        let pt = &z[..nl];
        let ch = self.problem.channel();
        let mut log_sum = 0.0;
        for (l, link) in self.problem.links().iter().enumerate() {
            log_sum += math::ln(ch.capacity_approx(pt, l) - link.flow - self.margin);
        }
        for (&s, &c) in self.node_slack(z).iter().zip(&self.constrained) {
            if c {
                log_sum += math::ln(s);
            }
        }
        for &x in &z[nl..] {
            log_sum += math::ln(x);
        }
        objective_logdomain(self.problem, pt) - mu * log_sum
    }

    fn derivatives(&self, z: &[f64], mu: f64) -> (DVector<f64>, DMatrix<f64>) {
        let nl = self.n_links();
        let n = self.dim();
        let pt = &z[..nl];
        let caps = Capacities::new(self.problem.channel(), pt);
        let slopes = delay_slopes(self.problem, &caps.value);

        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        {
            let mut hp = h.view_mut((0, 0), (nl, nl));
            let mut gp = g.rows_mut(0, nl);
            let mut hc = DMatrix::zeros(nl, nl);
            for (l, link) in self.problem.links().iter().enumerate() {
                let gap = caps.value[l] - link.flow;
                let rate_slack = gap - self.margin;
                let first = slopes[l] - mu / rate_slack;
                let second = 2.0 * link.flow / (gap * gap * gap) + mu / (rate_slack * rate_slack);
                let row = caps.jacobian.row(l);
                gp += first * row.transpose();
                hp += second * row.transpose() * row;
                caps.add_hessian(l, first, &mut hc);
            }
            hp += hc;
        }

        let slack = self.node_slack(z);
        let mut grad_s = DVector::zeros(n);
        for (node, &s) in slack.iter().enumerate() {
            if !self.constrained[node] {
                continue;
            }
            grad_s.fill(0.0);
            for (l, link) in self.problem.links().iter().enumerate() {
                if link.owner == node {
                    let p = math::exp(z[l]);
                    grad_s[l] = -p;
                    h[(l, l)] += mu * p / s;
                }
            }
            for (v, &q) in self.vars.iter().enumerate() {
                let t = self.problem.transfers()[q];
                if t.donor == node {
                    grad_s[nl + v] = -1.0;
                } else if t.recipient == node {
                    grad_s[nl + v] = t.efficiency;
                }
            }
            g -= (mu / s) * &grad_s;
            h += (mu / (s * s)) * &grad_s * grad_s.transpose();
        }
        for v in 0..self.vars.len() {
            let x = z[nl + v];
            g[nl + v] -= mu / x;
            h[(nl + v, nl + v)] += mu / (x * x);
        }
        (g, h)
    }
}

fn objective_logdomain_margin(problem: &SlotProblem, pt: &[f64], margin: f64) -> bool {
    let ch = problem.channel();
    problem
        .links()
        .iter()
        .enumerate()
        .all(|(l, link)| ch.capacity_approx(pt, l) - link.flow > margin)
}

/// Newton direction, regularized if the Hessian is not numerically positive
/// definite; steepest descent if even that fails.
fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> DVector<f64> {
    if let Some(chol) = h.clone().cholesky() {
        let d = chol.solve(&(-g));
        if d.dot(g) < 0.0 {
            return d;
        }
    }
    let scale = h.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut ridge = 1e-12 * scale;
    for _ in 0..20 {
        let shifted = h + DMatrix::identity(h.nrows(), h.ncols()) * ridge;
        if let Some(chol) = shifted.cholesky() {
            let d = chol.solve(&(-g));
            if d.dot(g) < 0.0 {
                return d;
            }
        }
        ridge *= 10.0;
    }
    -g.clone()
}

/// Damped Newton centering at fixed `mu`. Returns the step count and the
/// final barrier-gradient infinity norm.
///
/// Once the Newton decrement is below tolerance, full steps continue for as
/// long as each one halves the gradient: near a tight budget the barrier
/// Hessian is large enough that a tiny decrement still hides a visible
/// gradient, and the function values no longer resolve the difference.
fn center(barrier: &Barrier<'_>, z: &mut Vec<f64>, mu: f64, opts: &SolverOptions) -> (usize, f64) {
    let mut steps = 0;
    let mut value = barrier.value(z, mu);
    let (mut g, mut h) = barrier.derivatives(z, mu);
    loop {
        let residual = g.amax();
        if steps >= opts.max_newton_iterations {
            return (steps, residual);
        }
        let dir = newton_direction(&g, &h);
        let slope = dir.dot(&g);
        if -slope / 2.0 <= opts.newton_tolerance {
            let trial: Vec<f64> = z.iter().zip(dir.iter()).map(|(zi, di)| zi + di).collect();
            if !barrier.strictly_feasible(&trial) {
                return (steps, residual);
            }
            let (g_next, h_next) = barrier.derivatives(&trial, mu);
            if !(g_next.amax() <= 0.5 * residual) {
                return (steps, residual);
            }
            steps += 1;
            value = barrier.value(&trial, mu);
            *z = trial;
            g = g_next;
            h = h_next;
            continue;
        }
        steps += 1;

        let mut alpha = 1.0;
        let mut trial = z.clone();
        let accepted = loop {
            for (t, (zi, di)) in trial.iter_mut().zip(z.iter().zip(dir.iter())) {
                *t = zi + alpha * di;
            }
            let v = barrier.value(&trial, mu);
            if v.is_finite() && v <= value + opts.armijo * alpha * slope {
                break Some(v);
            }
            alpha *= opts.backtrack;
            if alpha < 1e-14 {
                break None;
            }
        };
        match accepted {
            Some(v) => {
                *z = trial;
                value = v;
                (g, h) = barrier.derivatives(z, mu);
            }
            // no representable decrease left along the direction
            None => return (steps, residual),
        }
    }
}

/// Solves with the witness start from the feasibility screen.
pub fn solve(problem: &SlotProblem, mode: TransferMode, opts: &SolverOptions) -> Result<Solution, SolveError> {
    let report = check_problem_feasible(problem, mode);
    match &report.witness {
        Some(w) => solve_from(problem, mode, &w.clone(), opts),
        None => Err(SolveError::Infeasible(Box::new(report))),
    }
}

/// Minimum total delay with transfers held at zero.
pub fn solve_no_transfer(problem: &SlotProblem, opts: &SolverOptions) -> Result<Solution, SolveError> {
    solve(problem, TransferMode::Off, opts)
}

/// Joint optimum over powers and transfers.
pub fn solve_with_transfer(problem: &SlotProblem, opts: &SolverOptions) -> Result<Solution, SolveError> {
    solve(problem, TransferMode::On, opts)
}

/// Barrier method from a caller-supplied strictly feasible point.
pub fn solve_from(
    problem: &SlotProblem,
    mode: TransferMode,
    start: &Witness,
    opts: &SolverOptions,
) -> Result<Solution, SolveError> {
    let barrier = Barrier::new(problem, mode, opts.rate_margin);
    let nl = problem.n_links();
    if start.log_power.len() != nl || start.transfer.len() != problem.transfers().len() {
        return Err(SolveError::BadStart("dimension mismatch"));
    }
    let mut z: Vec<f64> = start.log_power.clone();
    z.extend(barrier.vars.iter().map(|&q| start.transfer[q]));
    if !barrier.strictly_feasible(&z) {
        return Err(SolveError::BadStart("outside the strict interior"));
    }

    let m = barrier.n_constraints() as f64;
    let mut mu = opts.initial_mu;
    let mut trace = Vec::new();
    let mut newton_total = 0;
    let termination = loop {
        let (steps, residual) = center(&barrier, &mut z, mu, opts);
        newton_total += steps;
        let objective = objective_logdomain(problem, &z[..nl]);
        trace.push(OuterRecord { mu, objective, newton_steps: steps, max_residual: residual });
        log::debug!("barrier mu={mu:.3e} objective={objective:.12} newton={steps} residual={residual:.3e}");
        if m * mu < opts.gap_tolerance {
            break Termination::Converged;
        }
        if trace.len() >= opts.max_outer_iterations {
            break Termination::OuterLimit;
        }
        mu /= opts.mu_decrease;
    };

    let solution = assemble(problem, mode, &barrier, &z, mu, trace, newton_total, termination, opts);
    match termination {
        Termination::Converged => Ok(solution),
        Termination::OuterLimit => Err(SolveError::NotConverged(Box::new(solution))),
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    problem: &SlotProblem,
    mode: TransferMode,
    barrier: &Barrier<'_>,
    z: &[f64],
    mu: f64,
    trace: Vec<OuterRecord>,
    newton_iterations: usize,
    termination: Termination,
    opts: &SolverOptions,
) -> Solution {
    let nl = problem.n_links();
    let n_transfers = problem.transfers().len();
    let log_power = z[..nl].to_vec();
    let power: Vec<f64> = log_power.iter().map(|&x| math::exp(x)).collect();

    let slack = barrier.node_slack(z);
    let lambda: Vec<f64> = slack
        .iter()
        .zip(&barrier.constrained)
        .map(|(&s, &c)| if c { mu / s } else { 0.0 })
        .collect();

    let mut transfer = vec![0.0; n_transfers];
    let mut gamma = vec![0.0; n_transfers];
    if mode == TransferMode::On {
        for (q, t) in problem.transfers().iter().enumerate() {
            // links left out of the variables (zero efficiency) sit at x = 0
            gamma[q] = lambda[t.donor] - t.efficiency * lambda[t.recipient];
        }
        for (v, &q) in barrier.vars.iter().enumerate() {
            transfer[q] = z[nl + v];
            gamma[q] = mu / z[nl + v];
        }
        trim_transfers(problem, &power, &mut transfer);
    }

    let ch = problem.channel();
    let sinr: Vec<f64> = (0..nl).map(|l| ch.sinr(&power, l)).collect();
    let capacity_approx: Vec<f64> = (0..nl).map(|l| ch.capacity_approx(&log_power, l)).collect();
    let capacity_exact: Vec<f64> = (0..nl).map(|l| ch.capacity_exact(&power, l)).collect();
    let delay: Vec<f64> = problem
        .links()
        .iter()
        .zip(&capacity_approx)
        .map(|(link, &c)| link.flow / (c - link.flow))
        .collect();
    let objective = delay.iter().sum();
    let low_sinr_links: Vec<usize> = sinr
        .iter()
        .enumerate()
        .filter(|(_, &s)| s < opts.high_sinr_threshold)
        .map(|(l, _)| l)
        .collect();
    for &l in &low_sinr_links {
        log::warn!(
            "link {} SINR {:.3} is below the high-SINR threshold {}",
            problem.links()[l].label,
            sinr[l],
            opts.high_sinr_threshold
        );
    }

    Solution {
        mode,
        power,
        log_power,
        transfer,
        sinr,
        capacity_approx,
        capacity_exact,
        delay,
        objective,
        lambda,
        beta: vec![0.0; nl],
        gamma,
        barrier_mu: mu,
        duality_gap: barrier.n_constraints() as f64 * mu,
        outer_iterations: trace.len(),
        newton_iterations,
        termination,
        trace,
        low_sinr_links,
    }
}

/// Pins the optimal transfers to the least energy each recipient needs.
///
/// The delay does not depend on `x` directly, so whenever a recipient's
/// budget is slack the optimal transfers form a range. Incoming transfers are
/// scaled down uniformly until the recipient's budget is exactly tight (or to
/// zero when it needs nothing). Donors only lose outgoing energy, so their
/// budgets stay feasible.
fn trim_transfers(problem: &SlotProblem, power: &[f64], transfer: &mut [f64]) {
    let n_nodes = problem.nodes().len();
    let mut spend = vec![0.0; n_nodes];
    for (link, &p) in problem.links().iter().zip(power) {
        spend[link.owner] += p;
    }
    let mut supply = vec![0.0; n_nodes];
    for (t, &x) in problem.transfers().iter().zip(transfer.iter()) {
        supply[t.recipient] += t.efficiency * x;
    }
    for (q, t) in problem.transfers().iter().enumerate() {
        let node = t.recipient;
        let deficit = (spend[node] - problem.nodes()[node].energy).max(0.0);
        if t.efficiency == 0.0 || deficit == 0.0 {
            transfer[q] = 0.0;
        } else if supply[node] > deficit {
            transfer[q] *= deficit / supply[node];
        }
    }
}
