//! Convexified total delay in log-power coordinates and its derivatives.
//!
//! With `pt = ln p`, link `l` gets rate
//! `c_l(pt) = 1/2 (ln G_ll + pt_l - ln I_l)`, `I_l = sigma_l + sum_{k != l} G_kl e^{pt_k}`,
//! which is concave (minus a log-sum-exp). The delay `d / (c - d)` is convex
//! and decreasing in `c`, so the total delay is convex in `pt`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::SlotProblem;
use crate::channel::ChannelState;
use crate::math;

/// Per-link approximate capacities with their first and second derivatives.
pub(crate) struct Capacities {
    /// `c_l`
    pub value: Vec<f64>,
    /// Row `l` is the gradient of `c_l`.
    pub jacobian: DMatrix<f64>,
    /// Row `l` holds the interference shares `w_k = G_kl p_k / I_l` (`w_l = 0`).
    shares: DMatrix<f64>,
}

impl Capacities {
    pub fn new(ch: &ChannelState, log_power: &[f64]) -> Self {
        let n = ch.n_links();
        let power: Vec<f64> = log_power.iter().map(|&x| math::exp(x)).collect();
        let mut value = vec![0.0; n];
        let mut jacobian = DMatrix::zeros(n, n);
        let mut shares = DMatrix::zeros(n, n);
        for l in 0..n {
            let total = ch.interference_plus_noise(&power, l);
            value[l] = 0.5 * (math::ln(ch.gain(l, l)) + log_power[l] - math::ln(total));
            for k in 0..n {
                if k != l {
                    let w = ch.gain(k, l) * power[k] / total;
                    shares[(l, k)] = w;
                    jacobian[(l, k)] = -0.5 * w;
                }
            }
            jacobian[(l, l)] = 0.5;
        }
        Self { value, jacobian, shares }
    }

    /// Adds `coef * Hess(c_l)` into `out`, where `Hess(c_l) = -1/2 (diag(w) - w w^T)`.
    pub fn add_hessian(&self, l: usize, coef: f64, out: &mut DMatrix<f64>) {
        let n = self.value.len();
        for a in 0..n {
            let wa = self.shares[(l, a)];
            if wa == 0.0 {
                continue;
            }
            out[(a, a)] -= 0.5 * coef * wa;
            for b in 0..n {
                out[(a, b)] += 0.5 * coef * wa * self.shares[(l, b)];
            }
        }
    }
}

/// Total delay `sum_l d_l / (c_l(pt) - d_l)`; `+inf` outside the rate domain.
pub fn objective_logdomain(problem: &SlotProblem, log_power: &[f64]) -> f64 {
    let ch = problem.channel();
    let mut total = 0.0;
    for (l, link) in problem.links().iter().enumerate() {
        let margin = ch.capacity_approx(log_power, l) - link.flow;
        if !(margin > 0.0) {
            return f64::INFINITY;
        }
        total += link.flow / margin;
    }
    total
}

/// Gradient of [`objective_logdomain`]. Each entry carries the link's own
/// term and the interference it adds to every other link's delay.
pub fn gradient_logdomain(problem: &SlotProblem, log_power: &[f64]) -> Vec<f64> {
    let caps = Capacities::new(problem.channel(), log_power);
    let weights = delay_slopes(problem, &caps.value);
    let g = caps.jacobian.transpose() * DVector::from_vec(weights);
    g.iter().copied().collect()
}

/// `d t_l / d c_l = -d_l / (c_l - d_l)^2` per link.
pub(crate) fn delay_slopes(problem: &SlotProblem, capacity: &[f64]) -> Vec<f64> {
    problem
        .links()
        .iter()
        .zip(capacity)
        .map(|(link, &c)| {
            let gap = c - link.flow;
            -link.flow / (gap * gap)
        })
        .collect()
}

/// Hessian of [`objective_logdomain`].
pub fn hessian_logdomain(problem: &SlotProblem, log_power: &[f64]) -> DMatrix<f64> {
    let caps = Capacities::new(problem.channel(), log_power);
    let n = problem.n_links();
    let mut h = DMatrix::zeros(n, n);
    for (l, link) in problem.links().iter().enumerate() {
        let gap = caps.value[l] - link.flow;
        let curvature = 2.0 * link.flow / (gap * gap * gap);
        let row = caps.jacobian.row(l);
        h += curvature * row.transpose() * row;
        caps.add_hessian(l, -link.flow / (gap * gap), &mut h);
    }
    h
}

/// Original (non-convexified) total delay in raw powers with Shannon rates.
pub fn objective_exact(problem: &SlotProblem, power: &[f64]) -> f64 {
    let ch = problem.channel();
    let mut total = 0.0;
    for (l, link) in problem.links().iter().enumerate() {
        let margin = ch.capacity_exact(power, l) - link.flow;
        if !(margin > 0.0) {
            return f64::INFINITY;
        }
        total += link.flow / margin;
    }
    total
}
