//! Single-iteration updates for each optimizer, plus mini-batch gradients.
//!
//! Conventions: `g` always denotes the stochastic gradient at the point the
//! method queries (the lookahead iterate `u` for MaSS and Nesterov, the
//! primary iterate `w` for SGD and Heavy-Ball). Updates mutate the state in
//! place and advance its iteration counter.

#![allow(clippy::needless_range_loop)] // parallel-slice iterate updates

use super::{HyperParamsAnalytic, HyperParamsPractical};
use crate::problem::{dot, LinearProblem};
use crate::{Error, Result};

/// Iterate vectors for every method, all initialized to the same `w0`.
///
/// `u` is the lookahead iterate (MaSS, Nesterov), `v` the averaging iterate
/// (analytic MaSS), `w_prev` the one-step history (Heavy-Ball).
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w_prev: Vec<f64>,
    pub iteration: u64,
}

impl OptimizerState {
    pub fn new(w0: &[f64]) -> Self {
        OptimizerState {
            w: w0.to_vec(),
            u: w0.to_vec(),
            v: w0.to_vec(),
            w_prev: w0.to_vec(),
            iteration: 0,
        }
    }

    fn dim(&self) -> usize {
        self.w.len()
    }
}

/// Mini-batch gradient `(1/m) sum_{i in batch} (x_i' w - y_i) x_i`.
/// The batch is an index multiset; duplicates are allowed.
pub fn stochastic_gradient(
    problem: &LinearProblem,
    w: &[f64],
    batch: &[usize],
) -> Result<Vec<f64>> {
    let mut g = vec![0.0; problem.d()];
    stochastic_gradient_into(problem, w, batch, &mut g)?;
    Ok(g)
}

/// [`stochastic_gradient`] into a caller-owned buffer; the run loop calls
/// this once per iteration.
pub(crate) fn stochastic_gradient_into(
    problem: &LinearProblem,
    w: &[f64],
    batch: &[usize],
    g: &mut [f64],
) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    g.fill(0.0);
    for &i in batch {
        if i >= problem.n() {
            return Err(Error::InvalidArgument(format!(
                "batch index {i} out of range for n={}",
                problem.n()
            )));
        }
        let x = problem.row(i);
        let r = dot(x, w) - problem.target(i);
        for (gj, xj) in g.iter_mut().zip(x) {
            *gj += r * xj;
        }
    }
    let inv_m = 1.0 / batch.len() as f64;
    for gj in g {
        *gj *= inv_m;
    }
    Ok(())
}

/// Analytic-form MaSS step:
/// `w+ = u - eta g`, `v+ = (1-alpha) v + alpha u - delta g`,
/// `u+ = (alpha v+ + w+) / (1 + alpha)`.
pub fn step_mass_analytic(state: &mut OptimizerState, grad_at_u: &[f64], p: &HyperParamsAnalytic) {
    debug_assert_eq!(grad_at_u.len(), state.dim());
    let inv = 1.0 / (1.0 + p.alpha);
    for j in 0..state.dim() {
        let w_new = state.u[j] - p.eta * grad_at_u[j];
        let v_new = (1.0 - p.alpha) * state.v[j] + p.alpha * state.u[j] - p.delta * grad_at_u[j];
        state.w_prev[j] = state.w[j];
        state.w[j] = w_new;
        state.v[j] = v_new;
        state.u[j] = (p.alpha * v_new + w_new) * inv;
    }
    state.iteration += 1;
}

/// Practical-form MaSS step:
/// `w+ = u - eta1 g`, `u+ = (1+gamma) w+ - gamma w + eta2 g`.
///
/// The lookahead is evaluated as `w+ + gamma (w+ - w) + eta2 g`, which is
/// the same value but stays bit-exact at fixed points (and matches
/// [`step_nesterov`]'s arithmetic when `eta2 = 0`).
pub fn step_mass_practical(
    state: &mut OptimizerState,
    grad_at_u: &[f64],
    p: &HyperParamsPractical,
) {
    debug_assert_eq!(grad_at_u.len(), state.dim());
    for j in 0..state.dim() {
        let w_new = state.u[j] - p.eta1 * grad_at_u[j];
        state.u[j] = w_new + p.gamma * (w_new - state.w[j]) + p.eta2 * grad_at_u[j];
        state.w_prev[j] = state.w[j];
        state.w[j] = w_new;
    }
    state.iteration += 1;
}

/// Plain SGD step `w+ = w - eta g` with the gradient taken at `w`.
/// The lookahead and averaging iterates track `w` so that state invariants
/// hold for any consumer.
pub fn step_sgd(state: &mut OptimizerState, grad_at_w: &[f64], eta: f64) {
    debug_assert_eq!(grad_at_w.len(), state.dim());
    for j in 0..state.dim() {
        let w_new = state.w[j] - eta * grad_at_w[j];
        state.w_prev[j] = state.w[j];
        state.w[j] = w_new;
        state.u[j] = w_new;
        state.v[j] = w_new;
    }
    state.iteration += 1;
}

/// SGD+Nesterov step: `w+ = u - eta g`, `u+ = (1+gamma) w+ - gamma w`,
/// evaluated as `w+ + gamma (w+ - w)` (same value, bit-exact at fixed
/// points).
pub fn step_nesterov(state: &mut OptimizerState, grad_at_u: &[f64], eta: f64, gamma: f64) {
    debug_assert_eq!(grad_at_u.len(), state.dim());
    for j in 0..state.dim() {
        let w_new = state.u[j] - eta * grad_at_u[j];
        state.u[j] = w_new + gamma * (w_new - state.w[j]);
        state.w_prev[j] = state.w[j];
        state.w[j] = w_new;
    }
    state.iteration += 1;
}

/// Stochastic Heavy-Ball step: `w+ = w - eta g + gamma (w - w_prev)` with
/// the gradient taken at `w`.
pub fn step_heavy_ball(state: &mut OptimizerState, grad_at_w: &[f64], eta: f64, gamma: f64) {
    debug_assert_eq!(grad_at_w.len(), state.dim());
    for j in 0..state.dim() {
        let w_new = state.w[j] - eta * grad_at_w[j] + gamma * (state.w[j] - state.w_prev[j]);
        state.w_prev[j] = state.w[j];
        state.w[j] = w_new;
        state.u[j] = w_new;
        state.v[j] = w_new;
    }
    state.iteration += 1;
}
