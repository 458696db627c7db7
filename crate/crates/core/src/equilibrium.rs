//! Equilibrium prices by damped fixed-point iteration on spending.
//!
//! With homothetic buyers, `p_i ← s_i(p)/w_i` maps prices to the prices at
//! which current spending would exactly buy the supply. The damped form
//! `p ← (p + s(p)/w)/2` converges for complements and for moderate
//! substitutes. When it stalls, a log-space tatonnement with a small step
//! takes over, and the result records which solver produced it.

use serde::{Deserialize, Serialize};

use crate::demand::aggregate_demand_into;
use crate::error::{Error, Result};
use crate::market::MarketSpec;

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const MAX_ITERATIONS: u64 = 1_000_000;
const DAMPING: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    SpendingFixedPoint,
    Tatonnement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub p_star: Vec<f64>,
    /// `max_i |z_i(p*)|·p_i*/M`.
    pub residual: f64,
    pub iterations: u64,
    pub solver: Solver,
}

/// `max_i |x_i - w_i|·p_i / M`.
pub fn residual(spec: &MarketSpec, prices: &[f64], demand: &[f64]) -> f64 {
    let m = spec.total_money();
    spec.goods().iter().zip(prices).zip(demand).map(|((g, p), x)| (x - g.supply_w).abs() * p / m).fold(0.0, f64::max)
}

pub fn solve_equilibrium(spec: &MarketSpec, tol: f64) -> Result<EquilibriumResult> {
    match fixed_point(spec, tol) {
        Ok(r) => Ok(r),
        Err(Error::NonConvergence { .. }) => tatonnement(spec, tol),
        Err(e) => Err(e),
    }
}

fn fixed_point(spec: &MarketSpec, tol: f64) -> Result<EquilibriumResult> {
    let n = spec.n_goods();
    let w = spec.supplies();
    let m = spec.total_money();
    let total_w: f64 = w.iter().sum();
    let mut p = vec![m / total_w; n];
    let mut x = vec![0.0; n];
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut since_best = 0u64;
    for it in 0..MAX_ITERATIONS {
        aggregate_demand_into(spec, &p, &mut x)?;
        let r = residual(spec, &p, &x);
        if it % 1000 == 0 || r <= tol {
            history.push(r);
        }
        if r <= tol {
            return Ok(EquilibriumResult {
                p_star: p,
                residual: r,
                iterations: it,
                solver: Solver::SpendingFixedPoint,
            });
        }
        if r < best * (1.0 - 1e-12) {
            best = r;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if !r.is_finite() || since_best > 1000 {
            return Err(Error::NonConvergence { iterations: it, residual: r, history });
        }
        for i in 0..n {
            p[i] = (1.0 - DAMPING) * p[i] + DAMPING * x[i] * p[i] / w[i];
        }
    }
    Err(Error::NonConvergence { iterations: MAX_ITERATIONS, residual: best, history })
}

/// Log-space tatonnement `ln p_i += η·(x_i - w_i)/w_i` with `η` halved
/// whenever the residual grows.
fn tatonnement(spec: &MarketSpec, tol: f64) -> Result<EquilibriumResult> {
    let n = spec.n_goods();
    let w = spec.supplies();
    let total_w: f64 = w.iter().sum();
    let mut p = vec![spec.total_money() / total_w; n];
    let mut x = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut eta: f64 = 0.5;
    aggregate_demand_into(spec, &p, &mut x)?;
    let mut r = residual(spec, &p, &x);
    let mut history = vec![r];
    for it in 0..MAX_ITERATIONS {
        if r <= tol {
            return Ok(EquilibriumResult { p_star: p, residual: r, iterations: it, solver: Solver::Tatonnement });
        }
        for i in 0..n {
            trial[i] = p[i] * (eta * (x[i] - w[i]) / w[i]).clamp(-1.0, 1.0).exp();
        }
        let mut xt = vec![0.0; n];
        aggregate_demand_into(spec, &trial, &mut xt)?;
        let rt = residual(spec, &trial, &xt);
        if rt < r {
            p.copy_from_slice(&trial);
            x = xt;
            r = rt;
            eta = (eta * 1.1).min(0.5);
        } else {
            eta *= 0.5;
            if eta < 1e-12 {
                break;
            }
        }
        if it % 1000 == 0 {
            history.push(r);
        }
    }
    Err(Error::NonConvergence { iterations: MAX_ITERATIONS, residual: r, history })
}

/// `f(p) = max_i max(p_i/p_i*, p_i*/p_i)`.
pub fn f_bound(prices: &[f64], p_star: &[f64]) -> f64 {
    prices.iter().zip(p_star).map(|(p, q)| (p / q).max(q / p)).fold(1.0, f64::max)
}
