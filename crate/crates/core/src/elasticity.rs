//! Market constants: income elasticity γ, price elasticity bounds α and E,
//! the adverse market elasticity β, and the spending-transfer constant α′.
//!
//! Each constant has a finite-difference estimator that works with any demand
//! oracle and a closed form for nested-CES buyers. For a leaf whose ancestors
//! have elasticities of substitution `σ_1` (parent) through `σ_N` (root), the
//! own-price elasticity is a convex combination of `σ_1, …, σ_N` and 1, which
//! gives `α_i = min{1, min σ_q}` and `E_i = max{1, max σ_q}`. The adverse
//! market elasticity is bounded below by
//! `β_i = σ_1 - |σ_N - 1| - Σ_q |σ_q - σ_{q+1}|`, with equality in the limit
//! where every node's share of its parent's spending vanishes.
//!
//! Nodes with a single child do not affect demand, so they are skipped when
//! building these paths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demand::{aggregate_demand, aggregate_demand_into, nested_demand};
use crate::error::{Error, Result};
use crate::market::{Buyer, MarketSpec, UtilityTree};

/// Relative step for central finite differences.
pub const FD_STEP: f64 = 1e-5;
/// Demands below this are too small for a meaningful elasticity.
pub const MIN_DEMAND: f64 = 1e-12;

/// Whether every pair of goods is a complement pair or some are substitutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarketClass {
    Complements,
    Mixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConstants {
    pub gamma: f64,
    pub alpha: f64,
    #[serde(rename = "E")]
    pub e_upper: f64,
    pub beta: f64,
    /// Bound on complement-spending change per unit of own-price change.
    pub alpha_prime: f64,
    pub alpha_double_prime: f64,
    /// `α′` without the `(1-λ)^(-E)` factor.
    pub alpha_prime_coefficient: f64,
    /// The all-neighbour transfer bound `(1-λ)^(-E)(|σ_N-1| + Σ|σ_q-σ_{q+1}|)`,
    /// which also counts substitute spending.
    pub alpha_prime_total: f64,
    pub alpha_prime_total_coefficient: f64,
    /// The λ at which α′ was evaluated.
    pub lambda: f64,
    pub class: MarketClass,
}

impl MarketConstants {
    /// Builds constants from the four elasticities and an α′ coefficient,
    /// evaluating α′ at `lambda`. The all-neighbour coefficient defaults to
    /// the α′ coefficient.
    pub fn new(gamma: f64, alpha: f64, e_upper: f64, beta: f64, alpha_prime_coefficient: f64, lambda: f64) -> Self {
        let class = if e_upper > 1.0 { MarketClass::Mixture } else { MarketClass::Complements };
        let mut c = MarketConstants {
            gamma,
            alpha,
            e_upper,
            beta,
            alpha_prime: 0.0,
            alpha_double_prime: 0.0,
            alpha_prime_coefficient,
            alpha_prime_total: 0.0,
            alpha_prime_total_coefficient: alpha_prime_coefficient,
            lambda: 0.0,
            class,
        };
        c.set_lambda(lambda);
        c
    }

    /// Pure-complements constants with `β = 2α - γ`.
    pub fn complements(alpha: f64, gamma: f64) -> Self {
        MarketConstants::new(gamma, alpha, 1.0, 2.0 * alpha - gamma, 1.0 - alpha, 0.0)
    }

    /// Re-evaluates the λ-dependent constants α′ and α″.
    pub fn set_lambda(&mut self, lambda: f64) {
        let factor = (1.0 - lambda).powf(-self.e_upper);
        self.lambda = lambda;
        self.alpha_prime_total = self.alpha_prime_total_coefficient * factor;
        self.alpha_prime = self.alpha_prime_coefficient * factor;
        self.alpha_double_prime = self.alpha_prime + 2.0 * (self.e_upper - 1.0);
    }

    /// The exponent of the Phase-1 demand bound `d(f)`: γ for complements,
    /// `2E - β` for mixtures.
    pub fn demand_exponent(&self) -> f64 {
        match self.class {
            MarketClass::Complements => self.gamma,
            MarketClass::Mixture => 2.0 * self.e_upper - self.beta,
        }
    }
}

// === FINITE-DIFFERENCE ESTIMATORS ===

fn buyer_demand_at(buyer: &Buyer, budget: f64, prices: &[f64], good: usize) -> Result<f64> {
    let b = Buyer::new(buyer.id, budget, buyer.utility.clone());
    Ok(nested_demand(&b, prices)?.quantities[good])
}

fn degenerate(x: f64, good: usize) -> Result<()> {
    if x < MIN_DEMAND {
        return Err(Error::Degenerate(format!("demand {x:e} for good {good} is below {MIN_DEMAND:e}")));
    }
    Ok(())
}

/// `(dx_i/db)/(x_i/b)` by central difference in the budget.
pub fn income_elasticity(buyer: &Buyer, prices: &[f64], good: usize) -> Result<f64> {
    let b = buyer.budget;
    let x = buyer_demand_at(buyer, b, prices, good)?;
    degenerate(x, good)?;
    let h = b * FD_STEP;
    let up = buyer_demand_at(buyer, b + h, prices, good)?;
    let down = buyer_demand_at(buyer, b - h, prices, good)?;
    Ok((up - down) / (2.0 * h) / (x / b))
}

fn aggregate_at(spec: &MarketSpec, prices: &[f64], scratch: &mut [f64], good: usize) -> Result<f64> {
    aggregate_demand_into(spec, prices, scratch)?;
    Ok(scratch[good])
}

/// `-(dx_i/dp_i)/(x_i/p_i)` for aggregate demand, by central difference.
pub fn own_price_elasticity(spec: &MarketSpec, prices: &[f64], good: usize) -> Result<f64> {
    let mut scratch = vec![0.0; prices.len()];
    let x = aggregate_at(spec, prices, &mut scratch, good)?;
    degenerate(x, good)?;
    let h = prices[good] * FD_STEP;
    let mut q = prices.to_vec();
    q[good] = prices[good] + h;
    let up = aggregate_at(spec, &q, &mut scratch, good)?;
    q[good] = prices[good] - h;
    let down = aggregate_at(spec, &q, &mut scratch, good)?;
    Ok(-(up - down) / (2.0 * h) / (x / prices[good]))
}

/// How the adversarial corner of the price rectangle is found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CornerSearch {
    /// Probe each other good's direction separately; exact when cross effects
    /// are monotone.
    SignProbe,
    /// Try all `2^(n-1)` corners.
    Exhaustive,
}

fn ame_at(spec: &MarketSpec, prices: &[f64], good: usize, delta: f64, search: CornerSearch) -> Result<f64> {
    let n = prices.len();
    let mut scratch = vec![0.0; n];
    let x = aggregate_at(spec, prices, &mut scratch, good)?;
    degenerate(x, good)?;
    let up = 1.0 + delta;
    let mut q = prices.to_vec();
    q[good] *= up;
    let others: Vec<usize> = (0..n).filter(|&j| j != good).collect();
    let worst = match search {
        CornerSearch::SignProbe => {
            for &j in &others {
                q[j] = prices[j] * up;
                let hi = aggregate_at(spec, &q, &mut scratch, good)?;
                q[j] = prices[j] / up;
                let lo = aggregate_at(spec, &q, &mut scratch, good)?;
                // Keep the endpoint that raises x_i the most.
                q[j] = if hi > lo { prices[j] * up } else { prices[j] / up };
            }
            aggregate_at(spec, &q, &mut scratch, good)?
        }
        CornerSearch::Exhaustive => {
            let mut best = f64::NEG_INFINITY;
            for mask in 0u64..(1u64 << others.len()) {
                for (bit, &j) in others.iter().enumerate() {
                    q[j] = if mask >> bit & 1 == 1 { prices[j] * up } else { prices[j] / up };
                }
                best = best.max(aggregate_at(spec, &q, &mut scratch, good)?);
            }
            best
        }
    };
    Ok(-(worst - x) / (delta * x))
}

/// Adverse market elasticity of `good` at `prices`, Richardson-extrapolated
/// from probes at `δ` and `δ/2`.
pub fn adverse_market_elasticity(spec: &MarketSpec, prices: &[f64], good: usize, probe_delta: f64) -> Result<f64> {
    adverse_market_elasticity_with(spec, prices, good, probe_delta, CornerSearch::SignProbe)
}

pub fn adverse_market_elasticity_with(
    spec: &MarketSpec,
    prices: &[f64],
    good: usize,
    probe_delta: f64,
    search: CornerSearch,
) -> Result<f64> {
    if !(probe_delta > 0.0 && probe_delta <= 0.01) {
        return Err(Error::Precondition(format!("probe_delta {probe_delta} must lie in (0, 0.01]")));
    }
    let coarse = ame_at(spec, prices, good, probe_delta, search)?;
    let fine = ame_at(spec, prices, good, probe_delta / 2.0, search)?;
    Ok(2.0 * fine - coarse)
}

/// Spending moved onto other goods when `p_i` changes by the relative
/// `price_step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpendingTransfer {
    /// Net spending change on goods whose spending moves against `p_i`.
    pub delta_s_complements: f64,
    /// Net spending change on goods whose spending moves with `p_i`.
    pub delta_s_substitutes: f64,
    /// `|ΔS_c| / (x_i |Δp_i|)`.
    pub alpha_prime_estimate: f64,
    /// `|ΔS_s| / (x_i |Δp_i|)`.
    pub substitute_ratio: f64,
}

pub fn spending_transfer_constant(
    spec: &MarketSpec,
    prices: &[f64],
    good: usize,
    price_step: f64,
) -> Result<SpendingTransfer> {
    let before = aggregate_demand(spec, prices)?;
    let mut q = prices.to_vec();
    q[good] *= 1.0 + price_step;
    let after = aggregate_demand(spec, &q)?;
    let dp = q[good] - prices[good];
    let (mut sc, mut ss) = (0.0, 0.0);
    for j in (0..prices.len()).filter(|&j| j != good) {
        let ds = prices[j] * (after.quantities[j] - before.quantities[j]);
        if ds * dp < 0.0 {
            sc += ds;
        } else {
            ss += ds;
        }
    }
    let scale = before.quantities[good] * dp.abs();
    Ok(SpendingTransfer {
        delta_s_complements: sc,
        delta_s_substitutes: ss,
        alpha_prime_estimate: if scale > 0.0 { sc.abs() / scale } else { 0.0 },
        substitute_ratio: if scale > 0.0 { ss.abs() / scale } else { 0.0 },
    })
}

// === CLOSED FORMS ===

/// Elasticities of substitution on the path from a leaf to the root, with
/// single-child nodes removed. Index 0 is the leaf's parent.
pub fn sigma_paths(tree: &UtilityTree) -> Vec<(usize, Vec<f64>)> {
    let mut out = Vec::new();
    collect_sigmas(tree, &mut Vec::new(), &mut out);
    out
}

fn collect_sigmas(tree: &UtilityTree, stack: &mut Vec<f64>, out: &mut Vec<(usize, Vec<f64>)>) {
    match tree {
        UtilityTree::Leaf { good, .. } => out.push((*good, stack.iter().rev().copied().collect())),
        UtilityTree::Aggregate { rho, children, .. } => {
            let effective = children.len() > 1;
            if effective {
                stack.push(1.0 / (1.0 - rho));
            }
            for c in children {
                collect_sigmas(c, stack, out);
            }
            if effective {
                stack.pop();
            }
        }
    }
}

/// Per-leaf closed-form constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathConstants {
    pub alpha: f64,
    pub e_upper: f64,
    pub beta: f64,
    /// Complement-only transfer coefficient.
    pub transfer: f64,
    /// All-neighbour transfer coefficient.
    pub transfer_total: f64,
}

pub fn path_constants(sigmas: &[f64]) -> PathConstants {
    if sigmas.is_empty() {
        // A buyer with one good spends everything on it: x = b/p.
        return PathConstants { alpha: 1.0, e_upper: 1.0, beta: 1.0, transfer: 0.0, transfer_total: 0.0 };
    }
    let n = sigmas.len();
    let top = sigmas[n - 1];
    let steps: f64 = sigmas.windows(2).map(|w| (w[0] - w[1]).abs()).sum();
    let rising: f64 = sigmas.windows(2).map(|w| (w[1] - w[0]).max(0.0)).sum();
    PathConstants {
        alpha: sigmas.iter().copied().fold(1.0, f64::min),
        e_upper: sigmas.iter().copied().fold(1.0, f64::max),
        beta: sigmas[0] - (top - 1.0).abs() - steps,
        transfer: (1.0 - top).max(0.0) + rising,
        transfer_total: (top - 1.0).abs() + steps,
    }
}

/// Closed-form constants for a market of nested-CES buyers, with α′ evaluated
/// at `lambda`.
pub fn closed_form_constants(spec: &MarketSpec, lambda: f64) -> Result<MarketConstants> {
    let mut alpha = f64::INFINITY;
    let mut e_upper: f64 = 1.0;
    let mut beta = f64::INFINITY;
    let mut transfer: f64 = 0.0;
    let mut transfer_total: f64 = 0.0;
    for buyer in spec.buyers() {
        for (_, sigmas) in sigma_paths(&buyer.utility) {
            if let Some(bad) = sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
                return Err(Error::UnsupportedUtility(format!(
                    "buyer {} has elasticity of substitution {bad}",
                    buyer.id
                )));
            }
            let c = path_constants(&sigmas);
            alpha = alpha.min(c.alpha);
            e_upper = e_upper.max(c.e_upper);
            beta = beta.min(c.beta);
            transfer = transfer.max(c.transfer);
            transfer_total = transfer_total.max(c.transfer_total);
        }
    }
    if !alpha.is_finite() {
        return Err(Error::UnsupportedUtility("market has no demanded goods".into()));
    }
    let mut constants = MarketConstants::new(1.0, alpha, e_upper, beta, transfer, lambda);
    constants.alpha_prime_total_coefficient = transfer_total;
    constants.set_lambda(lambda);
    Ok(constants)
}

// === SAMPLED ESTIMATES ===

#[derive(Debug, Clone, Copy)]
pub struct SamplingOptions {
    /// Prices are drawn from `[p/spread, spread·p]` around the reference.
    pub spread: f64,
    /// Log-uniform interior samples in addition to all box corners.
    pub samples: usize,
    pub seed: u64,
    pub probe_delta: f64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        SamplingOptions { spread: 1e4, samples: 200, seed: 0, probe_delta: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatedConstants {
    pub gamma: f64,
    pub alpha: f64,
    #[serde(rename = "E")]
    pub e_upper: f64,
    pub beta: f64,
    pub points: usize,
}

/// Price vectors used for sampled estimates: every corner of the box
/// `[p/spread, spread·p]` followed by seeded log-uniform interior points.
pub fn sample_prices(reference: &[f64], options: &SamplingOptions) -> Vec<Vec<f64>> {
    let n = reference.len();
    let ln_s = options.spread.ln();
    let mut out = Vec::new();
    if n <= 12 {
        for mask in 0u32..(1u32 << n) {
            out.push(
                (0..n)
                    .map(|i| reference[i] * if mask >> i & 1 == 1 { options.spread } else { 1.0 / options.spread })
                    .collect(),
            );
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    for _ in 0..options.samples {
        out.push(reference.iter().map(|p| p * (rng.random_range(-ln_s..=ln_s)).exp()).collect());
    }
    out
}

/// Sup/inf of the finite-difference elasticities over sampled price vectors.
pub fn estimate_constants(
    spec: &MarketSpec,
    reference: &[f64],
    options: &SamplingOptions,
) -> Result<EstimatedConstants> {
    let points = sample_prices(reference, options);
    let mut est = EstimatedConstants {
        gamma: f64::NEG_INFINITY,
        alpha: f64::INFINITY,
        e_upper: f64::NEG_INFINITY,
        beta: f64::INFINITY,
        points: points.len(),
    };
    let mut scratch = vec![0.0; reference.len()];
    for p in &points {
        aggregate_demand_into(spec, p, &mut scratch)?;
        for good in 0..p.len() {
            if scratch[good] < MIN_DEMAND {
                continue;
            }
            let e = own_price_elasticity(spec, p, good)?;
            est.alpha = est.alpha.min(e);
            est.e_upper = est.e_upper.max(e);
            est.beta = est.beta.min(adverse_market_elasticity(spec, p, good, options.probe_delta)?);
            for buyer in spec.buyers() {
                if buyer_demand_at(buyer, buyer.budget, p, good)? >= MIN_DEMAND {
                    est.gamma = est.gamma.max(income_elasticity(buyer, p, good)?);
                }
            }
        }
    }
    Ok(est)
}

// === KELLER FORMULAS ===

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KellerReport {
    /// Largest relative error of the own-price formula.
    pub own_price_error: f64,
    /// Largest relative error of the same-group cross-price formula.
    pub same_group_error: f64,
    /// Largest relative error of the other-group spending formula.
    pub other_group_error: f64,
    /// Smallest same-group `∂x_i/∂p_j`; non-negative for substitutes.
    pub min_same_group_derivative: f64,
    /// Largest other-group `∂x_k/∂p_i`; negative for complements.
    pub max_other_group_derivative: f64,
    pub derivatives_checked: usize,
}

impl KellerReport {
    pub fn max_error(&self) -> f64 {
        self.own_price_error.max(self.same_group_error).max(self.other_group_error)
    }
}

/// Compares the three 2-level partial-derivative formulas with central finite
/// differences of the demand oracle.
pub fn keller_derivative_check(buyer: &Buyer, prices: &[f64]) -> Result<KellerReport> {
    let UtilityTree::Aggregate { rho, children, .. } = &buyer.utility else {
        return Err(Error::UnsupportedUtility("expected a 2-level tree".into()));
    };
    let sigma = 1.0 / (1.0 - rho);
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for child in children {
        match child {
            UtilityTree::Leaf { good, .. } => groups.push((sigma, vec![*good])),
            UtilityTree::Aggregate { rho: rg, children: leaves, .. } => {
                let goods = leaves
                    .iter()
                    .map(|l| match l {
                        UtilityTree::Leaf { good, .. } => Ok(*good),
                        _ => Err(Error::UnsupportedUtility("tree deeper than two levels".into())),
                    })
                    .collect::<Result<Vec<_>>>()?;
                groups.push((1.0 / (1.0 - rg), goods));
            }
        }
    }
    let b = buyer.budget;
    let x = nested_demand(buyer, prices)?.quantities;
    let s: Vec<f64> = x.iter().zip(prices).map(|(xi, p)| xi * p).collect();
    let fd = |i: usize, j: usize| -> Result<f64> {
        let h = prices[j] * FD_STEP;
        let mut q = prices.to_vec();
        q[j] = prices[j] + h;
        let up = nested_demand(buyer, &q)?.quantities[i];
        q[j] = prices[j] - h;
        let down = nested_demand(buyer, &q)?.quantities[i];
        Ok((up - down) / (2.0 * h))
    };
    let rel = |formula: f64, numeric: f64| (formula - numeric).abs() / formula.abs().max(1e-300);

    let mut report = KellerReport {
        min_same_group_derivative: f64::INFINITY,
        max_other_group_derivative: f64::NEG_INFINITY,
        ..Default::default()
    };
    for (gi, (sigma_g, goods)) in groups.iter().enumerate() {
        let s_g: f64 = goods.iter().map(|&g| s[g]).sum();
        for &i in goods {
            let own = -sigma_g * (1.0 - s[i] / s_g) - sigma * (s[i] / s_g - s[i] / b) - s[i] / b;
            let formula = own * x[i] / prices[i];
            report.own_price_error = report.own_price_error.max(rel(formula, fd(i, i)?));
            report.derivatives_checked += 1;
            for &j in goods.iter().filter(|&&j| j != i) {
                let cross = s[j] / b * (sigma_g * b / s_g - sigma * (b / s_g - 1.0) - 1.0);
                let formula = cross * x[i] / prices[j];
                let numeric = fd(i, j)?;
                report.same_group_error = report.same_group_error.max(rel(formula, numeric));
                report.min_same_group_derivative = report.min_same_group_derivative.min(numeric);
                report.derivatives_checked += 1;
            }
            for (gk, (_, others)) in groups.iter().enumerate() {
                if gk == gi {
                    continue;
                }
                for &k in others {
                    let formula = s[k] / b * (rho / (1.0 - rho)) * x[i];
                    let numeric = fd(k, i)? * prices[k];
                    report.other_group_error = report.other_group_error.max(rel(formula, numeric));
                    report.max_other_group_derivative = report.max_other_group_derivative.max(numeric / prices[k]);
                    report.derivatives_checked += 1;
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::Good;

    fn market(tree: UtilityTree, n: usize) -> MarketSpec {
        MarketSpec::new((0..n).map(|i| Good::new(i, 1.0, 1024.0)).collect(), vec![Buyer::new(0, 10.0, tree)])
    }

    fn two_level(rho_g: f64, rho: f64) -> UtilityTree {
        UtilityTree::aggregate(
            rho,
            vec![
                UtilityTree::aggregate(rho_g, vec![UtilityTree::leaf(0, 1.0), UtilityTree::leaf(1, 1.0)]),
                UtilityTree::aggregate(rho_g, vec![UtilityTree::leaf(2, 1.0), UtilityTree::leaf(3, 1.0)]),
            ],
        )
    }

    #[test]
    fn single_level_closed_form() {
        let c = closed_form_constants(&market(UtilityTree::ces(-0.5, &[1.0, 1.0]), 2), 0.0).unwrap();
        assert!((c.beta - 1.0 / 3.0).abs() < 1e-15);
        assert!((c.alpha - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.e_upper, 1.0);
        assert_eq!(c.class, MarketClass::Complements);
        assert!((c.beta - (2.0 * c.alpha - c.gamma)).abs() < 1e-15);
    }

    #[test]
    fn two_level_closed_form() {
        let c = closed_form_constants(&market(two_level(0.5, -0.5), 4), 0.0).unwrap();
        assert!((c.beta - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.e_upper, 2.0);
        assert!((c.alpha_prime - 1.0 / 3.0).abs() < 1e-12);
        assert!((c.alpha_prime_total - 5.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.class, MarketClass::Mixture);
    }

    #[test]
    fn three_level_path_formula() {
        let c = path_constants(&[2.0, 1.0, 2.0 / 3.0]);
        assert!((c.beta - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.e_upper, 2.0);
        assert!((c.alpha - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_double_prime_is_exact() {
        let mut c = closed_form_constants(&market(two_level(0.5, -0.5), 4), 0.1).unwrap();
        assert_eq!(c.alpha_double_prime, c.alpha_prime + 2.0 * (c.e_upper - 1.0));
        let expected = (1.0 / 3.0) * 0.9f64.powf(-2.0);
        assert!((c.alpha_prime - expected).abs() < 1e-12);
        c.set_lambda(0.0);
        assert!((c.alpha_prime_total - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_child_nodes_are_transparent() {
        let tree = UtilityTree::aggregate(
            -0.5,
            vec![UtilityTree::aggregate(0.9, vec![UtilityTree::leaf(0, 1.0)]), UtilityTree::leaf(1, 1.0)],
        );
        assert_eq!(sigma_paths(&tree)[0].1, vec![2.0 / 3.0]);
    }

    #[test]
    fn income_elasticity_of_ces_is_one() {
        let buyer = Buyer::new(0, 7.0, two_level(0.4, -0.3));
        for g in 0..4 {
            let e = income_elasticity(&buyer, &[1.0, 2.0, 0.5, 3.0], g).unwrap();
            assert!((e - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn ame_single_good_is_one() {
        let spec = market(UtilityTree::ces(-0.5, &[1.0]), 1);
        let b = adverse_market_elasticity(&spec, &[2.0], 0, 1e-3).unwrap();
        assert!((b - 1.0).abs() < 1e-6);
    }

    #[test]
    fn probe_delta_range_is_enforced() {
        let spec = market(UtilityTree::ces(-0.5, &[1.0]), 1);
        assert!(adverse_market_elasticity(&spec, &[2.0], 0, 0.05).is_err());
    }

    #[test]
    fn corner_searches_agree_on_two_level() {
        let spec = market(two_level(0.5, -0.5), 4);
        let p = [1.0, 3.0, 0.2, 5.0];
        for g in 0..4 {
            let a = adverse_market_elasticity_with(&spec, &p, g, 1e-3, CornerSearch::SignProbe).unwrap();
            let b = adverse_market_elasticity_with(&spec, &p, g, 1e-3, CornerSearch::Exhaustive).unwrap();
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn keller_symmetric_instance() {
        let buyer = Buyer::new(0, 4.0, two_level(0.5, -0.5));
        let r = keller_derivative_check(&buyer, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(r.max_error() < 1e-4, "{r:?}");
        assert!(r.min_same_group_derivative >= 0.0);
        assert!(r.max_other_group_derivative < 0.0);
    }

    #[test]
    fn single_good_transfer_is_zero() {
        let spec = market(UtilityTree::ces(-0.5, &[1.0]), 1);
        let t = spending_transfer_constant(&spec, &[1.0], 0, 0.01).unwrap();
        assert_eq!(t.delta_s_complements, 0.0);
        assert_eq!(t.delta_s_substitutes, 0.0);
    }
}
