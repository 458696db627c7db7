//! Demand oracles for CES and nested-CES buyers.
//!
//! Nested demand is a two-pass evaluation. Bottom-up, each aggregate node
//! with elasticity of substitution `σ = 1/(1-ρ)` gets the price index
//! `P = (Σ_k a_k^σ P_k^(1-σ))^(1/(1-σ))`; top-down, a node's spending splits
//! among its children in proportion to `a_k^σ P_k^(1-σ)`. Cobb-Douglas nodes
//! (`ρ = 0`) split spending by normalized weights `θ_k = a_k/Σa` and have unit
//! cost `Π (P_k/θ_k)^θ_k`. Everything runs on logarithms, so extreme price
//! ratios cannot overflow.

use crate::error::{Error, Result};
use crate::market::{Buyer, MarketSpec, UtilityTree};

/// Largest number of goods the brute-force maximizer accepts.
pub const BRUTE_FORCE_MAX_GOODS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct DemandVector {
    pub quantities: Vec<f64>,
    /// `per_buyer[ℓ][i]` is buyer ℓ's demand for good i.
    pub per_buyer: Vec<Vec<f64>>,
}

impl DemandVector {
    /// Excess demand `x_i - w_i`.
    pub fn excess(&self, supplies: &[f64]) -> Vec<f64> {
        self.quantities.iter().zip(supplies).map(|(x, w)| x - w).collect()
    }

    pub fn spending(&self, prices: &[f64]) -> Vec<f64> {
        self.quantities.iter().zip(prices).map(|(x, p)| x * p).collect()
    }
}

pub(crate) fn check_prices(prices: &[f64]) -> Result<()> {
    for (good, &p) in prices.iter().enumerate() {
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::Domain { good, message: format!("price {p} is not positive and finite") });
        }
    }
    Ok(())
}

/// Numerically stable log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
struct Lse {
    max: f64,
    sum: f64,
}

impl Lse {
    const EMPTY: Lse = Lse { max: f64::NEG_INFINITY, sum: 0.0 };

    fn push(&mut self, t: f64) {
        if t == f64::INFINITY {
            self.max = f64::INFINITY;
            self.sum = 1.0;
        } else if self.max == f64::INFINITY || t == f64::NEG_INFINITY {
        } else if t > self.max {
            self.sum = self.sum * (self.max - t).exp() + 1.0;
            self.max = t;
        } else {
            self.sum += (t - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        if self.max.is_infinite() {
            self.max
        } else {
            self.max + self.sum.ln()
        }
    }
}

// === COMPILED TREES ===

#[derive(Debug, Clone, Copy, PartialEq)]
enum NodeKind {
    Leaf { good: usize },
    Ces { sigma: f64, rho: f64 },
    CobbDouglas,
}

#[derive(Debug, Clone, PartialEq)]
struct FlatNode {
    kind: NodeKind,
    parent: Option<usize>,
    ln_a: f64,
    /// ln(a / Σ sibling a); used when the parent is Cobb-Douglas.
    ln_theta: f64,
}

/// A utility tree flattened in pre-order, so parents precede children.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatTree {
    nodes: Vec<FlatNode>,
}

impl FlatTree {
    pub fn compile(tree: &UtilityTree) -> Self {
        let mut nodes = Vec::new();
        Self::push(tree, None, 0.0, &mut nodes);
        FlatTree { nodes }
    }

    fn push(tree: &UtilityTree, parent: Option<usize>, ln_theta: f64, nodes: &mut Vec<FlatNode>) {
        let idx = nodes.len();
        match tree {
            UtilityTree::Leaf { good, a } => {
                nodes.push(FlatNode { kind: NodeKind::Leaf { good: *good }, parent, ln_a: a.ln(), ln_theta })
            }
            UtilityTree::Aggregate { rho, a, children } => {
                let kind = if *rho == 0.0 {
                    NodeKind::CobbDouglas
                } else {
                    NodeKind::Ces { sigma: 1.0 / (1.0 - rho), rho: *rho }
                };
                nodes.push(FlatNode { kind, parent, ln_a: a.ln(), ln_theta });
                let total: f64 = children.iter().map(UtilityTree::weight).sum();
                for c in children {
                    Self::push(c, Some(idx), (c.weight() / total).ln(), nodes);
                }
            }
        }
    }

    /// Adds this buyer's demand at `ln_p` into `out` (indexed by good).
    fn demand_into(&self, budget: f64, ln_p: &[f64], ln_index: &mut Vec<f64>, out: &mut [f64]) -> Result<()> {
        let m = self.nodes.len();
        ln_index.clear();
        ln_index.resize(m, 0.0);
        let mut acc = vec![Lse::EMPTY; m];
        let mut cd_acc = vec![0.0; m];
        // Bottom-up: children sit after their parent, so walk backwards.
        for k in (0..m).rev() {
            let node = &self.nodes[k];
            let lp = match node.kind {
                NodeKind::Leaf { good } => ln_p[good],
                NodeKind::Ces { sigma, .. } => acc[k].value() / (1.0 - sigma),
                NodeKind::CobbDouglas => cd_acc[k],
            };
            if !lp.is_finite() {
                return Err(Error::Domain { good: self.first_good_below(k), message: "non-finite price index".into() });
            }
            ln_index[k] = lp;
            if let Some(parent) = node.parent {
                match self.nodes[parent].kind {
                    NodeKind::Ces { sigma, .. } => acc[parent].push(sigma * node.ln_a + (1.0 - sigma) * lp),
                    NodeKind::CobbDouglas => cd_acc[parent] += node.ln_theta.exp() * (lp - node.ln_theta),
                    NodeKind::Leaf { .. } => unreachable!("leaves have no children"),
                }
            }
        }
        // Top-down: reuse `ln_index` to hold log spending once a node is done.
        let ln_b = budget.ln();
        let mut ln_spend = vec![0.0; m];
        for k in 0..m {
            let node = &self.nodes[k];
            ln_spend[k] = match node.parent {
                None => ln_b,
                Some(parent) => {
                    ln_spend[parent]
                        + match self.nodes[parent].kind {
                            NodeKind::Ces { sigma, .. } => {
                                sigma * node.ln_a + (1.0 - sigma) * ln_index[k] - acc[parent].value()
                            }
                            NodeKind::CobbDouglas => node.ln_theta,
                            NodeKind::Leaf { .. } => unreachable!(),
                        }
                }
            };
            if let NodeKind::Leaf { good } = node.kind {
                out[good] += (ln_spend[k] - ln_p[good]).exp();
            }
        }
        Ok(())
    }

    fn first_good_below(&self, k: usize) -> usize {
        (k..self.nodes.len())
            .find_map(|j| match self.nodes[j].kind {
                NodeKind::Leaf { good } => Some(good),
                _ => None,
            })
            .unwrap_or(0)
    }

    /// ln u evaluated at quantities `y`. Cobb-Douglas nodes use
    /// `Π u_k^θ_k`, the utility consistent with their unit-cost function.
    pub fn ln_utility(&self, y: &[f64]) -> f64 {
        let m = self.nodes.len();
        let mut acc = vec![Lse::EMPTY; m];
        let mut cd_acc = vec![0.0; m];
        let mut root = f64::NAN;
        for k in (0..m).rev() {
            let node = &self.nodes[k];
            let lu = match node.kind {
                NodeKind::Leaf { good } => y[good].ln(),
                NodeKind::Ces { rho, .. } => acc[k].value() / rho,
                NodeKind::CobbDouglas => cd_acc[k],
            };
            match node.parent {
                None => root = lu,
                Some(parent) => match self.nodes[parent].kind {
                    NodeKind::Ces { rho, .. } => {
                        let t = node.ln_a + rho * lu;
                        acc[parent].push(if t.is_nan() { f64::NEG_INFINITY } else { t });
                    }
                    NodeKind::CobbDouglas => cd_acc[parent] += node.ln_theta.exp() * lu,
                    NodeKind::Leaf { .. } => unreachable!(),
                },
            }
        }
        root
    }
}

// === ORACLES ===

/// Single-level CES demand for goods `0..weights.len()`.
pub fn ces_demand(budget: f64, weights: &[f64], rho: f64, prices: &[f64]) -> Result<DemandVector> {
    if weights.len() != prices.len() {
        return Err(Error::Dimension(format!("{} weights but {} prices", weights.len(), prices.len())));
    }
    if !(rho < 1.0) {
        return Err(Error::Domain { good: 0, message: format!("rho = {rho} must be below 1") });
    }
    check_prices(prices)?;
    let buyer = Buyer::new(0, budget, UtilityTree::ces(rho, weights));
    nested_demand(&buyer, prices)
}

/// Demand of one buyer with an arbitrary nested-CES tree.
pub fn nested_demand(buyer: &Buyer, prices: &[f64]) -> Result<DemandVector> {
    check_prices(prices)?;
    let tree = FlatTree::compile(&buyer.utility);
    let ln_p: Vec<f64> = prices.iter().map(|p| p.ln()).collect();
    let mut x = vec![0.0; prices.len()];
    tree.demand_into(buyer.budget, &ln_p, &mut Vec::new(), &mut x)?;
    Ok(DemandVector { quantities: x.clone(), per_buyer: vec![x] })
}

/// Aggregate demand with the per-buyer breakdown.
pub fn aggregate_demand(spec: &MarketSpec, prices: &[f64]) -> Result<DemandVector> {
    check_prices(prices)?;
    let ln_p: Vec<f64> = prices.iter().map(|p| p.ln()).collect();
    let n = prices.len();
    let mut scratch = Vec::new();
    let mut per_buyer = Vec::with_capacity(spec.buyers().len());
    let mut total = vec![0.0; n];
    for (buyer, tree) in spec.buyers().iter().zip(spec.compiled()) {
        let mut x = vec![0.0; n];
        tree.demand_into(buyer.budget, &ln_p, &mut scratch, &mut x)?;
        total.iter_mut().zip(&x).for_each(|(t, xi)| *t += xi);
        per_buyer.push(x);
    }
    Ok(DemandVector { quantities: total, per_buyer })
}

/// Aggregate demand only, written into `out`. The simulator's hot path.
pub fn aggregate_demand_into(spec: &MarketSpec, prices: &[f64], out: &mut [f64]) -> Result<()> {
    check_prices(prices)?;
    let ln_p: Vec<f64> = prices.iter().map(|p| p.ln()).collect();
    out.iter_mut().for_each(|x| *x = 0.0);
    let mut scratch = Vec::new();
    for (buyer, tree) in spec.buyers().iter().zip(spec.compiled()) {
        tree.demand_into(buyer.budget, &ln_p, &mut scratch, out)?;
    }
    Ok(())
}

/// ln u of a buyer at quantities `y`.
pub fn ln_utility(buyer: &Buyer, y: &[f64]) -> f64 {
    FlatTree::compile(&buyer.utility).ln_utility(y)
}

/// Utility-maximizing basket on the budget simplex discretized at the given
/// spending resolution.
///
/// The search runs over integer spending units. A coarse-to-fine pattern
/// search moves spending between pairs of goods, halving the step until it
/// reaches one unit, and the result is confirmed against every point in a
/// window of ±3 units around it.
pub fn brute_force_demand(buyer: &Buyer, prices: &[f64], resolution: f64) -> Result<DemandVector> {
    let n = prices.len();
    if n > BRUTE_FORCE_MAX_GOODS {
        return Err(Error::Dimension(format!(
            "brute-force demand supports at most {BRUTE_FORCE_MAX_GOODS} goods, got {n}"
        )));
    }
    if !(resolution > 0.0) {
        return Err(Error::Domain { good: 0, message: format!("resolution {resolution} must be positive") });
    }
    check_prices(prices)?;
    let tree = FlatTree::compile(&buyer.utility);
    let b = buyer.budget;
    let units = (b / resolution).round().max(1.0) as i64;
    let unit = b / units as f64;
    let eval = |k: &[i64]| -> f64 {
        let y: Vec<f64> = k.iter().zip(prices).map(|(&ki, p)| ki as f64 * unit / p).collect();
        tree.ln_utility(&y)
    };

    let mut k = vec![units / n as i64; n];
    k[n - 1] += units - k.iter().sum::<i64>();
    let mut best = eval(&k);

    let mut step = 1i64;
    while step * 4 * (n as i64) < units {
        step *= 2;
    }
    loop {
        let mut improved = true;
        while improved {
            improved = false;
            let mut candidate = None;
            for i in 0..n {
                for j in 0..n {
                    if i == j || k[j] < step {
                        continue;
                    }
                    k[i] += step;
                    k[j] -= step;
                    let v = eval(&k);
                    if v > best && candidate.is_none_or(|(cv, _, _)| v > cv) {
                        candidate = Some((v, i, j));
                    }
                    k[i] -= step;
                    k[j] += step;
                }
            }
            if let Some((v, i, j)) = candidate {
                k[i] += step;
                k[j] -= step;
                best = v;
                improved = true;
            }
        }
        if step > 1 {
            step /= 2;
            continue;
        }
        match best_in_window(&k, 3, &eval) {
            Some((v, better)) if v > best => {
                best = v;
                k = better;
            }
            _ => break,
        }
    }
    let x: Vec<f64> = k.iter().zip(prices).map(|(&ki, p)| ki as f64 * unit / p).collect();
    Ok(DemandVector { quantities: x.clone(), per_buyer: vec![x] })
}

/// Best point among all budget-preserving offsets with entries in
/// `[-radius, radius]`.
fn best_in_window(k: &[i64], radius: i64, eval: &impl Fn(&[i64]) -> f64) -> Option<(f64, Vec<i64>)> {
    let n = k.len();
    if n < 2 {
        return None;
    }
    let mut best: Option<(f64, Vec<i64>)> = None;
    let mut offset = vec![-radius; n - 1];
    loop {
        let last = -offset.iter().sum::<i64>();
        let mut point = k.to_vec();
        for (p, o) in point.iter_mut().zip(offset.iter().chain(std::iter::once(&last))) {
            *p += o;
        }
        if point.iter().all(|&v| v >= 0) {
            let v = eval(&point);
            if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                best = Some((v, point));
            }
        }
        let mut d = 0;
        while d < n - 1 {
            offset[d] += 1;
            if offset[d] <= radius {
                break;
            }
            offset[d] = -radius;
            d += 1;
        }
        if d == n - 1 {
            return best;
        }
    }
}
