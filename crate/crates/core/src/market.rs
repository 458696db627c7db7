//! The static economy: goods with daily supply and warehouse capacity, buyers
//! with budgets and nested CES utility trees, plus validation and the JSON
//! configuration format.
//!
//! A configuration document looks like
//!
//! ```json
//! {
//!   "goods":  [{"id": 0, "w": 1.0, "chi": 2048.0}, {"id": 1, "w": 1.0, "chi": 2048.0}],
//!   "buyers": [{"id": 0, "b": 10.0,
//!               "utility": {"rho": -0.5, "children": [{"good": 0, "a": 1.0},
//!                                                      {"good": 1, "a": 1.0}]}}]
//! }
//! ```
//!
//! Goods and buyers are indexed by position and their `id` must equal that
//! position. A utility node is either a leaf `{good, a}` or an aggregate
//! `{rho, a, children}`; `a` defaults to 1 when omitted.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::demand::FlatTree;
use crate::error::{Error, Result};

/// Relative tolerance used when comparing capacity-to-supply ratios.
const RATIO_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Good {
    pub id: usize,
    /// Units supplied per day.
    #[serde(rename = "w")]
    pub supply_w: f64,
    /// Warehouse capacity in units.
    #[serde(rename = "chi")]
    pub warehouse_capacity_chi: f64,
}

impl Good {
    pub fn new(id: usize, supply_w: f64, warehouse_capacity_chi: f64) -> Self {
        Good { id, supply_w, warehouse_capacity_chi }
    }

    /// The target stock, half of capacity.
    pub fn ideal_stock(&self) -> f64 {
        self.warehouse_capacity_chi / 2.0
    }

    /// Days of supply the warehouse can hold.
    pub fn capacity_ratio(&self) -> f64 {
        self.warehouse_capacity_chi / self.supply_w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Buyer {
    pub id: usize,
    /// Money brought to market each day.
    #[serde(rename = "b")]
    pub budget: f64,
    pub utility: UtilityTree,
}

impl Buyer {
    pub fn new(id: usize, budget: f64, utility: UtilityTree) -> Self {
        Buyer { id, budget, utility }
    }
}

/// Recursive CES aggregator. `rho == 0` is the Cobb-Douglas limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NodeDoc", into = "NodeDoc")]
pub enum UtilityTree {
    Leaf { good: usize, a: f64 },
    Aggregate { rho: f64, a: f64, children: Vec<UtilityTree> },
}

impl UtilityTree {
    pub fn leaf(good: usize, a: f64) -> Self {
        UtilityTree::Leaf { good, a }
    }

    pub fn aggregate(rho: f64, children: Vec<UtilityTree>) -> Self {
        UtilityTree::Aggregate { rho, a: 1.0, children }
    }

    pub fn weighted_aggregate(rho: f64, a: f64, children: Vec<UtilityTree>) -> Self {
        UtilityTree::Aggregate { rho, a, children }
    }

    /// Single-level CES over goods `0..weights.len()`.
    pub fn ces(rho: f64, weights: &[f64]) -> Self {
        UtilityTree::aggregate(rho, weights.iter().enumerate().map(|(g, &a)| UtilityTree::leaf(g, a)).collect())
    }

    pub fn weight(&self) -> f64 {
        match self {
            UtilityTree::Leaf { a, .. } | UtilityTree::Aggregate { a, .. } => *a,
        }
    }

    /// Goods referenced by the leaves, in depth-first order.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |g| out.push(g));
        out
    }

    fn visit_leaves(&self, f: &mut impl FnMut(usize)) {
        match self {
            UtilityTree::Leaf { good, .. } => f(*good),
            UtilityTree::Aggregate { children, .. } => children.iter().for_each(|c| c.visit_leaves(f)),
        }
    }

    /// Number of aggregate levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            UtilityTree::Leaf { .. } => 0,
            UtilityTree::Aggregate { children, .. } => 1 + children.iter().map(|c| c.depth()).max().unwrap_or(0),
        }
    }

    /// For each leaf, the ρ values of its ancestors ordered from the leaf's
    /// parent up to the root.
    pub fn leaf_paths(&self) -> Vec<(usize, Vec<f64>)> {
        let mut out = Vec::new();
        let mut stack = Vec::new();
        self.collect_paths(&mut stack, &mut out);
        out
    }

    fn collect_paths(&self, stack: &mut Vec<f64>, out: &mut Vec<(usize, Vec<f64>)>) {
        match self {
            UtilityTree::Leaf { good, .. } => {
                out.push((*good, stack.iter().rev().copied().collect()));
            }
            UtilityTree::Aggregate { rho, children, .. } => {
                stack.push(*rho);
                for c in children {
                    c.collect_paths(stack, out);
                }
                stack.pop();
            }
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    good: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    children: Option<Vec<NodeDoc>>,
}

impl TryFrom<NodeDoc> for UtilityTree {
    type Error = String;

    fn try_from(doc: NodeDoc) -> std::result::Result<Self, String> {
        let a = doc.a.unwrap_or(1.0);
        match (doc.good, doc.rho, doc.children) {
            (Some(good), None, None) => Ok(UtilityTree::Leaf { good, a }),
            (Some(_), _, _) => Err("a leaf node `{good, a}` may not carry `rho` or `children`".into()),
            (None, Some(rho), Some(children)) => {
                let children =
                    children.into_iter().map(UtilityTree::try_from).collect::<std::result::Result<Vec<_>, _>>()?;
                Ok(UtilityTree::Aggregate { rho, a, children })
            }
            (None, None, _) => Err("missing field `rho` (or `good` for a leaf)".into()),
            (None, Some(_), None) => Err("missing field `children`".into()),
        }
    }
}

impl From<UtilityTree> for NodeDoc {
    fn from(t: UtilityTree) -> Self {
        match t {
            UtilityTree::Leaf { good, a } => NodeDoc { good: Some(good), a: Some(a), ..Default::default() },
            UtilityTree::Aggregate { rho, a, children } => NodeDoc {
                rho: Some(rho),
                a: Some(a),
                children: Some(children.into_iter().map(NodeDoc::from).collect()),
                ..Default::default()
            },
        }
    }
}

/// The static economy. Immutable after construction.
#[derive(Debug, Clone)]
pub struct MarketSpec {
    goods: Vec<Good>,
    buyers: Vec<Buyer>,
    total_money: f64,
    compiled: Vec<FlatTree>,
}

impl PartialEq for MarketSpec {
    fn eq(&self, other: &Self) -> bool {
        self.goods == other.goods && self.buyers == other.buyers
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDoc {
    goods: Vec<Good>,
    buyers: Vec<Buyer>,
}

impl MarketSpec {
    /// Builds a spec without validating it; see [`validate`].
    pub fn new(goods: Vec<Good>, buyers: Vec<Buyer>) -> Self {
        let total_money = buyers.iter().map(|b| b.budget).sum();
        let compiled = buyers.iter().map(|b| FlatTree::compile(&b.utility)).collect();
        MarketSpec { goods, buyers, total_money, compiled }
    }

    pub fn goods(&self) -> &[Good] {
        &self.goods
    }

    pub fn buyers(&self) -> &[Buyer] {
        &self.buyers
    }

    pub fn n_goods(&self) -> usize {
        self.goods.len()
    }

    /// M, the total money entering the market per day.
    pub fn total_money(&self) -> f64 {
        self.total_money
    }

    pub fn supplies(&self) -> Vec<f64> {
        self.goods.iter().map(|g| g.supply_w).collect()
    }

    pub fn capacities(&self) -> Vec<f64> {
        self.goods.iter().map(|g| g.warehouse_capacity_chi).collect()
    }

    pub fn ideal_stocks(&self) -> Vec<f64> {
        self.goods.iter().map(Good::ideal_stock).collect()
    }

    /// The common χ/w ratio, or `None` when goods disagree.
    pub fn common_ratio(&self) -> Option<f64> {
        let first = self.goods.first()?.capacity_ratio();
        self.goods.iter().all(|g| ((g.capacity_ratio() - first) / first).abs() <= RATIO_TOLERANCE).then_some(first)
    }

    /// Smallest χ/w ratio across goods.
    pub fn min_ratio(&self) -> f64 {
        self.goods.iter().map(Good::capacity_ratio).fold(f64::INFINITY, f64::min)
    }

    /// Same economy with every warehouse resized to `r` days of supply.
    pub fn with_ratio(&self, r: f64) -> MarketSpec {
        let goods = self.goods.iter().map(|g| Good::new(g.id, g.supply_w, r * g.supply_w)).collect();
        MarketSpec::new(goods, self.buyers.clone())
    }

    pub(crate) fn compiled(&self) -> &[FlatTree] {
        &self.compiled
    }

    pub fn to_json(&self) -> String {
        let doc = SpecDoc { goods: self.goods.clone(), buyers: self.buyers.clone() };
        serde_json::to_string_pretty(&doc).expect("market spec serializes")
    }
}

// === VALIDATION ===

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub locus: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.issues.iter().any(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warning)
    }

    fn error(&mut self, locus: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue { severity: Severity::Error, locus: locus.into(), message: message.into() });
    }

    fn warn(&mut self, locus: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue { severity: Severity::Warning, locus: locus.into(), message: message.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            let tag = match issue.severity {
                Severity::Error => "error",
                Severity::Warning => "warning",
            };
            writeln!(f, "  {tag}: {}: {}", issue.locus, issue.message)?;
        }
        Ok(())
    }
}

fn positive_finite(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

/// Lists every violated invariant. Structural problems are errors; the
/// unequal-ratio and convergence-regime checks are warnings.
pub fn validate(spec: &MarketSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = spec.goods.len();
    if n == 0 {
        report.error("goods", "market has no goods");
    }
    for (idx, g) in spec.goods.iter().enumerate() {
        let locus = format!("goods[{idx}]");
        if g.id != idx {
            report.error(&locus, format!("id {} must equal its position {idx}", g.id));
        }
        if !positive_finite(g.supply_w) {
            report.error(&locus, format!("supply w = {} must be positive and finite", g.supply_w));
        }
        if !positive_finite(g.warehouse_capacity_chi) {
            report.error(&locus, format!("capacity chi = {} must be positive and finite", g.warehouse_capacity_chi));
        }
    }
    if n > 0 && spec.goods.iter().all(|g| positive_finite(g.capacity_ratio())) && spec.common_ratio().is_none() {
        let ratios: Vec<String> = spec.goods.iter().map(|g| format!("{}", g.capacity_ratio())).collect();
        report.warn(
            "goods",
            format!("unequal capacity-to-supply ratios chi/w = [{}]; per-good kappa will be used", ratios.join(", ")),
        );
    }

    if spec.buyers.is_empty() {
        report.error("buyers", "market has no buyers, so total money is zero");
    }
    let mut demanded = vec![false; n];
    for (idx, buyer) in spec.buyers.iter().enumerate() {
        let locus = format!("buyers[{idx}]");
        if buyer.id != idx {
            report.error(&locus, format!("id {} must equal its position {idx}", buyer.id));
        }
        if !positive_finite(buyer.budget) {
            report.error(&locus, format!("budget b = {} must be positive and finite", buyer.budget));
        }
        let mut seen = BTreeSet::new();
        check_node(&buyer.utility, &format!("{locus}.utility"), n, &mut seen, &mut report);
        if seen.is_empty() {
            report.error(&locus, "utility tree has no leaves");
        }
        for g in seen {
            if g < n {
                demanded[g] = true;
            }
        }
        if let UtilityTree::Aggregate { rho, .. } = buyer.utility {
            if !(rho > -1.0 && rho <= 0.0) {
                report.warn(
                    format!("{locus}.utility"),
                    format!("root rho = {rho} lies outside (-1, 0], the range covered by the convergence results"),
                );
            }
        }
    }
    for (g, d) in demanded.iter().enumerate() {
        if !d && !spec.buyers.is_empty() {
            report.error(format!("goods[{g}]"), "good is not demanded by any buyer");
        }
    }
    report
}

fn check_node(node: &UtilityTree, locus: &str, n: usize, seen: &mut BTreeSet<usize>, report: &mut ValidationReport) {
    if !positive_finite(node.weight()) {
        report.error(locus, format!("weight a = {} must be positive and finite", node.weight()));
    }
    match node {
        UtilityTree::Leaf { good, .. } => {
            if *good >= n {
                report.error(locus, format!("unknown good {good}"));
            }
            if !seen.insert(*good) {
                report.error(locus, format!("good {good} appears more than once in this buyer's tree"));
            }
        }
        UtilityTree::Aggregate { rho, children, .. } => {
            if !(rho.is_finite() && *rho < 1.0) {
                report.error(locus, format!("rho = {rho} must be finite and below 1"));
            }
            if children.is_empty() {
                report.error(locus, "aggregate node has no children");
            }
            for (k, c) in children.iter().enumerate() {
                check_node(c, &format!("{locus}.children[{k}]"), n, seen, report);
            }
        }
    }
}

// === CONFIGURATION I/O ===

/// Parses and validates a configuration document, returning the spec with
/// any warnings.
pub fn load_spec_with_report(text: &str) -> Result<(MarketSpec, ValidationReport)> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: SpecDoc = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Parse(format!("at `{path}`: {}", e.into_inner()))
    })?;
    let spec = MarketSpec::new(doc.goods, doc.buyers);
    let report = validate(&spec);
    if report.has_errors() {
        return Err(Error::Validation(report));
    }
    Ok((spec, report))
}

/// Parses and validates a configuration document. Warnings do not block
/// loading; errors do.
pub fn load_spec(text: &str) -> Result<MarketSpec> {
    load_spec_with_report(text).map(|(spec, _)| spec)
}

pub fn serialize(spec: &MarketSpec) -> String {
    spec.to_json()
}
