//! Parameter planning: choosing the price step λ and warehouse gain κ from
//! the market constants, checking the conditions the potential-function
//! argument needs, and sizing warehouses.
//!
//! For complements, with `L = ln(1/(2(1-α)))`,
//!
//! ```text
//! κ = (2/r)·min{ β/(4γ+β), L/(2(8+4γ/β)) }
//! 24/r ≤ λ ≤ min{ 3/7, 3L/7, √(κr/32) }
//! ```
//!
//! and for mixtures of substitutes and complements
//!
//! ```text
//! κ = (2/r)·min{ β/(β+4(2E-β)), (1-2α′)β/(8α′(2E-β)+4β) }
//! 24/r ≤ λ ≤ min{ 1/(8E+4α′-6), √(κr/32) }
//! ```
//!
//! In both cases `δ = κr/2`, `c₁ = δ`, `c₂ = 2`, and λ is the midpoint of its
//! interval. The exponential update rule drops the square-root cap.

use serde::{Deserialize, Serialize};

use crate::elasticity::{MarketClass, MarketConstants};
use crate::error::{Error, Result, ViolatedInequality};

pub const DEFAULT_SAFETY_MULTIPLIER: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UpdateRule {
    #[default]
    Linear,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub lambda: f64,
    pub kappa: f64,
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
    /// Common warehouse capacity in days of supply, χ_i/w_i.
    pub r: f64,
    pub rule: UpdateRule,
}

impl ParamSet {
    /// Per-good warehouse gain `κ_i = 2δ/r_i`, which equals κ when every
    /// good has ratio `r`.
    pub fn kappa_for_ratio(&self, ratio: f64) -> f64 {
        if ratio == self.r {
            self.kappa
        } else {
            2.0 * self.delta / ratio
        }
    }
}

/// One inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
    pub slack: f64,
}

impl Condition {
    pub fn le(name: &str, lhs: f64, rhs: f64) -> Self {
        Condition { name: name.to_string(), lhs, rhs, pass: lhs <= rhs, slack: rhs - lhs }
    }
}

fn complement_log_term(alpha: f64) -> f64 {
    if alpha >= 1.0 {
        f64::INFINITY
    } else {
        (1.0 / (2.0 * (1.0 - alpha))).ln()
    }
}

fn finish(
    kappa: f64,
    lambda_cap: f64,
    r: f64,
    beta: f64,
    rule: UpdateRule,
    mut violated: Vec<ViolatedInequality>,
) -> Result<ParamSet> {
    let sqrt_cap = (kappa * r / 32.0).sqrt();
    let hi = match rule {
        UpdateRule::Linear => lambda_cap.min(sqrt_cap),
        UpdateRule::Exponential => lambda_cap,
    };
    let lo = 24.0 / r;
    if lo > hi {
        violated.push(ViolatedInequality { name: "lambda_interval: 24/r <= lambda_max".into(), lhs: lo, rhs: hi });
    }
    let r_min = 512.0 / beta;
    if r < r_min {
        violated.push(ViolatedInequality { name: "capacity: 512/beta <= r".into(), lhs: r_min, rhs: r });
    }
    if !violated.is_empty() {
        return Err(Error::Infeasible { violated });
    }
    let delta = kappa * r / 2.0;
    let lambda = 0.5 * (lo + hi);
    debug_assert!(lambda * (1.0 + delta) <= 1.0);
    Ok(ParamSet { lambda, kappa, delta, c1: delta, c2: 2.0, r, rule })
}

/// The admissible λ interval `[24/r, λ_max]` for given constants and r.
pub fn lambda_interval(constants: &MarketConstants, r: f64, rule: UpdateRule) -> (f64, f64) {
    let kappa = kappa_bound(constants, r);
    let cap = match constants.class {
        MarketClass::Complements => {
            let l = complement_log_term(constants.alpha);
            (3.0 / 7.0f64).min(3.0 * l / 7.0)
        }
        MarketClass::Mixture => 1.0 / (8.0 * constants.e_upper + 4.0 * constants.alpha_prime - 6.0),
    };
    let hi = match rule {
        UpdateRule::Linear => cap.min((kappa * r / 32.0).sqrt()),
        UpdateRule::Exponential => cap,
    };
    (24.0 / r, hi)
}

/// The largest admissible κ for the constants' market class.
pub fn kappa_bound(constants: &MarketConstants, r: f64) -> f64 {
    let beta = constants.beta;
    match constants.class {
        MarketClass::Complements => {
            let g = constants.gamma;
            let l = complement_log_term(constants.alpha);
            (2.0 / r) * (beta / (4.0 * g + beta)).min(l / (2.0 * (8.0 + 4.0 * g / beta)))
        }
        MarketClass::Mixture => {
            let ap = constants.alpha_prime;
            let m = 2.0 * constants.e_upper - beta;
            (2.0 / r) * (beta / (beta + 4.0 * m)).min((1.0 - 2.0 * ap) * beta / (8.0 * ap * m + 4.0 * beta))
        }
    }
}

pub fn plan_complements(constants: &MarketConstants, r: f64, rule: UpdateRule) -> Result<ParamSet> {
    let beta = constants.beta;
    if !(beta > 0.0) {
        return Err(Error::Precondition(format!("adverse market elasticity beta = {beta} must be positive")));
    }
    let mut violated = Vec::new();
    let l = complement_log_term(constants.alpha);
    if !(l > 0.0) {
        violated.push(ViolatedInequality {
            name: "price elasticity: 1/2 < alpha".into(),
            lhs: 0.5,
            rhs: constants.alpha,
        });
    }
    let g = constants.gamma;
    let kappa = (2.0 / r) * (beta / (4.0 * g + beta)).min(l / (2.0 * (8.0 + 4.0 * g / beta)));
    let cap = (3.0 / 7.0f64).min(3.0 * l / 7.0);
    finish(kappa, cap, r, beta, rule, violated)
}

pub fn plan_mixture(constants: &MarketConstants, r: f64, rule: UpdateRule) -> Result<ParamSet> {
    let beta = constants.beta;
    if !(beta > 0.0) {
        return Err(Error::Precondition(format!("adverse market elasticity beta = {beta} must be positive")));
    }
    let ap = constants.alpha_prime;
    if !(ap < 0.5) {
        return Err(Error::Precondition(format!("spending-transfer bound requires alpha' < 1/2, got alpha' = {ap}")));
    }
    let m = 2.0 * constants.e_upper - beta;
    let kappa = (2.0 / r) * (beta / (beta + 4.0 * m)).min((1.0 - 2.0 * ap) * beta / (8.0 * ap * m + 4.0 * beta));
    let cap = 1.0 / (8.0 * constants.e_upper + 4.0 * ap - 6.0);
    finish(kappa, cap, r, beta, rule, Vec::new())
}

/// Dispatches on the market class.
pub fn plan(constants: &MarketConstants, r: f64, rule: UpdateRule) -> Result<ParamSet> {
    match constants.class {
        MarketClass::Complements => plan_complements(constants, r, rule),
        MarketClass::Mixture => plan_mixture(constants, r, rule),
    }
}

/// Plans a market whose α′ depends on λ. α′ is first evaluated at the
/// largest λ the λ-free bounds allow, and λ is then chosen below that, so the
/// α′ used is an upper bound for the final λ.
pub fn plan_market(base: &MarketConstants, r: f64, rule: UpdateRule) -> Result<(MarketConstants, ParamSet)> {
    let mut constants = base.clone();
    if constants.class == MarketClass::Mixture {
        constants.set_lambda(0.0);
        let (_, upper) = lambda_interval(&constants, r, rule);
        constants.set_lambda(upper.clamp(0.0, 0.5));
    }
    let params = plan(&constants, r, rule)?;
    if constants.class == MarketClass::Complements {
        constants.set_lambda(params.lambda);
    }
    Ok((constants, params))
}

// === CONDITION CHECKS ===

/// `ᾱ = 2(1-α)(1-2δ)^(-γ/β)(1 + αλ(1+δ)/(2(1-λ(1+δ))))`.
pub fn alpha_bar(constants: &MarketConstants, lambda: f64, delta: f64) -> f64 {
    let (a, g, b) = (constants.alpha, constants.gamma, constants.beta);
    let ld = lambda * (1.0 + delta);
    2.0 * (1.0 - a) * (1.0 - 2.0 * delta).powf(-g / b) * (1.0 + a * ld / (2.0 * (1.0 - ld)))
}

/// The Phase-2 threshold `f_II`: `min{(1-2δ)^(-1/β), (2-δ)^(1/γ)}` for
/// complements, with exponent `1/(2E-β)` in the second term for mixtures.
pub fn phase_two_threshold(constants: &MarketConstants, delta: f64) -> f64 {
    let first = (1.0 - 2.0 * delta).powf(-1.0 / constants.beta);
    first.min((2.0 - delta).powf(1.0 / constants.demand_exponent()))
}

/// The three conditions under which a price update cannot raise the
/// potential: the complements version or the mixture version, by class.
pub fn check_update_conditions(constants: &MarketConstants, params: &ParamSet) -> Vec<Condition> {
    let ParamSet { lambda, delta, c1, c2, .. } = *params;
    let b = constants.beta;
    let m = constants.demand_exponent();
    let first = Condition::le("f_threshold_order", (1.0 - 2.0 * delta).powf(-1.0 / b), (2.0 - delta).powf(1.0 / m));
    match constants.class {
        MarketClass::Complements => vec![
            first,
            Condition::le("alpha_bar", alpha_bar(constants, lambda, delta) + c1 + c2 * delta, 1.0 - delta),
            Condition::le("lambda_step", (1.0 + delta + c1 + c2 * delta) * lambda, 1.0),
        ],
        MarketClass::Mixture => {
            let growth = (1.0 - 2.0 * delta).powf(-m / b);
            vec![
                first,
                Condition::le("spending_transfer", 2.0 * constants.alpha_prime * growth + c1 + c2 * delta, 1.0 - delta),
                Condition::le(
                    "lambda_step",
                    (2.0 * constants.alpha_double_prime * growth + 1.0 + delta + c1 + c2 * delta) * lambda,
                    1.0,
                ),
            ]
        }
    }
}

/// `4κ(1+c₂) ≤ λc₁ ≤ 1/2`.
pub fn between_update_conditions(params: &ParamSet) -> Vec<Condition> {
    vec![
        Condition::le("decay_lower", 4.0 * params.kappa * (1.0 + params.c2), params.lambda * params.c1),
        Condition::le("decay_upper", params.lambda * params.c1, 0.5),
    ]
}

/// Every condition the planner promises, including the warehouse relations.
pub fn check_all_conditions(constants: &MarketConstants, params: &ParamSet) -> Vec<Condition> {
    let mut out = between_update_conditions(params);
    out.extend(check_update_conditions(constants, params));
    out.push(Condition::le(
        "delta_definition",
        (params.delta - params.kappa * params.r / 2.0).abs(),
        1e-15 * params.delta,
    ));
    out.push(Condition::le("capacity_beta", 512.0 / constants.beta, params.r));
    if params.rule == UpdateRule::Linear {
        out.push(Condition::le("lambda_squared", params.lambda * params.lambda, params.kappa * params.r / 32.0));
    }
    out.push(Condition::le("lambda_positive_prices", params.lambda * (1.0 + params.delta), 1.0));
    out
}

// === WAREHOUSE SIZING ===

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizingReport {
    pub f_init: f64,
    /// Exponent of the Phase-1 demand bound d(f) = f^exponent.
    pub demand_exponent: f64,
    pub d_f_init: f64,
    pub d_two: f64,
    /// Bound on Phase-1 stock drift in days of supply.
    pub v_f_init: f64,
    pub multiplier: f64,
    pub r_min_beta: f64,
    pub r_min_drift: f64,
    pub r: f64,
    pub pass: bool,
    /// Phase-1 duration estimate `(1/λ)ln f + (1/(λβ))ln(1/δ)`.
    pub phase1_days: f64,
    /// `D(f_I) + 32/β + 2/κ`.
    pub safe_after_days: f64,
}

pub fn warehouse_sizing(constants: &MarketConstants, f_init: f64, params: &ParamSet, multiplier: f64) -> SizingReport {
    let exponent = constants.demand_exponent();
    let d = |f: f64| f.powf(exponent);
    let ParamSet { lambda, delta, kappa, r, .. } = *params;
    let beta = constants.beta;
    let v = d(f_init) / lambda + d(2.0) * (beta / delta).ln().max(0.0) / (lambda * beta);
    let r_min_beta = 512.0 / beta;
    let r_min_drift = 8.0 * multiplier * v;
    let phase1_days = f_init.ln() / lambda + (1.0 / delta).ln() / (lambda * beta);
    SizingReport {
        f_init,
        demand_exponent: exponent,
        d_f_init: d(f_init),
        d_two: d(2.0),
        v_f_init: v,
        multiplier,
        r_min_beta,
        r_min_drift,
        r,
        pass: r >= r_min_beta && r >= r_min_drift,
        phase1_days,
        safe_after_days: phase1_days + 32.0 / beta + 2.0 / kappa,
    }
}

/// Plans at the smallest capacity ratio meeting both sizing bounds.
pub fn size_and_plan(
    base: &MarketConstants,
    f_init: f64,
    rule: UpdateRule,
    multiplier: f64,
) -> Result<(MarketConstants, ParamSet, SizingReport)> {
    if !(base.beta > 0.0) {
        return Err(Error::Precondition(format!("adverse market elasticity beta = {} must be positive", base.beta)));
    }
    let mut r = 512.0 / base.beta;
    for _ in 0..200 {
        let planned = match plan_market(base, r, rule) {
            Ok(p) => p,
            Err(Error::Infeasible { .. }) => {
                let mut probe = base.clone();
                probe.set_lambda(0.0);
                let (lo, hi) = lambda_interval(&probe, r, rule);
                r = if hi > 0.0 { (r * lo / hi).max(r * 1.01) } else { r * 2.0 };
                continue;
            }
            Err(e) => return Err(e),
        };
        let (constants, params) = planned;
        let sizing = warehouse_sizing(&constants, f_init, &params, multiplier);
        if sizing.pass {
            return Ok((constants, params, sizing));
        }
        r = sizing.r_min_beta.max(sizing.r_min_drift).max(r * (1.0 + 1e-9));
    }
    Err(Error::Precondition("warehouse sizing did not settle".into()))
}

// === ZONES ===

const ZONE_LABELS: [&str; 8] = [
    "low outer buffer",
    "low middle buffer",
    "low inner buffer",
    "low central",
    "high central",
    "high inner buffer",
    "high middle buffer",
    "high outer buffer",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Zone {
    pub index: usize,
    pub label: &'static str,
    pub safe: bool,
}

/// Zones are `[kχ/8, (k+1)χ/8)` with the top zone closed; the safe region is
/// the closed interval `[χ/4, 3χ/4]`.
pub fn zone_of(v: f64, chi: f64) -> Zone {
    let index = ((8.0 * v / chi).floor().max(0.0) as usize).min(7);
    Zone { index, label: ZONE_LABELS[index], safe: v >= chi / 4.0 && v <= 0.75 * chi }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerReport {
    pub constants: MarketConstants,
    pub params: ParamSet,
    pub conditions: Vec<Condition>,
    pub sizing: SizingReport,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn regression_market() -> MarketConstants {
        MarketConstants::complements(0.75, 1.0)
    }

    #[test]
    fn regression_instance() {
        let p = plan_complements(&regression_market(), 2048.0, UpdateRule::Linear).unwrap();
        let kappa = 2.115317323486161e-05;
        assert!(((p.kappa - kappa) / kappa).abs() < 1e-9);
        let (lo, hi) = lambda_interval(&regression_market(), 2048.0, UpdateRule::Linear);
        assert!((lo - 0.01171875).abs() < 1e-15);
        assert!(((hi - 0.03679406320360858) / hi).abs() < 1e-9);
        assert_eq!(p.lambda, 0.5 * (lo + hi));
        assert_eq!(p.delta, p.kappa * 2048.0 / 2.0);
    }

    #[test]
    fn small_ratio_is_infeasible() {
        match plan_complements(&regression_market(), 100.0, UpdateRule::Linear) {
            Err(Error::Infeasible { violated }) => {
                assert!(violated.iter().any(|v| v.name.starts_with("lambda_interval") && v.lhs == 0.24));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mixture_regression() {
        let c = MarketConstants::new(1.0, 2.0 / 3.0, 2.0, 1.0 / 3.0, 0.3, 0.0);
        let p = plan_mixture(&c, 4096.0, UpdateRule::Linear).unwrap();
        let expected = 2.0 / 4096.0 * (0.4 / 3.0) / (8.0 * 0.3 * 11.0 / 3.0 + 4.0 / 3.0);
        assert!(((p.kappa - expected) / expected).abs() < 1e-12);
        assert!(((p.kappa - 6.424753289473685e-06) / p.kappa).abs() < 1e-9);
    }

    #[test]
    fn mixture_rejects_large_transfer() {
        let c = MarketConstants::new(1.0, 2.0 / 3.0, 2.0, 1.0 / 3.0, 0.6, 0.0);
        assert!(matches!(plan_mixture(&c, 4096.0, UpdateRule::Linear), Err(Error::Precondition(_))));
    }

    #[test]
    fn planner_output_passes_every_condition() {
        let c = regression_market();
        let p = plan_complements(&c, 2048.0, UpdateRule::Linear).unwrap();
        for cond in check_all_conditions(&c, &p) {
            assert!(cond.pass, "{cond:?}");
        }
    }

    #[test]
    fn forced_large_lambda_fails_step_condition() {
        let c = regression_market();
        let mut p = plan_complements(&c, 2048.0, UpdateRule::Linear).unwrap();
        p.lambda = 0.9;
        let conds = check_update_conditions(&c, &p);
        assert!(conds.iter().any(|k| k.name == "alpha_bar" && !k.pass));
        let mut q = p;
        q.delta = 0.1;
        q.c1 = 0.1;
        let step = check_update_conditions(&c, &q).into_iter().find(|k| k.name == "lambda_step").unwrap();
        assert!(!step.pass);
    }

    #[test]
    fn alpha_bar_at_zero_delta() {
        let c = regression_market();
        let lam = 0.02;
        let expected = 2.0 * 0.25 * (1.0 + 0.75 * lam / (2.0 * (1.0 - lam)));
        assert!((alpha_bar(&c, lam, 0.0) - expected).abs() < 1e-15);
    }

    #[test]
    fn phase_two_threshold_example() {
        let c = MarketConstants::complements(0.75, 1.0);
        let f = phase_two_threshold(&c, 0.01);
        assert!((f - 1.0412328196584757).abs() < 1e-12);
    }

    #[test]
    fn exponential_rule_skips_square_root_cap() {
        let c = regression_market();
        let (_, lin) = lambda_interval(&c, 2048.0, UpdateRule::Linear);
        let (_, exp) = lambda_interval(&c, 2048.0, UpdateRule::Exponential);
        assert!(exp > lin);
        assert!((exp - 3.0 / 7.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn sizing_examples() {
        let c = MarketConstants::complements(0.75, 1.0);
        let p = plan_complements(&c, 2048.0, UpdateRule::Linear).unwrap();
        let s = warehouse_sizing(&c, 4.0, &p, 1.0);
        assert_eq!(s.d_f_init, 4.0);
        assert_eq!(s.r_min_beta, 1024.0);
        let m = MarketConstants::new(1.0, 2.0 / 3.0, 2.0, 1.0 / 3.0, 0.3, 0.0);
        let pm = plan_mixture(&m, 4096.0, UpdateRule::Linear).unwrap();
        let sm = warehouse_sizing(&m, 2.0, &pm, 1.0);
        assert!((sm.d_f_init - 2f64.powf(11.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn size_and_plan_meets_its_bounds() {
        let c = MarketConstants::complements(0.9, 1.0);
        let (_, p, s) = size_and_plan(&c, 2.0, UpdateRule::Linear, 1.0).unwrap();
        assert!(s.pass);
        assert!(p.r >= s.r_min_drift && p.r >= s.r_min_beta);
    }

    #[test]
    fn zones() {
        let z = zone_of(0.5, 1.0);
        assert_eq!((z.index, z.label, z.safe), (4, "high central", true));
        let z = zone_of(1.0 / 16.0, 1.0);
        assert_eq!((z.index, z.label, z.safe), (0, "low outer buffer", false));
        let z = zone_of(0.75, 1.0);
        assert_eq!((z.index, z.safe), (6, true));
        assert_eq!(zone_of(1.0, 1.0).index, 7);
    }
}
