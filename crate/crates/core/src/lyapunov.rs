//! The potential function and its monitors.
//!
//! For good `i` with price `p`, current demand `x`, average demand `x̄` since
//! the last update, target demand `w̃`, supply `w` and time `e = t - τ` since
//! the last update,
//!
//! ```text
//! φ_i = p·[ span{x̄, x, w̃} - c₁λ·e·|x̄ - w̃| + c₂·|w̃ - w| ]
//! ```
//!
//! and `φ = Σ φ_i`. Between price updates φ_i decays at a rate set by κ and
//! c₂; at a price update φ does not increase once prices are close enough to
//! equilibrium. The functions here evaluate φ exactly, differentiate it
//! analytically along an event-free segment, and bound its jump at an update.

use serde::Serialize;

use crate::planner::ParamSet;

/// Interior points examined per event-free segment.
pub const SEGMENT_POINTS: usize = 32;
/// Relative tolerance of the between-update derivative check.
pub const DERIVATIVE_TOLERANCE: f64 = 1e-9;
/// Relative tolerance of the at-update non-increase check.
pub const UPDATE_TOLERANCE: f64 = 1e-12;

pub fn span(a: f64, b: f64, c: f64) -> f64 {
    a.max(b).max(c) - a.min(b).min(c)
}

/// Everything φ_i depends on at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GoodState {
    pub price: f64,
    pub x: f64,
    pub x_bar: f64,
    pub w_tilde: f64,
    pub w: f64,
    /// `t - τ_i`.
    pub elapsed: f64,
}

impl GoodState {
    /// A good with no warehouse and no averaging, as in the one-time market.
    pub fn instantaneous(price: f64, x: f64, w: f64) -> Self {
        GoodState { price, x, x_bar: x, w_tilde: w, w, elapsed: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Weights {
    /// `c₁·λ`.
    pub c1_lambda: f64,
    pub c2: f64,
}

impl From<&ParamSet> for Weights {
    fn from(p: &ParamSet) -> Self {
        Weights { c1_lambda: p.c1 * p.lambda, c2: p.c2 }
    }
}

/// The three price-weighted parts of φ_i; `phi = span - discount + gap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialTerms {
    pub span: f64,
    pub discount: f64,
    pub gap: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialSnapshot {
    pub per_good: Vec<PotentialTerms>,
    pub total: f64,
}

pub fn phi_terms(g: &GoodState, wts: Weights) -> PotentialTerms {
    let span = g.price * span(g.x_bar, g.x, g.w_tilde);
    let discount = g.price * wts.c1_lambda * g.elapsed * (g.x_bar - g.w_tilde).abs();
    let gap = g.price * wts.c2 * (g.w_tilde - g.w).abs();
    PotentialTerms { span, discount, gap, phi: span - discount + gap }
}

pub fn potential(goods: &[GoodState], wts: Weights) -> PotentialSnapshot {
    let per_good: Vec<PotentialTerms> = goods.iter().map(|g| phi_terms(g, wts)).collect();
    let total = per_good.iter().map(|t| t.phi).sum();
    PotentialSnapshot { per_good, total }
}

/// `Σ p_i(|x_i - w_i| + |w̃_i - w_i|)`.
pub fn misspending(goods: &[GoodState]) -> f64 {
    goods.iter().map(|g| g.price * ((g.x - g.w).abs() + (g.w_tilde - g.w).abs())).sum()
}

/// Scale of the quantities entering φ, used for rounding allowances.
fn magnitude(goods: &[GoodState]) -> f64 {
    goods.iter().map(|g| g.price * (g.x.abs() + g.x_bar.abs() + g.w_tilde.abs() + g.w.abs())).sum()
}

// === BETWEEN UPDATES ===

/// Which of the two decay regimes applies: `Near` when `|w̃ - w| ≤ 2·span`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayCase {
    Near,
    Far,
}

impl DecayCase {
    pub fn of(g: &GoodState) -> Self {
        if (g.w_tilde - g.w).abs() <= 2.0 * span(g.x_bar, g.x, g.w_tilde) {
            DecayCase::Near
        } else {
            DecayCase::Far
        }
    }

    /// `κ(1+c₂)/(1+2c₂)` for `Near`, `κ(c₂-1)/(2c₂)` for `Far`.
    pub fn rate(self, kappa: f64, c2: f64) -> f64 {
        match self {
            DecayCase::Near => kappa * (1.0 + c2) / (1.0 + 2.0 * c2),
            DecayCase::Far => kappa * (c2 - 1.0) / (2.0 * c2),
        }
    }
}

/// The slower of the two decay rates.
pub fn guaranteed_rate(kappa: f64, c2: f64) -> f64 {
    DecayCase::Near.rate(kappa, c2).min(DecayCase::Far.rate(kappa, c2))
}

fn abs_right_derivative(g: f64, dg: f64) -> f64 {
    if g > 0.0 {
        dg
    } else if g < 0.0 {
        -dg
    } else {
        dg.abs()
    }
}

/// Right derivative in time of φ_i while no price changes, with warehouse
/// gain `kappa`. Requires `elapsed > 0`.
pub fn phi_right_derivative(g: &GoodState, kappa: f64, wts: Weights) -> f64 {
    let k = kappa * (g.x - g.w);
    let vals = [(g.x, 0.0), (g.x_bar, (g.x - g.x_bar) / g.elapsed), (g.w_tilde, -k)];
    let hi = vals.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
    let lo = vals.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let d_hi = vals.iter().filter(|v| v.0 == hi).map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let d_lo = vals.iter().filter(|v| v.0 == lo).map(|v| v.1).fold(f64::INFINITY, f64::min);
    let d_span = d_hi - d_lo;
    let gap_avg = g.x_bar - g.w_tilde;
    let d_gap_avg = vals[1].1 + k;
    let d_discount = gap_avg.abs() + g.elapsed * abs_right_derivative(gap_avg, d_gap_avg);
    let d_gap = abs_right_derivative(g.w_tilde - g.w, -k);
    g.price * (d_span - wts.c1_lambda * d_discount + wts.c2 * d_gap)
}

/// One good over an event-free stretch: demand and price are constant, the
/// warehouse drains linearly and the running average relaxes towards `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// State at the start of the stretch.
    pub start: GoodState,
    pub kappa: f64,
    pub length: f64,
}

impl Segment {
    pub fn at(&self, h: f64) -> GoodState {
        let s = &self.start;
        let elapsed = s.elapsed + h;
        GoodState {
            x_bar: (s.x_bar * s.elapsed + s.x * h) / elapsed,
            w_tilde: s.w_tilde - self.kappa * (s.x - s.w) * h,
            elapsed,
            ..*s
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeViolation {
    pub offset: f64,
    pub case: DecayCase,
    pub derivative: f64,
    pub bound: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentCheck {
    pub points: usize,
    pub violations: Vec<DerivativeViolation>,
}

/// Checks `dφ_i/dt ≤ -rate·φ_i` at the midpoints of `points` equal pieces of
/// the segment, where the rate depends on the decay case at each point.
pub fn check_derivative_bound(seg: &Segment, wts: Weights, points: usize) -> SegmentCheck {
    let mut violations = Vec::new();
    for k in 0..points {
        let h = seg.length * (k as f64 + 0.5) / points as f64;
        let g = seg.at(h);
        let case = DecayCase::of(&g);
        let phi = phi_terms(&g, wts).phi;
        let derivative = phi_right_derivative(&g, seg.kappa, wts);
        let bound = -case.rate(seg.kappa, wts.c2) * phi;
        let k_abs = seg.kappa * (g.x - g.w).abs();
        let scale = g.price
            * ((g.x - g.x_bar).abs() / g.elapsed
                + (2.0 + wts.c2) * k_abs
                + wts.c1_lambda * ((g.x_bar - g.w_tilde).abs() + (g.x - g.x_bar).abs() + g.elapsed * k_abs))
            + bound.abs();
        if derivative > bound + DERIVATIVE_TOLERANCE * scale {
            violations.push(DerivativeViolation { offset: h, case, derivative, bound, phi });
        }
    }
    SegmentCheck { points, violations }
}

// === AT UPDATES ===

/// Which jump bound applies at a price update of good `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateCase {
    /// `x_i - w̃_i` keeps its sign and shrinks.
    Toward,
    /// `x_i - w̃_i` grows or changes sign.
    AwayOrFlipped,
    /// A sign is zero; the larger bound is used.
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpdateCheck {
    pub good: usize,
    pub phi_before: f64,
    pub phi_after: f64,
    pub delta_phi: f64,
    /// Largest Δφ accepted as non-increase.
    pub allowance: f64,
    pub case: UpdateCase,
    pub bound: f64,
    pub delta_s_i: f64,
    pub s_inc: f64,
    pub s_dec: f64,
    /// `|ΔS_c|/(x_i|Δp_i|)` with `ΔS_c` the spending change on goods whose
    /// spending moved against `p_i`; `None` when the price did not move.
    pub alpha_prime: Option<f64>,
    pub monotone: bool,
    pub within_bound: bool,
}

impl UpdateCheck {
    pub fn passed(&self) -> bool {
        self.monotone && self.within_bound
    }
}

/// Compares φ just before and just after a price update of `good`. `after`
/// should carry `x_bar = x` and `elapsed = 0` for the updated good.
pub fn check_update_monotonicity(
    good: usize,
    before: &[GoodState],
    after: &[GoodState],
    wts: Weights,
    delta: f64,
) -> UpdateCheck {
    let (b, a) = (&before[good], &after[good]);
    let delta_phi: f64 = before.iter().zip(after).map(|(u, v)| phi_terms(v, wts).phi - phi_terms(u, wts).phi).sum();
    let phi_before = potential(before, wts).total;
    let phi_after = potential(after, wts).total;
    let floor = 16.0 * f64::EPSILON * (magnitude(before) + magnitude(after));
    let allowance = UPDATE_TOLERANCE * phi_before.max(0.0) + floor;

    let dp = a.price - b.price;
    let delta_s_i = a.price * a.x - b.price * b.x;
    let (mut s_inc, mut s_dec) = (0.0, 0.0);
    let mut against = 0.0;
    for (j, (u, v)) in before.iter().zip(after).enumerate() {
        if j == good {
            continue;
        }
        let ds = v.price * v.x - u.price * u.x;
        if ds > 0.0 {
            s_inc += ds;
        } else {
            s_dec -= ds;
        }
        if ds * dp < 0.0 {
            against += ds.abs();
        }
    }
    let sgn = if dp > 0.0 {
        1.0
    } else if dp < 0.0 {
        -1.0
    } else {
        0.0
    };
    let shared = s_inc
        + s_dec
        + wts.c1_lambda * b.price * (b.x_bar - b.w_tilde).abs() * b.elapsed
        + wts.c2 * delta * b.w * dp.abs();
    let toward = -b.w_tilde * dp.abs() + sgn * delta_s_i + shared;
    let away = -b.price * (b.x_bar - b.w_tilde).abs() + b.w_tilde * dp.abs() - sgn * delta_s_i + shared;
    let g0 = b.x - b.w_tilde;
    let g1 = a.x - b.w_tilde;
    let case = if g0 == 0.0 || g1 == 0.0 || dp == 0.0 {
        UpdateCase::Boundary
    } else if g0 * g1 > 0.0 && g1.abs() <= g0.abs() {
        UpdateCase::Toward
    } else {
        UpdateCase::AwayOrFlipped
    };
    let bound = match case {
        UpdateCase::Toward => toward,
        UpdateCase::AwayOrFlipped => away,
        UpdateCase::Boundary => toward.max(away),
    };
    UpdateCheck {
        good,
        phi_before,
        phi_after,
        delta_phi,
        allowance,
        case,
        bound,
        delta_s_i,
        s_inc,
        s_dec,
        alpha_prime: (dp != 0.0 && b.x > 0.0).then(|| against / (b.x * dp.abs())),
        monotone: delta_phi <= allowance,
        within_bound: delta_phi <= bound + floor,
    }
}

// === PHASES ===

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseReport {
    pub f_two: f64,
    /// End of the first full day throughout which `f ≤ f_II`.
    pub phase_two_entry: Option<f64>,
    /// Start of the last stretch with `f ≤ f_II` that runs to the end of the
    /// trace.
    pub final_stretch_start: Option<f64>,
    /// First time `f ≤ 1 + η` for each requested η.
    pub eta_times: Vec<(f64, Option<f64>)>,
}

/// Scans `(t, f)` samples, where `f` holds from each sample until the next,
/// up to `end`.
pub fn phase_tracker(samples: &[(f64, f64)], f_two: f64, etas: &[f64], end: f64) -> PhaseReport {
    let mut entry = None;
    let mut stretch: Option<f64> = None;
    for (k, &(t, f)) in samples.iter().enumerate() {
        if f <= f_two {
            let start = *stretch.get_or_insert(t);
            let until = samples.get(k + 1).map_or(end, |s| s.0);
            if entry.is_none() && until - start >= 1.0 {
                entry = Some(start + 1.0);
            }
        } else {
            stretch = None;
        }
    }
    let eta_times = etas.iter().map(|&eta| (eta, samples.iter().find(|s| s.1 <= 1.0 + eta).map(|s| s.0))).collect();
    PhaseReport { f_two, phase_two_entry: entry, final_stretch_start: stretch, eta_times }
}

#[cfg(test)]
mod tests {
    use super::*;

    const W: Weights = Weights { c1_lambda: 0.01 * 0.03, c2: 2.0 };

    #[test]
    fn span_examples() {
        assert_eq!(span(1.0, 2.0, 3.0), 2.0);
        assert_eq!(span(5.0, 5.0, 5.0), 0.0);
        assert_eq!(span(2.0, 7.0, 4.0), 5.0);
        assert_eq!(span(7.0, 2.0, 4.0), span(4.0, 7.0, 2.0));
    }

    #[test]
    fn potential_examples() {
        let eq = GoodState { price: 3.0, x: 1.0, x_bar: 1.0, w_tilde: 1.0, w: 1.0, elapsed: 0.4 };
        assert_eq!(potential(&[eq, eq], W).total, 0.0);
        let g = GoodState { price: 1.0, x: 1.2, x_bar: 1.2, w_tilde: 1.0, w: 1.0, elapsed: 0.0 };
        assert!((potential(&[g], W).total - 0.2).abs() < 1e-15);
        let h = GoodState { price: 2.0, x: 1.1, x_bar: 1.1, w_tilde: 1.1, w: 1.0, elapsed: 0.5 };
        assert!((phi_terms(&h, W).phi - 2.0 * 2.0 * 0.1).abs() < 1e-14);
    }

    #[test]
    fn misspending_example() {
        let g = GoodState { price: 2.0, x: 1.5, x_bar: 0.0, w_tilde: 1.1, w: 1.0, elapsed: 0.0 };
        assert!((misspending(&[g]) - 1.2).abs() < 1e-14);
        let g2 = GoodState { price: 4.0, ..g };
        assert!((misspending(&[g2]) - 2.4).abs() < 1e-14);
    }

    #[test]
    fn rates_at_c2_two() {
        assert!((DecayCase::Near.rate(1.0, 2.0) - 0.6).abs() < 1e-15);
        assert_eq!(DecayCase::Far.rate(1.0, 2.0), 0.25);
        assert_eq!(guaranteed_rate(1.0, 2.0), 0.25);
    }

    #[test]
    fn analytic_derivative_matches_central_difference() {
        let kappa = 1e-3;
        let wts = Weights { c1_lambda: 0.02 * 0.1, c2: 2.0 };
        let cases = [
            GoodState { price: 1.3, x: 1.4, x_bar: 1.2, w_tilde: 1.05, w: 1.0, elapsed: 0.3 },
            GoodState { price: 0.7, x: 0.8, x_bar: 1.1, w_tilde: 0.95, w: 1.0, elapsed: 0.6 },
            GoodState { price: 2.0, x: 0.9, x_bar: 0.95, w_tilde: 1.02, w: 1.0, elapsed: 0.2 },
            GoodState { price: 1.0, x: 1.1, x_bar: 0.9, w_tilde: 0.97, w: 1.0, elapsed: 0.8 },
        ];
        for start in cases {
            let seg = Segment { start, kappa, length: 0.1 };
            let h = 1e-6;
            let phi = |s: f64| phi_terms(&seg.at(s), wts).phi;
            let fd = (phi(0.05 + h) - phi(0.05 - h)) / (2.0 * h);
            let an = phi_right_derivative(&seg.at(0.05), kappa, wts);
            assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-8), "{fd} vs {an}");
        }
    }

    #[test]
    fn zero_segment_passes_trivially() {
        let eq = GoodState { price: 1.0, x: 1.0, x_bar: 1.0, w_tilde: 1.0, w: 1.0, elapsed: 0.1 };
        let c = check_derivative_bound(&Segment { start: eq, kappa: 1e-3, length: 0.5 }, W, SEGMENT_POINTS);
        assert_eq!(c.points, 32);
        assert!(c.violations.is_empty());
    }

    #[test]
    fn derivative_bound_flags_a_rising_potential() {
        // A warehouse gain far above what the hypothesis allows makes the
        // target run away from supply faster than φ can decay.
        let g = GoodState { price: 1.0, x: 2.0, x_bar: 2.0, w_tilde: 1.0, w: 1.0, elapsed: 0.1 };
        let c = check_derivative_bound(&Segment { start: g, kappa: 5.0, length: 0.1 }, W, 8);
        assert!(!c.violations.is_empty());
    }

    #[test]
    fn update_with_no_price_change_only_drops_the_discount() {
        let b = GoodState { price: 1.0, x: 1.0, x_bar: 1.0, w_tilde: 1.0, w: 1.0, elapsed: 0.7 };
        let other = GoodState { price: 2.0, x: 1.2, x_bar: 1.1, w_tilde: 1.0, w: 1.0, elapsed: 0.3 };
        let a = GoodState { elapsed: 0.0, ..b };
        let c = check_update_monotonicity(0, &[b, other], &[a, other], W, 0.01);
        assert_eq!(c.delta_phi, 0.0);
        assert!(c.passed());
        assert_eq!(c.case, UpdateCase::Boundary);
        assert_eq!(c.alpha_prime, None);
    }

    #[test]
    fn update_toward_target_decreases_potential() {
        let b = GoodState { price: 1.0, x: 1.5, x_bar: 1.5, w_tilde: 1.0, w: 1.0, elapsed: 1.0 };
        let a = GoodState { price: 1.1, x: 1.5 / 1.1, x_bar: 1.5 / 1.1, elapsed: 0.0, ..b };
        let c = check_update_monotonicity(0, &[b], &[a], W, 0.01);
        assert_eq!(c.case, UpdateCase::Toward);
        assert!(c.delta_phi < 0.0 && c.passed(), "{c:?}");
    }

    #[test]
    fn phase_tracking() {
        let samples = [(0.0, 1.01), (0.5, 1.02), (1.0, 1.001)];
        let r = phase_tracker(&samples, 1.04, &[0.005, 0.5], 3.0);
        assert_eq!(r.phase_two_entry, Some(1.0));
        assert_eq!(r.final_stretch_start, Some(0.0));
        assert_eq!(r.eta_times, vec![(0.005, Some(1.0)), (0.5, Some(0.0))]);

        let samples = [(0.0, 2.0), (1.0, 1.01), (1.5, 1.5), (2.0, 1.02)];
        let r = phase_tracker(&samples, 1.04, &[], 4.0);
        assert_eq!(r.phase_two_entry, Some(3.0));
        assert_eq!(r.final_stretch_start, Some(2.0));
    }
}
