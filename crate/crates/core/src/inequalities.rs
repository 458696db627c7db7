//! Scalar inequalities used by the convergence arguments, as predicates that
//! can be swept over their domains.
//!
//! Each check evaluates `rhs - lhs` at the domain corners, on a 100 × 100
//! log-spaced interior grid, and at seeded uniform random points. A sample
//! passes when the slack is at least `-4ε·max(|lhs|, |rhs|, 1)`, which only
//! forgives rounding at the equality cases. Differences of powers close to
//! one are evaluated through `ln_1p`/`exp_m1` so that small-ε samples are not
//! swamped by cancellation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const DEFAULT_SAMPLES: usize = 100_000;
const GRID: usize = 100;
/// Upper end of the sampled range for parameters the inequalities leave unbounded.
const E_MAX: f64 = 50.0;
const X_MAX: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IneqCheck {
    pub name: &'static str,
    pub domain: &'static str,
    pub samples: usize,
    pub violations: usize,
    pub worst_slack: f64,
    pub worst_point: [f64; 2],
}

impl IneqCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// A two-parameter inequality `lhs(a, b) ≤ rhs(a, b)`.
struct Part {
    name: &'static str,
    domain: &'static str,
    /// Maps a point of the unit square onto the domain.
    map: fn(f64, f64) -> Option<(f64, f64)>,
    sides: fn(f64, f64) -> (f64, f64),
}

fn sweep(part: &Part, samples: usize, seed: u64) -> IneqCheck {
    let mut check = IneqCheck {
        name: part.name,
        domain: part.domain,
        samples: 0,
        violations: 0,
        worst_slack: f64::INFINITY,
        worst_point: [f64::NAN; 2],
    };
    let mut visit = |u: f64, s: f64| {
        let Some((a, b)) = (part.map)(u, s) else { return };
        let (lhs, rhs) = (part.sides)(a, b);
        let slack = rhs - lhs;
        check.samples += 1;
        if !(slack >= check.worst_slack) {
            check.worst_slack = slack;
            check.worst_point = [a, b];
        }
        let floor = 4.0 * f64::EPSILON * lhs.abs().max(rhs.abs()).max(1.0);
        if !(slack >= -floor) {
            check.violations += 1;
        }
    };
    for &u in &[0.0, 1.0] {
        for &s in &[0.0, 1.0] {
            visit(u, s);
        }
    }
    let grid: Vec<f64> = (0..GRID).map(|k| 10f64.powf(-6.0 + 6.0 * (k as f64 + 0.5) / GRID as f64)).collect();
    for &u in &grid {
        for &s in &grid {
            visit(u, s);
            visit(1.0 - u, 1.0 - s);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let u: f64 = rng.random();
        let s: f64 = rng.random();
        visit(u, s);
    }
    check
}

fn unit(u: f64, s: f64) -> Option<(f64, f64)> {
    Some((u, s))
}

const STEP_BOUNDS: [Part; 3] = [
    Part {
        name: "step a: 1/(1+l) <= 1 - l/2",
        domain: "0 <= l <= 1",
        map: unit,
        sides: |l, _| (1.0 / (1.0 + l), 1.0 - l / 2.0),
    },
    Part {
        name: "step b: 1 - l(1 - 1/x) <= x^(-l/(2 ln 2))",
        domain: "0 <= l <= 1, 1 <= x <= 2",
        map: |u, s| Some((u, 1.0 + s)),
        sides: |l, x| (1.0 - l * (1.0 - 1.0 / x), x.powf(-l / (2.0 * std::f64::consts::LN_2))),
    },
    Part {
        name: "step c: 1/(1 + l(x-1)) <= x^(-l)",
        domain: "0 <= l <= 1, 1 <= x <= 2",
        map: |u, s| Some((u, 1.0 + s)),
        sides: |l, x| (1.0 / (1.0 + l * (x - 1.0)), x.powf(-l)),
    },
];

const POWER_BOUNDS: [Part; 5] = [
    Part {
        name: "power a: (1+e)^x - 1 <= e x",
        domain: "0 <= e <= 1, 0 <= x <= 1",
        map: unit,
        sides: |e, x| ((x * e.ln_1p()).exp_m1(), e * x),
    },
    Part {
        name: "power b: 1 - (1-e)^x <= (1 + e/(2(1-e))) e x",
        domain: "0 <= e < 1, 0 <= x <= 1",
        map: |u, s| (u < 1.0).then_some((u, s)),
        sides: |e, x| (-(x * (-e).ln_1p()).exp_m1(), (1.0 + e / (2.0 * (1.0 - e))) * e * x),
    },
    Part {
        name: "power c: (1-e)^(1-E) - 1 <= (E-1) e/(1-r), r = max(E e/2, e)",
        domain: "1 <= E <= 50, e >= 0, max(E e/2, e) < 1",
        map: |u, s| {
            let big_e = 1.0 + (E_MAX - 1.0) * u;
            let e = s * (2.0 / big_e).min(1.0);
            let r = (big_e * e / 2.0).max(e);
            (r < 1.0).then_some((big_e, e))
        },
        sides: |big_e, e| {
            let r = (big_e * e / 2.0).max(e);
            (((1.0 - big_e) * (-e).ln_1p()).exp_m1(), (big_e - 1.0) * e / (1.0 - r))
        },
    },
    Part {
        name: "power d: 1 - (1+e)^(1-E) <= (E-1) e",
        domain: "1 <= E <= 50, 0 <= e <= 1",
        map: |u, s| Some((1.0 + (E_MAX - 1.0) * u, s)),
        sides: |big_e, e| (-((1.0 - big_e) * e.ln_1p()).exp_m1(), (big_e - 1.0) * e),
    },
    Part {
        name: "power e: (1-e)^(-x) <= 1 + x e/(1 - e x)",
        domain: "1 <= x <= 100, e >= 0, e x < 1",
        map: |u, s| {
            let x = 1.0 + (X_MAX - 1.0) * u;
            let e = s / x;
            (e * x < 1.0).then_some((x, e))
        },
        sides: |x, e| ((-x * (-e).ln_1p()).exp(), 1.0 + x * e / (1.0 - e * x)),
    },
];

pub fn step_bound_checks(samples: usize, seed: u64) -> Vec<IneqCheck> {
    STEP_BOUNDS.iter().enumerate().map(|(k, p)| sweep(p, samples, seed.wrapping_add(k as u64))).collect()
}

pub fn power_bound_checks(samples: usize, seed: u64) -> Vec<IneqCheck> {
    POWER_BOUNDS.iter().enumerate().map(|(k, p)| sweep(p, samples, seed.wrapping_add(100 + k as u64))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_points() {
        let (l, r) = (STEP_BOUNDS[0].sides)(0.5, 0.0);
        assert!((l - 2.0 / 3.0).abs() < 1e-15 && r == 0.75);
        let (l, r) = (STEP_BOUNDS[0].sides)(0.0, 0.0);
        assert_eq!((l, r), (1.0, 1.0));
        let (l, r) = (STEP_BOUNDS[2].sides)(1.0, 2.0);
        assert_eq!((l, r), (0.5, 0.5));
        let (l, r) = (POWER_BOUNDS[0].sides)(1.0, 1.0);
        assert_eq!((l, r), (1.0, 1.0));
        let (l, r) = (POWER_BOUNDS[3].sides)(2.0, 0.5);
        assert!((l - 1.0 / 3.0).abs() < 1e-15 && r == 0.5);
        let (l, r) = (POWER_BOUNDS[4].sides)(2.0, 0.25);
        assert!((l - 16.0 / 9.0).abs() < 1e-14 && r == 2.0);
    }

    #[test]
    fn small_sweeps_pass() {
        for c in step_bound_checks(2000, 1).into_iter().chain(power_bound_checks(2000, 1)) {
            assert!(c.passed(), "{c:?}");
            assert!(c.samples > 2000);
        }
    }

    #[test]
    fn a_false_inequality_is_caught() {
        let bogus = Part { name: "bogus", domain: "unit", map: unit, sides: |a, _| (a, 0.5) };
        let c = sweep(&bogus, 100, 3);
        assert!(c.violations > 0);
        assert_eq!(c.worst_point[0], 1.0);
    }
}
