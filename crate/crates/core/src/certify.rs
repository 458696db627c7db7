//! Independent re-checking of a trace.
//!
//! The certifier replays a trace record by record. Every stored value is
//! re-derived from the market and the parameters alone, and any disagreement
//! is reported as a mismatch. The checks it runs on top of the replay:
//!
//! - the between-update derivative bound on every event-free stretch
//! - the at-update non-increase and jump bounds inside Phase 2
//! - the one-time daily contraction
//! - exponential decay of φ after Phase 2 entry
//! - warehouse safety
//!
//! A check whose hypotheses fail is recorded as "condition not met", which is
//! not a violation.

use serde::Serialize;

use crate::demand::aggregate_demand_into;
use crate::elasticity::{MarketClass, MarketConstants};
use crate::engine::{one_time_update, ongoing_update, Scenario};
use crate::equilibrium::f_bound;
use crate::error::{Error, Result};
use crate::lyapunov::{
    check_derivative_bound, check_update_monotonicity, guaranteed_rate, misspending, phase_tracker, potential,
    GoodState, PhaseReport, Segment, Weights, SEGMENT_POINTS,
};
use crate::market::MarketSpec;
use crate::planner::{between_update_conditions, check_update_conditions, phase_two_threshold, zone_of, ParamSet};
use crate::trace::{RecordKind, TraceRecord};

/// Relative tolerance for recomputed trace values.
pub const MATCH_TOLERANCE: f64 = 1e-9;
/// Tolerance on stocks, as a fraction of capacity.
pub const STOCK_TOLERANCE: f64 = 1e-12;
/// Additive slack on the daily contraction bounds.
pub const CONTRACTION_SLACK: f64 = 1e-9;
/// Multiplicative slack on the exponential decay envelope.
pub const DECAY_SLACK: f64 = 1.001;
const DEADLINE_SLACK: f64 = 1e-9;
/// At most this many individual findings of each kind are kept.
const KEEP: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyOptions {
    pub etas: Vec<f64>,
    /// Check the daily contraction of the one-time market. Only meaningful
    /// for a synchronous schedule.
    pub daily_contraction: bool,
    /// Phase-1 duration estimate used for the safety deadline.
    pub phase_one_days: Option<f64>,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions { etas: vec![0.25, 0.1], daily_contraction: false, phase_one_days: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub record: usize,
    pub t: f64,
    pub field: String,
    pub stored: f64,
    pub recomputed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub check: &'static str,
    pub t: f64,
    pub good: Option<usize>,
    pub detail: String,
}

/// Counts plus the first few entries of one kind of finding.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Findings<T> {
    pub count: usize,
    pub first: Vec<T>,
}

impl<T> Default for Findings<T> {
    fn default() -> Self {
        Findings { count: 0, first: Vec::new() }
    }
}

impl<T> Findings<T> {
    fn push(&mut self, item: T) {
        self.count += 1;
        if self.first.len() < KEEP {
            self.first.push(item);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct ConditionsNotMet {
    /// Event-free stretches skipped because `4κ(1+c₂) ≤ λc₁ ≤ 1/2` fails.
    pub derivative_segments: usize,
    /// Updates outside Phase 2 (some price left the `f_II` band since the
    /// good's previous update).
    pub outside_phase_two: usize,
    /// Updates skipped because the parameters fail the update conditions.
    pub update_conditions: usize,
    /// Days skipped because λ exceeds the contraction step bound.
    pub contraction_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub t0: f64,
    pub phi0: f64,
    /// Guaranteed rate `κ/4` at `c₂ = 2`.
    pub rate: f64,
    /// Least-squares slope of `-ln φ` against time over day records.
    pub fitted_rate: Option<f64>,
    /// Largest `φ(t) / (φ(t0)·e^{-rate(t-t0)})` observed.
    pub worst_ratio: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SafetyReport {
    pub min_fill: f64,
    pub max_fill: f64,
    /// Records at which some warehouse sat in an outer buffer.
    pub outer_buffer_records: usize,
    pub safe_after: Option<f64>,
    /// Last time any warehouse was outside the safe region.
    pub last_unsafe: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationReport {
    pub records: usize,
    pub events_checked: usize,
    pub segments_checked: usize,
    pub derivative_points_checked: usize,
    pub phase_two_events_checked: usize,
    pub contraction_days_checked: usize,
    pub conditions_not_met: ConditionsNotMet,
    pub mismatches: Findings<Mismatch>,
    pub violations: Findings<Violation>,
    /// Largest `Δφ/φ` at a Phase-2 update.
    pub max_relative_update_increase: Option<f64>,
    pub max_alpha_prime_measured: Option<f64>,
    pub max_stock_drift: f64,
    pub phase: PhaseReport,
    pub decay: Option<DecayReport>,
    pub safety: Option<SafetyReport>,
    pub failure: Option<String>,
    pub end_time: f64,
}

impl CertificationReport {
    /// No mismatches, no violations and no runtime failure.
    pub fn is_clean(&self) -> bool {
        self.mismatches.count == 0 && self.violations.count == 0 && self.failure.is_none()
    }

    pub fn violations_named(&self, check: &str) -> usize {
        self.violations.first.iter().filter(|v| v.check == check).count()
    }
}

fn close(a: f64, b: f64, floor: f64) -> bool {
    (a - b).abs() <= MATCH_TOLERANCE * a.abs().max(b.abs()) + floor
}

pub struct Certifier<'a> {
    spec: &'a MarketSpec,
    params: ParamSet,
    constants: MarketConstants,
    p_star: Vec<f64>,
    scenario: Scenario,
    options: CertifyOptions,
    wts: Weights,
    w: Vec<f64>,
    chi: Vec<f64>,
    v_star: Vec<f64>,
    kappa: Vec<f64>,
    money: f64,
    f_two: f64,
    between_update_ok: bool,
    update_conditions_ok: bool,
    contraction_ok: bool,

    index: usize,
    started: bool,
    t: f64,
    prices: Vec<f64>,
    x: Vec<f64>,
    v: Vec<f64>,
    v_carry: Vec<f64>,
    tau: Vec<f64>,
    integral: Vec<f64>,
    max_f_since: Vec<f64>,
    stamp_x: Vec<f64>,
    last_day: Option<(f64, f64)>,

    f_series: Vec<(f64, f64)>,
    phi_series: Vec<(f64, f64, bool)>,
    report: CertificationReport,
}

impl<'a> Certifier<'a> {
    pub fn new(
        spec: &'a MarketSpec,
        params: ParamSet,
        constants: MarketConstants,
        p_star: Vec<f64>,
        scenario: Scenario,
        options: CertifyOptions,
    ) -> Self {
        let n = spec.n_goods();
        let f_two = phase_two_threshold(&constants, params.delta);
        let between_update_ok = between_update_conditions(&params).iter().all(|c| c.pass);
        let update_conditions_ok = check_update_conditions(&constants, &params).iter().all(|c| c.pass);
        let contraction_ok = match constants.class {
            MarketClass::Complements => params.lambda <= 1.0,
            MarketClass::Mixture => params.lambda <= 1.0 / (2.0 * constants.e_upper - 1.0),
        };
        let phase = PhaseReport { f_two, phase_two_entry: None, final_stretch_start: None, eta_times: Vec::new() };
        Certifier {
            spec,
            wts: Weights::from(&params),
            w: spec.supplies(),
            chi: spec.capacities(),
            v_star: spec.ideal_stocks(),
            kappa: spec.goods().iter().map(|g| params.kappa_for_ratio(g.capacity_ratio())).collect(),
            money: spec.total_money(),
            params,
            constants,
            p_star,
            scenario,
            options,
            f_two,
            between_update_ok,
            update_conditions_ok,
            contraction_ok,
            index: 0,
            started: false,
            t: 0.0,
            prices: Vec::new(),
            x: vec![0.0; n],
            v: Vec::new(),
            v_carry: Vec::new(),
            tau: vec![0.0; n],
            integral: vec![0.0; n],
            max_f_since: vec![1.0; n],
            stamp_x: vec![0.0; n],
            last_day: None,
            f_series: Vec::new(),
            phi_series: Vec::new(),
            report: CertificationReport {
                records: 0,
                events_checked: 0,
                segments_checked: 0,
                derivative_points_checked: 0,
                phase_two_events_checked: 0,
                contraction_days_checked: 0,
                conditions_not_met: ConditionsNotMet::default(),
                mismatches: Findings::default(),
                violations: Findings::default(),
                max_relative_update_increase: None,
                max_alpha_prime_measured: None,
                max_stock_drift: 0.0,
                phase,
                decay: None,
                safety: None,
                failure: None,
                end_time: 0.0,
            },
        }
    }

    fn ongoing(&self) -> bool {
        self.scenario == Scenario::Ongoing
    }

    fn mismatch(&mut self, field: impl Into<String>, stored: f64, recomputed: f64) {
        let m = Mismatch { record: self.index, t: self.t, field: field.into(), stored, recomputed };
        self.report.mismatches.push(m);
    }

    fn violation(&mut self, check: &'static str, t: f64, good: Option<usize>, detail: String) {
        let v = Violation { check, t, good, detail };
        self.report.violations.push(v);
    }

    fn good_states(&self) -> Vec<GoodState> {
        (0..self.w.len())
            .map(|j| {
                if !self.ongoing() {
                    return GoodState::instantaneous(self.prices[j], self.x[j], self.w[j]);
                }
                let elapsed = self.t - self.tau[j];
                GoodState {
                    price: self.prices[j],
                    x: self.x[j],
                    x_bar: if elapsed > 0.0 { self.integral[j] / elapsed } else { self.x[j] },
                    w_tilde: self.w[j] + self.kappa[j] * (self.v[j] - self.v_star[j]),
                    w: self.w[j],
                    elapsed,
                }
            })
            .collect()
    }

    fn check_dims(&self, rec: &TraceRecord) -> Result<()> {
        let n = self.w.len();
        let v_len = if self.ongoing() { n } else { 0 };
        if rec.prices.len() != n || rec.x.len() != n || rec.v.len() != v_len || rec.zones.len() != v_len {
            return Err(Error::Schema(format!(
                "record {} has {} prices, {} demands, {} stocks and {} zones for a {n}-good {:?} market",
                self.index,
                rec.prices.len(),
                rec.x.len(),
                rec.v.len(),
                rec.zones.len(),
                self.scenario
            )));
        }
        if let Some(g) = rec.good.filter(|&g| g >= n) {
            return Err(Error::Schema(format!("record {} names good {g}", self.index)));
        }
        Ok(())
    }

    /// Feeds the next record of the trace.
    pub fn observe(&mut self, rec: &TraceRecord) -> Result<()> {
        self.check_dims(rec)?;
        if !self.started {
            if rec.kind != RecordKind::Init || rec.t != 0.0 {
                return Err(Error::Schema("trace must start with an init record at t = 0".into()));
            }
            self.start(rec)?;
        } else {
            if !(rec.t >= self.t) {
                return Err(Error::Schema(format!("record {} goes back in time to {}", self.index, rec.t)));
            }
            self.step(rec)?;
        }
        self.after_record(rec);
        self.index += 1;
        Ok(())
    }

    fn start(&mut self, rec: &TraceRecord) -> Result<()> {
        self.started = true;
        self.prices = rec.prices.clone();
        aggregate_demand_into(self.spec, &self.prices, &mut self.x)?;
        self.stamp_x.copy_from_slice(&self.x);
        if self.ongoing() {
            self.v = rec.v.clone();
            self.v_carry = vec![0.0; self.v.len()];
        }
        Ok(())
    }

    fn step(&mut self, rec: &TraceRecord) -> Result<()> {
        let dt = rec.t - self.t;
        if dt > 0.0 {
            self.stamp_x.copy_from_slice(&self.x);
            if self.ongoing() {
                self.check_segments(dt);
            }
            self.integrate(dt);
            self.t = rec.t;
        }
        match rec.kind {
            RecordKind::Update => {
                let i = rec.good.ok_or_else(|| Error::Schema(format!("update record {} has no good", self.index)))?;
                self.apply_update(i, rec)?;
            }
            RecordKind::Init => return Err(Error::Schema(format!("record {} is a second init record", self.index))),
            RecordKind::Failure => {
                self.report.failure = Some(rec.message.clone().unwrap_or_else(|| "failure record".into()));
            }
            RecordKind::Day | RecordKind::End => {
                if rec.prices != self.prices {
                    self.mismatch("prices changed without an update", 0.0, 0.0);
                }
            }
        }
        if rec.kind == RecordKind::Day {
            self.check_contraction(rec.t);
        }
        Ok(())
    }

    fn check_segments(&mut self, dt: f64) {
        if !self.between_update_ok {
            self.report.conditions_not_met.derivative_segments += 1;
            return;
        }
        let states = self.good_states();
        for (j, start) in states.into_iter().enumerate() {
            let seg = Segment { start, kappa: self.kappa[j], length: dt };
            let c = check_derivative_bound(&seg, self.wts, SEGMENT_POINTS);
            self.report.segments_checked += 1;
            self.report.derivative_points_checked += c.points;
            for v in c.violations {
                let detail = format!(
                    "at +{:.3e}: dphi/dt = {:.6e} exceeds {:.6e} ({:?} case, phi = {:.6e})",
                    v.offset, v.derivative, v.bound, v.case, v.phi
                );
                self.violation("derivative_bound", self.t + v.offset, Some(j), detail);
            }
        }
    }

    fn integrate(&mut self, dt: f64) {
        for j in 0..self.w.len() {
            self.integral[j] += self.x[j] * dt;
        }
        if !self.ongoing() {
            return;
        }
        for j in 0..self.w.len() {
            // Same compensated accumulation as the simulator.
            let add = (self.w[j] - self.x[j]) * dt;
            let (s, c) = (self.v[j], self.v_carry[j]);
            let t = s + add;
            let c = if s.abs() >= add.abs() { c + ((s - t) + add) } else { c + ((add - t) + s) };
            self.v[j] = t;
            self.v_carry[j] = c;
        }
    }

    fn stocks(&self) -> Vec<f64> {
        self.v.iter().zip(&self.v_carry).map(|(s, c)| s + c).collect()
    }

    fn apply_update(&mut self, i: usize, rec: &TraceRecord) -> Result<()> {
        self.report.events_checked += 1;
        let before = self.good_states();
        let old = self.prices[i];
        let delta_t = self.t - self.tau[i];
        let (expected, x_bar, w_tilde) = if self.ongoing() {
            let b = &before[i];
            let p = ongoing_update(old, b.x_bar - b.w_tilde, b.w, self.params.lambda, delta_t, self.params.rule);
            (p, b.x_bar, b.w_tilde)
        } else {
            (one_time_update(old, self.stamp_x[i], self.w[i], self.params.lambda), self.stamp_x[i], self.w[i])
        };
        if !close(rec.prices[i], expected, 0.0) {
            self.mismatch(format!("prices[{i}]"), rec.prices[i], expected);
        }
        let moved: Vec<usize> = (0..rec.prices.len()).filter(|&j| j != i && rec.prices[j] != self.prices[j]).collect();
        for j in moved {
            self.mismatch(format!("prices[{j}] changed at an update of good {i}"), rec.prices[j], self.prices[j]);
        }
        let checks =
            [("x_bar", rec.x_bar, x_bar), ("w_tilde", rec.w_tilde, w_tilde), ("delta_t", rec.delta_t, delta_t)];
        for (name, stored, ours) in checks {
            match stored {
                Some(s) if close(s, ours, 1e-15 * self.w[i]) => {}
                Some(s) => self.mismatch(name, s, ours),
                None => self.mismatch(format!("{name} missing"), f64::NAN, ours),
            }
        }
        if !(delta_t > 0.0 && delta_t <= 1.0 + DEADLINE_SLACK) {
            self.violation("liveness", self.t, Some(i), format!("update after {delta_t} days"));
        }

        self.prices = rec.prices.clone();
        aggregate_demand_into(self.spec, &self.prices, &mut self.x)?;
        self.tau[i] = self.t;
        self.integral[i] = 0.0;

        if self.ongoing() {
            let after = self.good_states();
            let phase_two = self.max_f_since[i] <= self.f_two;
            if !phase_two {
                self.report.conditions_not_met.outside_phase_two += 1;
            } else if !self.update_conditions_ok {
                self.report.conditions_not_met.update_conditions += 1;
            } else {
                let c = check_update_monotonicity(i, &before, &after, self.wts, self.params.delta);
                self.report.phase_two_events_checked += 1;
                if c.phi_before > 0.0 {
                    let rel = c.delta_phi / c.phi_before;
                    let m = self.report.max_relative_update_increase.get_or_insert(rel);
                    *m = m.max(rel);
                }
                if let Some(a) = c.alpha_prime {
                    let m = self.report.max_alpha_prime_measured.get_or_insert(a);
                    *m = m.max(a);
                }
                if !c.monotone {
                    let d = format!("dphi = {:.6e} with phi = {:.6e}", c.delta_phi, c.phi_before);
                    self.violation("update_monotonicity", self.t, Some(i), d);
                }
                if !c.within_bound {
                    let d = format!("dphi = {:.6e} above the {:?} bound {:.6e}", c.delta_phi, c.case, c.bound);
                    self.violation("update_bound", self.t, Some(i), d);
                }
            }
        }
        Ok(())
    }

    fn check_contraction(&mut self, t: f64) {
        if !self.options.daily_contraction {
            return;
        }
        let f = f_bound(&self.prices, &self.p_star);
        let prev = self.last_day.replace((t, f));
        let Some((t_prev, f_prev)) = prev else { return };
        if t - t_prev != 1.0 {
            return;
        }
        if !self.contraction_ok {
            self.report.conditions_not_met.contraction_days += 1;
            return;
        }
        self.report.contraction_days_checked += 1;
        let (lambda, beta) = (self.params.lambda, self.constants.beta);
        let bound = if f_prev.powf(beta) >= 2.0 {
            (1.0 - lambda / 2.0) * f_prev
        } else {
            f_prev.powf(1.0 - lambda * beta / (2.0 * std::f64::consts::LN_2))
        };
        if f > bound + CONTRACTION_SLACK {
            self.violation(
                "daily_contraction",
                t,
                None,
                format!("f went from {f_prev:.12} to {f:.12}, bound {bound:.12}"),
            );
        }
    }

    fn after_record(&mut self, rec: &TraceRecord) {
        self.report.records += 1;
        self.report.end_time = self.t;
        let n = self.w.len();
        let bad: Vec<usize> = (0..n).filter(|&j| !close(rec.x[j], self.x[j], 1e-15 * self.w[j])).collect();
        for j in bad {
            self.mismatch(format!("x[{j}]"), rec.x[j], self.x[j]);
        }

        let goods = self.good_states();
        let floor = 1e-12 * self.money;
        let phi = potential(&goods, self.wts).total;
        let miss = misspending(&goods);
        let f = f_bound(&self.prices, &self.p_star);
        for (name, stored, ours) in [("phi", rec.phi, phi), ("misspending", rec.misspending, miss), ("f", rec.f, f)] {
            if !close(stored, ours, floor) {
                self.mismatch(name, stored, ours);
            }
        }
        if self.index == 0 {
            self.last_day = Some((0.0, f));
        }
        for m in self.max_f_since.iter_mut() {
            *m = m.max(f);
        }
        if let Some(i) = rec.good.filter(|_| rec.kind == RecordKind::Update) {
            self.max_f_since[i] = f;
        }
        self.f_series.push((rec.t, f));
        self.phi_series.push((rec.t, phi, rec.kind == RecordKind::Day));

        if self.ongoing() {
            let v = self.stocks();
            for j in 0..n {
                let drift = (rec.v[j] - v[j]).abs() / self.chi[j];
                self.report.max_stock_drift = self.report.max_stock_drift.max(drift);
                if drift > STOCK_TOLERANCE {
                    self.mismatch(format!("v[{j}]"), rec.v[j], v[j]);
                }
                let zone = zone_of(v[j], self.chi[j]).index;
                if rec.zones[j] != zone {
                    self.mismatch(format!("zones[{j}]"), rec.zones[j] as f64, zone as f64);
                }
            }
            self.track_safety(&v);
        }
        if rec.kind != RecordKind::Failure {
            for j in 0..n {
                if self.t - self.tau[j] > 1.0 + DEADLINE_SLACK {
                    self.violation("liveness", self.t, Some(j), format!("no update for {} days", self.t - self.tau[j]));
                }
            }
        }
    }

    fn track_safety(&mut self, v: &[f64]) {
        let t = self.t;
        let s = self.report.safety.get_or_insert(SafetyReport {
            min_fill: f64::INFINITY,
            max_fill: f64::NEG_INFINITY,
            outer_buffer_records: 0,
            safe_after: None,
            last_unsafe: None,
        });
        let mut outer = false;
        let mut unsafe_now = false;
        for (vj, c) in v.iter().zip(&self.chi) {
            s.min_fill = s.min_fill.min(vj / c);
            s.max_fill = s.max_fill.max(vj / c);
            let z = zone_of(*vj, *c);
            outer |= z.index == 0 || z.index == 7;
            unsafe_now |= !z.safe;
        }
        if outer {
            s.outer_buffer_records += 1;
        }
        if unsafe_now {
            s.last_unsafe = Some(t);
        }
        let out_of_range = v.iter().zip(&self.chi).position(|(vj, c)| !(*vj > 0.0 && vj < c));
        if let Some(j) = out_of_range {
            self.violation("stock_range", self.t, Some(j), format!("stock {} outside (0, {})", v[j], self.chi[j]));
        }
    }

    /// Runs the analyses that need the whole trace.
    pub fn finish(mut self) -> CertificationReport {
        let end = self.t;
        let etas = self.options.etas.clone();
        self.report.phase = phase_tracker(&self.f_series, self.f_two, &etas, end);
        if self.ongoing() {
            self.analyse_decay();
            self.analyse_safety();
        }
        self.report
    }

    fn analyse_decay(&mut self) {
        let Some(stretch) = self.report.phase.final_stretch_start else { return };
        let Some(start) = self.phi_series.iter().position(|p| p.2 && p.0 >= stretch + 1.0) else { return };
        let (t0, phi0, _) = self.phi_series[start];
        let kappa = self.kappa.iter().copied().fold(f64::INFINITY, f64::min);
        let rate = guaranteed_rate(kappa, self.params.c2);
        let floor = 1e-12 * self.money;
        let mut worst = 0.0f64;
        let mut points = 0;
        let mut fit = (0.0, 0.0, 0.0, 0.0, 0usize);
        // Records sharing the anchor's time but preceding it are not covered.
        for &(t, phi, day) in &self.phi_series[start..] {
            points += 1;
            let envelope = phi0 * (-rate * (t - t0)).exp();
            if phi > 0.0 {
                worst = worst.max(phi / envelope.max(f64::MIN_POSITIVE));
            }
            if phi > envelope * DECAY_SLACK + floor {
                let d = format!("phi = {phi:.6e} above envelope {envelope:.6e}");
                self.report.violations.push(Violation { check: "phase_two_decay", t, good: None, detail: d });
            }
            if day && phi > 0.0 {
                let y = -phi.ln();
                fit = (fit.0 + t, fit.1 + y, fit.2 + t * t, fit.3 + t * y, fit.4 + 1);
            }
        }
        let (st, sy, stt, sty, k) = fit;
        let k = k as f64;
        let denom = k * stt - st * st;
        let fitted_rate = (k >= 2.0 && denom > 0.0).then(|| (k * sty - st * sy) / denom);
        self.report.decay = Some(DecayReport { t0, phi0, rate, fitted_rate, worst_ratio: worst, points });
    }

    fn analyse_safety(&mut self) {
        let beta = self.constants.beta;
        let kappa = self.kappa.iter().copied().fold(f64::INFINITY, f64::min);
        let measured = self.report.phase.phase_two_entry;
        let phase_one = match (measured, self.options.phase_one_days) {
            (Some(m), Some(d)) => Some(m.max(d)),
            (m, d) => m.or(d),
        };
        let Some(safety) = self.report.safety.as_mut() else { return };
        safety.safe_after = phase_one.map(|d| d + 32.0 / beta + 2.0 / kappa);
        if let (Some(after), Some(last)) = (safety.safe_after, safety.last_unsafe) {
            if last >= after {
                let d = format!("a warehouse was unsafe at t = {last} after the deadline {after}");
                self.report.violations.push(Violation { check: "late_unsafe", t: last, good: None, detail: d });
            }
        }
    }
}

/// Certifies a complete in-memory trace.
pub fn certify_trace(
    spec: &MarketSpec,
    params: ParamSet,
    constants: MarketConstants,
    p_star: Vec<f64>,
    scenario: Scenario,
    options: CertifyOptions,
    records: &[TraceRecord],
) -> Result<CertificationReport> {
    let mut c = Certifier::new(spec, params, constants, p_star, scenario, options);
    for r in records {
        c.observe(r)?;
    }
    Ok(c.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elasticity::closed_form_constants;
    use crate::engine::{run, Schedule};
    use crate::equilibrium::{solve_equilibrium, DEFAULT_TOLERANCE};
    use crate::market::{Buyer, Good, UtilityTree};
    use crate::planner::{plan_market, UpdateRule};

    struct Fixture {
        spec: MarketSpec,
        params: ParamSet,
        constants: MarketConstants,
        p_star: Vec<f64>,
    }

    fn fixture() -> Fixture {
        let spec = MarketSpec::new(
            vec![Good::new(0, 1.0, 4096.0), Good::new(1, 2.0, 8192.0)],
            vec![Buyer::new(0, 3.0, UtilityTree::ces(-0.2, &[1.0, 2.0]))],
        );
        let base = closed_form_constants(&spec, 0.0).unwrap();
        let (constants, params) = plan_market(&base, 4096.0, UpdateRule::Linear).unwrap();
        let p_star = solve_equilibrium(&spec, DEFAULT_TOLERANCE).unwrap().p_star;
        Fixture { spec, params, constants, p_star }
    }

    fn trace(fx: &Fixture, params: ParamSet, days: f64) -> Vec<TraceRecord> {
        let p0 = vec![fx.p_star[0] * 1.6, fx.p_star[1] / 1.3];
        let mut out = Vec::new();
        run(&fx.spec, params, Schedule::Synchronous, p0, None, fx.p_star.clone(), days, &mut out).unwrap();
        out
    }

    fn certify(fx: &Fixture, params: ParamSet, records: &[TraceRecord]) -> CertificationReport {
        let options = CertifyOptions { phase_one_days: Some(5.0), ..Default::default() };
        certify_trace(&fx.spec, params, fx.constants.clone(), fx.p_star.clone(), Scenario::Ongoing, options, records)
            .unwrap()
    }

    #[test]
    fn untampered_trace_is_clean() {
        let fx = fixture();
        let records = trace(&fx, fx.params, 40.0);
        let report = certify(&fx, fx.params, &records);
        assert!(report.is_clean(), "{:?}", report.violations);
        assert_eq!(report.records, records.len());
        assert!(report.segments_checked > 0 && report.events_checked > 0);
    }

    #[test]
    fn edited_price_is_caught_at_that_record() {
        let fx = fixture();
        let mut records = trace(&fx, fx.params, 10.0);
        let k = records.iter().position(|r| r.kind == RecordKind::Update && r.t == 4.0).unwrap();
        records[k].prices[1] *= 1.0 + 1e-6;
        let report = certify(&fx, fx.params, &records);
        assert!(report.mismatches.count > 0);
        assert_eq!(report.mismatches.first[0].record, k);
    }

    #[test]
    fn infeasible_parameters_are_not_violations() {
        let fx = fixture();
        let mut params = fx.params;
        params.lambda = 0.9;
        let records = trace(&fx, params, 10.0);
        let report = certify(&fx, params, &records);
        assert_eq!(report.violations_named("update_monotonicity"), 0);
        assert!(report.conditions_not_met.update_conditions > 0);
    }

    #[test]
    fn decay_anchor_skips_earlier_records_at_the_same_instant() {
        let fx = fixture();
        let records = trace(&fx, fx.params, 200.0);
        let report = certify(&fx, fx.params, &records);
        let decay = report.decay.unwrap();
        assert_eq!(decay.t0.fract(), 0.0);
        assert!(decay.worst_ratio <= 1.0 + 1e-12, "{decay:?}");
    }

    #[test]
    fn trace_must_start_with_init() {
        let fx = fixture();
        let records = trace(&fx, fx.params, 2.0);
        assert!(matches!(
            certify_trace(
                &fx.spec,
                fx.params,
                fx.constants.clone(),
                fx.p_star.clone(),
                Scenario::Ongoing,
                CertifyOptions::default(),
                &records[1..]
            ),
            Err(Error::Schema(_))
        ));
    }
}
