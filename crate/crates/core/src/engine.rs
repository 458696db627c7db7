//! Event-driven simulation of price updates.
//!
//! Prices change only at update events, so demand is piecewise constant and
//! warehouse stocks move linearly between events. The simulator jumps from
//! event to event (and to each integer day boundary), integrating stocks and
//! demand exactly over each stretch.
//!
//! Two markets are supported. The one-time market has no warehouses and
//! updates `p ← p(1 + λ·min{1, (x-w)/w})` from instantaneous demand. The
//! ongoing market keeps a warehouse per good and updates
//!
//! ```text
//! x̄ = (∫ x dt since τ)/Δt,  w̃ = w + κ(v - v*),  z̄ = x̄ - w̃
//! linear:       p ← p·(1 + λ·min{1, z̄/w}·Δt)
//! exponential:  p ← p·exp(λ·min{1, z̄/w}·Δt)
//! ```
//!
//! Goods due at the same instant are updated in index order. In the one-time
//! market they all react to the demand in force just before that instant, so
//! a synchronous schedule applies one simultaneous daily step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demand::aggregate_demand_into;
use crate::equilibrium::f_bound;
use crate::error::{Error, Result};
use crate::lyapunov::{misspending, potential, GoodState, PotentialSnapshot, Weights};
use crate::market::MarketSpec;
use crate::planner::{zone_of, ParamSet, UpdateRule};
use crate::trace::{RecordKind, TraceRecord, TraceSink};

/// Shortest gap between two updates of one good, capping activity at 10⁴
/// updates per good per day.
pub const MIN_GAP: f64 = 1e-4;
/// Slack on the once-a-day deadline, absorbing rounding in event times.
const DEADLINE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    OneTime,
    #[default]
    Ongoing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum Schedule {
    /// Every good updates at each integer day.
    Synchronous,
    /// Good `i` updates at `offsets[i] + k` for `k = 0, 1, ...`.
    Staggered { offsets: Vec<f64> },
    /// Independent exponential gaps with the given mean, clipped to
    /// `[MIN_GAP, 1]`.
    RandomWithDeadline { seed: u64, mean_gap: f64 },
}

impl Schedule {
    /// Offsets `1/n, 2/n, ..., 1`.
    pub fn evenly_staggered(n: usize) -> Self {
        Schedule::Staggered { offsets: (1..=n).map(|k| k as f64 / n as f64).collect() }
    }
}

struct Scheduler {
    schedule: Schedule,
    rng: ChaCha8Rng,
    next: Vec<f64>,
}

impl Scheduler {
    fn new(schedule: Schedule, n: usize) -> Result<Self> {
        let seed = match &schedule {
            Schedule::RandomWithDeadline { seed, mean_gap } => {
                if !(*mean_gap > 0.0 && mean_gap.is_finite()) {
                    return Err(Error::Precondition(format!("mean gap {mean_gap} must be positive")));
                }
                *seed
            }
            Schedule::Staggered { offsets } => {
                if offsets.len() != n {
                    return Err(Error::Dimension(format!("{} offsets for {n} goods", offsets.len())));
                }
                if let Some(o) = offsets.iter().find(|o| !(**o > 0.0 && **o <= 1.0)) {
                    return Err(Error::Precondition(format!("offset {o} must lie in (0, 1]")));
                }
                0
            }
            Schedule::Synchronous => 0,
        };
        let mut s = Scheduler { schedule, rng: ChaCha8Rng::seed_from_u64(seed), next: Vec::with_capacity(n) };
        for i in 0..n {
            let first = match &s.schedule {
                Schedule::Synchronous => 1.0,
                Schedule::Staggered { offsets } => offsets[i],
                Schedule::RandomWithDeadline { .. } => s.gap(),
            };
            s.next.push(first);
        }
        Ok(s)
    }

    fn gap(&mut self) -> f64 {
        match self.schedule {
            Schedule::RandomWithDeadline { mean_gap, .. } => {
                let u: f64 = self.rng.random();
                (-mean_gap * (-u).ln_1p()).clamp(MIN_GAP, 1.0)
            }
            _ => 1.0,
        }
    }

    fn reschedule(&mut self, good: usize, t: f64) {
        let g = self.gap();
        self.next[good] = t + g;
    }

    fn earliest(&self) -> f64 {
        self.next.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateEvent {
    pub time: f64,
    pub good: usize,
    pub old_price: f64,
    pub new_price: f64,
    pub x_bar: f64,
    pub w_tilde: f64,
    pub z_bar: f64,
    pub delta_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimState {
    pub time: f64,
    pub prices: Vec<f64>,
    /// Warehouse stocks; empty in the one-time market.
    pub stocks: Vec<f64>,
    pub last_update: Vec<f64>,
    /// `∫ x_i dt` since the last update of good `i`.
    pub demand_integral: Vec<f64>,
    /// Demand at the current prices.
    pub demand: Vec<f64>,
    /// `∫ x_i dt` since time 0.
    pub cumulative_demand: Vec<f64>,
    pub event_log: Vec<UpdateEvent>,
}

/// `p ← p(1 + λ·min{1, (x-w)/w})`.
pub fn one_time_update(price: f64, x: f64, w: f64, lambda: f64) -> f64 {
    price * (1.0 + lambda * ((x - w) / w).min(1.0))
}

/// The ongoing-market rule applied to a target excess demand `z_bar`
/// accumulated over `delta_t` days.
pub fn ongoing_update(price: f64, z_bar: f64, w: f64, lambda: f64, delta_t: f64, rule: UpdateRule) -> f64 {
    let step = lambda * (z_bar / w).min(1.0) * delta_t;
    match rule {
        UpdateRule::Linear => price * (1.0 + step),
        UpdateRule::Exponential => price * step.exp(),
    }
}

/// Initial prices `p_i* · f^(u_i)` with `u_i` uniform on `[-1, 1]` and one
/// randomly chosen good pinned at `u = ±1`, so the prices are exactly
/// `f`-bounded.
pub fn distorted_prices(p_star: &[f64], f_init: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u: Vec<f64> = p_star.iter().map(|_| rng.random_range(-1.0..=1.0)).collect();
    if !u.is_empty() {
        let k = rng.random_range(0..u.len());
        u[k] = if rng.random::<bool>() { 1.0 } else { -1.0 };
    }
    p_star.iter().zip(&u).map(|(p, e)| p * f_init.powf(*e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed { t: f64, good: Option<usize>, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub end_time: f64,
    pub events: usize,
    pub records: usize,
    /// Largest `|v_i(t) - v_i(0) + ∫x_i - w_i t| / χ_i` seen at any record.
    pub max_conservation_error: f64,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn new(v: f64) -> Self {
        Compensated { sum: v, carry: 0.0 }
    }

    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub struct Simulation<'a> {
    spec: &'a MarketSpec,
    params: ParamSet,
    scenario: Scenario,
    p_star: Vec<f64>,
    w: Vec<f64>,
    chi: Vec<f64>,
    v_star: Vec<f64>,
    kappa: Vec<f64>,
    scheduler: Scheduler,
    state: SimState,
    initial_stocks: Vec<f64>,
    stocks: Vec<Compensated>,
    cumulative: Vec<Compensated>,
    conservation: f64,
}

impl<'a> Simulation<'a> {
    /// Sets up a run at time 0. Initial stocks default to the ideal stocks
    /// `χ_i/2` and are ignored in the one-time market.
    pub fn new(
        spec: &'a MarketSpec,
        params: ParamSet,
        scenario: Scenario,
        schedule: Schedule,
        initial_prices: Vec<f64>,
        initial_stocks: Option<Vec<f64>>,
        p_star: Vec<f64>,
    ) -> Result<Self> {
        let n = spec.n_goods();
        for (name, len) in [("initial prices", initial_prices.len()), ("equilibrium prices", p_star.len())] {
            if len != n {
                return Err(Error::Dimension(format!("{name} have length {len}, market has {n} goods")));
            }
        }
        if !(params.lambda > 0.0 && params.lambda <= 1.0) {
            return Err(Error::Precondition(format!("lambda = {} must lie in (0, 1]", params.lambda)));
        }
        let w = spec.supplies();
        let chi = spec.capacities();
        let v_star = spec.ideal_stocks();
        let kappa = spec.goods().iter().map(|g| params.kappa_for_ratio(g.capacity_ratio())).collect();
        let stocks = match scenario {
            Scenario::OneTime => Vec::new(),
            Scenario::Ongoing => {
                let v = initial_stocks.unwrap_or_else(|| v_star.clone());
                if v.len() != n {
                    return Err(Error::Dimension(format!("{} initial stocks for {n} goods", v.len())));
                }
                if let Some(i) = (0..n).find(|&i| !(v[i] > 0.0 && v[i] < chi[i])) {
                    return Err(Error::Domain {
                        good: i,
                        message: format!("initial stock {} outside (0, {})", v[i], chi[i]),
                    });
                }
                v
            }
        };
        let mut demand = vec![0.0; n];
        aggregate_demand_into(spec, &initial_prices, &mut demand)?;
        let state = SimState {
            time: 0.0,
            prices: initial_prices,
            stocks: stocks.clone(),
            last_update: vec![0.0; n],
            demand_integral: vec![0.0; n],
            demand,
            cumulative_demand: vec![0.0; n],
            event_log: Vec::new(),
        };
        Ok(Simulation {
            spec,
            params,
            scenario,
            p_star,
            w,
            chi,
            v_star,
            kappa,
            scheduler: Scheduler::new(schedule, n)?,
            stocks: stocks.iter().map(|&v| Compensated::new(v)).collect(),
            cumulative: vec![Compensated::default(); n],
            initial_stocks: stocks,
            state,
            conservation: 0.0,
        })
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn kappas(&self) -> &[f64] {
        &self.kappa
    }

    /// The inputs of φ for every good at the current instant.
    pub fn good_states(&self) -> Vec<GoodState> {
        let s = &self.state;
        (0..self.w.len())
            .map(|j| match self.scenario {
                Scenario::OneTime => GoodState::instantaneous(s.prices[j], s.demand[j], self.w[j]),
                Scenario::Ongoing => {
                    let elapsed = s.time - s.last_update[j];
                    GoodState {
                        price: s.prices[j],
                        x: s.demand[j],
                        x_bar: if elapsed > 0.0 { s.demand_integral[j] / elapsed } else { s.demand[j] },
                        w_tilde: self.w_tilde(j),
                        w: self.w[j],
                        elapsed,
                    }
                }
            })
            .collect()
    }

    pub fn potential(&self) -> PotentialSnapshot {
        potential(&self.good_states(), Weights::from(&self.params))
    }

    fn w_tilde(&self, j: usize) -> f64 {
        self.w[j] + self.kappa[j] * (self.state.stocks[j] - self.v_star[j])
    }

    /// Moves time forward to `until` with prices fixed. Fails, after
    /// applying the move, if a warehouse leaves `(0, χ)`.
    pub fn advance(&mut self, until: f64) -> Result<()> {
        let dt = until - self.state.time;
        if dt < 0.0 {
            return Err(Error::Simulation {
                t: self.state.time,
                message: format!("cannot advance backwards to {until}"),
            });
        }
        if dt == 0.0 {
            return Ok(());
        }
        let start = self.state.time;
        for i in 0..self.w.len() {
            let x = self.state.demand[i];
            self.state.demand_integral[i] += x * dt;
            self.cumulative[i].add(x * dt);
            self.state.cumulative_demand[i] = self.cumulative[i].value();
        }
        self.state.time = until;
        if self.scenario == Scenario::OneTime {
            return Ok(());
        }
        let mut failure = None;
        for i in 0..self.w.len() {
            let flow = self.w[i] - self.state.demand[i];
            self.stocks[i].add(flow * dt);
            let v = self.stocks[i].value();
            self.state.stocks[i] = v;
            if failure.is_none() && !(v > 0.0 && v < self.chi[i]) {
                let before = v - flow * dt;
                let edge = if flow < 0.0 { 0.0 } else { self.chi[i] };
                let crossing = start + (edge - before) / flow;
                let side = if flow < 0.0 { "ran out of stock" } else { "overflowed" };
                failure = Some(Error::Simulation {
                    t: crossing,
                    message: format!("warehouse {i} {side} at t = {crossing:.6}"),
                });
            }
        }
        failure.map_or(Ok(()), Err)
    }

    fn refresh_demand(&mut self) -> Result<()> {
        aggregate_demand_into(self.spec, &self.state.prices, &mut self.state.demand)
    }

    /// Applies the price rule to `good` at the current time. `x_pre` is the
    /// demand in force just before the current instant.
    fn update(&mut self, good: usize, x_pre: &[f64]) -> Result<UpdateEvent> {
        let t = self.state.time;
        let old = self.state.prices[good];
        let delta_t = t - self.state.last_update[good];
        let (new, x_bar, w_tilde) = match self.scenario {
            Scenario::OneTime => {
                (one_time_update(old, x_pre[good], self.w[good], self.params.lambda), x_pre[good], self.w[good])
            }
            Scenario::Ongoing => {
                let x_bar = self.state.demand_integral[good] / delta_t;
                let w_tilde = self.w_tilde(good);
                let p =
                    ongoing_update(old, x_bar - w_tilde, self.w[good], self.params.lambda, delta_t, self.params.rule);
                (p, x_bar, w_tilde)
            }
        };
        if !(new > 0.0 && new.is_finite()) {
            return Err(Error::Simulation { t, message: format!("price of good {good} became {new}") });
        }
        self.state.prices[good] = new;
        self.state.last_update[good] = t;
        self.state.demand_integral[good] = 0.0;
        self.refresh_demand()?;
        let ev = UpdateEvent {
            time: t,
            good,
            old_price: old,
            new_price: new,
            x_bar,
            w_tilde,
            z_bar: x_bar - w_tilde,
            delta_t,
        };
        self.state.event_log.push(ev.clone());
        Ok(ev)
    }

    fn record(&mut self, kind: RecordKind, ev: Option<&UpdateEvent>, message: Option<String>) -> TraceRecord {
        let goods = self.good_states();
        let s = &self.state;
        for i in 0..s.stocks.len() {
            let drift = s.stocks[i] - self.initial_stocks[i] + s.cumulative_demand[i] - self.w[i] * s.time;
            self.conservation = self.conservation.max(drift.abs() / self.chi[i]);
        }
        TraceRecord {
            t: s.time,
            kind,
            good: ev.map(|e| e.good),
            prices: s.prices.clone(),
            v: s.stocks.clone(),
            x: s.demand.clone(),
            x_bar: ev.map(|e| e.x_bar),
            w_tilde: ev.map(|e| e.w_tilde),
            z_bar: ev.map(|e| e.z_bar),
            delta_t: ev.map(|e| e.delta_t),
            old_price: ev.map(|e| e.old_price),
            phi: potential(&goods, Weights::from(&self.params)).total,
            misspending: misspending(&goods),
            f: f_bound(&s.prices, &self.p_star),
            zones: s.stocks.iter().zip(&self.chi).map(|(v, c)| zone_of(*v, *c).index).collect(),
            message,
        }
    }

    /// Runs until `horizon`, sending a record at the start, after every
    /// update, at every integer day and at the end (or at a failure).
    pub fn run<S: TraceSink + ?Sized>(&mut self, horizon: f64, sink: &mut S) -> Result<RunOutcome> {
        if !(horizon >= self.state.time && horizon.is_finite()) {
            return Err(Error::Precondition(format!("horizon {horizon} must be finite and not in the past")));
        }
        let mut records = 0usize;
        let mut emit = |sim: &mut Self, kind, ev: Option<&UpdateEvent>, msg, sink: &mut S| -> Result<()> {
            let r = sim.record(kind, ev, msg);
            records += 1;
            sink.record(&r)
        };
        if self.state.time == 0.0 {
            emit(self, RecordKind::Init, None, None, sink)?;
        }
        let n = self.w.len();
        let mut x_pre = vec![0.0; n];
        let mut status = RunStatus::Completed;
        while self.state.time < horizon {
            let t_event = self.scheduler.earliest();
            let t_day = self.state.time.floor() + 1.0;
            let t_next = t_event.min(t_day).min(horizon);
            if let Err(e) = self.advance(t_next) {
                let (t, message) = match e {
                    Error::Simulation { t, message } => (t, message),
                    other => return Err(other),
                };
                emit(self, RecordKind::Failure, None, Some(message.clone()), sink)?;
                let good = (0..n).find(|&i| !(self.state.stocks[i] > 0.0 && self.state.stocks[i] < self.chi[i]));
                status = RunStatus::Failed { t, good, message };
                break;
            }
            if t_event == t_next {
                x_pre.copy_from_slice(&self.state.demand);
                for i in 0..n {
                    if self.scheduler.next[i] != t_next {
                        continue;
                    }
                    let ev = match self.update(i, &x_pre) {
                        Ok(ev) => ev,
                        Err(Error::Simulation { t, message }) => {
                            emit(self, RecordKind::Failure, None, Some(message.clone()), sink)?;
                            status = RunStatus::Failed { t, good: Some(i), message };
                            break;
                        }
                        Err(e) => return Err(e),
                    };
                    self.scheduler.reschedule(i, t_next);
                    emit(self, RecordKind::Update, Some(&ev), None, sink)?;
                }
                if status != RunStatus::Completed {
                    break;
                }
                for i in 0..n {
                    let due = self.scheduler.next[i] - self.state.last_update[i];
                    assert!(due <= 1.0 + DEADLINE_SLACK, "good {i} scheduled {due} days after its last update");
                }
            }
            if t_next == t_day {
                emit(self, RecordKind::Day, None, None, sink)?;
            } else if t_next == horizon {
                emit(self, RecordKind::End, None, None, sink)?;
            }
        }
        Ok(RunOutcome {
            status,
            end_time: self.state.time,
            events: self.state.event_log.len(),
            records,
            max_conservation_error: self.conservation,
        })
    }
}

/// Runs the ongoing market from `(p°, v°)`.
#[allow(clippy::too_many_arguments)]
pub fn run<S: TraceSink + ?Sized>(
    spec: &MarketSpec,
    params: ParamSet,
    schedule: Schedule,
    initial_prices: Vec<f64>,
    initial_stocks: Option<Vec<f64>>,
    p_star: Vec<f64>,
    horizon: f64,
    sink: &mut S,
) -> Result<RunOutcome> {
    Simulation::new(spec, params, Scenario::Ongoing, schedule, initial_prices, initial_stocks, p_star)?
        .run(horizon, sink)
}

/// Runs the one-time market for `rounds` days.
pub fn run_one_time<S: TraceSink + ?Sized>(
    spec: &MarketSpec,
    params: ParamSet,
    schedule: Schedule,
    initial_prices: Vec<f64>,
    p_star: Vec<f64>,
    rounds: f64,
    sink: &mut S,
) -> Result<RunOutcome> {
    Simulation::new(spec, params, Scenario::OneTime, schedule, initial_prices, None, p_star)?.run(rounds, sink)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{solve_equilibrium, DEFAULT_TOLERANCE};
    use crate::market::{Buyer, Good, UtilityTree};

    fn params() -> ParamSet {
        ParamSet { lambda: 0.1, kappa: 1e-3, delta: 0.05, c1: 0.05, c2: 2.0, r: 100.0, rule: UpdateRule::Linear }
    }

    fn cobb_douglas() -> MarketSpec {
        MarketSpec::new(
            vec![Good::new(0, 1.0, 100.0), Good::new(1, 2.0, 200.0)],
            vec![Buyer::new(0, 3.0, UtilityTree::ces(0.0, &[1.0, 2.0]))],
        )
    }

    #[test]
    fn rule_examples() {
        assert!((one_time_update(10.0, 1.5, 1.0, 0.1) - 10.5).abs() < 1e-12);
        assert_eq!(one_time_update(10.0, 1.0, 1.0, 0.1), 10.0);
        assert!((one_time_update(10.0, 3.0, 1.0, 0.1) - 11.0).abs() < 1e-12);
        let r = UpdateRule::Linear;
        assert!((ongoing_update(10.0, 0.5, 1.0, 0.1, 1.0, r) - 10.5).abs() < 1e-12);
        assert!((ongoing_update(10.0, 0.5, 1.0, 0.1, 0.5, r) - 10.25).abs() < 1e-12);
        assert_eq!(ongoing_update(10.0, 0.0, 1.0, 0.1, 0.7, r), 10.0);
        assert!(
            (ongoing_update(10.0, 0.5, 1.0, 0.1, 1.0, UpdateRule::Exponential) - 10.0 * 0.05f64.exp()).abs() < 1e-12
        );
    }

    #[test]
    fn advance_integrates_flows() {
        let spec = cobb_douglas();
        // Equilibrium prices are (1, 1): demand equals supply.
        let mut sim = Simulation::new(
            &spec,
            params(),
            Scenario::Ongoing,
            Schedule::Synchronous,
            vec![1.0, 1.0],
            None,
            vec![1.0, 1.0],
        )
        .unwrap();
        sim.advance(0.5).unwrap();
        assert_eq!(sim.state().stocks, vec![50.0, 100.0]);
        sim.advance(0.5).unwrap();
        assert_eq!(sim.state().time, 0.5);

        // Halving p₀ doubles x₀ to 2 against w₀ = 1, draining the warehouse.
        let mut sim = Simulation::new(
            &spec,
            params(),
            Scenario::Ongoing,
            Schedule::Synchronous,
            vec![0.5, 1.0],
            None,
            vec![1.0, 1.0],
        )
        .unwrap();
        assert_eq!(sim.state().demand[0], 2.0);
        sim.advance(0.25).unwrap();
        assert!((sim.state().stocks[0] - 49.75).abs() < 1e-12);
        assert!((sim.state().demand_integral[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn balanced_start_stays_put() {
        let spec = cobb_douglas();
        let mut log = Vec::new();
        let out =
            run(&spec, params(), Schedule::evenly_staggered(2), vec![1.0, 1.0], None, vec![1.0, 1.0], 5.0, &mut log)
                .unwrap();
        assert_eq!(out.status, RunStatus::Completed);
        assert_eq!(out.events, 10);
        for r in &log {
            assert_eq!(r.prices, vec![1.0, 1.0]);
            assert_eq!(r.v, vec![50.0, 100.0]);
            assert_eq!(r.phi, 0.0);
        }
        assert_eq!(log.first().unwrap().kind, RecordKind::Init);
        assert_eq!(log.iter().filter(|r| r.kind == RecordKind::Day).count(), 5);
    }

    #[test]
    fn horizon_zero_is_a_snapshot() {
        let spec = cobb_douglas();
        let mut log = Vec::new();
        run(&spec, params(), Schedule::Synchronous, vec![2.0, 1.0], None, vec![1.0, 1.0], 0.0, &mut log).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].kind, RecordKind::Init);
    }

    #[test]
    fn one_time_cobb_douglas_contracts() {
        let spec = cobb_douglas();
        let p_star = solve_equilibrium(&spec, DEFAULT_TOLERANCE).unwrap().p_star;
        let p0: Vec<f64> = p_star.iter().map(|p| 2.0 * p).collect();
        let mut log = Vec::new();
        run_one_time(&spec, params(), Schedule::Synchronous, p0, p_star, 80.0, &mut log).unwrap();
        let days: Vec<f64> = log.iter().filter(|r| r.kind != RecordKind::Update).map(|r| r.f).collect();
        assert_eq!(days.len(), 81);
        for w in days.windows(2) {
            assert!(w[1] < w[0] || w[0] - 1.0 < 1e-9, "{w:?}");
        }
        assert!(days.last().unwrap() - 1.0 < 1e-2);
        assert!(log.iter().all(|r| r.v.is_empty() && r.zones.is_empty()));
    }

    #[test]
    fn overflow_is_a_labelled_failure() {
        let spec = MarketSpec::new(
            vec![Good::new(0, 1.0, 2.0), Good::new(1, 1.0, 2.0)],
            vec![Buyer::new(0, 2.0, UtilityTree::ces(0.0, &[1.0, 1.0]))],
        );
        let mut log = Vec::new();
        let out =
            run(&spec, params(), Schedule::Synchronous, vec![4.0, 1.0], None, vec![1.0, 1.0], 10.0, &mut log).unwrap();
        match out.status {
            RunStatus::Failed { t, good, message } => {
                assert_eq!(good, Some(0));
                assert!(t > 1.0 && t < 2.0 && message.contains("overflowed"), "{t} {message}");
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(log.last().unwrap().kind, RecordKind::Failure);
    }

    #[test]
    fn random_schedule_meets_deadlines_and_replays() {
        let spec = cobb_douglas();
        let sched = Schedule::RandomWithDeadline { seed: 9, mean_gap: 0.5 };
        let go = || {
            let mut log = Vec::new();
            let out =
                run(&spec, params(), sched.clone(), vec![1.3, 0.8], None, vec![1.0, 1.0], 30.0, &mut log).unwrap();
            (out, log)
        };
        let (out, log) = go();
        let (_, again) = go();
        assert_eq!(log, again);
        assert!(out.max_conservation_error < 1e-12);
        let mut last = [0.0f64; 2];
        for r in log.iter().filter(|r| r.kind == RecordKind::Update) {
            let g = r.good.unwrap();
            assert!(r.t - last[g] <= 1.0 + 1e-9 && r.t > last[g]);
            assert!((r.delta_t.unwrap() - (r.t - last[g])).abs() < 1e-12);
            last[g] = r.t;
        }
    }

    #[test]
    fn distorted_prices_are_exactly_bounded() {
        let p_star = [1.0, 2.0, 0.5, 3.0];
        for seed in 0..20 {
            let p = distorted_prices(&p_star, 4.0, seed);
            assert!((f_bound(&p, &p_star) - 4.0).abs() < 1e-12);
        }
    }
}
