//! Impulsive release schedules built from a continuous optimal control.
//!
//! The control `û` is the optimal rate extended by zero beyond `T*`. Day `n`
//! covers the window `[n − 1, n]`; daily releases happen at `t = n`, periodic
//! releases at `t = 1 + (i − 1) m`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model;
use crate::ocp::ContinuousControl;
use crate::params::{State, StrainParams};
use crate::schedule::{ImpulseSchedule, RuleTag};
use crate::sim::{self, SimOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyImpulseSequence {
    /// `U*_n = ∫_{n−1}^{n} û dt`.
    pub window_totals: Vec<f64>,
    /// `U^tr_n = (û(n) + û(n − 1)) / 2`.
    pub trapezoid_estimates: Vec<f64>,
    /// Release sizes `Û*_n`.
    pub sizes: Vec<u64>,
    /// Number of daily releases, `ceil(T*)`.
    pub t_hat: usize,
}

impl DailyImpulseSequence {
    pub fn total(&self) -> u64 {
        self.sizes.iter().sum()
    }

    /// Releases at `t = 1, 2, ..., T̂`.
    pub fn to_schedule(&self) -> ImpulseSchedule {
        ImpulseSchedule::periodic(&self.sizes, 1, RuleTag::Daily)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicImpulseSequence {
    pub period_m: u32,
    pub sizes: Vec<u64>,
    /// `Aggregate` or `Excess`.
    pub rule: RuleTag,
}

impl PeriodicImpulseSequence {
    pub fn total(&self) -> u64 {
        self.sizes.iter().sum()
    }

    pub fn to_schedule(&self) -> ImpulseSchedule {
        ImpulseSchedule::periodic(&self.sizes, self.period_m, self.rule)
    }
}

/// Exact integral of the piecewise-linear control over `[a, b]`.
fn integral_between(ctrl: &ContinuousControl, a: f64, b: f64) -> f64 {
    let t = &ctrl.times;
    let mut acc = 0.0;
    for k in 1..t.len() {
        let (lo, hi) = (t[k - 1].max(a), t[k].min(b));
        if hi > lo {
            acc += 0.5 * (hi - lo) * (ctrl.at(lo) + ctrl.at(hi));
        }
    }
    acc
}

/// Largest value of the extended control over `[a, b]`, taken over grid
/// nodes inside the window and the two window endpoints.
pub fn window_max(ctrl: &ContinuousControl, a: f64, b: f64) -> f64 {
    let lo = ctrl.times.partition_point(|&t| t < a);
    let hi = ctrl.times.partition_point(|&t| t <= b);
    let nodes = ctrl.values[lo..hi].iter().copied().fold(0.0, f64::max);
    nodes.max(ctrl.at(a)).max(ctrl.at(b))
}

/// Number of daily windows, `ceil(T*)`.
pub fn t_hat(ctrl: &ContinuousControl) -> usize {
    ctrl.t_star.ceil() as usize
}

/// `U*_n` for `n = 1..ceil(T*)`.
pub fn daily_window_totals(ctrl: &ContinuousControl) -> Vec<f64> {
    (1..=t_hat(ctrl)).map(|n| integral_between(ctrl, (n - 1) as f64, n as f64)).collect()
}

/// Daily impulse sizes
/// `Û*_n = ceil(U^tr_n)` if `U*_n ≤ U^tr_n`, else `ceil(max_{[n−1, n]} û)`.
pub fn daily_impulses(ctrl: &ContinuousControl) -> DailyImpulseSequence {
    let window_totals = daily_window_totals(ctrl);
    let n_days = window_totals.len();
    let mut trapezoid_estimates = Vec::with_capacity(n_days);
    let mut sizes = Vec::with_capacity(n_days);
    for (i, &exact) in window_totals.iter().enumerate() {
        let (a, b) = (i as f64, (i + 1) as f64);
        let tr = 0.5 * (ctrl.at(a) + ctrl.at(b));
        // rounding slack so that exact trapezoid windows take the first branch
        let slack = 1e-9 * tr.abs().max(1.0);
        let size = if exact <= tr + slack { tr.ceil() } else { window_max(ctrl, a, b).ceil() };
        trapezoid_estimates.push(tr);
        sizes.push(size as u64);
    }
    DailyImpulseSequence { window_totals, trapezoid_estimates, sizes, t_hat: n_days }
}

fn block_count(t_hat: usize, m: u32) -> usize {
    t_hat.div_ceil(m as usize)
}

/// m-periodic sizes by summing daily sizes over the blocks
/// `(i−1)m+1 ..= im`; a trailing partial block keeps the remaining days.
pub fn aggregate_periodic(daily: &DailyImpulseSequence, m: u32) -> Result<PeriodicImpulseSequence> {
    if m == 0 {
        return Err(Error::InvalidParameter { field: "period_m", reason: "must be >= 1".into() });
    }
    let sizes = daily.sizes.chunks(m as usize).map(|c| c.iter().sum()).collect();
    Ok(PeriodicImpulseSequence { period_m: m, sizes, rule: RuleTag::Aggregate })
}

/// m-periodic sizes `m · ceil(max_{[(i−1)m, im]} û)`.
pub fn excess_periodic(ctrl: &ContinuousControl, m: u32) -> Result<PeriodicImpulseSequence> {
    if m == 0 {
        return Err(Error::InvalidParameter { field: "period_m", reason: "must be >= 1".into() });
    }
    let k = block_count(t_hat(ctrl), m);
    let mf = m as f64;
    let sizes = (1..=k)
        .map(|i| {
            let peak = window_max(ctrl, (i - 1) as f64 * mf, i as f64 * mf);
            m as u64 * peak.ceil() as u64
        })
        .collect();
    Ok(PeriodicImpulseSequence { period_m: m, sizes, rule: RuleTag::Excess })
}

/// Key indicators of a release schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorReport {
    pub rule: RuleTag,
    pub period_m: u32,
    /// Nonzero releases made up to basin entry (all of them without entry).
    pub num_releases: usize,
    /// Individuals released up to basin entry.
    pub overall_size: u64,
    /// Nonzero releases in the full schedule.
    pub scheduled_releases: usize,
    pub scheduled_total: u64,
    pub basin_entry_time: Option<f64>,
    /// Entry occurred (and, with a deadline, no later than it).
    pub feasible: bool,
}

/// Simulates `sched` from `(x0, 0)` and reports when the secure region is
/// entered. `x0` defaults to `x♯`. With a `deadline`, entry after it counts
/// as infeasible.
pub fn evaluate_schedule(
    params: &StrainParams,
    sched: &ImpulseSchedule,
    target: (f64, f64),
    initial_wild: Option<f64>,
    deadline: Option<f64>,
    opts: &SimOptions,
) -> Result<IndicatorReport> {
    let x0 = initial_wild.unwrap_or_else(|| params.x_sharp());
    let last = sched.entries.last().map_or(0.0, |r| r.time);
    let opts = SimOptions { t_end: opts.t_end.max(last + 1.0), ..*opts };
    let traj = sim::simulate_impulsive(params, State::new(x0, 0.0), sched, &opts)?;
    let entry = sim::first_basin_entry(&traj, target);
    let made = match entry {
        Some(t) => sched.truncated(t),
        None => sched.truncated(f64::INFINITY),
    };
    Ok(IndicatorReport {
        rule: sched.rule,
        period_m: sched.period_m,
        num_releases: made.effective_releases(),
        overall_size: made.total(),
        scheduled_releases: sched.effective_releases(),
        scheduled_total: sched.total(),
        basin_entry_time: entry,
        feasible: match (entry, deadline) {
            (Some(t), Some(d)) => t <= d,
            (Some(_), None) => true,
            (None, _) => false,
        },
    })
}

/// Builds the aggregate-rule schedule and falls back to the excess rule when
/// the aggregate schedule does not enter the secure region by day `ceil(T*)`.
pub fn select_rule(
    params: &StrainParams,
    ctrl: &ContinuousControl,
    m: u32,
    initial_wild: Option<f64>,
    opts: &SimOptions,
) -> Result<(PeriodicImpulseSequence, IndicatorReport)> {
    if ctrl.max_value() <= 0.0 {
        return Err(Error::Infeasible("the control releases nothing".into()));
    }
    let eq = model::equilibria(params)?;
    let target = model::secure_region(&eq)?;
    let deadline = Some(t_hat(ctrl) as f64);
    let daily = daily_impulses(ctrl);
    let aggregate = aggregate_periodic(&daily, m)?;
    let report = evaluate_schedule(params, &aggregate.to_schedule(), target, initial_wild, deadline, opts)?;
    if report.feasible {
        return Ok((aggregate, report));
    }
    let excess = excess_periodic(ctrl, m)?;
    let report = evaluate_schedule(params, &excess.to_schedule(), target, initial_wild, deadline, opts)?;
    if report.feasible {
        return Ok((excess, report));
    }
    Err(Error::Infeasible(format!(
        "neither the aggregate nor the excess {m}-day schedule reaches the secure region by day {}",
        t_hat(ctrl)
    )))
}
