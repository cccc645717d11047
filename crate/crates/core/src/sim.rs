//! Numerical integration of the model: continuous releases, impulsive
//! releases, basin-entry detection, the basin boundary and phase-plane data.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, eigenvalues};
use crate::ode::{self, Solution, Tolerances};
use crate::params::{State, StrainParams};
use crate::schedule::ImpulseSchedule;

/// Resolution of basin-entry bisection (days).
pub const ENTRY_RESOLUTION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest integrator step (days).
    pub max_step: f64,
    /// End of the simulated span (days).
    pub t_end: f64,
    /// Spacing of stored samples (days). Zero stores every accepted step.
    pub dense_output_stride: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-8, abs_tol: 1e-10, max_step: 1.0, t_end: 400.0, dense_output_stride: 0.1 }
    }
}

impl SimOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidParameter { field: "tolerance", reason: "tolerances must be positive".into() });
        }
        if !(self.t_end > 0.0) {
            return Err(Error::InvalidParameter { field: "t_end", reason: "must be positive".into() });
        }
        if !(self.max_step > 0.0) || self.dense_output_stride < 0.0 {
            return Err(Error::InvalidParameter { field: "max_step", reason: "step sizes must be positive".into() });
        }
        Ok(())
    }

    pub(crate) fn tolerances(&self) -> Tolerances {
        Tolerances {
            rel: self.rel_tol,
            abs: self.abs_tol,
            max_step: self.max_step,
            max_steps: 5_000_000,
            nonnegative: 2,
        }
    }
}

/// Release rate applied during continuous integration.
#[derive(Clone, Default)]
pub enum Control {
    #[default]
    Zero,
    /// Piecewise-linear interpolation of samples; zero outside the sampled
    /// range.
    Sampled { times: Vec<f64>, values: Vec<f64> },
    /// Arbitrary rate function; must stay nonnegative.
    Rate(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Control {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Control::Zero => write!(f, "Zero"),
            Control::Sampled { times, .. } => write!(f, "Sampled({} nodes)", times.len()),
            Control::Rate(_) => write!(f, "Rate(..)"),
        }
    }
}

impl Control {
    pub fn sampled(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::Parse("control samples need equally many times and values".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parse("control sample times must be strictly increasing".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::NegativeControl(*v));
        }
        Ok(Control::Sampled { times, values })
    }

    pub fn at(&self, t: f64) -> f64 {
        match self {
            Control::Zero => 0.0,
            Control::Sampled { times, values } => interp_linear(times, values, t),
            Control::Rate(f) => f(t),
        }
    }
}

/// Linear interpolation; zero outside `[times[0], times[last]]`.
pub fn interp_linear(times: &[f64], values: &[f64], t: f64) -> f64 {
    let n = times.len();
    if n == 0 || t < times[0] || t > times[n - 1] {
        return 0.0;
    }
    if n == 1 {
        return values[0];
    }
    let k = times.partition_point(|&s| s <= t).clamp(1, n - 1);
    let (t0, t1) = (times[k - 1], times[k]);
    let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
    values[k - 1] + w * (values[k] - values[k - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub pre: State,
    pub post: State,
}

/// One continuous stretch of a trajectory between jumps.
#[derive(Debug, Clone)]
struct Piece {
    sol: Solution<2>,
    t0: f64,
    s0: State,
}

impl Piece {
    fn eval(&self, t: f64) -> State {
        if t <= self.t0 {
            return self.s0;
        }
        State::from_array(self.sol.eval(t))
    }
}

/// Sampled solution with its continuous extension.
///
/// Samples are right-continuous: at a release instant the stored sample is
/// the post-jump state and the pre-jump state lives in [`Trajectory::jumps`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// Release rate in force at each sample.
    pub controls: Vec<f64>,
    pub jumps: Vec<Jump>,
    pieces: Vec<Piece>,
}

impl Trajectory {
    pub fn t_start(&self) -> f64 {
        self.times.first().copied().unwrap_or(0.0)
    }

    pub fn t_end(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn final_state(&self) -> State {
        self.states.last().copied().unwrap_or_default()
    }

    /// State at `t` from the continuous extension (right limit at jumps).
    pub fn state_at(&self, t: f64) -> State {
        let idx = self.pieces.partition_point(|p| p.t0 <= t);
        match idx {
            0 => self.states.first().copied().unwrap_or_default(),
            i => self.pieces[i - 1].eval(t),
        }
    }

    /// Sum of all recorded jump sizes (individuals).
    pub fn released_total(&self) -> f64 {
        self.jumps.iter().map(|j| j.post.y - j.pre.y).sum()
    }

    fn push_sample(&mut self, t: f64, s: State, u: f64) {
        if let Some(&last) = self.times.last() {
            if t <= last {
                // same instant: keep the newest (post-jump) value
                if t == last {
                    *self.states.last_mut().unwrap() = s;
                    *self.controls.last_mut().unwrap() = u;
                }
                return;
            }
        }
        self.times.push(t);
        self.states.push(s);
        self.controls.push(u);
    }

    fn append_piece(&mut self, sol: Solution<2>, t0: f64, s0: State, control: &Control, stride: f64) {
        let t1 = sol.t_end;
        self.push_sample(t0, s0, control.at(t0));
        if stride > 0.0 {
            let mut k = 1.0;
            loop {
                let t = t0 + k * stride;
                if t >= t1 - 1e-12 {
                    break;
                }
                self.push_sample(t, State::from_array(sol.eval(t)), control.at(t));
                k += 1.0;
            }
        } else {
            for st in &sol.steps {
                if st.t1() < t1 {
                    self.push_sample(st.t1(), State::from_array(st.end()), control.at(st.t1()));
                }
            }
        }
        self.push_sample(t1, State::from_array(sol.y_end), control.at(t1));
        self.pieces.push(Piece { sol, t0, s0 });
    }

    fn new() -> Self {
        Self { times: Vec::new(), states: Vec::new(), controls: Vec::new(), jumps: Vec::new(), pieces: Vec::new() }
    }
}

fn flow(
    params: &StrainParams,
    s0: State,
    control: &Control,
    t0: f64,
    t1: f64,
    opts: &SimOptions,
) -> Result<Solution<2>> {
    let mut bad_control = None;
    let tol = opts.tolerances();
    let sol = ode::integrate(
        |t, z: &[f64; 2]| {
            let u = control.at(t);
            if !(u >= 0.0) {
                bad_control.get_or_insert(u);
            }
            let (fx, fy) = params.field(z[0].max(0.0), z[1].max(0.0));
            [fx, fy + u.max(0.0)]
        },
        t0,
        s0.as_array(),
        t1,
        &tol,
        None,
    )?;
    if let Some(u) = bad_control {
        return Err(Error::NegativeControl(u));
    }
    Ok(sol)
}

/// Integrates the model under a continuous release rate over `[t0, t1]`.
pub fn integrate(
    params: &StrainParams,
    s0: State,
    control: &Control,
    span: (f64, f64),
    opts: &SimOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    s0.check_nonnegative()?;
    let (t0, t1) = span;
    if !(t1 > t0) {
        return Err(Error::InvalidParameter { field: "span", reason: format!("empty span [{t0}, {t1}]") });
    }
    let sol = flow(params, s0, control, t0, t1, opts)?;
    let mut traj = Trajectory::new();
    traj.append_piece(sol, t0, s0, control, opts.dense_output_stride);
    Ok(traj)
}

/// Integrates the release-free model over `[0, opts.t_end]`, adding each
/// scheduled release to `y` at its instant.
pub fn simulate_impulsive(
    params: &StrainParams,
    s0: State,
    sched: &ImpulseSchedule,
    opts: &SimOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    s0.check_nonnegative()?;
    sched.validate()?;
    if let Some(r) = sched.entries.iter().find(|r| r.time > opts.t_end) {
        return Err(Error::InvalidSchedule(format!("release at t = {} after end of span {}", r.time, opts.t_end)));
    }
    let zero = Control::Zero;
    let mut traj = Trajectory::new();
    let mut t = 0.0;
    let mut s = s0;
    for r in &sched.entries {
        if r.time > t {
            let sol = flow(params, s, &zero, t, r.time, opts)?;
            let end = State::from_array(sol.y_end);
            traj.append_piece(sol, t, s, &zero, opts.dense_output_stride);
            s = end;
            t = r.time;
        }
        let post = State::new(s.x, s.y + r.size as f64);
        traj.jumps.push(Jump { time: r.time, pre: s, post });
        s = post;
    }
    let sol = flow(params, s, &zero, t, opts.t_end.max(t), opts)?;
    traj.append_piece(sol, t, s, &zero, opts.dense_output_stride);
    Ok(traj)
}

/// State at `t_end` after applying `(time, size)` releases; no samples are
/// kept. Releases at `t_end` are applied before returning.
pub fn propagate_with_releases(
    params: &StrainParams,
    s0: State,
    releases: &[(f64, f64)],
    t_end: f64,
    opts: &SimOptions,
) -> Result<State> {
    let zero = Control::Zero;
    let mut t = 0.0;
    let mut s = s0;
    for &(tr, size) in releases {
        if tr > t {
            s = State::from_array(flow(params, s, &zero, t, tr, opts)?.y_end);
            t = tr;
        }
        s.y += size;
    }
    if t_end > t {
        s = State::from_array(flow(params, s, &zero, t, t_end, opts)?.y_end);
    }
    Ok(s)
}

#[inline]
fn inside(s: &State, target: (f64, f64)) -> bool {
    s.x < target.0 && s.y > target.1
}

/// Earliest time at which `x < x_u` and `y > y_u` both hold.
pub fn first_basin_entry(traj: &Trajectory, target: (f64, f64)) -> Option<f64> {
    let mut jumps = traj.jumps.iter().peekable();
    for piece in &traj.pieces {
        // jumps landing exactly at the start of this piece
        while let Some(j) = jumps.peek() {
            if j.time > piece.t0 {
                break;
            }
            if inside(&j.post, target) {
                return Some(j.time);
            }
            jumps.next();
        }
        if inside(&piece.s0, target) {
            return Some(piece.t0);
        }
        let mut t_prev = piece.t0;
        for st in &piece.sol.steps {
            let t_hi = st.t1().min(piece.sol.t_end);
            // a few interior probes per accepted step
            for k in 1..=4 {
                let t = st.t0 + (t_hi - st.t0) * k as f64 / 4.0;
                if t <= t_prev {
                    continue;
                }
                if inside(&piece.eval(t), target) {
                    let (mut lo, mut hi) = (t_prev, t);
                    while hi - lo > ENTRY_RESOLUTION {
                        let mid = 0.5 * (lo + hi);
                        if inside(&piece.eval(mid), target) {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    return Some(hi);
                }
                t_prev = t;
            }
        }
    }
    // release at the very end of the span
    jumps.find(|j| inside(&j.post, target)).map(|j| j.time)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparatrixOptions {
    /// Offset from the saddle along the stable direction (individuals).
    pub offset: f64,
    /// Branches stop once `x + y` exceeds this multiple of `ln(Q_x)/sigma`.
    pub box_factor: f64,
    /// Longest backward integration time (days).
    pub max_time: f64,
    /// Spacing of stored points in backward time (days).
    pub stride: f64,
}

impl Default for SeparatrixOptions {
    fn default() -> Self {
        Self { offset: 1e-3, box_factor: 1.5, max_time: 5000.0, stride: 0.5 }
    }
}

/// Basin boundary between `Ex` and `Es`: the stable manifold of the saddle
/// `Eu`, traced in backward time from both sides of the saddle.
///
/// Points are ordered along the curve, from the branch that runs toward the
/// origin, through `Eu`, to the branch that leaves the absorbing box.
pub fn separatrix(params: &StrainParams, opts: &SeparatrixOptions) -> Result<Vec<State>> {
    let eq = model::equilibria(params)?;
    let eu = eq.eu.ok_or(Error::NoCoexistence)?.state;
    let j = params.field_jacobian(eu.x, eu.y);
    let [(l_hi, im), (l_lo, _)] = eigenvalues(&j);
    if im != 0.0 || !(l_lo < 0.0 && l_hi > 0.0) {
        return Err(Error::Degenerate(format!("Eu is not a hyperbolic saddle (eigenvalues {l_hi}, {l_lo})")));
    }
    // eigenvector for l_lo
    let v = if j[0][1].abs() > 1e-300 {
        [j[0][1], l_lo - j[0][0]]
    } else if j[1][0].abs() > 1e-300 {
        [l_lo - j[1][1], j[1][0]]
    } else if (j[0][0] - l_lo).abs() < (j[1][1] - l_lo).abs() {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
    let v = [v[0] / norm, v[1] / norm];

    let bound = opts.box_factor * params.x_sharp();
    let near_origin = 1e-6 * params.x_sharp();
    let tol = Tolerances { rel: 1e-10, abs: 1e-8, max_step: 1.0, max_steps: 2_000_000, nonnegative: 0 };
    let stop = |_: f64, z: &[f64; 2]| z[0].min(z[1]).min(bound - z[0] - z[1]).min(z[0] + z[1] - near_origin);

    let branch = |sign: f64| -> Result<Vec<State>> {
        let start = [eu.x + sign * opts.offset * v[0], eu.y + sign * opts.offset * v[1]];
        let sol = ode::integrate(
            |_, z: &[f64; 2]| {
                let (fx, fy) = params.field(z[0].max(0.0), z[1].max(0.0));
                [-fx, -fy]
            },
            0.0,
            start,
            opts.max_time,
            &tol,
            Some(&stop),
        )?;
        let mut pts = Vec::new();
        let mut t = 0.0;
        while t < sol.t_end {
            pts.push(State::from_array(sol.eval(t)));
            t += opts.stride;
        }
        let end = sol.y_end;
        pts.push(State::new(end[0].max(0.0), end[1].max(0.0)));
        Ok(pts)
    };

    let a = branch(1.0)?;
    let b = branch(-1.0)?;
    // orient so the first branch is the one ending closer to the origin
    let (mut first, second) = if a.last().unwrap().total() <= b.last().unwrap().total() { (a, b) } else { (b, a) };
    first.reverse();
    first.push(eu);
    first.extend(second);
    Ok(first)
}

/// Height of the basin boundary above `x`: the `y` where the separatrix
/// polyline crosses the vertical line through `x`.
pub fn separatrix_height(curve: &[State], x: f64) -> Option<f64> {
    curve.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        if (a.x - x) * (b.x - x) <= 0.0 && a.x != b.x {
            let w = (x - a.x) / (b.x - a.x);
            Some(a.y + w * (b.y - a.y))
        } else {
            None
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub ny: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSample {
    pub state: State,
    pub deriv: State,
}

/// Release-free vector field on a rectangular grid, row-major in `y`.
pub fn phase_field(params: &StrainParams, grid: &GridSpec) -> Result<Vec<PhaseSample>> {
    if grid.x_min < 0.0 || grid.y_min < 0.0 {
        return Err(Error::NegativeState { x: grid.x_min, y: grid.y_min });
    }
    let axis = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![lo],
            _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
        }
    };
    let xs = axis(grid.x_min, grid.x_max, grid.nx);
    let ys = axis(grid.y_min, grid.y_max, grid.ny);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            let state = State::new(x, y);
            let deriv = model::rhs(params, state, 0.0)?;
            out.push(PhaseSample { state, deriv });
        }
    }
    Ok(out)
}
