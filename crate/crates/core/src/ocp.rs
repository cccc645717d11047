//! Free-terminal-time optimal release problem
//!
//! ```text
//! minimise  J(u, T) = ∫_0^T (P + u²/2) dt
//! s.t.      model dynamics with release rate u(t) ∈ [0, L],
//!           x(0) = x♯, y(0) = 0, x(T) = x_u − 1
//! ```
//!
//! solved through the Pontryagin conditions by single shooting on the free
//! initial multiplier `λ1(0)`. The Hamiltonian is conserved along extremals of
//! this autonomous problem, so `H(T) = 0` is imposed at `t = 0`, which fixes
//! `λ2(0)` as a function of `λ1(0)`. Integration of the state-adjoint system
//! stops where `λ2` reaches zero (the transversality condition for the free
//! `y(T)`), and bisection on `λ1(0)` drives `x(T)` onto the target.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model;
use crate::ode::{self, Solution, Tolerances};
use crate::params::{State, StrainParams};
use crate::sim::{self, interp_linear, Control, SimOptions, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcpConfig {
    /// Time-priority weight `P`.
    pub weight_p: f64,
    /// Release capacity `L` (individuals/day).
    pub cap_l: f64,
    /// Target `x(T)`; `None` means `x_u − 1`.
    pub terminal_x: Option<f64>,
    /// Initial wild population; `None` means `x♯ = ln(Q_x)/σ`.
    pub initial_wild: Option<f64>,
    /// Nodes of the output grid on `[0, T*]`.
    pub grid_n: usize,
    /// Tolerance on `|x(T) − terminal_x|` (individuals).
    pub tol_bc: f64,
    /// Tolerance on `|H|` (cost units/day).
    pub tol_h: f64,
    /// Bisection steps on `λ1(0)`.
    pub max_iterations: usize,
    /// Latest admissible terminal time (days).
    pub t_max: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for OcpConfig {
    fn default() -> Self {
        Self {
            weight_p: 1e6,
            cap_l: 750.0,
            terminal_x: None,
            initial_wild: None,
            grid_n: 2000,
            tol_bc: 1e-3,
            tol_h: 1e-2,
            max_iterations: 200,
            t_max: 400.0,
            rel_tol: 1e-11,
            abs_tol: 1e-9,
        }
    }
}

impl OcpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight_p > 0.0) {
            return Err(Error::InvalidParameter { field: "weight_p", reason: "must be > 0".into() });
        }
        if !(self.cap_l > 0.0) {
            return Err(Error::InvalidParameter { field: "cap_l", reason: "must be > 0".into() });
        }
        if self.grid_n < 2 {
            return Err(Error::InvalidParameter { field: "grid_n", reason: "need at least two nodes".into() });
        }
        if !(self.tol_bc > 0.0 && self.tol_h > 0.0 && self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidParameter { field: "tolerance", reason: "tolerances must be positive".into() });
        }
        if !(self.t_max > 0.0) {
            return Err(Error::InvalidParameter { field: "t_max", reason: "must be > 0".into() });
        }
        Ok(())
    }
}

/// Optimal release rate sampled on a uniform grid over `[0, T*]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousControl {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub t_star: f64,
}

impl ContinuousControl {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::Parse("a control needs at least two samples and one value per time".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parse("control times must be strictly increasing".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::Parse(format!("control must start at t = 0, not {}", times[0])));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::NegativeControl(*v));
        }
        let t_star = *times.last().unwrap();
        Ok(Self { times, values, t_star })
    }

    /// Uniform samples of `f` on `[0, t_star]`.
    pub fn from_fn(t_star: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let times: Vec<f64> = (0..n).map(|i| t_star * i as f64 / (n - 1) as f64).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values)
    }

    /// Linear interpolation, extended by zero outside `[0, T*]`.
    pub fn at(&self, t: f64) -> f64 {
        interp_linear(&self.times, &self.values, t)
    }

    /// Trapezoidal `∫ u dt`.
    pub fn total(&self) -> f64 {
        self.times.windows(2).zip(self.values.windows(2)).map(|(t, u)| 0.5 * (t[1] - t[0]) * (u[0] + u[1])).sum()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_sim_control(&self) -> Control {
        Control::Sampled { times: self.times.clone(), values: self.values.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcpResiduals {
    /// `|x(T) − terminal_x|`.
    pub boundary: f64,
    /// `|H(T)|`.
    pub hamiltonian: f64,
    /// `max |H(t)|` over the grid.
    pub hamiltonian_max: f64,
    /// `max |u − clamp(λ2, 0, L)|` over the grid.
    pub clamp: f64,
    /// Final width of the `λ1(0)` bracket.
    pub bracket: f64,
}

#[derive(Debug, Clone)]
pub struct OcpSolution {
    pub control: ContinuousControl,
    /// States on the control grid.
    pub states: Vec<State>,
    /// `(λ1, λ2)` on the control grid.
    pub adjoints: Vec<(f64, f64)>,
    /// Hamiltonian on the control grid.
    pub hamiltonian: Vec<f64>,
    /// Re-simulation of the model under the sampled control.
    pub state_traj: Trajectory,
    pub objective_j: f64,
    /// `∫ u* dt`, accumulated by the integrator.
    pub total_released: f64,
    pub initial_state: State,
    pub terminal_x: f64,
    pub lambda1_0: f64,
    pub lambda2_0: f64,
    pub residuals: OcpResiduals,
    pub iterations: usize,
    pub converged: bool,
}

/// `H = −P − u²/2 + λ1 f_x + λ2 (f_y + u)`.
pub fn hamiltonian(params: &StrainParams, s: State, adj: (f64, f64), u: f64, weight_p: f64) -> f64 {
    let (fx, fy) = params.field(s.x, s.y);
    -weight_p - 0.5 * u * u + adj.0 * fx + adj.1 * (fy + u)
}

/// `(−∂H/∂x, −∂H/∂y)`. The control enters `H` without state dependence, so
/// this is `−Jᵀλ`.
pub fn adjoint_rhs(params: &StrainParams, s: State, adj: (f64, f64)) -> Result<(f64, f64)> {
    let j = model::jacobian(params, s)?;
    Ok(adjoint_from_jacobian(&j, adj))
}

#[inline]
fn adjoint_from_jacobian(j: &[[f64; 2]; 2], adj: (f64, f64)) -> (f64, f64) {
    (-(adj.0 * j[0][0] + adj.1 * j[1][0]), -(adj.0 * j[0][1] + adj.1 * j[1][1]))
}

/// `u* = max{0, min{λ2, L}}`.
pub fn control_from_adjoint(lambda2: f64, cap_l: f64) -> f64 {
    lambda2.clamp(0.0, cap_l)
}

/// Trapezoidal `∫ (P + u²/2) dt` over the control grid.
pub fn objective(control: &ContinuousControl, weight_p: f64) -> f64 {
    control
        .times
        .windows(2)
        .zip(control.values.windows(2))
        .map(|(t, u)| 0.5 * (t[1] - t[0]) * (2.0 * weight_p + 0.5 * (u[0] * u[0] + u[1] * u[1])))
        .sum()
}

/// `λ2(0)` that makes `H(0) = 0` when `f_y(s0) = 0`: inverts
/// `λ2 u − u²/2 = P − λ1 f_x` with `u = clamp(λ2, 0, L)`.
fn initial_lambda2(rhs: f64, cap_l: f64) -> f64 {
    if rhs <= 0.0 {
        0.0
    } else if rhs <= 0.5 * cap_l * cap_l {
        (2.0 * rhs).sqrt()
    } else {
        (rhs + 0.5 * cap_l * cap_l) / cap_l
    }
}

struct Shooter<'a> {
    params: &'a StrainParams,
    cfg: &'a OcpConfig,
    s0: State,
    fx0: f64,
    x_target: f64,
}

struct Shot {
    sol: Solution<5>,
    lambda2_0: f64,
    residual: f64,
}

impl Shooter<'_> {
    fn shoot(&self, lambda1_0: f64) -> Result<Shot> {
        let (p, l) = (self.params, self.cfg.cap_l);
        let lambda2_0 = initial_lambda2(self.cfg.weight_p - lambda1_0 * self.fx0, l);
        let tol = Tolerances {
            rel: self.cfg.rel_tol,
            abs: self.cfg.abs_tol,
            max_step: 0.5,
            max_steps: 2_000_000,
            nonnegative: 2,
        };
        let event = |_: f64, z: &[f64; 5]| z[3];
        let sol = ode::integrate(
            |_, z: &[f64; 5]| {
                let (x, y) = (z[0].max(0.0), z[1].max(0.0));
                let u = control_from_adjoint(z[3], l);
                let (fx, fy) = p.field(x, y);
                let j = p.field_jacobian(x, y);
                let (d1, d2) = adjoint_from_jacobian(&j, (z[2], z[3]));
                [fx, fy + u, d1, d2, u]
            },
            0.0,
            [self.s0.x, self.s0.y, lambda1_0, lambda2_0, 0.0],
            self.cfg.t_max,
            &tol,
            Some(&event),
        )?;
        let residual = sol.y_end[0] - self.x_target;
        Ok(Shot { sol, lambda2_0, residual })
    }
}

/// Solves the optimal release problem.
pub fn solve(params: &StrainParams, cfg: &OcpConfig) -> Result<OcpSolution> {
    params.validate()?;
    cfg.validate()?;
    let eq = model::equilibria(params)?;
    let (x_u, y_u) = model::secure_region(&eq)?;
    let x0 = cfg.initial_wild.unwrap_or(eq.ex.state.x);
    let x_target = cfg.terminal_x.unwrap_or(x_u - 1.0);
    if !(x0 > 0.0) {
        return Err(Error::InvalidParameter { field: "initial_wild", reason: "must be > 0".into() });
    }
    if !(x_target > 0.0 && x_target < x0) {
        return Err(Error::InvalidParameter {
            field: "terminal_x",
            reason: format!("target {x_target} must lie in (0, {x0})"),
        });
    }
    let s0 = State::new(x0, 0.0);
    let (fx0, _) = params.field(x0, 0.0);
    let shooter = Shooter { params, cfg, s0, fx0, x_target };

    // Very negative λ1(0) stops releases early (x(T) above target); λ1(0) = 0
    // keeps releasing at capacity (x falls below target or never stops).
    let mut iterations = 1;
    let mut hi = 0.0;
    let mut shot_hi = shooter.shoot(hi)?;
    if shot_hi.residual > 0.0 {
        return Err(Error::Infeasible(format!(
            "terminal target x = {x_target:.3} unreachable with capacity L = {} (x = {:.3} at the end of the shot)",
            cfg.cap_l, shot_hi.sol.y_end[0]
        )));
    }
    let scale = cfg.weight_p / x0.max(1.0);
    let mut lo = -scale;
    let mut shot_lo = shooter.shoot(lo)?;
    while shot_lo.residual <= 0.0 {
        iterations += 1;
        if iterations > cfg.max_iterations || lo < -1e12 * scale {
            return Err(Error::NonConvergence {
                iterations,
                detail: "could not bracket the initial multiplier λ1(0)".into(),
            });
        }
        hi = lo;
        shot_hi = shot_lo;
        lo *= 2.0;
        shot_lo = shooter.shoot(lo)?;
    }

    // bisection on the bracket [lo, hi]
    let mut best = if shot_lo.residual.abs() <= shot_hi.residual.abs() { (lo, shot_lo) } else { (hi, shot_hi) };
    let (mut a, mut b) = (lo, hi);
    let mut converged = false;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        let shot = shooter.shoot(mid)?;
        if shot.residual > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        if shot.residual.abs() <= best.1.residual.abs() && shot.sol.event {
            best = (mid, shot);
        }
        if best.1.residual.abs() <= 1e-3 * cfg.tol_bc && best.1.sol.event {
            converged = true;
            break;
        }
    }
    let (lambda1_0, shot) = best;
    if !shot.sol.event {
        return Err(Error::NonConvergence { iterations, detail: "no terminal time found for λ2 = 0".into() });
    }
    let boundary = shot.residual.abs();
    converged = converged || boundary <= cfg.tol_bc;

    let sol = Arc::new(shot.sol);
    let t_star = sol.t_end;
    let n = cfg.grid_n;
    let mut times = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    let mut adjoints = Vec::with_capacity(n);
    let mut ham = Vec::with_capacity(n);
    let mut clamp: f64 = 0.0;
    for i in 0..n {
        let t = if i + 1 == n { t_star } else { t_star * i as f64 / (n - 1) as f64 };
        let z = sol.eval(t);
        let s = State::new(z[0].max(0.0), z[1].max(0.0));
        let lam2 = if i + 1 == n { 0.0 } else { z[3] };
        let u = control_from_adjoint(lam2, cfg.cap_l);
        clamp = clamp.max((u - control_from_adjoint(lam2, cfg.cap_l)).abs());
        times.push(t);
        values.push(u);
        states.push(s);
        adjoints.push((z[2], lam2));
        ham.push(hamiltonian(params, s, (z[2], lam2), u, cfg.weight_p));
    }
    let control = ContinuousControl::new(times, values)?;
    let hamiltonian_t = ham.last().copied().unwrap_or(0.0).abs();
    let hamiltonian_max = ham.iter().fold(0.0_f64, |m, h| m.max(h.abs()));
    converged = converged && hamiltonian_t <= cfg.tol_h;

    let final_state = *states.last().unwrap();
    if !(final_state.x < x_u && final_state.y > y_u) {
        converged = false;
    }

    let rate = {
        let sol = Arc::clone(&sol);
        let l = cfg.cap_l;
        Control::Rate(Arc::new(move |t| if (0.0..=t_star).contains(&t) { control_from_adjoint(sol.eval(t)[3], l) } else { 0.0 }))
    };
    let sim_opts = SimOptions { t_end: t_star, rel_tol: 1e-10, abs_tol: 1e-8, max_step: 0.5, dense_output_stride: t_star / (n - 1) as f64 };
    let state_traj = sim::integrate(params, s0, &rate, (0.0, t_star), &sim_opts)?;

    Ok(OcpSolution {
        objective_j: objective(&control, cfg.weight_p),
        total_released: sol.y_end[4],
        control,
        states,
        adjoints,
        hamiltonian: ham,
        state_traj,
        initial_state: s0,
        terminal_x: x_target,
        lambda1_0,
        lambda2_0: shot.lambda2_0,
        residuals: OcpResiduals { boundary, hamiltonian: hamiltonian_t, hamiltonian_max, clamp, bracket: (b - a).abs() },
        iterations,
        converged,
    })
}

/// Capacity `L` suggested for each preset.
pub fn default_cap(strain: &str) -> f64 {
    match strain.to_ascii_lowercase().as_str() {
        "wmelpop" => 1000.0,
        _ => 750.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hamiltonian_constant_term() {
        let p = StrainParams::wmel();
        assert_eq!(hamiltonian(&p, State::new(3000.0, 2000.0), (0.0, 0.0), 0.0, 1e6), -1e6);
    }

    #[test]
    fn hamiltonian_u_derivative() {
        let p = StrainParams::wmel();
        let s = State::new(3000.0, 2000.0);
        let adj = (-40.0, 250.0);
        let (u, h) = (120.0, 1e-3);
        let fd = (hamiltonian(&p, s, adj, u + h, 1e6) - hamiltonian(&p, s, adj, u - h, 1e6)) / (2.0 * h);
        assert_relative_eq!(fd, adj.1 - u, max_relative = 1e-6);
    }

    #[test]
    fn clamp_cases() {
        assert_eq!(control_from_adjoint(-5.0, 750.0), 0.0);
        assert_eq!(control_from_adjoint(760.0, 750.0), 750.0);
        assert_eq!(control_from_adjoint(375.0, 750.0), 375.0);
    }

    #[test]
    fn adjoint_is_linear() {
        let p = StrainParams::wmel();
        let s = State::new(1200.0, 800.0);
        assert_eq!(adjoint_rhs(&p, s, (0.0, 0.0)).unwrap(), (0.0, 0.0));
        let a = adjoint_rhs(&p, s, (3.0, -2.0)).unwrap();
        let b = adjoint_rhs(&p, s, (6.0, -4.0)).unwrap();
        assert_relative_eq!(b.0, 2.0 * a.0, max_relative = 1e-14);
        assert_relative_eq!(b.1, 2.0 * a.1, max_relative = 1e-14);
        assert!(adjoint_rhs(&p, State::new(-1.0, 0.0), (1.0, 1.0)).is_err());
    }

    #[test]
    fn objective_of_constants() {
        let c = ContinuousControl::from_fn(10.0, 11, |_| 0.0).unwrap();
        assert_relative_eq!(objective(&c, 5.0), 50.0, max_relative = 1e-14);
        let c = ContinuousControl::from_fn(10.0, 11, |_| 4.0).unwrap();
        assert_relative_eq!(objective(&c, 5.0), (5.0 + 8.0) * 10.0, max_relative = 1e-14);
    }

    #[test]
    fn initial_multiplier_inverts_hamiltonian() {
        let l = 750.0;
        for rhs in [10.0, 0.5 * l * l, 1e6] {
            let lam = initial_lambda2(rhs, l);
            let u = control_from_adjoint(lam, l);
            assert_relative_eq!(lam * u - 0.5 * u * u, rhs, max_relative = 1e-12);
        }
    }

    #[test]
    fn small_capacity_is_infeasible() {
        let p = StrainParams::wmel();
        let cfg = OcpConfig { cap_l: 5.0, t_max: 200.0, ..Default::default() };
        assert!(matches!(solve(&p, &cfg), Err(Error::Infeasible(_))));
    }
}
