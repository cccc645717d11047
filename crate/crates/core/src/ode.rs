//! Dormand–Prince 5(4) integrator with continuous (dense) output.
//!
//! Fixed-dimension states (`[f64; N]`) keep the model and the
//! state/adjoint system allocation-free per step.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
    /// Upper bound on the step size (days).
    pub max_step: f64,
    pub max_steps: usize,
    /// Number of leading components that must stay nonnegative. Negative
    /// values down to `-abs` are clamped to zero; anything below is an error.
    pub nonnegative: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rel: 1e-8, abs: 1e-10, max_step: 1.0, max_steps: 1_000_000, nonnegative: 0 }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step with its quartic continuous extension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub h: f64,
    coeffs: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn start(&self) -> [f64; N] {
        self.coeffs[0]
    }

    pub fn end(&self) -> [f64; N] {
        self.eval(self.t1())
    }

    pub fn eval(&self, t: f64) -> [f64; N] {
        let th = if self.h == 0.0 { 0.0 } else { (t - self.t0) / self.h };
        let th1 = 1.0 - th;
        let c = &self.coeffs;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = c[0][i] + th * (c[1][i] + th1 * (c[2][i] + th * (c[3][i] + th1 * c[4][i])));
        }
        out
    }
}

/// Terminal event: integration stops where `g` crosses from positive to
/// nonpositive.
pub type EventFn<'a, const N: usize> = &'a dyn Fn(f64, &[f64; N]) -> f64;

#[derive(Debug, Clone)]
pub struct Solution<const N: usize> {
    pub steps: Vec<DenseStep<N>>,
    pub t_end: f64,
    pub y_end: [f64; N],
    /// Set when a terminal event fired.
    pub event: bool,
}

impl<const N: usize> Solution<N> {
    /// Dense evaluation; clamps `t` into the integrated span.
    pub fn eval(&self, t: f64) -> [f64; N] {
        if self.steps.is_empty() {
            return self.y_end;
        }
        if t >= self.t_end {
            return self.y_end;
        }
        let idx = self.steps.partition_point(|s| s.t1() < t);
        let step = &self.steps[idx.min(self.steps.len() - 1)];
        step.eval(t.max(step.t0))
    }
}

fn error_norm<const N: usize>(err: &[f64; N], y0: &[f64; N], y1: &[f64; N], tol: &Tolerances) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sc = tol.abs + tol.rel * y0[i].abs().max(y1[i].abs());
        acc += (err[i] / sc).powi(2);
    }
    (acc / N as f64).sqrt()
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut s = 0.0;
        for (a, k) in terms {
            s += a * k[i];
        }
        out[i] += h * s;
    }
    out
}

fn initial_step<const N: usize, F>(f: &mut F, t0: f64, y0: &[f64; N], k1: &[f64; N], tol: &Tolerances, span: f64) -> f64
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let sc: Vec<f64> = y0.iter().map(|v| tol.abs + tol.rel * v.abs()).collect();
    let d0 = (y0.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / N as f64).sqrt();
    let d1 = (k1.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / N as f64).sqrt();
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(tol.max_step).min(span);
    let y1 = axpy(y0, h0, &[(1.0, k1)]);
    let k2 = f(t0 + h0, &y1);
    let d2 = (k2.iter().zip(k1).zip(&sc).map(|((a, b), s)| ((a - b) / s).powi(2)).sum::<f64>() / N as f64).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1).min(tol.max_step).min(span)
}

/// Integrates `dy/dt = f(t, y)` from `t0` to `t1` (`t1 > t0`).
///
/// With an event function, integration stops at the first crossing of the
/// event from positive to nonpositive, located by bisection on the dense
/// output.
pub fn integrate<const N: usize, F>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    tol: &Tolerances,
    event: Option<EventFn<'_, N>>,
) -> Result<Solution<N>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let mut steps = Vec::new();
    let span = t1 - t0;
    if span <= 0.0 {
        return Ok(Solution { steps, t_end: t0, y_end: y0, event: false });
    }
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    let mut h = initial_step(&mut f, t, &y, &k1, tol, span);
    let mut g_prev = event.map(|g| g(t, &y));
    let mut n_steps = 0usize;

    while t < t1 {
        if n_steps >= tol.max_steps {
            return Err(Error::TooManySteps(tol.max_steps));
        }
        n_steps += 1;
        let last = t + h >= t1 - 1e-12 * t1.abs().max(1.0);
        if last {
            h = t1 - t;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h });
        }

        let k2 = f(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = f(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(t + C5 * h, &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = f(t + h, &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let y_new = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(t + h, &y_new);

        let mut err = [0.0; N];
        for i in 0..N {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let en = error_norm(&err, &y, &y_new, tol);
        if !en.is_finite() {
            h *= 0.2;
            continue;
        }
        if en > 1.0 {
            h *= (0.9 * en.powf(-0.2)).max(0.2);
            continue;
        }

        let mut coeffs = [[0.0; N]; 5];
        for i in 0..N {
            let ydiff = y_new[i] - y[i];
            let bspl = h * k1[i] - ydiff;
            coeffs[0][i] = y[i];
            coeffs[1][i] = ydiff;
            coeffs[2][i] = bspl;
            coeffs[3][i] = ydiff - h * k7[i] - bspl;
            coeffs[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        let step = DenseStep { t0: t, h, coeffs };
        let t_new = if last { t1 } else { t + h };
        let mut y_acc = y_new;
        for (i, v) in y_acc.iter_mut().enumerate().take(tol.nonnegative) {
            if *v < 0.0 {
                if *v >= -tol.abs {
                    *v = 0.0;
                } else {
                    return Err(Error::NegativeExcursion { t: t_new, component: i, value: *v });
                }
            }
        }

        if let (Some(g), Some(gp)) = (event, g_prev) {
            let g_new = g(t_new, &y_acc);
            if gp > 0.0 && g_new <= 0.0 {
                // Bisection on the interpolant.
                let (mut lo, mut hi) = (t, t_new);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if g(mid, &step.eval(mid)) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let y_ev = step.eval(hi);
                let cut = DenseStep { t0: t, h: step.h, coeffs: step.coeffs };
                steps.push(cut);
                return Ok(Solution { steps, t_end: hi, y_end: y_ev, event: true });
            }
            g_prev = Some(g_new);
        }

        steps.push(step);
        t = t_new;
        y = y_acc;
        k1 = if y_acc == y_new { k7 } else { f(t, &y) };
        h = (h * (0.9 * en.max(1e-10).powf(-0.2)).clamp(0.2, 10.0)).min(tol.max_step);
    }
    Ok(Solution { steps, t_end: t, y_end: y, event: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_decay() {
        let tol = Tolerances { rel: 1e-10, abs: 1e-12, ..Default::default() };
        let sol = integrate(|_, y: &[f64; 1]| [-0.5 * y[0]], 0.0, [2.0], 4.0, &tol, None).unwrap();
        assert_relative_eq!(sol.y_end[0], 2.0 * (-2.0f64).exp(), max_relative = 1e-9);
        assert_eq!(sol.t_end, 4.0);
        // dense output between steps
        for &t in &[0.3, 1.7, 3.99] {
            assert_relative_eq!(sol.eval(t)[0], 2.0 * (-0.5 * t).exp(), max_relative = 1e-7);
        }
    }

    #[test]
    fn harmonic_oscillator_period() {
        let tol = Tolerances { rel: 1e-10, abs: 1e-12, max_step: 0.5, ..Default::default() };
        let tau = std::f64::consts::TAU;
        let sol = integrate(|_, y: &[f64; 2]| [y[1], -y[0]], 0.0, [1.0, 0.0], tau, &tol, None).unwrap();
        assert!((sol.y_end[0] - 1.0).abs() < 1e-8);
        assert!(sol.y_end[1].abs() < 1e-8);
    }

    #[test]
    fn terminal_event_located() {
        let tol = Tolerances { rel: 1e-10, abs: 1e-12, ..Default::default() };
        // y = 1 - t reaches zero at t = 1
        let ev = |_: f64, y: &[f64; 1]| y[0];
        let sol = integrate(|_, _: &[f64; 1]| [-1.0], 0.0, [1.0], 5.0, &tol, Some(&ev)).unwrap();
        assert!(sol.event);
        assert!((sol.t_end - 1.0).abs() < 1e-10);
    }

    #[test]
    fn negative_excursion_is_an_error() {
        let tol = Tolerances { nonnegative: 1, max_step: 0.1, ..Default::default() };
        let r = integrate(|_, _: &[f64; 1]| [-1.0], 0.0, [0.5], 2.0, &tol, None);
        assert!(matches!(r, Err(Error::NegativeExcursion { .. })));
    }
}
