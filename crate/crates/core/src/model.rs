//! Right-hand side of the two-population model, its Jacobian and the
//! equilibrium structure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{OffspringNumbers, State, StrainParams};

/// Real parts below this magnitude are treated as zero when labelling
/// equilibria.
pub const STABILITY_TOL: f64 = 1e-9;

/// `x (x + (1 - eta) y) / (x + y)`, continuously extended by 0 at the origin.
#[inline]
fn mating_term(eta: f64, x: f64, y: f64) -> f64 {
    let s = x + y;
    if s > 0.0 {
        x * (x + (1.0 - eta) * y) / s
    } else {
        0.0
    }
}

impl StrainParams {
    /// Release-free part of the vector field, `(f_x, f_y)`. No domain checks;
    /// used in the integrator hot loops.
    #[inline]
    pub fn field(&self, x: f64, y: f64) -> (f64, f64) {
        let e = (-self.sigma * (x + y)).exp();
        let births_x = (self.rho_n * mating_term(self.eta, x, y) + (1.0 - self.nu) * self.rho_w * y) * e;
        let fx = births_x + self.omega * y - self.delta_n * x;
        let fy = self.nu * self.rho_w * y * e - (self.omega + self.delta_w) * y;
        (fx, fy)
    }

    /// Partial derivatives of [`StrainParams::field`] as
    /// `[[dfx/dx, dfx/dy], [dfy/dx, dfy/dy]]`.
    ///
    /// At the origin the mating term has no unique derivative; the limit
    /// along the wild axis (`y = 0`) is used.
    pub fn field_jacobian(&self, x: f64, y: f64) -> [[f64; 2]; 2] {
        let s = x + y;
        let e = (-self.sigma * s).exp();
        let (g, gx, gy) = if s > 0.0 {
            let s2 = s * s;
            (
                mating_term(self.eta, x, y),
                (x * x + 2.0 * x * y + (1.0 - self.eta) * y * y) / s2,
                -self.eta * x * x / s2,
            )
        } else {
            (0.0, 1.0, -self.eta)
        };
        let a = self.rho_n * g + (1.0 - self.nu) * self.rho_w * y;
        [
            [
                self.rho_n * gx * e - self.sigma * a * e - self.delta_n,
                (self.rho_n * gy + (1.0 - self.nu) * self.rho_w) * e - self.sigma * a * e + self.omega,
            ],
            [
                -self.sigma * self.nu * self.rho_w * y * e,
                self.nu * self.rho_w * e * (1.0 - self.sigma * y) - self.omega - self.delta_w,
            ],
        ]
    }
}

/// Time derivative of the state under a release rate `u` (individuals/day).
pub fn rhs(params: &StrainParams, s: State, u: f64) -> Result<State> {
    s.check_nonnegative()?;
    if !(u >= 0.0) {
        return Err(Error::NegativeControl(u));
    }
    let (fx, fy) = params.field(s.x, s.y);
    Ok(State::new(fx, fy + u))
}

/// Jacobian of the model with respect to `(x, y)`; independent of `u`.
pub fn jacobian(params: &StrainParams, s: State) -> Result<[[f64; 2]; 2]> {
    s.check_nonnegative()?;
    Ok(params.field_jacobian(s.x, s.y))
}

/// Eigenvalues of a real 2x2 matrix as `(re, im)` pairs, larger real part first.
pub fn eigenvalues(m: &[[f64; 2]; 2]) -> [(f64, f64); 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        // Avoid cancellation in the smaller root.
        let big = tr / 2.0 + r.copysign(tr);
        let small = if big != 0.0 { det / big } else { tr / 2.0 - r.copysign(tr) };
        let (hi, lo) = if big >= small { (big, small) } else { (small, big) };
        [(hi, 0.0), (lo, 0.0)]
    } else {
        let im = (-disc).sqrt();
        [(tr / 2.0, im), (tr / 2.0, -im)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Attractor,
    Repeller,
    Saddle,
    Degenerate,
}

impl Stability {
    pub fn classify(m: &[[f64; 2]; 2]) -> Self {
        let [(a, _), (b, _)] = eigenvalues(m);
        if a.abs() <= STABILITY_TOL || b.abs() <= STABILITY_TOL {
            Stability::Degenerate
        } else if a < 0.0 && b < 0.0 {
            Stability::Attractor
        } else if a > 0.0 && b > 0.0 {
            Stability::Repeller
        } else {
            Stability::Saddle
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Stability::Attractor => "attractor",
            Stability::Repeller => "repeller",
            Stability::Saddle => "saddle",
            Stability::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub state: State,
    pub stability: Stability,
}

impl Equilibrium {
    fn at(params: &StrainParams, state: State) -> Self {
        let j = params.field_jacobian(state.x, state.y);
        Self { state, stability: Stability::classify(&j) }
    }
}

/// All equilibria of the release-free model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSet {
    pub offspring: OffspringNumbers,
    pub e0: Equilibrium,
    pub ex: Equilibrium,
    /// Coexistence saddle.
    pub eu: Option<Equilibrium>,
    /// Stable coexistence node.
    pub es: Option<Equilibrium>,
    /// Infected-only equilibrium (perfect transmission, no infection loss).
    pub ey: Option<Equilibrium>,
    /// `Eu` and `Es` coincide (pitchfork point).
    pub collision: bool,
}

/// Computes the equilibria of the model with `u = 0`.
pub fn equilibria(params: &StrainParams) -> Result<EquilibriumSet> {
    let q = params.offspring_numbers();
    if !q.viable {
        return Err(Error::NotViable { q_x: q.q_x, q_y: q.q_y });
    }
    let sigma = params.sigma;
    let eta = params.eta;
    let e0 = Equilibrium::at(params, State::ORIGIN);
    let ex = Equilibrium::at(params, State::new(q.q_x.ln() / sigma, 0.0));

    let total = q.q_y.ln() / sigma;
    let disc = (q.q_c - 1.0).powi(2) - 4.0 * eta * q.q_yx / q.q_x;
    let collision = disc.abs() <= 1e-12 * (q.q_c - 1.0).powi(2).max(f64::MIN_POSITIVE);
    let exists = q.q_c > 1.0 && q.coexistence_margin() > 0.0 && eta > 0.0 && (disc >= 0.0 || collision);
    let (eu, es) = if exists {
        let r = disc.max(0.0).sqrt();
        let scale = q.q_y.ln() / (2.0 * eta * sigma);
        let xu = scale * ((q.q_c - 1.0) + r);
        let xs = scale * ((q.q_c - 1.0) - r);
        (
            Some(Equilibrium::at(params, State::new(xu, total - xu))),
            Some(Equilibrium::at(params, State::new(xs.max(0.0), total - xs.max(0.0)))),
        )
    } else {
        (None, None)
    };

    let ey = if params.nu == 1.0 && params.omega == 0.0 && (q.q_x - q.q_y) / q.q_x < eta && eta <= 1.0 {
        Some(Equilibrium::at(params, State::new(0.0, total)))
    } else {
        None
    };

    Ok(EquilibriumSet { offspring: q, e0, ex, eu, es, ey, collision })
}

/// Corner `(x_u, y_u)` of the secure region `x < x_u, y > y_u`.
pub fn secure_region(eq: &EquilibriumSet) -> Result<(f64, f64)> {
    eq.eu.map(|e| (e.state.x, e.state.y)).ok_or(Error::NoCoexistence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd_jacobian(p: &StrainParams, x: f64, y: f64) -> [[f64; 2]; 2] {
        let hx = 1e-6 * x.abs().max(1.0);
        let hy = 1e-6 * y.abs().max(1.0);
        let (a1, b1) = p.field(x + hx, y);
        let (a0, b0) = p.field(x - hx, y);
        let (c1, d1) = p.field(x, y + hy);
        let (c0, d0) = p.field(x, y - hy);
        [
            [(a1 - a0) / (2.0 * hx), (c1 - c0) / (2.0 * hy)],
            [(b1 - b0) / (2.0 * hx), (d1 - d0) / (2.0 * hy)],
        ]
    }

    #[test]
    fn origin_and_ex_are_rest_points() {
        let p = StrainParams::wmel();
        assert_eq!(rhs(&p, State::ORIGIN, 0.0).unwrap(), State::ORIGIN);
        let d = rhs(&p, State::new(p.x_sharp(), 0.0), 0.0).unwrap();
        assert!(d.x.abs() < 1e-10 && d.y == 0.0);
    }

    #[test]
    fn wild_free_axis() {
        let p = StrainParams::wmel();
        let y0 = 1234.5;
        let d = rhs(&p, State::new(0.0, y0), 0.0).unwrap();
        let e = (-p.sigma * y0).exp();
        assert_relative_eq!(d.x, (1.0 - p.nu) * p.rho_w * y0 * e + p.omega * y0, max_relative = 1e-13);
        assert_relative_eq!(d.y, p.nu * p.rho_w * y0 * e - (p.omega + p.delta_w) * y0, max_relative = 1e-13);
    }

    #[test]
    fn negative_inputs_rejected() {
        let p = StrainParams::wmel();
        assert!(rhs(&p, State::new(-1.0, 0.0), 0.0).is_err());
        assert!(rhs(&p, State::new(1.0, 0.0), -0.5).is_err());
        assert!(jacobian(&p, State::new(0.0, -1.0)).is_err());
    }

    #[test]
    fn jacobian_entry_on_infected_axis() {
        let p = StrainParams::wmelpop();
        let y = 2500.0;
        let j = jacobian(&p, State::new(0.0, y)).unwrap();
        let e = (-p.sigma * y).exp();
        let expected = p.nu * p.rho_w * e * (1.0 - p.sigma * y) - p.omega - p.delta_w;
        assert_relative_eq!(j[1][1], expected, max_relative = 1e-13);
    }

    #[test]
    fn jacobian_at_ex_matches_finite_differences() {
        let p = StrainParams::wmel();
        let xs = p.x_sharp();
        let j = jacobian(&p, State::new(xs, 0.0)).unwrap();
        // Evaluate the one-sided x-derivative along the axis.
        let h = 1e-3;
        let fd = (p.field(xs + h, 0.0).0 - p.field(xs - h, 0.0).0) / (2.0 * h);
        assert_relative_eq!(j[0][0], fd, max_relative = 1e-6);
        assert!(j[0][0] < 0.0);
        let fd = fd_jacobian(&p, 3000.0, 2000.0);
        let j = p.field_jacobian(3000.0, 2000.0);
        for r in 0..2 {
            for c in 0..2 {
                assert_relative_eq!(j[r][c], fd[r][c], max_relative = 1e-6, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn equilibrium_labels() {
        for p in [StrainParams::wmel(), StrainParams::wmelpop()] {
            let eq = equilibria(&p).unwrap();
            assert_eq!(eq.e0.stability, Stability::Repeller);
            assert_eq!(eq.ex.stability, Stability::Attractor);
            assert_eq!(eq.eu.unwrap().stability, Stability::Saddle);
            assert_eq!(eq.es.unwrap().stability, Stability::Attractor);
            assert!(eq.ey.is_none());
            assert!(!eq.collision);
        }
    }

    #[test]
    fn wmel_coexistence_coordinates() {
        let eq = equilibria(&StrainParams::wmel()).unwrap();
        let eu = eq.eu.unwrap().state;
        let es = eq.es.unwrap().state;
        assert!((eu.x - 4592.0).abs() < 1.0 && (eu.y - 1793.0).abs() < 1.0);
        assert!((es.x - 598.0).abs() < 1.0 && (es.y - 5787.0).abs() < 1.0);
    }

    #[test]
    fn secure_region_requires_coexistence() {
        let mut p = StrainParams::wmel();
        p.eta = 0.1;
        let eq = equilibria(&p).unwrap();
        assert!(eq.eu.is_none());
        assert_eq!(secure_region(&eq), Err(Error::NoCoexistence));
    }

    #[test]
    fn non_viable_rejected() {
        let mut p = StrainParams::wmel();
        p.nu = 0.005;
        assert!(matches!(equilibria(&p), Err(Error::NotViable { .. })));
    }

    #[test]
    fn replacement_equilibrium() {
        let mut p = StrainParams::wmel();
        p.nu = 1.0;
        p.omega = 0.0;
        let eq = equilibria(&p).unwrap();
        let ey = eq.ey.expect("Ey exists for perfect transmission");
        assert_eq!(ey.state.x, 0.0);
        assert_relative_eq!(ey.state.y, p.coexistence_total(), max_relative = 1e-12);
    }

    #[test]
    fn complex_eigenvalues() {
        let ev = eigenvalues(&[[-1.0, -2.0], [2.0, -1.0]]);
        assert_eq!(ev[0], (-1.0, 2.0));
        assert_eq!(Stability::classify(&[[-1.0, -2.0], [2.0, -1.0]]), Stability::Attractor);
        assert_eq!(Stability::classify(&[[0.0, 0.0], [0.0, -1.0]]), Stability::Degenerate);
    }
}
