use approx::assert_relative_eq;
use proptest::prelude::*;

use wolbachia_core::model::{self, Stability};
use wolbachia_core::{equilibria, State, StrainParams};

fn params() -> impl Strategy<Value = StrainParams> {
    (0.4f64..0.95, 0.4f64..0.95, 0.85f64..0.999, 0.6f64..1.0, 0.0f64..0.002).prop_map(|(fr, fd, nu, eta, omega)| {
        let mut p = StrainParams::wmel();
        p.name = "custom".into();
        p.rho_w = fr * p.rho_n;
        p.delta_w = p.delta_n / fd;
        p.nu = nu;
        p.eta = eta;
        p.omega = omega;
        p
    })
}

fn state(p: &StrainParams) -> impl Strategy<Value = State> {
    let top = 1.5 * p.x_sharp();
    (1.0..top, 1.0..top).prop_map(|(x, y)| State::new(x, y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn coexistence_equilibria_are_rest_points(p in params()) {
        let eq = equilibria(&p).unwrap();
        prop_assume!(eq.eu.is_some() && !eq.collision);
        let total = p.offspring_numbers().q_y.ln() / p.sigma;
        for e in [eq.eu.unwrap(), eq.es.unwrap()] {
            let (fx, fy) = p.field(e.state.x, e.state.y);
            let scale = p.rho_n * total;
            prop_assert!(fx.abs() <= 1e-9 * scale && fy.abs() <= 1e-9 * scale, "{fx} {fy}");
            prop_assert!((e.state.total() - total).abs() <= 1e-9 * total);
        }
        prop_assert_eq!(eq.eu.unwrap().stability, Stability::Saddle);
        prop_assert!(eq.es.unwrap().state.x <= eq.eu.unwrap().state.x);
    }

    #[test]
    fn wild_equilibrium_is_rest_point(p in params()) {
        let ex = equilibria(&p).unwrap().ex.state;
        let (fx, fy) = p.field(ex.x, ex.y);
        prop_assert!(fx.abs() <= 1e-9 * p.rho_n * ex.x);
        prop_assert_eq!(fy, 0.0);
    }

    #[test]
    fn jacobian_matches_central_differences(p in params(), seed in any::<u64>()) {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let top = 1.5 * p.x_sharp();
        for _ in 0..5 {
            let s = State::new(rand::Rng::gen_range(&mut rng, 1.0..top), rand::Rng::gen_range(&mut rng, 1.0..top));
            let jac = model::jacobian(&p, s).unwrap();
            let mag = jac.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            for k in 0..2 {
                let h = 1e-6 * s.as_array()[k];
                let mut a = s.as_array();
                let mut b = s.as_array();
                a[k] += h;
                b[k] -= h;
                let (fa, fb) = (p.field(a[0], a[1]), p.field(b[0], b[1]));
                let col = [(fa.0 - fb.0) / (2.0 * h), (fa.1 - fb.1) / (2.0 * h)];
                for i in 0..2 {
                    let err = (jac[i][k] - col[i]).abs() / jac[i][k].abs().max(col[i].abs()).max(1e-3 * mag);
                    prop_assert!(err <= 1e-6, "entry ({i},{k}): {} vs {}", jac[i][k], col[i]);
                }
            }
        }
    }

    #[test]
    fn rhs_adds_release_to_infected_equation(p in params(), u in 0.0f64..2000.0, s in state(&StrainParams::wmel())) {
        let base = model::rhs(&p, s, 0.0).unwrap();
        let with = model::rhs(&p, s, u).unwrap();
        prop_assert_eq!(with.x, base.x);
        assert_relative_eq!(with.y - base.y, u, max_relative = 1e-9, epsilon = 1e-9);
    }

    #[test]
    fn wild_only_states_stay_wild_only(p in params(), x in 0.0f64..20000.0) {
        let (_, fy) = p.field(x, 0.0);
        prop_assert_eq!(fy, 0.0);
    }
}

#[test]
fn negative_states_are_rejected() {
    let p = StrainParams::wmel();
    assert!(model::rhs(&p, State::new(-1.0, 5.0), 0.0).is_err());
    assert!(model::jacobian(&p, State::new(5.0, -1.0)).is_err());
}
