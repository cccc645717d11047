use std::sync::Arc;

use proptest::prelude::*;

use wolbachia_core::schedule::{ImpulseSchedule, Release, RuleTag};
use wolbachia_core::sim::{self, Control, SimOptions};
use wolbachia_core::{equilibria, secure_region, State, StrainParams};

fn strain() -> impl Strategy<Value = StrainParams> {
    prop_oneof![Just(StrainParams::wmel()), Just(StrainParams::wmelpop())]
}

fn schedule(max_size: u64) -> impl Strategy<Value = Vec<(u32, u64)>> {
    proptest::collection::btree_map(1u32..40, 0..=max_size, 0..12).prop_map(|m| m.into_iter().collect())
}

fn to_schedule(rel: &[(u32, u64)]) -> ImpulseSchedule {
    let entries = rel.iter().map(|&(d, s)| Release { time: d as f64, size: s }).collect();
    ImpulseSchedule::new(entries, 1, RuleTag::Manual).unwrap()
}

fn close(a: State, b: State, rel: f64) -> bool {
    let scale = a.x.abs().max(a.y.abs()).max(1.0);
    (a.x - b.x).abs() <= rel * scale && (a.y - b.y).abs() <= rel * scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trajectories_stay_nonnegative(
        p in strain(),
        x0 in 0.0f64..12000.0,
        y0 in 0.0f64..12000.0,
        amp in 0.0f64..1000.0,
        freq in 0.05f64..2.0,
    ) {
        let ctrl = Control::Rate(Arc::new(move |t: f64| amp * (0.5 + 0.5 * (freq * t).sin())));
        let opts = SimOptions { t_end: 200.0, ..Default::default() };
        let traj = sim::integrate(&p, State::new(x0, y0), &ctrl, (0.0, 200.0), &opts).unwrap();
        for s in &traj.states {
            prop_assert!(s.x >= 0.0 && s.y >= 0.0, "{s:?}");
        }
        prop_assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn free_dynamics_enter_the_absorbing_set(p in strain(), x0 in 0.0f64..40000.0, y0 in 0.0f64..40000.0) {
        prop_assume!(x0 + y0 > 1.0);
        let bound = p.x_sharp() + 1e-6;
        let opts = SimOptions { t_end: 600.0, ..Default::default() };
        let traj = sim::integrate(&p, State::new(x0, y0), &Control::Zero, (0.0, 600.0), &opts).unwrap();
        let first = traj.states.iter().position(|s| s.total() <= bound);
        prop_assert!(first.is_some(), "never entered: {:?}", traj.final_state());
        prop_assert!(traj.states[first.unwrap()..].iter().all(|s| s.total() <= bound));
    }

    #[test]
    fn wild_axis_is_invariant(p in strain(), x0 in 1.0f64..20000.0) {
        let opts = SimOptions { t_end: 300.0, ..Default::default() };
        let traj = sim::integrate(&p, State::new(x0, 0.0), &Control::Zero, (0.0, 300.0), &opts).unwrap();
        prop_assert!(traj.states.iter().all(|s| s.y == 0.0));
    }

    #[test]
    fn jump_then_flow_matches_shifted_start(p in strain(), t0 in 0.5f64..20.0, size in 1u64..5000) {
        let x0 = p.x_sharp();
        let opts = SimOptions { t_end: t0 + 30.0, ..Default::default() };
        let sched = ImpulseSchedule::new(vec![Release { time: t0, size }], 1, RuleTag::Manual).unwrap();
        let jumped = sim::simulate_impulsive(&p, State::new(x0, 0.0), &sched, &opts).unwrap().final_state();
        let pre = sim::integrate(&p, State::new(x0, 0.0), &Control::Zero, (0.0, t0), &opts).unwrap().final_state();
        let shifted = sim::integrate(&p, State::new(pre.x, pre.y + size as f64), &Control::Zero, (t0, t0 + 30.0), &opts)
            .unwrap()
            .final_state();
        prop_assert!(close(jumped, shifted, 1e-9), "{jumped:?} vs {shifted:?}");
    }

    #[test]
    fn halving_tolerances_changes_little(p in strain(), rel in schedule(1500)) {
        let sched = to_schedule(&rel);
        let loose = SimOptions { t_end: 60.0, rel_tol: 1e-6, abs_tol: 1e-8, ..Default::default() };
        let tight = SimOptions { rel_tol: 5e-7, abs_tol: 5e-9, ..loose };
        let s0 = State::new(p.x_sharp(), 0.0);
        let a = sim::simulate_impulsive(&p, s0, &sched, &loose).unwrap().final_state();
        let b = sim::simulate_impulsive(&p, s0, &sched, &tight).unwrap().final_state();
        prop_assert!(close(a, b, 10.0 * loose.rel_tol), "{a:?} vs {b:?}");
    }

    #[test]
    fn recorded_jumps_conserve_released_mass(p in strain(), rel in schedule(3000)) {
        let sched = to_schedule(&rel);
        let opts = SimOptions { t_end: 45.0, ..Default::default() };
        let traj = sim::simulate_impulsive(&p, State::new(p.x_sharp(), 0.0), &sched, &opts).unwrap();
        let recorded: u64 = traj.jumps.iter().map(|j| (j.post.y - j.pre.y).round() as u64).sum();
        prop_assert_eq!(recorded, sched.total());
        for j in &traj.jumps {
            prop_assert_eq!(j.pre.x, j.post.x);
        }
    }

    #[test]
    fn propagation_matches_full_simulation(p in strain(), rel in schedule(1000)) {
        let sched = to_schedule(&rel);
        let opts = SimOptions { t_end: 40.0, ..Default::default() };
        let s0 = State::new(p.x_sharp(), 0.0);
        let full = sim::simulate_impulsive(&p, s0, &sched, &opts).unwrap().final_state();
        let pairs: Vec<(f64, f64)> = sched.entries.iter().map(|r| (r.time, r.size as f64)).collect();
        let quick = sim::propagate_with_releases(&p, s0, &pairs, 40.0, &opts).unwrap();
        prop_assert!(close(full, quick, 1e-9));
    }

    #[test]
    fn larger_releases_enter_no_later(base in proptest::collection::vec(0u64..900, 14), extra in proptest::collection::vec(0u64..300, 14)) {
        let p = StrainParams::wmel();
        let target = secure_region(&equilibria(&p).unwrap()).unwrap();
        let opts = SimOptions { t_end: 40.0, ..Default::default() };
        let s0 = State::new(p.x_sharp(), 0.0);
        let b = ImpulseSchedule::periodic(&base, 1, RuleTag::Manual);
        let bigger: Vec<u64> = base.iter().zip(&extra).map(|(a, e)| a + e).collect();
        let a = ImpulseSchedule::periodic(&bigger, 1, RuleTag::Manual);
        let tb = sim::first_basin_entry(&sim::simulate_impulsive(&p, s0, &b, &opts).unwrap(), target);
        prop_assume!(tb.is_some());
        let ta = sim::first_basin_entry(&sim::simulate_impulsive(&p, s0, &a, &opts).unwrap(), target);
        prop_assert!(ta.is_some() && ta.unwrap() <= tb.unwrap() + sim::ENTRY_RESOLUTION, "{ta:?} vs {tb:?}");
    }
}

#[test]
fn basin_entry_lands_inside_region() {
    let p = StrainParams::wmel();
    let target = secure_region(&equilibria(&p).unwrap()).unwrap();
    let sched = ImpulseSchedule::periodic(&[700; 14], 1, RuleTag::Manual);
    let opts = SimOptions { t_end: 40.0, ..Default::default() };
    let traj = sim::simulate_impulsive(&p, State::new(p.x_sharp(), 0.0), &sched, &opts).unwrap();
    let t = sim::first_basin_entry(&traj, target).unwrap();
    let after = traj.state_at(t + 2.0 * sim::ENTRY_RESOLUTION);
    assert!(after.x < target.0 && after.y > target.1, "{after:?}");
    let before = traj.state_at(t - 2.0 * sim::ENTRY_RESOLUTION);
    assert!(!(before.x < target.0 && before.y > target.1), "{before:?}");
}
