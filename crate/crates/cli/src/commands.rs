use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use wolbachia_core::ga::{self, EpsilonLoopConfig, EpsilonOutcome, FitnessContext, FitnessReport};
use wolbachia_core::impulsive::{self, IndicatorReport};
use wolbachia_core::ocp::{self, ContinuousControl, OcpSolution};
use wolbachia_core::reference::{self, deviation};
use wolbachia_core::schedule::ImpulseSchedule;
use wolbachia_core::sim::{self, Control, GridSpec, SeparatrixOptions, SimOptions};
use wolbachia_core::{io, model, State, StrainParams};

use crate::config::{Scenario, ScenarioArgs};
use crate::fail::{Failure, Outcome};

const CELLS: [u32; 3] = [1, 7, 14];
const STRAINS: [&str; 2] = ["wmel", "wmelpop"];

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::run(format!("cannot write {}: {e}", path.display())))
}

fn open(path: &Path) -> Outcome<File> {
    File::open(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned())
}

fn write_summary(scn: &Scenario, command: &str, result: Value, files: &[PathBuf]) -> Outcome<PathBuf> {
    let path = scn.output(&format!("{command}.json"))?;
    let doc = json!({
        "command": command,
        "seed": scn.seed,
        "config_hash": scn.hash(),
        "scenario": scn,
        "result": result,
        "files": files.iter().map(|f| file_name(f)).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::run(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| Failure::run(format!("cannot write {}: {e}", path.display())))?;
    println!("summary: {}", path.display());
    Ok(path)
}

fn to_value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).expect("summary values serialize")
}

fn x0(scn: &Scenario) -> f64 {
    scn.initial_wild.unwrap_or_else(|| scn.strain.x_sharp())
}

fn target(p: &StrainParams) -> Outcome<(f64, f64)> {
    Ok(model::secure_region(&model::equilibria(p)?)?)
}

pub fn equilibria(args: &ScenarioArgs) -> Outcome<()> {
    let scn = Scenario::resolve(args)?;
    let eq = model::equilibria(&scn.strain)?;
    let q = eq.offspring;
    println!("strain {}: Q_x = {:.4}, Q_y = {:.4}, Q_yx = {:.4}, Q_c = {:.4}", scn.strain.name, q.q_x, q.q_y, q.q_yx, q.q_c);
    println!("{:<4} {:>12} {:>12}  stability", "", "x", "y");
    let mut rows = vec![("E0", eq.e0), ("Ex", eq.ex)];
    rows.extend(eq.eu.map(|e| ("Eu", e)));
    rows.extend(eq.es.map(|e| ("Es", e)));
    rows.extend(eq.ey.map(|e| ("Ey", e)));
    for (name, e) in &rows {
        println!("{name:<4} {:>12.2} {:>12.2}  {}", e.state.x, e.state.y, e.stability.as_str());
    }
    if eq.eu.is_none() {
        println!("no coexistence equilibria");
    }
    let result = json!({
        "equilibria": to_value(&eq),
        "secure_region": eq.eu.map(|e| json!({ "x_u": e.state.x, "y_u": e.state.y })),
    });
    write_summary(&scn, "equilibria", result, &[])?;
    Ok(())
}

pub fn simulate(args: &ScenarioArgs, schedule: Option<&Path>, control: Option<&Path>, t_end: Option<f64>) -> Outcome<()> {
    let scn = Scenario::resolve(args)?;
    let s0 = State::new(x0(&scn), 0.0);
    let tgt = target(&scn.strain)?;
    let (traj, released) = match (schedule, control) {
        (Some(path), None) => {
            let sched = io::read_schedule(open(path)?).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            let last = sched.entries.last().map_or(0.0, |r| r.time);
            let end = t_end.unwrap_or(scn.sim.t_end).max(last);
            let opts = SimOptions { t_end: end, ..scn.sim };
            (sim::simulate_impulsive(&scn.strain, s0, &sched, &opts)?, sched.total() as f64)
        }
        (None, Some(path)) => {
            let ctrl = io::read_control(open(path)?).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            let end = t_end.unwrap_or(scn.sim.t_end).max(ctrl.t_star);
            let opts = SimOptions { t_end: end, ..scn.sim };
            (sim::integrate(&scn.strain, s0, &ctrl.to_sim_control(), (0.0, end), &opts)?, ctrl.total())
        }
        _ => return Err(Failure::usage("give exactly one of --schedule or --control")),
    };
    let entry = sim::first_basin_entry(&traj, tgt);
    let out = scn.output("trajectory.csv")?;
    io::write_trajectory(create(&out)?, &traj)?;
    let end = traj.final_state();
    match entry {
        Some(t) => println!("secure region entered at t = {t:.4}"),
        None => println!("secure region not entered by t = {}", traj.t_end()),
    }
    let result = json!({
        "initial_state": to_value(&s0),
        "secure_region": { "x_u": tgt.0, "y_u": tgt.1 },
        "basin_entry_time": entry,
        "feasible": entry.is_some(),
        "final_state": to_value(&end),
        "t_end": traj.t_end(),
        "released": released,
    });
    write_summary(&scn, "simulate", result, &[out])?;
    Ok(())
}

fn solve_ocp(scn: &Scenario) -> Outcome<OcpSolution> {
    let sol = ocp::solve(&scn.strain, &scn.ocp)?;
    if !sol.converged {
        return Err(Failure::run(format!("optimal control did not converge (residuals {:?})", sol.residuals)));
    }
    Ok(sol)
}

fn ocp_result(sol: &OcpSolution) -> Value {
    json!({
        "t_star": sol.control.t_star,
        "total_released": sol.total_released,
        "objective_j": sol.objective_j,
        "initial_state": to_value(&sol.initial_state),
        "terminal_x": sol.terminal_x,
        "final_state": to_value(sol.states.last().unwrap()),
        "lambda1_0": sol.lambda1_0,
        "lambda2_0": sol.lambda2_0,
        "residuals": to_value(&sol.residuals),
        "iterations": sol.iterations,
        "converged": sol.converged,
    })
}

pub fn ocp(args: &ScenarioArgs) -> Outcome<()> {
    let scn = Scenario::resolve(args)?;
    let sol = solve_ocp(&scn)?;
    let ctrl = scn.output("control.csv")?;
    io::write_control(create(&ctrl)?, &sol)?;
    let traj = scn.output("ocp_trajectory.csv")?;
    io::write_trajectory(create(&traj)?, &sol.state_traj)?;
    println!(
        "{}: T* = {:.4} days, released = {:.1}, J = {:.6e}",
        scn.strain.name, sol.control.t_star, sol.total_released, sol.objective_j
    );
    write_summary(&scn, "ocp", ocp_result(&sol), &[ctrl, traj])?;
    Ok(())
}

fn indicators(scn: &Scenario, ctrl: &ContinuousControl, m: u32) -> Outcome<(ImpulseSchedule, IndicatorReport)> {
    if m == 1 {
        let daily = impulsive::daily_impulses(ctrl);
        let sched = daily.to_schedule();
        let rep = impulsive::evaluate_schedule(&scn.strain, &sched, target(&scn.strain)?, scn.initial_wild, None, &scn.sim)?;
        Ok((sched, rep))
    } else {
        let (seq, rep) = impulsive::select_rule(&scn.strain, ctrl, m, scn.initial_wild, &scn.sim)?;
        Ok((seq.to_schedule(), rep))
    }
}

pub fn impulsive(args: &ScenarioArgs, control: Option<&Path>, reproduce: bool) -> Outcome<()> {
    if reproduce {
        return reproduce_table2(args);
    }
    let path = control.ok_or_else(|| Failure::usage("impulsive needs --control FILE (written by `ocp`)"))?;
    let scn = Scenario::resolve(args)?;
    let ctrl = io::read_control(open(path)?).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let m = scn.frequency;
    let daily = impulsive::daily_impulses(&ctrl);
    let (sched, rep) = indicators(&scn, &ctrl, m)?;
    let out = scn.output(&format!("schedule_m{m}.csv"))?;
    io::write_schedule(create(&out)?, &sched, true)?;
    println!(
        "m = {m} ({}): {} releases, {} individuals, entry at {}",
        rep.rule.as_str(),
        rep.num_releases,
        rep.overall_size,
        rep.basin_entry_time.map_or("never".to_string(), |t| format!("t = {t:.3}"))
    );
    let result = json!({
        "control_total": ctrl.total(),
        "t_star": ctrl.t_star,
        "daily_sizes": daily.sizes,
        "indicators": to_value(&rep),
        "sizes": sched.entries.iter().map(|r| r.size).collect::<Vec<_>>(),
    });
    write_summary(&scn, "impulsive", result, &[out])?;
    if !rep.feasible {
        return Err(Failure::run("schedule does not reach the secure region"));
    }
    Ok(())
}

fn reproduce_table2(args: &ScenarioArgs) -> Outcome<()> {
    let base = Scenario::resolve(args)?;
    let mut rows = Vec::new();
    println!("{:<8} {:>3} {:>10} {:>9} {:>10} {:>9} {:>8}  rule", "strain", "m", "releases", "ref", "total", "ref", "dev%");
    for name in STRAINS {
        let scn = base.with_strain(name, args)?;
        let sol = solve_ocp(&scn)?;
        for m in CELLS {
            let cell = reference::table2(name, m).expect("reference cell");
            let (sched, rep) = indicators(&scn, &sol.control, m)?;
            let dev = 100.0 * deviation(rep.overall_size as f64, cell.total as f64);
            println!(
                "{name:<8} {m:>3} {:>10} {:>9} {:>10} {:>9} {dev:>8.2}  {}",
                rep.num_releases,
                cell.releases,
                rep.overall_size,
                cell.total,
                rep.rule.as_str()
            );
            rows.push(json!({
                "strain": name,
                "period": m,
                "rule": rep.rule.as_str(),
                "t_star": sol.control.t_star,
                "releases": rep.num_releases,
                "total": rep.overall_size,
                "scheduled_sizes": sched.entries.iter().map(|r| r.size).collect::<Vec<_>>(),
                "basin_entry_time": rep.basin_entry_time,
                "feasible": rep.feasible,
                "reference": { "source": "Table 2", "releases": cell.releases, "total": cell.total },
                "total_deviation_pct": dev,
            }));
        }
    }
    write_summary(&base, "reproduce_table2", json!({ "cells": rows }), &[])?;
    Ok(())
}

fn epsilon_start(scn: &Scenario, p: usize) -> Outcome<usize> {
    let e0 = match scn.epsilon_0 {
        Some(e) => e,
        None => solve_ocp(scn)?.control.t_star.ceil() as usize,
    };
    Ok(e0.div_ceil(p).max(1) * p)
}

fn run_ga(scn: &Scenario, p: usize, seed: u64) -> Outcome<(EpsilonOutcome, FitnessReport, EpsilonLoopConfig)> {
    let eps = EpsilonLoopConfig { epsilon_0: epsilon_start(scn, p)?, ..scn.epsilon };
    let cfg = wolbachia_core::ga::GaConfig { block_p: p, rng_seed: seed, ..scn.ga };
    let ctx = FitnessContext::new(&scn.strain, target(&scn.strain)?, scn.initial_wild, cfg.cap_l);
    let out = ga::epsilon_loop(&eps, &cfg, &ctx)?;
    let check = ga::verify_plan(&out.best.plan, &ctx)?;
    if !check.feasible {
        return Err(Failure::run(format!("returned plan failed independent verification: {:?}", check.final_state)));
    }
    Ok((out, check, eps))
}

pub fn ga(args: &ScenarioArgs, reproduce: bool, seeds: u64) -> Outcome<()> {
    if reproduce {
        return reproduce_table4(args, seeds);
    }
    let scn = Scenario::resolve(args)?;
    let p = scn.frequency as usize;
    let (out, check, eps) = run_ga(&scn, p, scn.seed)?;
    let plan = scn.output(&format!("ga_plan_p{p}.csv"))?;
    io::write_schedule(create(&plan)?, &out.best.plan.to_schedule(), true)?;
    let hist = scn.output(&format!("ga_history_p{p}.csv"))?;
    io::write_history(create(&hist)?, out.best_history())?;
    println!(
        "{} p = {p}: T* = {} days, J = {}, {} releases, entry at {}",
        scn.strain.name,
        out.t_star,
        out.best.report.j_value,
        out.effective_releases(),
        check.entry_time.map_or("never".to_string(), |t| format!("t = {t:.3}"))
    );
    let rounds: Vec<Value> = out
        .rounds
        .iter()
        .map(|r| json!({ "epsilon": r.epsilon, "best_j": r.best.report.j_value, "feasible": r.best.report.feasible }))
        .collect();
    let result = json!({
        "block_p": p,
        "epsilon_0": eps.epsilon_0,
        "t_star": out.t_star,
        "j_value": out.best.report.j_value,
        "releases": out.effective_releases(),
        "genes": out.best.plan.genes,
        "verified": to_value(&check),
        "rounds": rounds,
    });
    write_summary(&scn, "ga", result, &[plan, hist])?;
    Ok(())
}

fn reproduce_table4(args: &ScenarioArgs, seeds: u64) -> Outcome<()> {
    let base = Scenario::resolve(args)?;
    let mut rows = Vec::new();
    println!("{:<8} {:>3} {:>5} {:>8} {:>8} {:>8} {:>9} {:>6}", "strain", "p", "T*", "J", "ref", "dev%", "releases", "limit");
    for name in STRAINS {
        let scn = base.with_strain(name, args)?;
        for p in CELLS {
            let t4 = reference::table4(name, p).expect("reference cell");
            let t2 = reference::table2(name, p).expect("reference cell");
            let mut best: Option<(u64, EpsilonOutcome)> = None;
            let mut per_seed = Vec::new();
            for seed in base.seed..base.seed + seeds {
                match run_ga(&scn, p as usize, seed) {
                    Ok((out, _, _)) => {
                        per_seed.push(json!({ "seed": seed, "t_star": out.t_star, "j_value": out.best.report.j_value, "releases": out.effective_releases() }));
                        if best.as_ref().is_none_or(|(_, b)| out.best.report.j_value < b.best.report.j_value) {
                            best = Some((seed, out));
                        }
                    }
                    Err(Failure::Run(msg)) => per_seed.push(json!({ "seed": seed, "error": msg })),
                    Err(e) => return Err(e),
                }
            }
            let row = match &best {
                Some((seed, out)) => {
                    let j = out.best.report.j_value;
                    let dev = 100.0 * deviation(j as f64, t4.total as f64);
                    println!(
                        "{name:<8} {p:>3} {:>5} {j:>8} {:>8} {dev:>8.2} {:>9} {:>6}",
                        out.t_star,
                        t4.total,
                        out.effective_releases(),
                        t2.releases
                    );
                    json!({
                        "strain": name, "period": p, "best_seed": seed, "t_star": out.t_star, "j_value": j,
                        "releases": out.effective_releases(), "j_deviation_pct": dev,
                        "reference": { "source": "Table 4", "total": t4.total, "release_limit_source": "Table 2", "release_limit": t2.releases },
                        "seeds": per_seed,
                    })
                }
                None => {
                    println!("{name:<8} {p:>3}  no feasible plan");
                    json!({ "strain": name, "period": p, "seeds": per_seed, "reference": { "source": "Table 4", "total": t4.total } })
                }
            };
            rows.push(row);
        }
    }
    write_summary(&base, "reproduce_table4", json!({ "seeds": seeds, "cells": rows }), &[])?;
    Ok(())
}

fn limit_of(p: &StrainParams, s0: State) -> Outcome<&'static str> {
    let eq = model::equilibria(p)?;
    let opts = SimOptions { t_end: 3000.0, ..Default::default() };
    let end = sim::integrate(p, s0, &Control::Zero, (0.0, opts.t_end), &opts)?.final_state();
    let near = |e: State| ((end.x - e.x).powi(2) + (end.y - e.y).powi(2)).sqrt() < 1.0;
    Ok(if near(eq.ex.state) {
        "Ex"
    } else if eq.es.is_some_and(|e| near(e.state)) {
        "Es"
    } else {
        "other"
    })
}

fn curve_x_at(curve: &[State], y: f64) -> Option<f64> {
    curve.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        ((a.y - y) * (b.y - y) <= 0.0 && a.y != b.y).then(|| a.x + (y - a.y) / (b.y - a.y) * (b.x - a.x))
    })
}

pub fn phase(args: &ScenarioArgs, nx: usize, ny: usize, x_max: Option<f64>, y_max: Option<f64>) -> Outcome<()> {
    let scn = Scenario::resolve(args)?;
    if nx < 2 || ny < 2 {
        return Err(Failure::usage("grid needs at least 2 points per axis"));
    }
    let p = &scn.strain;
    let span = 1.5 * p.x_sharp();
    let grid = GridSpec { x_min: 0.0, x_max: x_max.unwrap_or(span), nx, y_min: 0.0, y_max: y_max.unwrap_or(span), ny };
    let field = sim::phase_field(p, &grid)?;
    let phase_csv = scn.output("phase.csv")?;
    io::write_phase(create(&phase_csv)?, &field)?;

    let eq = model::equilibria(p)?;
    let mut result = json!({ "grid": to_value(&grid), "rows": field.len() });
    let mut files = vec![phase_csv];
    match eq.eu {
        Some(eu) => {
            let curve = sim::separatrix(p, &SeparatrixOptions { box_factor: 3.0, ..Default::default() })?;
            let sep_csv = scn.output("separatrix.csv")?;
            io::write_curve(create(&sep_csv)?, &curve)?;
            files.push(sep_csv);
            let gap = curve.iter().map(|s| ((s.x - eu.state.x).powi(2) + (s.y - eu.state.y).powi(2)).sqrt()).fold(f64::INFINITY, f64::min);

            // bisect along x = x0 on forward outcome; each probe must land
            // on the side of the curve it starts on
            let xp = x0(&scn);
            let (mut lo, mut hi) = (0.0, 1.2 * p.x_sharp());
            let mut probes = Vec::new();
            let mut agree = true;
            for _ in 0..10 {
                let y = 0.5 * (lo + hi);
                let predicted = match curve_x_at(&curve, y) {
                    Some(xc) if xp > xc => "Ex",
                    Some(_) => "Es",
                    None => "unknown",
                };
                let got = limit_of(p, State::new(xp, y))?;
                agree &= got == predicted;
                probes.push(json!({ "y": y, "limit": got, "predicted": predicted }));
                if got == "Es" {
                    hi = y;
                } else {
                    lo = y;
                }
            }
            println!("separatrix: {} points, closest approach to Eu {gap:.2e}; probes agree: {agree}", curve.len());
            result["separatrix_points"] = json!(curve.len());
            result["separatrix_gap_to_eu"] = json!(gap);
            result["probes"] = json!(probes);
            result["probes_agree"] = json!(agree);
        }
        None => println!("no saddle: separatrix not computed"),
    }
    println!("phase field: {} rows", field.len());
    write_summary(&scn, "phase", result, &files)?;
    Ok(())
}

