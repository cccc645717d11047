//! CSV readers and writers for trajectories, schedules, controls, phase
//! data and GA histories.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::ga::GenerationStats;
use crate::ocp::{ContinuousControl, OcpSolution};
use crate::params::State;
use crate::schedule::{ImpulseSchedule, Release, RuleTag};
use crate::sim::{PhaseSample, Trajectory};

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Parse(e.to_string())
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

fn put<W: Write>(w: &mut csv::Writer<W>, row: &[String]) -> Result<()> {
    w.write_record(row).map_err(io_err)
}

/// `t,x,y,u_applied`; a release instant appears twice, pre-jump then
/// post-jump.
pub fn write_trajectory<W: Write>(out: W, traj: &Trajectory) -> Result<()> {
    let mut w = writer(out);
    put(&mut w, &["t", "x", "y", "u_applied"].map(String::from))?;
    let mut jumps = traj.jumps.iter().peekable();
    for ((&t, s), &u) in traj.times.iter().zip(&traj.states).zip(&traj.controls) {
        while let Some(j) = jumps.peek() {
            if j.time > t {
                break;
            }
            put(&mut w, &[j.time.to_string(), j.pre.x.to_string(), j.pre.y.to_string(), u.to_string()])?;
            if j.time < t {
                put(&mut w, &[j.time.to_string(), j.post.x.to_string(), j.post.y.to_string(), u.to_string()])?;
            }
            jumps.next();
        }
        put(&mut w, &[t.to_string(), s.x.to_string(), s.y.to_string(), u.to_string()])?;
    }
    w.flush().map_err(io_err)
}

/// `day,size[,rule]`.
pub fn write_schedule<W: Write>(out: W, sched: &ImpulseSchedule, with_rule: bool) -> Result<()> {
    let mut w = writer(out);
    let mut header = vec!["day".to_string(), "size".to_string()];
    if with_rule {
        header.push("rule".into());
    }
    put(&mut w, &header)?;
    for r in &sched.entries {
        let mut row = vec![r.time.to_string(), r.size.to_string()];
        if with_rule {
            row.push(sched.rule.as_str().into());
        }
        put(&mut w, &row)?;
    }
    w.flush().map_err(io_err)
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(input)
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse(format!("missing column `{name}`")))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec.get(idx).ok_or_else(|| Error::Parse(format!("line {line}: missing `{name}`")))?;
    raw.parse().map_err(|_| Error::Parse(format!("line {line}: bad `{name}` value `{raw}`")))
}

/// Reads `day,size[,rule]`. Days must be strictly increasing.
pub fn read_schedule<R: Read>(input: R) -> Result<ImpulseSchedule> {
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(io_err)?.clone();
    let (day, size) = (column(&headers, "day")?, column(&headers, "size")?);
    let rule_col = headers.iter().position(|h| h == "rule");
    let mut entries = Vec::new();
    let mut rule = RuleTag::Manual;
    for rec in rdr.records() {
        let rec = rec.map_err(io_err)?;
        let time: f64 = field(&rec, day, "day")?;
        let sz: u64 = field(&rec, size, "size")?;
        if let Some(c) = rule_col {
            let line = rec.position().map_or(0, |p| p.line());
            rule = RuleTag::parse(rec.get(c).unwrap_or("")).map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        }
        entries.push(Release { time, size: sz });
    }
    let period = match entries.as_slice() {
        [a, b, ..] => (b.time - a.time).round().max(1.0) as u32,
        _ => 1,
    };
    ImpulseSchedule::new(entries, period, rule)
}

/// `t,u_star,lambda1,lambda2`.
pub fn write_control<W: Write>(out: W, sol: &OcpSolution) -> Result<()> {
    let mut w = writer(out);
    put(&mut w, &["t", "u_star", "lambda1", "lambda2"].map(String::from))?;
    for ((t, u), (l1, l2)) in sol.control.times.iter().zip(&sol.control.values).zip(&sol.adjoints) {
        put(&mut w, &[t.to_string(), u.to_string(), l1.to_string(), l2.to_string()])?;
    }
    w.flush().map_err(io_err)
}

/// Reads the `t` and `u_star` columns of a control file.
pub fn read_control<R: Read>(input: R) -> Result<ContinuousControl> {
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(io_err)?.clone();
    let (tc, uc) = (column(&headers, "t")?, column(&headers, "u_star")?);
    let mut times = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(io_err)?;
        times.push(field::<f64>(&rec, tc, "t")?);
        values.push(field::<f64>(&rec, uc, "u_star")?);
    }
    ContinuousControl::new(times, values)
}

/// `x,y,dx,dy`.
pub fn write_phase<W: Write>(out: W, samples: &[PhaseSample]) -> Result<()> {
    let mut w = writer(out);
    put(&mut w, &["x", "y", "dx", "dy"].map(String::from))?;
    for s in samples {
        put(&mut w, &[s.state.x.to_string(), s.state.y.to_string(), s.deriv.x.to_string(), s.deriv.y.to_string()])?;
    }
    w.flush().map_err(io_err)
}

/// `x,y` polyline.
pub fn write_curve<W: Write>(out: W, points: &[State]) -> Result<()> {
    let mut w = writer(out);
    put(&mut w, &["x", "y"].map(String::from))?;
    for p in points {
        put(&mut w, &[p.x.to_string(), p.y.to_string()])?;
    }
    w.flush().map_err(io_err)
}

/// `generation,best_fitness,best_J,feasible_count`.
pub fn write_history<W: Write>(out: W, history: &[GenerationStats]) -> Result<()> {
    let mut w = writer(out);
    put(&mut w, &["generation", "best_fitness", "best_J", "feasible_count"].map(String::from))?;
    for h in history {
        put(
            &mut w,
            &[h.generation.to_string(), h.best_fitness.to_string(), h.best_j.to_string(), h.feasible_count.to_string()],
        )?;
    }
    w.flush().map_err(io_err)
}
