//! Genetic search over discrete release plans inside an ε-constraint loop.
//!
//! A plan assigns an integer release to every day `t = 1..T`; each release is
//! an instantaneous jump of `y` at `t`. A plan is feasible when the state at
//! `T` (after the day-`T` release) lies in the secure region.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{State, StrainParams};
use crate::schedule::{ImpulseSchedule, Release, RuleTag};
use crate::sim::{self, SimOptions};

/// Integer releases for days `1..=T` with release period `p`.
///
/// For `p > 1` every block of `p` days has one designated release day
/// (`slots[b]`, an offset inside the block); all other genes are zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReleasePlan {
    pub genes: Vec<u64>,
    pub block_p: usize,
    pub slots: Vec<usize>,
}

impl ReleasePlan {
    pub fn zeros(horizon_t: usize, block_p: usize) -> Self {
        let slots = if block_p > 1 { vec![0; horizon_t / block_p] } else { Vec::new() };
        Self { genes: vec![0; horizon_t], block_p, slots }
    }

    pub fn horizon_t(&self) -> usize {
        self.genes.len()
    }

    /// Overall release `J = Σ u(t)`.
    pub fn total(&self) -> u64 {
        self.genes.iter().sum()
    }

    /// Number of days with a nonzero release.
    pub fn effective_releases(&self) -> usize {
        self.genes.iter().filter(|&&g| g > 0).count()
    }

    /// `(day, size)` pairs of nonzero releases.
    pub fn releases(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.genes.iter().enumerate().filter(|(_, &g)| g > 0).map(|(i, &g)| (i + 1, g))
    }

    pub fn to_schedule(&self) -> ImpulseSchedule {
        let entries = self.releases().map(|(day, size)| Release { time: day as f64, size }).collect();
        ImpulseSchedule { entries, period_m: self.block_p as u32, rule: RuleTag::Ga }
    }

    /// Checks bounds and block structure against capacity `L`.
    pub fn validate(&self, cap_l: u64) -> Result<()> {
        let p = self.block_p;
        if p == 0 || self.genes.len() % p != 0 {
            return Err(Error::InvalidSchedule(format!("horizon {} is not a multiple of p = {p}", self.genes.len())));
        }
        if p == 1 {
            if let Some(g) = self.genes.iter().find(|&&g| g > cap_l) {
                return Err(Error::InvalidSchedule(format!("daily release {g} exceeds L = {cap_l}")));
            }
            return Ok(());
        }
        if self.slots.len() != self.genes.len() / p {
            return Err(Error::InvalidSchedule("one release slot per block required".into()));
        }
        for (b, block) in self.genes.chunks(p).enumerate() {
            let slot = self.slots[b];
            if slot >= p {
                return Err(Error::InvalidSchedule(format!("slot {slot} outside block of {p} days")));
            }
            for (k, &g) in block.iter().enumerate() {
                if k != slot && g != 0 {
                    return Err(Error::InvalidSchedule(format!("block {} releases on more than one day", b + 1)));
                }
            }
            if block[slot] > p as u64 * cap_l {
                return Err(Error::InvalidSchedule(format!("block release {} exceeds pL = {}", block[slot], p as u64 * cap_l)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub pop_n: usize,
    pub generations_g: usize,
    pub elite_m: usize,
    /// Daily capacity `L`.
    pub cap_l: u64,
    pub block_p: usize,
    /// Per-individual mutation probability.
    pub mutation_rate: f64,
    pub rng_seed: u64,
    /// Also move the release day of mutated blocks (only for `p > 1`).
    pub relocation_mutation: bool,
    /// Evaluate fitness on the rayon pool.
    pub parallel: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            pop_n: 100,
            generations_g: 100,
            elite_m: 1,
            cap_l: 750,
            block_p: 1,
            mutation_rate: 0.05,
            rng_seed: 1,
            relocation_mutation: false,
            parallel: true,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pop_n == 0 {
            return Err(Error::InvalidParameter { field: "pop_n", reason: "must be > 0".into() });
        }
        if self.elite_m >= self.pop_n {
            return Err(Error::InvalidParameter { field: "elite_m", reason: "must be below pop_n".into() });
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::InvalidParameter { field: "mutation_rate", reason: "must lie in [0, 1]".into() });
        }
        if self.block_p == 0 {
            return Err(Error::InvalidParameter { field: "block_p", reason: "must be >= 1".into() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub j_value: u64,
    pub feasible: bool,
    pub fitness_f: f64,
    pub final_state: State,
    pub entry_time: Option<f64>,
}

/// Everything a fitness evaluation needs besides the plan.
#[derive(Debug, Clone)]
pub struct FitnessContext {
    pub params: StrainParams,
    pub target: (f64, f64),
    pub initial_wild: f64,
    pub cap_l: u64,
    pub opts: SimOptions,
}

impl FitnessContext {
    pub fn new(params: &StrainParams, target: (f64, f64), initial_wild: Option<f64>, cap_l: u64) -> Self {
        Self {
            params: params.clone(),
            target,
            initial_wild: initial_wild.unwrap_or_else(|| params.x_sharp()),
            cap_l,
            opts: SimOptions::default(),
        }
    }
}

/// `F = 1 / (J + pLT · I)`, with `I = 0` iff `x(T) < x_u` and `y(T) > y_u`.
/// A failed simulation scores `F = 0`.
pub fn fitness(plan: &ReleasePlan, ctx: &FitnessContext) -> FitnessReport {
    let j_value = plan.total();
    let t = plan.horizon_t();
    let releases: Vec<(f64, f64)> = plan.releases().map(|(d, g)| (d as f64, g as f64)).collect();
    let s0 = State::new(ctx.initial_wild, 0.0);
    match sim::propagate_with_releases(&ctx.params, s0, &releases, t as f64, &ctx.opts) {
        Ok(s) => {
            let feasible = s.x < ctx.target.0 && s.y > ctx.target.1;
            let penalty = if feasible { 0 } else { (plan.block_p as u64) * ctx.cap_l * t as u64 };
            let denom = (j_value + penalty) as f64;
            let fitness_f = if denom > 0.0 { 1.0 / denom } else { f64::INFINITY };
            FitnessReport { j_value, feasible, fitness_f, final_state: s, entry_time: None }
        }
        Err(_) => FitnessReport { j_value, feasible: false, fitness_f: 0.0, final_state: s0, entry_time: None },
    }
}

/// Independent re-check of a plan by full impulsive simulation over
/// `[0, T]`, with the first entry time into the secure region.
pub fn verify_plan(plan: &ReleasePlan, ctx: &FitnessContext) -> Result<FitnessReport> {
    let t = plan.horizon_t() as f64;
    let opts = SimOptions { t_end: t, ..ctx.opts };
    let traj = sim::simulate_impulsive(&ctx.params, State::new(ctx.initial_wild, 0.0), &plan.to_schedule(), &opts)?;
    let s = traj.final_state();
    let feasible = s.x < ctx.target.0 && s.y > ctx.target.1;
    let j_value = plan.total();
    let penalty = if feasible { 0 } else { plan.block_p as u64 * ctx.cap_l * plan.horizon_t() as u64 };
    Ok(FitnessReport {
        j_value,
        feasible,
        fitness_f: 1.0 / (j_value + penalty) as f64,
        final_state: s,
        entry_time: sim::first_basin_entry(&traj, ctx.target),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub plan: ReleasePlan,
    pub report: FitnessReport,
}

fn evaluate(plans: Vec<ReleasePlan>, ctx: &FitnessContext, parallel: bool) -> Vec<Individual> {
    let eval = |plan: ReleasePlan| {
        let report = fitness(&plan, ctx);
        Individual { plan, report }
    };
    if parallel {
        plans.into_par_iter().map(eval).collect()
    } else {
        plans.into_iter().map(eval).collect()
    }
}

/// Random plan respecting bounds and block structure.
pub fn random_plan(horizon_t: usize, cfg: &GaConfig, rng: &mut impl Rng) -> ReleasePlan {
    let p = cfg.block_p;
    let mut plan = ReleasePlan::zeros(horizon_t, p);
    if p == 1 {
        for g in plan.genes.iter_mut() {
            *g = rng.gen_range(0..=cfg.cap_l);
        }
    } else {
        let cap = p as u64 * cfg.cap_l;
        for b in 0..plan.slots.len() {
            let slot = rng.gen_range(0..p);
            plan.slots[b] = slot;
            plan.genes[b * p + slot] = rng.gen_range(0..=cap);
        }
    }
    plan
}

pub fn init_population(cfg: &GaConfig, horizon_t: usize, rng: &mut impl Rng) -> Result<Vec<ReleasePlan>> {
    cfg.validate()?;
    if horizon_t == 0 || horizon_t % cfg.block_p != 0 {
        return Err(Error::InvalidParameter {
            field: "horizon_t",
            reason: format!("{horizon_t} is not a positive multiple of p = {}", cfg.block_p),
        });
    }
    Ok((0..cfg.pop_n).map(|_| random_plan(horizon_t, cfg, rng)).collect())
}

/// Binary tournament: the fitter of two uniform draws, ties to the first.
pub fn tournament_select<'a>(pop: &'a [Individual], rng: &mut impl Rng) -> &'a Individual {
    let r = rng.gen_range(0..pop.len());
    let s = rng.gen_range(0..pop.len());
    if pop[s].report.fitness_f > pop[r].report.fitness_f {
        &pop[s]
    } else {
        &pop[r]
    }
}

/// Exchanges genes `r1..r2` (0-based, `r2` exclusive) between two plans.
pub fn crossover_at(a: &ReleasePlan, b: &ReleasePlan, r1: usize, r2: usize) -> (ReleasePlan, ReleasePlan) {
    let (mut c, mut d) = (a.clone(), b.clone());
    c.genes[r1..r2].copy_from_slice(&b.genes[r1..r2]);
    d.genes[r1..r2].copy_from_slice(&a.genes[r1..r2]);
    let p = a.block_p;
    if p > 1 {
        let (b1, b2) = (r1 / p, r2 / p);
        c.slots[b1..b2].copy_from_slice(&b.slots[b1..b2]);
        d.slots[b1..b2].copy_from_slice(&a.slots[b1..b2]);
    }
    (c, d)
}

/// Two-point crossover with cut points on multiples of `p`.
pub fn crossover(a: &ReleasePlan, b: &ReleasePlan, rng: &mut impl Rng) -> (ReleasePlan, ReleasePlan) {
    let p = a.block_p;
    let blocks = a.horizon_t() / p;
    if blocks < 2 {
        return (a.clone(), b.clone());
    }
    let mut c1 = rng.gen_range(0..=blocks);
    let mut c2 = rng.gen_range(0..=blocks);
    while c1 == c2 {
        c2 = rng.gen_range(0..=blocks);
    }
    if c1 > c2 {
        std::mem::swap(&mut c1, &mut c2);
    }
    crossover_at(a, b, c1 * p, c2 * p)
}

/// With probability `mutation_rate` redraws a random range of genes (`p = 1`)
/// or the release sizes of a random range of blocks (`p > 1`); otherwise
/// returns `None`.
pub fn mutate(plan: &ReleasePlan, cfg: &GaConfig, rng: &mut impl Rng) -> Option<ReleasePlan> {
    if !(rng.gen::<f64>() < cfg.mutation_rate) {
        return None;
    }
    let p = plan.block_p;
    let units = plan.horizon_t() / p;
    let r3 = rng.gen_range(0..units);
    let r4 = rng.gen_range(r3..units);
    let mut out = plan.clone();
    if p == 1 {
        for g in &mut out.genes[r3..=r4] {
            *g = rng.gen_range(0..=cfg.cap_l);
        }
    } else {
        let cap = p as u64 * cfg.cap_l;
        for b in r3..=r4 {
            let value = rng.gen_range(0..=cap);
            out.genes[b * p + out.slots[b]] = 0;
            if cfg.relocation_mutation {
                out.slots[b] = rng.gen_range(0..p);
            }
            out.genes[b * p + out.slots[b]] = value;
        }
    }
    Some(out)
}

/// Decreasing fitness; stable, so earlier individuals win ties.
fn rank(pop: &mut [Individual]) {
    pop.sort_by(|a, b| b.report.fitness_f.partial_cmp(&a.report.fitness_f).unwrap_or(Ordering::Equal));
}

/// One generation: selection, crossover, mutation, evaluation of the new
/// individuals and truncation of the union to the `N` fittest.
pub fn evolve(pop: Vec<Individual>, cfg: &GaConfig, ctx: &FitnessContext, rng: &mut impl Rng) -> Vec<Individual> {
    let n = cfg.pop_n;
    let selected: Vec<ReleasePlan> = (0..n).map(|_| tournament_select(&pop, rng).plan.clone()).collect();
    let mut offspring = Vec::with_capacity(n);
    for pair in selected.chunks(2) {
        if let [a, b] = pair {
            let (c, d) = crossover(a, b, rng);
            offspring.push(c);
            offspring.push(d);
        }
    }
    let mut mutants = Vec::new();
    for plan in pop.iter().map(|i| &i.plan).chain(offspring.iter()) {
        if let Some(m) = mutate(plan, cfg, rng) {
            mutants.push(m);
        }
    }
    offspring.extend(mutants);
    let mut union = pop;
    union.extend(evaluate(offspring, ctx, cfg.parallel));
    rank(&mut union);
    union.truncate(n);
    union
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_fitness: f64,
    pub best_j: u64,
    pub feasible_count: usize,
}

#[derive(Debug, Clone)]
pub struct GaRun {
    pub horizon_t: usize,
    pub best: Individual,
    /// Generation 0 is the initial population.
    pub history: Vec<GenerationStats>,
}

fn stats(generation: usize, pop: &[Individual]) -> GenerationStats {
    GenerationStats {
        generation,
        best_fitness: pop[0].report.fitness_f,
        best_j: pop[0].report.j_value,
        feasible_count: pop.iter().filter(|i| i.report.feasible).count(),
    }
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs `G` generations at a fixed horizon and returns the elite.
pub fn run_ga(cfg: &GaConfig, horizon_t: usize, ctx: &FitnessContext) -> Result<GaRun> {
    run_ga_stream(cfg, horizon_t, ctx, 0)
}

fn run_ga_stream(cfg: &GaConfig, horizon_t: usize, ctx: &FitnessContext, stream: u64) -> Result<GaRun> {
    let mut rng = seeded(cfg.rng_seed, stream);
    let plans = init_population(cfg, horizon_t, &mut rng)?;
    let mut pop = evaluate(plans, ctx, cfg.parallel);
    rank(&mut pop);
    let mut history = vec![stats(0, &pop)];
    for g in 1..=cfg.generations_g {
        pop = evolve(pop, cfg, ctx, &mut rng);
        history.push(stats(g, &pop));
    }
    Ok(GaRun { horizon_t, best: pop.swap_remove(0), history })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonLoopConfig {
    /// First horizon bound (days); rounded down to a multiple of `p`.
    pub epsilon_0: usize,
    /// Reduction per round (days); `0` means `p`.
    pub step: usize,
    pub max_rounds: usize,
    pub restarts_per_epsilon: usize,
    /// When no plan is feasible at `epsilon_0`, raise the bound by `step` up
    /// to this many times before giving up.
    pub max_expansions: usize,
}

impl Default for EpsilonLoopConfig {
    fn default() -> Self {
        Self { epsilon_0: 14, step: 0, max_rounds: 200, restarts_per_epsilon: 3, max_expansions: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct EpsilonRound {
    pub epsilon: usize,
    /// Best individual over the restarts at this bound.
    pub best: Individual,
    pub runs: Vec<GaRun>,
}

#[derive(Debug, Clone)]
pub struct EpsilonOutcome {
    /// Smallest horizon with a feasible plan, `T*_p`.
    pub t_star: usize,
    pub best: Individual,
    pub rounds: Vec<EpsilonRound>,
}

impl EpsilonOutcome {
    pub fn effective_releases(&self) -> usize {
        self.best.plan.effective_releases()
    }

    /// History of the run that produced `best`.
    pub fn best_history(&self) -> &[GenerationStats] {
        let round = self.rounds.iter().rev().find(|r| r.epsilon == self.t_star).unwrap();
        let run = round.runs.iter().find(|r| r.best == round.best).unwrap_or(&round.runs[0]);
        &run.history
    }
}

/// Lowers the horizon bound by `step` while the GA still finds a feasible
/// plan and returns the last feasible horizon with its best plan.
///
/// Each bound gets `restarts_per_epsilon` independent GA runs on separate
/// random streams of the configured seed.
pub fn epsilon_loop(eps: &EpsilonLoopConfig, cfg: &GaConfig, ctx: &FitnessContext) -> Result<EpsilonOutcome> {
    cfg.validate()?;
    let p = cfg.block_p;
    let step = if eps.step == 0 { p } else { eps.step };
    if step % p != 0 {
        return Err(Error::InvalidParameter { field: "step", reason: format!("must be a multiple of p = {p}") });
    }
    let mut epsilon = eps.epsilon_0 - eps.epsilon_0 % p;
    if epsilon == 0 {
        return Err(Error::InvalidParameter { field: "epsilon_0", reason: format!("must be at least p = {p}") });
    }
    let restarts = eps.restarts_per_epsilon.max(1);
    let round = |epsilon: usize| -> Result<EpsilonRound> {
        let runs = (0..restarts)
            .map(|r| run_ga_stream(cfg, epsilon, ctx, (epsilon * restarts + r) as u64))
            .collect::<Result<Vec<_>>>()?;
        let best = runs
            .iter()
            .map(|r| &r.best)
            .reduce(|a, b| if b.report.fitness_f > a.report.fitness_f { b } else { a })
            .unwrap()
            .clone();
        Ok(EpsilonRound { epsilon, best, runs })
    };

    let mut rounds: Vec<EpsilonRound> = vec![round(epsilon)?];
    let mut expansions = 0;
    while !rounds.last().unwrap().best.report.feasible && expansions < eps.max_expansions {
        expansions += 1;
        epsilon += step;
        rounds.push(round(epsilon)?);
    }
    let mut last_feasible = rounds.last().unwrap().best.report.feasible.then(|| rounds.len() - 1);
    // a bound already found infeasible on the way up is not retried
    if last_feasible.is_some() && expansions == 0 {
        while rounds.len() < eps.max_rounds && epsilon > step {
            epsilon -= step;
            rounds.push(round(epsilon)?);
            if !rounds.last().unwrap().best.report.feasible {
                break;
            }
            last_feasible = Some(rounds.len() - 1);
        }
    }
    match last_feasible {
        Some(i) => Ok(EpsilonOutcome { t_star: rounds[i].epsilon, best: rounds[i].best.clone(), rounds }),
        None => Err(Error::Infeasible(format!("no feasible plan found within the horizon bound {}", eps.epsilon_0))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model;

    fn ctx() -> FitnessContext {
        let p = StrainParams::wmel();
        let target = model::secure_region(&model::equilibria(&p).unwrap()).unwrap();
        FitnessContext::new(&p, target, None, 750)
    }

    #[test]
    fn crossover_matches_two_point_example() {
        let a = ReleasePlan { genes: vec![1, 2, 3, 4, 5, 6, 7], block_p: 1, slots: vec![] };
        let b = ReleasePlan { genes: vec![11, 12, 13, 14, 15, 16, 17], block_p: 1, slots: vec![] };
        let (c, d) = crossover_at(&a, &b, 2, 5);
        assert_eq!(c.genes, vec![1, 2, 13, 14, 15, 6, 7]);
        assert_eq!(d.genes, vec![11, 12, 3, 4, 5, 16, 17]);
    }

    #[test]
    fn fitness_arithmetic() {
        let c = ctx();
        let zero = ReleasePlan::zeros(11, 1);
        let r = fitness(&zero, &c);
        assert!(!r.feasible);
        assert_eq!(r.fitness_f, 1.0 / 8250.0);
        let mut single = ReleasePlan::zeros(14, 14);
        single.genes[0] = 6000;
        let r = fitness(&single, &c);
        assert!(r.feasible);
        assert_eq!(r.fitness_f, 1.0 / 6000.0);
    }

    #[test]
    fn block_plans_validate() {
        let cfg = GaConfig { block_p: 7, ..Default::default() };
        let mut rng = seeded(3, 0);
        for _ in 0..50 {
            random_plan(28, &cfg, &mut rng).validate(750).unwrap();
        }
        let mut bad = ReleasePlan::zeros(14, 7);
        bad.genes[0] = 1;
        bad.genes[1] = 1;
        assert!(bad.validate(750).is_err());
    }

    #[test]
    fn zero_rate_never_mutates() {
        let cfg = GaConfig { mutation_rate: 0.0, ..Default::default() };
        let mut rng = seeded(1, 0);
        let plan = random_plan(10, &cfg, &mut rng);
        assert!((0..100).all(|_| mutate(&plan, &cfg, &mut rng).is_none()));
    }

    #[test]
    fn single_member_tournament() {
        let c = ctx();
        let pop = evaluate(vec![ReleasePlan::zeros(5, 1)], &c, false);
        let mut rng = seeded(1, 0);
        assert_eq!(tournament_select(&pop, &mut rng), &pop[0]);
    }

    #[test]
    fn schedule_of_plan() {
        let mut plan = ReleasePlan::zeros(14, 7);
        plan.slots = vec![2, 0];
        plan.genes[2] = 100;
        plan.genes[7] = 50;
        let s = plan.to_schedule();
        assert_eq!(s.entries, vec![Release { time: 3.0, size: 100 }, Release { time: 8.0, size: 50 }]);
        assert_eq!(plan.effective_releases(), 2);
    }
}
