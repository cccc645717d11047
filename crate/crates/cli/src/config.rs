//! Scenario resolution: built-in defaults, then the TOML config file, then
//! command-line flags.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use wolbachia_core::ga::{EpsilonLoopConfig, GaConfig};
use wolbachia_core::ocp::{self, OcpConfig};
use wolbachia_core::sim::SimOptions;
use wolbachia_core::StrainParams;

use crate::fail::{Failure, Outcome};

pub const OUTPUT_ENV: &str = "WOLBACHIA_OUTPUT_DIR";
const DEFAULT_OUTPUT: &str = "output";

/// Options shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Strain preset (`wmel`, `wmelpop`).
    #[arg(long)]
    pub strain: Option<String>,
    /// TOML file with scenario and stage settings.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Parameter override `field=value`, e.g. `eta=0.99` or `delta_n=1/28`.
    #[arg(long = "set", value_name = "FIELD=VALUE")]
    pub overrides: Vec<String>,
    /// Initial wild population; defaults to the carrying level ln(Q_x)/sigma.
    #[arg(long)]
    pub initial_wild: Option<f64>,
    /// Release capacity L per day.
    #[arg(long)]
    pub cap_l: Option<f64>,
    /// Release period in days.
    #[arg(long)]
    pub frequency: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = OUTPUT_ENV)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    strain: Option<String>,
    initial_wild: Option<f64>,
    cap_l: Option<f64>,
    frequency: Option<u32>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    params: toml::Table,
    #[serde(default)]
    sim: SimSection,
    #[serde(default)]
    ocp: OcpSection,
    #[serde(default)]
    ga: GaSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
    max_step: Option<f64>,
    t_end: Option<f64>,
    dense_output_stride: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OcpSection {
    weight_p: Option<f64>,
    terminal_x: Option<f64>,
    grid_n: Option<usize>,
    tol_bc: Option<f64>,
    tol_h: Option<f64>,
    max_iterations: Option<usize>,
    t_max: Option<f64>,
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaSection {
    pop_n: Option<usize>,
    generations_g: Option<usize>,
    elite_m: Option<usize>,
    mutation_rate: Option<f64>,
    relocation_mutation: Option<bool>,
    parallel: Option<bool>,
    epsilon_0: Option<usize>,
    step: Option<usize>,
    max_rounds: Option<usize>,
    restarts_per_epsilon: Option<usize>,
    max_expansions: Option<usize>,
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, Serialize)]
pub struct Scenario {
    pub strain: StrainParams,
    pub initial_wild: Option<f64>,
    pub cap_l: f64,
    pub frequency: u32,
    pub seed: u64,
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub sim: SimOptions,
    pub ocp: OcpConfig,
    pub ga: GaConfig,
    /// `None` means derived from the continuous optimum.
    pub epsilon_0: Option<usize>,
    pub epsilon: EpsilonLoopConfig,
}

macro_rules! take {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

fn read_file(path: &Path) -> Outcome<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn param_value(v: &toml::Value) -> Outcome<String> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        other => Err(Failure::usage(format!("parameter values must be numbers or strings, got {other}"))),
    }
}

impl Scenario {
    pub fn resolve(args: &ScenarioArgs) -> Outcome<Self> {
        let file = match &args.config {
            Some(p) => read_file(p)?,
            None => FileConfig::default(),
        };
        let name = args.strain.clone().or(file.strain.clone()).unwrap_or_else(|| "wmel".into());
        let mut strain = StrainParams::preset(&name)?;
        for (k, v) in &file.params {
            strain.set_field(k, &param_value(v)?)?;
        }
        for o in &args.overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| Failure::usage(format!("override `{o}` is not FIELD=VALUE")))?;
            strain.set_field(k.trim(), v.trim())?;
        }
        strain.validate()?;

        let cap_l = args.cap_l.or(file.cap_l).unwrap_or_else(|| ocp::default_cap(&name));
        let frequency = args.frequency.or(file.frequency).unwrap_or(1);
        if frequency == 0 {
            return Err(Failure::usage("frequency must be at least 1"));
        }
        if !(cap_l > 0.0) {
            return Err(Failure::usage("cap_l must be positive"));
        }
        let initial_wild = args.initial_wild.or(file.initial_wild);
        if let Some(x) = initial_wild {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Failure::usage("initial_wild must be positive"));
            }
        }
        let seed = args.seed.or(file.seed).unwrap_or(1);
        let output_dir = args.output_dir.clone().or(file.output_dir.clone()).unwrap_or_else(|| DEFAULT_OUTPUT.into());

        let mut sim = SimOptions::default();
        let s = &file.sim;
        take!(sim.rel_tol, s.rel_tol);
        take!(sim.abs_tol, s.abs_tol);
        take!(sim.max_step, s.max_step);
        take!(sim.t_end, s.t_end);
        take!(sim.dense_output_stride, s.dense_output_stride);
        sim.validate()?;

        let mut oc = OcpConfig { cap_l, initial_wild, ..Default::default() };
        let o = &file.ocp;
        take!(oc.weight_p, o.weight_p);
        oc.terminal_x = o.terminal_x;
        take!(oc.grid_n, o.grid_n);
        take!(oc.tol_bc, o.tol_bc);
        take!(oc.tol_h, o.tol_h);
        take!(oc.max_iterations, o.max_iterations);
        take!(oc.t_max, o.t_max);
        take!(oc.rel_tol, o.rel_tol);
        take!(oc.abs_tol, o.abs_tol);
        oc.validate()?;

        let mut ga = GaConfig { cap_l: cap_l.round() as u64, block_p: frequency as usize, rng_seed: seed, ..Default::default() };
        let g = &file.ga;
        take!(ga.pop_n, g.pop_n);
        take!(ga.generations_g, g.generations_g);
        take!(ga.elite_m, g.elite_m);
        take!(ga.mutation_rate, g.mutation_rate);
        take!(ga.relocation_mutation, g.relocation_mutation);
        take!(ga.parallel, g.parallel);
        ga.validate()?;

        let mut epsilon = EpsilonLoopConfig { max_expansions: 10, ..Default::default() };
        take!(epsilon.step, g.step);
        take!(epsilon.max_rounds, g.max_rounds);
        take!(epsilon.restarts_per_epsilon, g.restarts_per_epsilon);
        take!(epsilon.max_expansions, g.max_expansions);

        Ok(Self {
            strain,
            initial_wild,
            cap_l,
            frequency,
            seed,
            output_dir,
            sim,
            ocp: oc,
            ga,
            epsilon_0: g.epsilon_0,
            epsilon,
        })
    }

    /// SHA-256 of the resolved settings (output location excluded).
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Same scenario for another strain, keeping explicit settings.
    pub fn with_strain(&self, name: &str, args: &ScenarioArgs) -> Outcome<Self> {
        let mut a = args.clone();
        a.strain = Some(name.to_string());
        Self::resolve(&a)
    }

    pub fn output(&self, name: &str) -> Outcome<PathBuf> {
        std::fs::create_dir_all(&self.output_dir)
            .map_err(|e| Failure::run(format!("cannot create {}: {e}", self.output_dir.display())))?;
        Ok(self.output_dir.join(name))
    }
}
