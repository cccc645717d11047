//! `wolbachia`: equilibria, simulation, continuous and impulsive release
//! planning and genetic-algorithm schedules from the command line.

mod commands;
mod config;
mod fail;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::ScenarioArgs;

#[derive(Parser)]
#[command(name = "wolbachia", version, about = "Release planning for Wolbachia-infected mosquitoes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Table {
    Table2,
    Table4,
}

#[derive(Subcommand)]
enum Command {
    /// Offspring numbers, equilibria and their stability.
    Equilibria {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Integrates the model under a release schedule or a release-rate file.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// CSV with `day,size[,rule]`.
        #[arg(long, conflicts_with = "control")]
        schedule: Option<PathBuf>,
        /// CSV with `t,u_star` columns.
        #[arg(long)]
        control: Option<PathBuf>,
        /// End of the simulated span (days).
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Continuous optimal release rate.
    Ocp {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Integer impulsive schedules derived from an optimal release rate.
    Impulsive {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Control CSV written by `ocp`.
        #[arg(long)]
        control: Option<PathBuf>,
        /// Rebuild the full strain x frequency table and compare.
        #[arg(long, value_enum)]
        reproduce: Option<Table>,
    },
    /// Genetic-algorithm release plans with the epsilon-constraint loop.
    Ga {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Rebuild the full strain x frequency table and compare.
        #[arg(long, value_enum)]
        reproduce: Option<Table>,
        /// Seeds per cell with `--reproduce` (consecutive from `--seed`).
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Vector field on a grid and the basin boundary.
    Phase {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 50)]
        nx: usize,
        #[arg(long, default_value_t = 50)]
        ny: usize,
        #[arg(long)]
        x_max: Option<f64>,
        #[arg(long)]
        y_max: Option<f64>,
    },
}

fn run(cli: Cli) -> fail::Outcome<()> {
    match cli.command {
        Command::Equilibria { scenario } => commands::equilibria(&scenario),
        Command::Simulate { scenario, schedule, control, t_end } => {
            commands::simulate(&scenario, schedule.as_deref(), control.as_deref(), t_end)
        }
        Command::Ocp { scenario } => commands::ocp(&scenario),
        Command::Impulsive { scenario, control, reproduce } => match reproduce {
            Some(Table::Table4) => Err(fail::Failure::usage("table4 is reproduced by `ga --reproduce table4`")),
            r => commands::impulsive(&scenario, control.as_deref(), r.is_some()),
        },
        Command::Ga { scenario, reproduce, seeds } => match reproduce {
            Some(Table::Table2) => Err(fail::Failure::usage("table2 is reproduced by `impulsive --reproduce table2`")),
            r => {
                if seeds == 0 {
                    return Err(fail::Failure::usage("--seeds must be at least 1"));
                }
                commands::ga(&scenario, r.is_some(), seeds)
            }
        },
        Command::Phase { scenario, nx, ny, x_max, y_max } => commands::phase(&scenario, nx, ny, x_max, y_max),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
