//! `stlplan`: monitor specifications, train and evaluate planner/controller pairs.

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stlplan::trainer::{Method, TaskName};

use commands::{CliError, Globals, TrainArgs};

#[derive(Debug, Parser)]
#[command(
    name = "stlplan",
    version,
    about = "STL-constrained waypoint planning and tracking"
)]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads; 1 is fully sequential.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Robustness of trajectories against a specification file.
    Monitor {
        spec: PathBuf,
        trajectory: PathBuf,
        /// Smoothing temperature for the soft robustness.
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Alternating planner/controller training.
    Train {
        /// Planner objective: dscrl, rs or rm.
        #[arg(long)]
        mode: Option<Method>,
        /// sequence, cover, branch, loop or signal.
        #[arg(long)]
        task: Option<TaskName>,
        /// Transition budget; 0 writes the initial checkpoint only.
        #[arg(long)]
        budget: Option<u64>,
        /// Continue from the run directory's latest checkpoint.
        #[arg(long)]
        resume: bool,
        /// Train the controller on uniform goals, without planner feedback.
        #[arg(long)]
        unaligned: bool,
    },
    /// Plans and tracks paths with a trained pair.
    Plan {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Occupancy image (PNG or PGM); evaluation maps otherwise.
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        n: usize,
    },
    /// Success rate and time-to-reach on held-out maps.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Planning latency on 10- and 40-obstacle maps.
    Latency {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 20)]
        maps: usize,
    },
    /// Writes random maps as PNG images plus their obstacle lists.
    GenMaps {
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long)]
        obstacles: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<u8, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(CliError::usage)?;
    }
    let g = Globals {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
    };
    match cli.command {
        Command::Monitor {
            spec,
            trajectory,
            beta,
        } => return commands::monitor(&spec, &trajectory, beta),
        Command::Train {
            mode,
            task,
            budget,
            resume,
            unaligned,
        } => commands::train(
            &g,
            &TrainArgs {
                mode,
                task,
                budget,
                resume,
                unaligned,
            },
        )?,
        Command::Plan { checkpoint, map, n } => commands::plan(&g, &checkpoint, map.as_deref(), n)?,
        Command::Eval {
            checkpoint,
            episodes,
        } => commands::eval(&g, &checkpoint, episodes)?,
        Command::Latency {
            checkpoint,
            samples,
            maps,
        } => commands::latency(&g, checkpoint.as_deref(), samples, maps)?,
        Command::GenMaps { count, obstacles } => commands::gen_maps(&g, count, obstacles)?,
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STLPLAN_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
