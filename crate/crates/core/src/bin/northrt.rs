use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use serde_json::json;

use northrt::harness::{generate_preset, run_to_csv, solve, ExperimentConfig, Method, MethodSettings, Preset, PresetParams};
use northrt::oracle::{build_oracle, OracleKind};
use northrt::problem::Problem;
use northrt::taskmodel::TaskSet;

#[derive(Parser)]
#[command(name = "northrt", version, about = "Optimize real-time system designs against a schedulability oracle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config and write a CSV of results.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimize a single task set and print the result as JSON.
    Solve {
        #[arg(long)]
        taskset: PathBuf,
        /// north, northplus, sa or brute
        #[arg(long)]
        method: Method,
        /// rta, sim or exec:<command>
        #[arg(long)]
        oracle: OracleKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "SECS")]
        time_limit: Option<f64>,
        /// Grid points per dimension for `brute`.
        #[arg(long, default_value_t = 200)]
        resolution: usize,
    },
    /// Generate a benchmark task set with its objective.
    Gen {
        /// energy-rm, energy-dag or control-dag
        #[arg(long)]
        preset: Preset,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Tasks (energy-rm) or DAGs (other presets).
        #[arg(long, default_value_t = 5)]
        n: usize,
        /// Total utilization; defaults to half the platform capacity.
        #[arg(long)]
        util: Option<f64>,
        /// Node count range of each DAG, e.g. `1-20`.
        #[arg(long, value_parser = parse_range)]
        nodes: Option<(usize, usize)>,
    },
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once('-').ok_or("expected LO-HI")?;
    let lo = a.trim().parse().map_err(|e| format!("{e}"))?;
    let hi = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> northrt::Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rows = run_to_csv(&cfg, &out)?;
            eprintln!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::Solve { taskset, method, oracle, seed, time_limit, resolution } => {
            let ts = TaskSet::from_json(&std::fs::read_to_string(&taskset)?)?;
            let problem = Problem::from_taskset(&ts)?;
            let mut settings = MethodSettings::for_taskset(&ts, seed);
            settings.brute_resolution = resolution;
            if let Some(secs) = time_limit {
                if !(secs > 0.0) {
                    return Err(northrt::Error::InvalidArgument("--time-limit must be positive".into()));
                }
                settings.time_limit = Some(Duration::from_secs_f64(secs));
            }
            let mut o = build_oracle(&oracle, &problem)?;
            let out = solve(&problem, method, &mut o, &settings)?;
            let report = json!({
                "method": out.method.name(),
                "x": out.x,
                "priorities": out.priorities.order(),
                "obj_init": out.obj_init,
                "obj_final": out.obj_final,
                "oracle_calls": out.oracle_calls,
                "elim_rounds": out.elim_rounds,
                "wall_ms": out.wall_ms,
                "feasible": out.feasible,
                "timeout": out.timeout,
                "initial_feasible": out.initial_feasible,
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Gen { preset, seed, out, n, util, nodes } => {
            let mut params = PresetParams::new(n, util.unwrap_or(0.5 * preset.cores() as f64));
            if let Some(range) = nodes {
                params.nodes_per_dag = range;
            }
            let ts = generate_preset(preset, &params, seed)?;
            std::fs::write(&out, ts.to_json()?)?;
            eprintln!("wrote {} tasks to {}", ts.len(), out.display());
        }
    }
    Ok(())
}
