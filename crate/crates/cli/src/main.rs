use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use repscatter_cli::config::Scenario;
use repscatter_cli::{parse_config, run_scenario, write_outputs, CliError, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "repscatter",
    version,
    about = "Repeated beam-splitter collisions with a reservoir mode"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its tables, results.json and manifest.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config, then print it with defaults filled in.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// List the scenarios and the config schema.
    Scenarios,
}

const SCHEMA: &str = r#"config (JSON):
  scenario     one of the names above (required)
  sigma_spec   {"thermal": beta} | {"fock": n} | {"coherent": a or [re, im]} (required)
  rho0_spec    same forms, or "fock_default" (vacuum; default)
  lambda       coupling in (0, pi/2], or a list; vanhove: list of step counts K
  n_max        Fock cutoff (default 40; (n_max+1)^2 limited by REPSCATTER_MAX_DIM, default 4096)
  tol          convergence threshold on consecutive trace distance (default 1e-9)
  max_steps    collision limit (default 10000)
  z_grid       {"r_max": 2.0, "points": 25}
  output_dir   default "repscatter-out""#;

fn load(path: &PathBuf) -> Result<ScenarioConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Scenarios => {
            for s in Scenario::ALL {
                println!("{:<16} {}", s.name(), s.summary());
            }
            println!("\n{SCHEMA}");
        }
        Command::Validate { config } => {
            let c = load(&config)?;
            println!("{}", c.to_json());
        }
        Command::Run { config, out } => {
            let mut c = load(&config)?;
            if let Some(dir) = out {
                c.output_dir = dir;
                c.validate()?;
            }
            let record = run_scenario(&c)?;
            let written = write_outputs(&record, &c.output_dir)?;
            println!(
                "{} finished in {:.2} s",
                c.scenario, record.wall_time_seconds
            );
            println!(
                "{}",
                serde_json::to_string_pretty(&record.results).expect("results serialize")
            );
            for path in written {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
