//! Command-line driver for scaled-Gaussian gradient flows.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Common;
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "hkgf", version, about = "Gradient flows of scaled Gaussians under transport and reaction geometries")]
struct Cli {
    /// Run config (JSON). Repeat to run several configs; each writes to OUT/<stem>.
    #[arg(long = "config", value_name = "PATH", global = true)]
    config: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "hkgf-out", global = true)]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long, value_name = "N", global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, value_name = "N", global = true)]
    jobs: Option<usize>,
    /// Criterion ids or names, comma separated (verify only).
    #[arg(long, value_name = "NAME", global = true)]
    filter: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Integrate the reduced flow and write trajectory.csv.
    Flow,
    /// Run the discrete descent and write descent.csv.
    Descent,
    /// Check a trajectory against the decay bounds; writes decay.json.
    DecayReport,
    /// Sample the Hessian-to-metric quotient; writes scan.json.
    ConvexityScan,
    /// Integrate a geodesic from a point and costate; writes geodesic.csv.
    Geodesic,
    /// Run the acceptance criteria.
    Verify {
        /// Print the criteria and exit.
        #[arg(long)]
        list: bool,
        /// Multiplies the claimed rates before checking; for testing the checks.
        #[arg(long, default_value_t = 1.0, hide = true)]
        rate_scale: f64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let common = Common { configs: cli.config, out: cli.out, seed: cli.seed, filter: cli.filter };
    match cli.cmd {
        Cmd::Flow => commands::for_each_config(&common, commands::flow),
        Cmd::Descent => commands::for_each_config(&common, commands::descent),
        Cmd::DecayReport => commands::for_each_config(&common, commands::decay_report),
        Cmd::ConvexityScan => commands::for_each_config(&common, commands::convexity),
        Cmd::Geodesic => commands::for_each_config(&common, commands::geodesic),
        Cmd::Verify { list: true, .. } => {
            for c in hkgf_verify::CRITERIA {
                println!("{:>2} {:<22} {}", c.id, c.name, c.summary);
            }
            Ok(())
        }
        Cmd::Verify { rate_scale, .. } => commands::verify(&common, rate_scale),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HKGF_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
