use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dampwave::cli::{describe, run_path, EXIT_SCHEMA};
use dampwave::config::RunConfig;

/// Thread-count override for the sample and basis sweeps.
const THREADS_ENV: &str = "DAMPWAVE_THREADS";

#[derive(Parser)]
#[command(name = "dampwave", version, about = "Damped acoustic system experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML configuration.
    Run {
        config: PathBuf,
        /// Output directory, overriding `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the resolved plan without running it.
    Describe { config: PathBuf },
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_SCHEMA as u8);
    }
    match cli.command {
        Command::Run { config, out } => {
            let outcome = run_path(&config, out.as_deref());
            if let Some(e) = &outcome.error {
                eprintln!("error: {e}");
            }
            if let Some(s) = &outcome.summary {
                println!("{}", serde_json::to_string_pretty(&s.headline).unwrap_or_default());
                for a in &s.assertions {
                    let tag = if a.passed { "pass" } else { "FAIL" };
                    println!("{tag} {}: expected {}, got {}", a.name, a.expected, a.actual);
                }
                println!("outputs in {}", outcome.out_dir.display());
            }
            ExitCode::from(outcome.status as u8)
        }
        Command::Describe { config } => match RunConfig::from_path(&config) {
            Ok(cfg) => {
                print!("{}", describe(&cfg));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: configuration error at {e}");
                ExitCode::from(EXIT_SCHEMA as u8)
            }
        },
    }
}
