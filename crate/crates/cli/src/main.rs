use std::path::PathBuf;
use std::process::ExitCode;

use beamform_cli::commands::{self, EnhanceArgs};
use beamform_cli::sweep::{run_sweep, RunSpec};
use beamform_cli::{force_single_thread, BeamformerKind};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "beamform",
    version,
    about = "Multichannel beamforming experiment harness",
    long_about = "Renders simulated room-acoustic scenes, runs distortionless \
beamformers over them, and writes audio plus metric reports. Scenario and \
sweep definitions are TOML files; see the presets/ directory for examples."
)]
struct Cli {
    /// Pin all computation to a single thread.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file without rendering anything.
    Validate {
        /// Scenario TOML file.
        #[arg(long)]
        config: PathBuf,
    },
    /// Render a scenario: mixture, ground-truth images, impulse responses.
    Simulate {
        /// Scenario TOML file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario's random seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one beamformer over a scenario and write the enhanced signal.
    Enhance {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// One of: mpdr, mldr, oracle_mvdr, cggd.
        #[arg(long)]
        beamformer: String,
        /// Shape parameter for cggd, in [0, 2].
        #[arg(long)]
        p: Option<f64>,
        /// Weight updates for the iterative methods.
        #[arg(long, default_value_t = 3)]
        iterations: usize,
        /// One of: freefield, direct_path_rtf, full_rtf.
        #[arg(long)]
        steering: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one beamformer and write a per-iteration metric report.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        beamformer: String,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long, default_value_t = 3)]
        iterations: usize,
        #[arg(long)]
        steering: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a full grid sweep from a sweep definition file.
    Sweep {
        /// Sweep definition TOML file.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario's random seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_enhance_args(
    beamformer: &str,
    p: Option<f64>,
    iterations: usize,
    steering: Option<String>,
    seed: Option<u64>,
) -> Result<EnhanceArgs, beamform::Error> {
    let kind = BeamformerKind::from_name(beamformer, p)?;
    let steering = steering.map(|s| s.parse()).transpose()?;
    Ok(EnhanceArgs {
        kind,
        iterations,
        steering,
        seed,
    })
}

fn run(cli: Cli) -> Result<ExitCode, beamform::Error> {
    match cli.command {
        Command::Validate { config } => {
            let issues = commands::validate(&config);
            if issues.is_empty() {
                println!("{}: ok", config.display());
                Ok(ExitCode::SUCCESS)
            } else {
                for issue in &issues {
                    eprintln!("{issue}");
                }
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Simulate { config, out, seed } => {
            let summary = commands::simulate(&config, &out, seed)?;
            println!(
                "rendered scene {} (seed {}) into {}",
                summary.config_hash,
                summary.seed,
                out.display()
            );
            if let Some(sinr) = summary.realized_input_sinr_db {
                println!("realized input SINR: {sinr:.4} dB");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Enhance {
            config,
            out,
            beamformer,
            p,
            iterations,
            steering,
            seed,
        } => {
            let args = parse_enhance_args(&beamformer, p, iterations, steering, seed)?;
            let summary = commands::enhance(&config, &out, &args)?;
            println!(
                "{} ({} updates, constraint deviation {:.3e}) -> {}",
                summary.beamformer,
                summary.iterations_run,
                summary.max_constraint_deviation,
                summary.enhanced.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate {
            config,
            out,
            beamformer,
            p,
            iterations,
            steering,
            seed,
        } => {
            let args = parse_enhance_args(&beamformer, p, iterations, steering, seed)?;
            let report = commands::evaluate(&config, &out, &args)?;
            println!(
                "wrote {} rows to {}",
                report.records.len(),
                out.join("report.csv").display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { config, out, seed } => {
            let mut spec = RunSpec::load(&config)?;
            if seed.is_some() {
                spec.seed = seed;
            }
            let outcome = run_sweep(&spec, &out)?;
            println!(
                "wrote {} rows to {}",
                outcome.report.records.len(),
                outcome.csv_path.display()
            );
            if outcome.failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                for failure in &outcome.failures {
                    eprintln!("condition failed: {failure}");
                }
                Ok(ExitCode::FAILURE)
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.deterministic {
        force_single_thread();
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
