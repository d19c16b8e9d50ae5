use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use duopoly_cli::commands::{
    self, cmd_export, cmd_resume, cmd_run, cmd_verify, ConfigSource, ResumeArgs, RunOverrides,
};
use duopoly_cli::presets;

#[derive(Parser)]
#[command(
    name = "duopoly",
    about = "Deterministic simulator for repeated two-firm pricing games",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a run from a config file or a bundled preset.
    Run {
        /// Path to a TOML run configuration.
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Name of a bundled preset (see `duopoly presets`).
        #[arg(long)]
        preset: Option<String>,
        /// Directory that will contain the per-run output directory.
        #[arg(long, default_value = "runs")]
        out_dir: PathBuf,
        /// Override the round cap.
        #[arg(long)]
        rounds: Option<u32>,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the completion channel: live, record, or replay.
        #[arg(long)]
        io: Option<String>,
        /// Cassette path for record/replay.
        #[arg(long)]
        cassette: Option<PathBuf>,
        /// Override the run id (names the output directory).
        #[arg(long)]
        run_id: Option<String>,
        /// Override firm 1's policy (llm, myopic, qlearning,
        /// constant:PRICE, grim:C,P,TOL[,LEN]).
        #[arg(long)]
        policy1: Option<String>,
        /// Override firm 2's policy.
        #[arg(long)]
        policy2: Option<String>,
        /// Also write a checkpoint upon completing this round.
        #[arg(long)]
        checkpoint_at: Option<u32>,
    },
    /// Continue a checkpointed run.
    Resume {
        /// Path to the checkpoint file.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Replacement config; may only change planning, conversation,
        /// rounds, and io settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory for the continuation (defaults to the
        /// checkpoint's directory).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        rounds: Option<u32>,
        #[arg(long)]
        io: Option<String>,
        #[arg(long)]
        cassette: Option<PathBuf>,
    },
    /// Recompute market outcomes and detector verdicts from a run's log
    /// and compare them with its recorded summary.
    Verify {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Write plot-ready CSV series and a summary JSON from a run.
    Export {
        #[arg(long)]
        run_dir: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        csv: PathBuf,
        /// Output summary JSON path (defaults to the CSV path with a
        /// .json extension).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// List the bundled presets.
    Presets,
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Run {
            config,
            preset,
            out_dir,
            rounds,
            seed,
            io,
            cassette,
            run_id,
            policy1,
            policy2,
            checkpoint_at,
        } => {
            let source = match (config, preset) {
                (Some(path), None) => ConfigSource::File(path),
                (None, Some(name)) => ConfigSource::Preset(name),
                _ => bail!("exactly one of --config or --preset is required"),
            };
            let overrides = RunOverrides {
                out_dir,
                rounds,
                seed,
                io,
                cassette,
                run_id,
                policy1,
                policy2,
                checkpoint_at,
            };
            let result = cmd_run(&source, &overrides)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
            Ok(true)
        }
        Command::Resume {
            checkpoint,
            config,
            out_dir,
            rounds,
            io,
            cassette,
        } => {
            let result = cmd_resume(&ResumeArgs {
                checkpoint,
                config,
                out_dir,
                rounds,
                io,
                cassette,
            })?;
            println!("{}", serde_json::to_string_pretty(&result)?);
            Ok(true)
        }
        Command::Verify { run_dir } => {
            let report = cmd_verify(&run_dir)?;
            for check in &report.checks {
                let status = if check.passed { "PASS" } else { "FAIL" };
                println!("verify {}: {} ({})", check.name, status, check.detail);
            }
            if !report.passed() {
                println!("{}", serde_json::to_string(&report)?);
            }
            Ok(report.passed())
        }
        Command::Export {
            run_dir,
            csv,
            summary,
        } => {
            let summary_path = summary.unwrap_or_else(|| csv.with_extension("json"));
            cmd_export(&run_dir, &csv, &summary_path)?;
            println!("wrote {} and {}", csv.display(), summary_path.display());
            Ok(true)
        }
        Command::Presets => {
            for name in presets::preset_names() {
                println!("{name}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            let payload = serde_json::json!({
                "error": {
                    "kind": commands::error_kind(&err),
                    "message": format!("{err:#}"),
                }
            });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}
