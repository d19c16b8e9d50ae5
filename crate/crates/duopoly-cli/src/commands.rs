//! Command implementations behind the CLI surface: run, resume, verify,
//! and export.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use duopoly::detect::{self, StationarityVerdict};
use duopoly::engine::{
    self, read_summary, ResumeOverrides, RunConfig, RunResult, RunSummary, ROUNDS_FILE,
};
use duopoly::llm::IoMode;
use duopoly::market::{self, derive_market, round_to_cents, ReferencePrices};
use duopoly::policy::{PolicyKind, PolicySpec, QLearningConfig};
use duopoly::runlog::{read_jsonl, RunLogLine};

use crate::config_file::load_config;
use crate::presets;

/// Tolerance for recomputing logged demand/profit from logged prices.
const RECOMPUTE_TOLERANCE: f64 = 1e-9;

/// Source of the base configuration for `run`.
pub enum ConfigSource {
    File(PathBuf),
    Preset(String),
}

/// Command-line overrides applied on top of the loaded config.
#[derive(Default)]
pub struct RunOverrides {
    pub out_dir: PathBuf,
    pub rounds: Option<u32>,
    pub seed: Option<u64>,
    pub io: Option<String>,
    pub cassette: Option<PathBuf>,
    pub run_id: Option<String>,
    pub policy1: Option<String>,
    pub policy2: Option<String>,
    pub checkpoint_at: Option<u32>,
}

/// Parse a compact policy override: `llm`, `myopic`, `qlearning`,
/// `constant:PRICE`, or `grim:COLLUSIVE,PUNISH,TOLERANCE[,LENGTH]`.
pub fn parse_policy_override(text: &str) -> Result<PolicySpec> {
    let (kind, args) = match text.split_once(':') {
        Some((kind, args)) => (kind, Some(args)),
        None => (text, None),
    };
    match (kind, args) {
        ("llm", None) => Ok(PolicySpec::llm()),
        ("myopic", None) => Ok(PolicySpec::myopic()),
        ("qlearning", None) => Ok(PolicySpec::q_learning()),
        ("constant", Some(price)) => Ok(PolicySpec::constant(
            price.trim().parse().context("constant policy price")?,
        )),
        ("grim", Some(args)) => {
            let parts: Vec<&str> = args.split(',').map(str::trim).collect();
            if parts.len() != 3 && parts.len() != 4 {
                bail!("grim policy takes COLLUSIVE,PUNISH,TOLERANCE[,LENGTH]");
            }
            let mut spec = PolicySpec::grim_trigger(
                parts[0].parse().context("grim collusive price")?,
                parts[1].parse().context("grim punish price")?,
                parts[2].parse().context("grim tolerance")?,
            );
            if let Some(length) = parts.get(3) {
                if let PolicyKind::GrimTrigger { punish_length, .. } = &mut spec.kind {
                    *punish_length = length.parse().context("grim punish length")?;
                }
            }
            Ok(spec)
        }
        _ => bail!(
            "unknown policy `{text}` (llm, myopic, qlearning, constant:PRICE, \
             grim:C,P,TOL[,LEN])"
        ),
    }
}

fn io_override(io: &str, cassette: Option<&Path>, current: &IoMode) -> Result<IoMode> {
    let cassette_path = |current: &IoMode| -> Result<PathBuf> {
        if let Some(path) = cassette {
            return Ok(path.to_path_buf());
        }
        match current {
            IoMode::Record { path } | IoMode::Replay { path } => Ok(path.clone()),
            IoMode::Live => bail!("--cassette is required with --io {io}"),
        }
    };
    match io {
        "live" => Ok(IoMode::Live),
        "record" => Ok(IoMode::Record {
            path: cassette_path(current)?,
        }),
        "replay" => Ok(IoMode::Replay {
            path: cassette_path(current)?,
        }),
        other => bail!("unknown io mode `{other}` (live, record, replay)"),
    }
}

/// Fill in default Q-learning grids for scripted overrides in
/// homogeneous markets, where no default grid exists.
fn q_learning_needs_grid(config: &RunConfig) -> bool {
    let homogeneous = config.market.d == config.market.beta;
    homogeneous
        && [&config.policies.0, &config.policies.1].iter().any(|p| {
            matches!(
                p.kind,
                PolicyKind::QLearning {
                    config: QLearningConfig { grid: None, .. }
                }
            )
        })
}

pub fn load_base_config(source: &ConfigSource) -> Result<RunConfig> {
    match source {
        ConfigSource::File(path) => load_config(path),
        ConfigSource::Preset(name) => presets::preset(name).with_context(|| {
            format!(
                "unknown preset `{name}`; available: {}",
                presets::preset_names().join(", ")
            )
        }),
    }
}

pub fn cmd_run(source: &ConfigSource, overrides: &RunOverrides) -> Result<RunResult> {
    let mut config = load_base_config(source)?;
    if let Some(rounds) = overrides.rounds {
        config.max_rounds = rounds;
    }
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(run_id) = &overrides.run_id {
        config.run_id = run_id.clone();
    }
    if let Some(io) = &overrides.io {
        config.io_mode = io_override(io, overrides.cassette.as_deref(), &config.io_mode)?;
    } else if let Some(cassette) = &overrides.cassette {
        config.io_mode = match &config.io_mode {
            IoMode::Live | IoMode::Replay { .. } => IoMode::Replay {
                path: cassette.clone(),
            },
            IoMode::Record { .. } => IoMode::Record {
                path: cassette.clone(),
            },
        };
    }
    if let Some(policy) = &overrides.policy1 {
        config.policies.0 = parse_policy_override(policy)?;
    }
    if let Some(policy) = &overrides.policy2 {
        config.policies.1 = parse_policy_override(policy)?;
    }
    if let Some(at) = overrides.checkpoint_at {
        config.checkpoint_at = Some(at);
    }
    if q_learning_needs_grid(&config) {
        bail!(
            "q-learning has no default price grid for homogeneous goods; configure an \
             explicit grid"
        );
    }
    let run_dir = overrides.out_dir.join(&config.run_id);
    Ok(engine::run(&config, &run_dir)?)
}

pub struct ResumeArgs {
    pub checkpoint: PathBuf,
    pub config: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub rounds: Option<u32>,
    pub io: Option<String>,
    pub cassette: Option<PathBuf>,
}

pub fn cmd_resume(args: &ResumeArgs) -> Result<RunResult> {
    let body = engine::read_checkpoint(&args.checkpoint)?;
    let mut overrides = match &args.config {
        Some(path) => {
            let updated = load_config(path)?;
            ResumeOverrides::from_config_diff(&body.config, &updated)?
        }
        None => ResumeOverrides::default(),
    };
    if let Some(rounds) = args.rounds {
        overrides.max_rounds = Some(rounds);
    }
    if let Some(io) = &args.io {
        let current = overrides
            .io_mode
            .clone()
            .unwrap_or_else(|| body.config.io_mode.clone());
        overrides.io_mode = Some(io_override(io, args.cassette.as_deref(), &current)?);
    }
    let run_dir = match &args.out_dir {
        Some(dir) => dir.clone(),
        None => args
            .checkpoint
            .parent()
            .context("checkpoint path has no parent directory")?
            .to_path_buf(),
    };
    Ok(engine::resume(&args.checkpoint, &overrides, &run_dir)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub run_id: String,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(checks: &mut Vec<CheckResult>, name: &str, result: Result<(), String>) {
    checks.push(match result {
        Ok(()) => CheckResult {
            name: name.to_string(),
            passed: true,
            detail: "ok".to_string(),
        },
        Err(detail) => CheckResult {
            name: name.to_string(),
            passed: false,
            detail,
        },
    });
}

fn check_log_shape(lines: &[RunLogLine], summary: &RunSummary) -> Result<(), String> {
    if lines.len() % 2 != 0 {
        return Err(format!("odd number of log lines ({})", lines.len()));
    }
    for (i, pair) in lines.chunks(2).enumerate() {
        let round = (i + 1) as u32;
        for (slot, line) in pair.iter().enumerate() {
            if line.round != round {
                return Err(format!(
                    "line {} has round {}, expected {}",
                    2 * i + slot,
                    line.round,
                    round
                ));
            }
            if line.firm != slot as u8 + 1 {
                return Err(format!("round {round}: expected firm {}", slot + 1));
            }
            if line.run_id != summary.run_id {
                return Err(format!("round {round}: run_id mismatch"));
            }
        }
        if pair[0].price != pair[1].rival_price || pair[1].price != pair[0].rival_price {
            return Err(format!("round {round}: rival prices are inconsistent"));
        }
    }
    if lines.len() / 2 != summary.rounds_executed as usize {
        return Err(format!(
            "log has {} rounds, summary says {}",
            lines.len() / 2,
            summary.rounds_executed
        ));
    }
    Ok(())
}

fn check_recomputation(lines: &[RunLogLine], config: &RunConfig) -> Result<(), String> {
    let market = derive_market(config.market).map_err(|e| e.to_string())?;
    for pair in lines.chunks(2) {
        let out = market::profit(&market, pair[0].price, pair[1].price);
        for (line, (demand, profit)) in
            pair.iter().zip([(out.q1, out.pi1), (out.q2, out.pi2)])
        {
            if line.price != round_to_cents(line.price) {
                return Err(format!(
                    "round {} firm {}: price {} is not quantized to cents",
                    line.round, line.firm, line.price
                ));
            }
            if (line.demand - demand).abs() > RECOMPUTE_TOLERANCE {
                return Err(format!(
                    "round {} firm {}: logged demand {} but recomputed {}",
                    line.round, line.firm, line.demand, demand
                ));
            }
            if (line.profit - profit).abs() > RECOMPUTE_TOLERANCE {
                return Err(format!(
                    "round {} firm {}: logged profit {} but recomputed {}",
                    line.round, line.firm, line.profit, profit
                ));
            }
        }
    }
    Ok(())
}

fn rebuild_verdicts(
    lines: &[RunLogLine],
    summary: &RunSummary,
) -> Result<([StationarityVerdict; 2], Option<u32>), String> {
    let market = derive_market(summary.config.market).map_err(|e| e.to_string())?;
    let refs: ReferencePrices =
        market::reference_prices(&market).map_err(|e| e.to_string())?;
    let series1: Vec<f64> = lines.iter().filter(|l| l.firm == 1).map(|l| l.price).collect();
    let series2: Vec<f64> = lines.iter().filter(|l| l.firm == 2).map(|l| l.price).collect();
    let fallback = (
        (summary.config.market.a + summary.config.market.c1) / 2.0,
        (summary.config.market.a + summary.config.market.c2) / 2.0,
    );
    let mut policy = detect::StoppingPolicy::from_refs(&refs, fallback);
    let overrides = &summary.config.detectors;
    for conv in &mut policy.convergence {
        if let Some(epsilon) = overrides.epsilon {
            conv.epsilon = epsilon;
        }
        if let Some(theta) = overrides.theta {
            conv.theta = theta;
        }
        if let Some(window) = overrides.convergence_window {
            conv.window = window;
        }
    }
    for osc in &mut policy.oscillation {
        if let Some(bound) = overrides.oscillation_bound {
            osc.bound = bound;
        }
        if let Some(window) = overrides.oscillation_window {
            osc.window = window;
        }
    }
    let verdicts =
        detect::final_verdicts(&series1, &series2, &policy, summary.rounds_executed);
    let formed_at = if refs.cartel.is_some() {
        detect::detect_collusion_formation(&series1, &series2, &refs)
            .map_err(|e| e.to_string())?
            .formed_at
    } else {
        None
    };
    Ok((verdicts, formed_at))
}

/// Re-read a run directory, recompute market outcomes from the logged
/// prices, re-run the detectors ex post, and compare against the
/// recorded summary.
pub fn cmd_verify(run_dir: &Path) -> Result<VerifyReport> {
    let summary = read_summary(run_dir)?;
    let lines: Vec<RunLogLine> = read_jsonl(&run_dir.join(ROUNDS_FILE))
        .with_context(|| format!("reading {}", run_dir.join(ROUNDS_FILE).display()))?;
    let mut checks = Vec::new();

    check(&mut checks, "log-shape", check_log_shape(&lines, &summary));
    check(
        &mut checks,
        "market-recomputation",
        check_recomputation(&lines, &summary.config),
    );
    match rebuild_verdicts(&lines, &summary) {
        Ok((verdicts, formed_at)) => {
            check(
                &mut checks,
                "stationarity-verdicts",
                if verdicts == summary.verdicts {
                    Ok(())
                } else {
                    Err(format!(
                        "recomputed {verdicts:?}, summary has {:?}",
                        summary.verdicts
                    ))
                },
            );
            check(
                &mut checks,
                "collusion-formation",
                if formed_at == summary.collusion_formed_at {
                    Ok(())
                } else {
                    Err(format!(
                        "recomputed formed_at {formed_at:?}, summary has {:?}",
                        summary.collusion_formed_at
                    ))
                },
            );
        }
        Err(detail) => {
            check(&mut checks, "stationarity-verdicts", Err(detail));
        }
    }

    Ok(VerifyReport {
        run_id: summary.run_id,
        checks,
    })
}

/// Per-round CSV row plus the export summary document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExportSummary {
    pub run_id: String,
    pub rounds_executed: u32,
    pub verdicts: [StationarityVerdict; 2],
    pub collusion_formed_at: Option<u32>,
    pub reference_prices: ReferencePrices,
}

/// Write plot-ready series: one CSV row per round with both prices and
/// the reference lines (the cartel column is empty when undefined), and
/// a summary JSON beside it.
pub fn cmd_export(run_dir: &Path, csv_path: &Path, summary_path: &Path) -> Result<()> {
    let summary = read_summary(run_dir)?;
    let lines: Vec<RunLogLine> = read_jsonl(&run_dir.join(ROUNDS_FILE))?;
    if lines.len() % 2 != 0 {
        bail!("malformed log: odd number of lines");
    }
    let refs = summary.reference_prices;
    let mut writer = csv::Writer::from_path(csv_path)
        .with_context(|| format!("creating {}", csv_path.display()))?;
    writer.write_record(["round", "price1", "price2", "p_bertrand1", "p_bertrand2", "p_cartel1", "p_cartel2"])?;
    for pair in lines.chunks(2) {
        let (cartel1, cartel2) = match refs.cartel {
            Some((m1, m2)) => (m1.to_string(), m2.to_string()),
            None => (String::new(), String::new()),
        };
        writer.write_record([
            pair[0].round.to_string(),
            pair[0].price.to_string(),
            pair[1].price.to_string(),
            refs.bertrand.0.to_string(),
            refs.bertrand.1.to_string(),
            cartel1,
            cartel2,
        ])?;
    }
    writer.flush()?;

    let export = ExportSummary {
        run_id: summary.run_id,
        rounds_executed: summary.rounds_executed,
        verdicts: summary.verdicts,
        collusion_formed_at: summary.collusion_formed_at,
        reference_prices: refs,
    };
    std::fs::write(summary_path, serde_json::to_string_pretty(&export)?)?;
    Ok(())
}

/// Best-effort machine-readable error category.
pub fn error_kind(err: &anyhow::Error) -> &'static str {
    if let Some(engine_err) = err.downcast_ref::<engine::EngineError>() {
        match engine_err {
            engine::EngineError::Config(_) => "config",
            engine::EngineError::Market(_) => "market",
            engine::EngineError::Policy { .. } => "policy",
            engine::EngineError::Llm(_) => "llm",
            engine::EngineError::Memory(_) => "memory",
            engine::EngineError::Io(_) => "io",
            engine::EngineError::ChecksumMismatch => "checksum-mismatch",
            engine::EngineError::VersionMismatch { .. } => "version-mismatch",
            engine::EngineError::CheckpointCorrupt(_) => "checkpoint-corrupt",
            engine::EngineError::Locked(_) => "locked",
        }
    } else {
        "error"
    }
}
