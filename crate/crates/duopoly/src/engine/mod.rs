//! The round loop: optional reflection, optional discussion phase,
//! simultaneous pricing, market evaluation, logging, stopping checks,
//! and checkpoint/resume.
//!
//! Both agents decide each round's price from pre-round state only; the
//! engine evaluates the market on the two-decimal prices it logs, so
//! every logged demand and profit can be recomputed from the logged
//! prices exactly. Reflection runs at the end of a round whose index is
//! a multiple of the reflection period, using history inclusive of that
//! round, and the revised strategy informs the following rounds.

mod checkpoint;
mod schedule;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointBody, CHECKPOINT_VERSION};
pub use schedule::{PhaseSchedule, Segment};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::detect::{
    self, CollusionFormation, StationarityVerdict, StopDecision, StoppingPolicy,
};
use crate::llm::{IoMode, LlmAgentConfig, LlmError, LlmSession, Persona, Transcript};
use crate::market::{
    self, derive_market, profit, round_to_cents, DerivedMarket, MarketError, MarketParams,
    ReferencePrices,
};
use crate::memory::{
    reflection_due, summarize_history, window_view, MemoryConfig, MemoryError, RoundRecord,
    StrategyLog,
};
use crate::policy::{Observation, Policy, PolicyError, PolicySpec};
use crate::runlog::{JsonlWriter, RunLogLine, StrategyLogLine, TranscriptLogLine};

pub const ROUNDS_FILE: &str = "rounds.jsonl";
pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";
pub const STRATEGIES_FILE: &str = "strategies.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
const LOCK_FILE: &str = ".lock";

/// Discussion-phase cap: three messages per speaker per round.
pub const MAX_EXCHANGES: u32 = 3;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("policy failure for firm {firm} at round {round}: {source}")]
    Policy {
        firm: u8,
        round: u32,
        #[source]
        source: PolicyError,
    },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint checksum mismatch")]
    ChecksumMismatch,
    #[error("checkpoint version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint is malformed: {0}")]
    CheckpointCorrupt(String),
    #[error("run directory is locked (remove {0} if no run is active)")]
    Locked(PathBuf),
}

/// Model and wire settings shared by both agent slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmSettings {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub firm_names: (String, String),
    pub parse_retries: u32,
    pub endpoint: String,
    pub api_key_env: String,
    pub word_budget: usize,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            model_id: "gpt-4-0314".to_string(),
            temperature: 0.7,
            max_tokens: 128,
            firm_names: ("Ed".to_string(), "Gill".to_string()),
            parse_retries: 3,
            endpoint: "https://api.openai.com/v1/chat/completions".to_string(),
            api_key_env: "OPENAI_API_KEY".to_string(),
            word_budget: 6000,
        }
    }
}

/// Optional explicit detector parameters; unset values are derived from
/// the reference prices at run start.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectorOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence_window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oscillation_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oscillation_window: Option<usize>,
}

/// Full description of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_id: String,
    pub market: MarketParams,
    pub policies: (PolicySpec, PolicySpec),
    pub initial_prices: (f64, f64),
    pub planning: PhaseSchedule,
    pub conversation: PhaseSchedule,
    pub personas: (Persona, Persona),
    pub max_rounds: u32,
    pub seed: u64,
    pub io_mode: IoMode,
    #[serde(default)]
    pub memory: MemoryConfig,
    #[serde(default)]
    pub detectors: DetectorOverrides,
    #[serde(default)]
    pub llm: LlmSettings,
    /// Also write a checkpoint upon completing this round, without
    /// stopping the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_at: Option<u32>,
}

impl RunConfig {
    /// A config with base-market defaults; callers override what they
    /// need.
    pub fn new(run_id: &str, policies: (PolicySpec, PolicySpec)) -> Self {
        RunConfig {
            run_id: run_id.to_string(),
            market: MarketParams {
                a: 14.0,
                beta: 1.0 / 150.0,
                d: 1.0 / 300.0,
                c1: 2.0,
                c2: 2.0,
            },
            policies,
            initial_prices: (2.0, 2.0),
            planning: PhaseSchedule::always(true),
            conversation: PhaseSchedule::always(false),
            personas: (Persona::Active, Persona::Active),
            max_rounds: 2000,
            seed: 0,
            io_mode: IoMode::Live,
            memory: MemoryConfig::default(),
            detectors: DetectorOverrides::default(),
            llm: LlmSettings::default(),
            checkpoint_at: None,
        }
    }
}

/// Fields a resumed run may legitimately change. Everything else is
/// pinned by the checkpoint's config digest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResumeOverrides {
    pub planning: Option<PhaseSchedule>,
    pub conversation: Option<PhaseSchedule>,
    pub max_rounds: Option<u32>,
    pub io_mode: Option<IoMode>,
}

impl ResumeOverrides {
    /// Derive overrides from a full replacement config, rejecting any
    /// difference outside the whitelist.
    pub fn from_config_diff(
        original: &RunConfig,
        updated: &RunConfig,
    ) -> Result<Self, EngineError> {
        let mut normalized = updated.clone();
        normalized.planning = original.planning.clone();
        normalized.conversation = original.conversation.clone();
        normalized.max_rounds = original.max_rounds;
        normalized.io_mode = original.io_mode.clone();
        if &normalized != original {
            return Err(EngineError::Config(
                "resume may only change planning, conversation, max_rounds, and io_mode"
                    .to_string(),
            ));
        }
        Ok(ResumeOverrides {
            planning: (updated.planning != original.planning)
                .then(|| updated.planning.clone()),
            conversation: (updated.conversation != original.conversation)
                .then(|| updated.conversation.clone()),
            max_rounds: (updated.max_rounds != original.max_rounds)
                .then_some(updated.max_rounds),
            io_mode: (updated.io_mode != original.io_mode).then(|| updated.io_mode.clone()),
        })
    }
}

/// Outcome of a completed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: String,
    pub rounds_executed: u32,
    pub verdicts: [StationarityVerdict; 2],
    /// `None` when the collusion range is undefined (homogeneous goods).
    pub collusion: Option<CollusionFormation>,
    pub log_path: PathBuf,
}

/// Summary document written beside the round log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub rounds_executed: u32,
    pub verdicts: [StationarityVerdict; 2],
    pub collusion_range_defined: bool,
    pub collusion_formed_at: Option<u32>,
    pub reference_prices: ReferencePrices,
    pub config: RunConfig,
}

/// Digest over the parts of the config a resume may not change.
pub fn config_digest(config: &RunConfig) -> String {
    let mut pinned = config.clone();
    pinned.planning = PhaseSchedule::always(true);
    pinned.conversation = PhaseSchedule::always(true);
    pinned.max_rounds = 0;
    pinned.io_mode = IoMode::Live;
    let canonical = serde_json::to_string(&serde_json::to_value(&pinned).expect("serializes"))
        .expect("serializes");
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn strategy_digest(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Removes the lock file when the run finishes or fails.
struct RunLock {
    path: PathBuf,
}

impl RunLock {
    fn acquire(dir: &Path) -> Result<Self, EngineError> {
        let path = dir.join(LOCK_FILE);
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(RunLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(EngineError::Locked(path))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn validate_config(config: &RunConfig) -> Result<(), EngineError> {
    if config.run_id.is_empty() {
        return Err(EngineError::Config("run_id must be nonempty".to_string()));
    }
    if config.max_rounds < 1 {
        return Err(EngineError::Config("max_rounds must be >= 1".to_string()));
    }
    let (i1, i2) = config.initial_prices;
    if !(i1.is_finite() && i1 >= 0.0 && i2.is_finite() && i2 >= 0.0) {
        return Err(EngineError::Config(
            "initial prices must be finite and non-negative".to_string(),
        ));
    }
    for (name, schedule) in [
        ("planning", &config.planning),
        ("conversation", &config.conversation),
    ] {
        if !schedule.covers(config.max_rounds) {
            return Err(EngineError::Config(format!(
                "{name} schedule does not cover rounds 1..={}",
                config.max_rounds
            )));
        }
    }
    let m = &config.memory;
    if m.window < 1 || m.bin_size < 1 || m.max_bins < 1 || m.reflection_period < 1 {
        return Err(EngineError::Config(
            "memory sizes must be strictly positive".to_string(),
        ));
    }
    if config.llm.temperature < 0.0 || config.llm.max_tokens < 1 {
        return Err(EngineError::Config(
            "llm settings: temperature must be >= 0 and max_tokens >= 1".to_string(),
        ));
    }
    let d = &config.detectors;
    if d.epsilon.map_or(false, |e| e <= 0.0)
        || d.theta.map_or(false, |t| !(0.0..1.0).contains(&t) || t == 0.0)
        || d.convergence_window.map_or(false, |w| w < 1)
        || d.oscillation_window.map_or(false, |w| w < 1)
    {
        return Err(EngineError::Config(
            "detector overrides out of range".to_string(),
        ));
    }
    Ok(())
}

/// Per-firm LLM config for one agent slot.
fn llm_agent_config(config: &RunConfig, firm: usize) -> LlmAgentConfig {
    let names = &config.llm.firm_names;
    let (own, rival) = if firm == 0 {
        (names.0.clone(), names.1.clone())
    } else {
        (names.1.clone(), names.0.clone())
    };
    let persona = if firm == 0 {
        config.personas.0
    } else {
        config.personas.1
    };
    LlmAgentConfig {
        model_id: config.llm.model_id.clone(),
        temperature: config.llm.temperature,
        max_tokens: config.llm.max_tokens,
        firm_name: own,
        rival_firm_name: rival,
        firm_cost: config.market.cost(firm),
        persona,
        parse_retries: config.llm.parse_retries,
        endpoint: config.llm.endpoint.clone(),
        api_key_env: config.llm.api_key_env.clone(),
        price_cap: config.market.a,
        word_budget: config.llm.word_budget,
    }
}

fn firm_seed(master: u64, firm: usize) -> u64 {
    master.wrapping_add((firm as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Derive the stopping policy: explicit overrides where given, otherwise
/// per-firm defaults from the reference gap. For homogeneous goods the
/// collusive reference falls back to the joint-monopoly price
/// `(a + c_i) / 2`, which is the cartel formula's limit as d -> beta.
fn stopping_policy(
    config: &RunConfig,
    refs: &ReferencePrices,
    params: &MarketParams,
) -> StoppingPolicy {
    let fallback = (
        (params.a + params.c1) / 2.0,
        (params.a + params.c2) / 2.0,
    );
    let mut policy = StoppingPolicy::from_refs(refs, fallback);
    let d = &config.detectors;
    for conv in &mut policy.convergence {
        if let Some(epsilon) = d.epsilon {
            conv.epsilon = epsilon;
        }
        if let Some(theta) = d.theta {
            conv.theta = theta;
        }
        if let Some(window) = d.convergence_window {
            conv.window = window;
        }
    }
    for osc in &mut policy.oscillation {
        if let Some(bound) = d.oscillation_bound {
            osc.bound = bound;
        }
        if let Some(window) = d.oscillation_window {
            osc.window = window;
        }
    }
    policy
}

struct Runner {
    config: RunConfig,
    market: DerivedMarket,
    refs: ReferencePrices,
    stopping: StoppingPolicy,
    policies: [Policy; 2],
    histories: [Vec<RoundRecord>; 2],
    strategy_logs: [StrategyLog; 2],
    series: [Vec<f64>; 2],
    session: Option<LlmSession>,
    run_dir: PathBuf,
}

fn open_session_if_needed(config: &RunConfig) -> Result<Option<LlmSession>, EngineError> {
    if config.policies.0.is_llm() || config.policies.1.is_llm() {
        Ok(Some(LlmSession::open(
            &config.io_mode,
            &config.llm.endpoint,
            &config.llm.api_key_env,
        )?))
    } else {
        Ok(None)
    }
}

fn build_policies(
    config: &RunConfig,
    market: &DerivedMarket,
    refs: &ReferencePrices,
) -> Result<[Policy; 2], EngineError> {
    let specs = [&config.policies.0, &config.policies.1];
    let mut out = Vec::with_capacity(2);
    for (firm, spec) in specs.into_iter().enumerate() {
        let llm_cfg = spec.is_llm().then(|| llm_agent_config(config, firm));
        let policy = Policy::from_spec(spec, firm, market, refs, firm_seed(config.seed, firm), llm_cfg)
            .map_err(|source| EngineError::Policy {
                firm: firm as u8 + 1,
                round: 0,
                source,
            })?;
        out.push(policy);
    }
    let mut it = out.into_iter();
    Ok([it.next().unwrap(), it.next().unwrap()])
}

fn seed_round_zero(market: &DerivedMarket, initial: (f64, f64)) -> [Vec<RoundRecord>; 2] {
    let p1 = round_to_cents(initial.0);
    let p2 = round_to_cents(initial.1);
    let out = profit(market, p1, p2);
    [
        vec![RoundRecord {
            round: 0,
            price: p1,
            demand: out.q1,
            profit: out.pi1,
            rival_price: p2,
        }],
        vec![RoundRecord {
            round: 0,
            price: p2,
            demand: out.q2,
            profit: out.pi2,
            rival_price: p1,
        }],
    ]
}

impl Runner {
    fn fresh(config: RunConfig, run_dir: &Path) -> Result<Self, EngineError> {
        validate_config(&config)?;
        let market = derive_market(config.market)?;
        let refs = market::reference_prices(&market)?;
        let stopping = stopping_policy(&config, &refs, &config.market);
        let policies = build_policies(&config, &market, &refs)?;
        let session = open_session_if_needed(&config)?;
        let histories = seed_round_zero(&market, config.initial_prices);
        Ok(Runner {
            config,
            market,
            refs,
            stopping,
            policies,
            histories,
            strategy_logs: [StrategyLog::new(), StrategyLog::new()],
            series: [Vec::new(), Vec::new()],
            session,
            run_dir: run_dir.to_path_buf(),
        })
    }

    fn with_policies(
        config: RunConfig,
        policies: [Policy; 2],
        run_dir: &Path,
    ) -> Result<Self, EngineError> {
        validate_config(&config)?;
        let market = derive_market(config.market)?;
        let refs = market::reference_prices(&market)?;
        let stopping = stopping_policy(&config, &refs, &config.market);
        let needs_session = matches!(policies[0], Policy::Llm { .. })
            || matches!(policies[1], Policy::Llm { .. });
        let session = if needs_session {
            Some(LlmSession::open(
                &config.io_mode,
                &config.llm.endpoint,
                &config.llm.api_key_env,
            )?)
        } else {
            None
        };
        let histories = seed_round_zero(&market, config.initial_prices);
        Ok(Runner {
            config,
            market,
            refs,
            stopping,
            policies,
            histories,
            strategy_logs: [StrategyLog::new(), StrategyLog::new()],
            series: [Vec::new(), Vec::new()],
            session,
            run_dir: run_dir.to_path_buf(),
        })
    }

    fn from_checkpoint(
        body: CheckpointBody,
        overrides: &ResumeOverrides,
        run_dir: &Path,
    ) -> Result<Self, EngineError> {
        let mut config = body.config.clone();
        if let Some(planning) = &overrides.planning {
            config.planning = planning.clone();
        }
        if let Some(conversation) = &overrides.conversation {
            config.conversation = conversation.clone();
        }
        if let Some(max_rounds) = overrides.max_rounds {
            config.max_rounds = max_rounds;
        }
        if let Some(io_mode) = &overrides.io_mode {
            config.io_mode = io_mode.clone();
        }
        if config_digest(&config) != body.config_digest {
            return Err(EngineError::Config(
                "checkpoint config digest does not match the restored config".to_string(),
            ));
        }
        validate_config(&config)?;
        let market = derive_market(config.market)?;
        let refs = market::reference_prices(&market)?;
        let stopping = stopping_policy(&config, &refs, &config.market);
        let mut policies = build_policies(&config, &market, &refs)?;
        let [state1, state2] = body.policy_states;
        for (firm, (policy, state)) in policies
            .iter_mut()
            .zip([state1, state2])
            .enumerate()
        {
            policy.restore(state).map_err(|source| match source {
                PolicyError::StateVersion { found, expected } => {
                    EngineError::VersionMismatch { found, expected }
                }
                other => EngineError::Policy {
                    firm: firm as u8 + 1,
                    round: body.round,
                    source: other,
                },
            })?;
        }
        let mut session = open_session_if_needed(&config)?;
        if let Some(session) = session.as_mut() {
            session.skip_to(body.llm_calls)?;
        }
        let series = [
            body.histories[0].iter().skip(1).map(|r| r.price).collect(),
            body.histories[1].iter().skip(1).map(|r| r.price).collect(),
        ];
        Ok(Runner {
            config,
            market,
            refs,
            stopping,
            policies,
            histories: body.histories,
            strategy_logs: body.strategy_logs,
            series,
            session,
            run_dir: run_dir.to_path_buf(),
        })
    }

    fn checkpoint_body(&self, round: u32) -> CheckpointBody {
        CheckpointBody {
            version: CHECKPOINT_VERSION,
            run_id: self.config.run_id.clone(),
            round,
            config: self.config.clone(),
            config_digest: config_digest(&self.config),
            histories: self.histories.clone(),
            strategy_logs: self.strategy_logs.clone(),
            policy_states: [self.policies[0].snapshot(), self.policies[1].snapshot()],
            llm_calls: self.session.as_ref().map_or(0, |s| s.calls_made()),
        }
    }

    fn write_failure_checkpoint(&self, completed_round: u32) {
        let body = self.checkpoint_body(completed_round);
        let _ = write_checkpoint(&self.run_dir.join(CHECKPOINT_FILE), &body);
    }

    /// Phase 1 of a round: alternating exchanges, the initiator
    /// alternating with round parity, capped at three messages each.
    /// A declined turn (no message) ends the phase.
    fn conversation_phase(&mut self, round: u32) -> Result<Transcript, EngineError> {
        let mut transcript = Transcript::new(round);
        let initiator = if round % 2 == 1 { 0 } else { 1 };
        let mut inbound: Option<String> = None;
        'exchanges: for exchange in 0..MAX_EXCHANGES {
            for speaker in [initiator, 1 - initiator] {
                let name = if speaker == 0 {
                    self.config.llm.firm_names.0.clone()
                } else {
                    self.config.llm.firm_names.1.clone()
                };
                let message = {
                    let obs = Observation {
                        round,
                        own_cost: self.config.market.cost(speaker),
                        window: window_view(&self.histories[speaker], &self.config.memory),
                        bins: None,
                        current_strategy: self.strategy_logs[speaker].current(),
                        transcript: Some(&transcript),
                    };
                    self.policies[speaker].converse(
                        &obs,
                        inbound.as_deref(),
                        self.session.as_mut(),
                    )
                }
                .map_err(|source| EngineError::Policy {
                    firm: speaker as u8 + 1,
                    round,
                    source,
                })?;
                match message {
                    None => break 'exchanges,
                    Some(text) => {
                        transcript.push(&name, exchange, text.clone());
                        inbound = Some(text);
                    }
                }
            }
        }
        Ok(transcript)
    }

    fn execute(mut self, start_round: u32, append: bool) -> Result<RunResult, EngineError> {
        std::fs::create_dir_all(&self.run_dir)?;
        let _lock = RunLock::acquire(&self.run_dir)?;

        let rounds_path = self.run_dir.join(ROUNDS_FILE);
        if append && rounds_path.exists() {
            let existing: Vec<RunLogLine> = crate::runlog::read_jsonl(&rounds_path)?;
            let last_logged = existing.last().map_or(0, |l| l.round);
            if last_logged != start_round - 1 {
                return Err(EngineError::Config(format!(
                    "round log ends at round {last_logged} but the checkpoint resumes at \
                     round {start_round}"
                )));
            }
        }
        let mut rounds_log = if append {
            JsonlWriter::append(&rounds_path)?
        } else {
            JsonlWriter::create(&rounds_path)?
        };
        let mut transcripts_log = if append {
            JsonlWriter::append(&self.run_dir.join(TRANSCRIPTS_FILE))?
        } else {
            JsonlWriter::create(&self.run_dir.join(TRANSCRIPTS_FILE))?
        };
        let mut strategies_log = if append {
            JsonlWriter::append(&self.run_dir.join(STRATEGIES_FILE))?
        } else {
            JsonlWriter::create(&self.run_dir.join(STRATEGIES_FILE))?
        };

        let mut executed = start_round.saturating_sub(1);
        let mut verdicts: Option<[StationarityVerdict; 2]> = None;

        for round in start_round..=self.config.max_rounds {
            let conversing = self.config.conversation.enabled_at(round);
            let planning = self.config.planning.enabled_at(round);
            let depth = self.histories[0].len();

            let round_result = (|| -> Result<[Option<StrategyLogLine>; 2], EngineError> {
                let transcript = if conversing {
                    self.conversation_phase(round)?
                } else {
                    Transcript::new(round)
                };

                // Simultaneous pricing: both observations are built from
                // pre-round state; neither agent sees the other's
                // current-round choice.
                let mut prices = [0.0f64; 2];
                for firm in 0..2 {
                    let price = {
                        let obs = Observation {
                            round,
                            own_cost: self.config.market.cost(firm),
                            window: window_view(&self.histories[firm], &self.config.memory),
                            bins: None,
                            current_strategy: self.strategy_logs[firm].current(),
                            transcript: conversing.then_some(&transcript),
                        };
                        self.policies[firm].decide_price(&obs, self.session.as_mut())
                    }
                    .map_err(|source| EngineError::Policy {
                        firm: firm as u8 + 1,
                        round,
                        source,
                    })?;
                    prices[firm] = round_to_cents(price);
                }

                let outcome = profit(&self.market, prices[0], prices[1]);
                for firm in 0..2 {
                    self.histories[firm].push(RoundRecord {
                        round,
                        price: prices[firm],
                        demand: outcome.quantity(firm),
                        profit: outcome.profit(firm),
                        rival_price: prices[1 - firm],
                    });
                    self.series[firm].push(prices[firm]);
                }

                let mut strategy_lines = [None, None];
                if planning && reflection_due(round, &self.config.memory) {
                    for firm in 0..2 {
                        let revised = {
                            let bins = summarize_history(
                                &self.histories[firm][1..],
                                &self.config.memory,
                            );
                            let obs = Observation {
                                round,
                                own_cost: self.config.market.cost(firm),
                                window: window_view(
                                    &self.histories[firm],
                                    &self.config.memory,
                                ),
                                bins: Some(&bins),
                                current_strategy: self.strategy_logs[firm].current(),
                                transcript: None,
                            };
                            self.policies[firm].reflect(
                                &obs,
                                &self.strategy_logs[firm],
                                self.session.as_mut(),
                            )
                        }
                        .map_err(|source| EngineError::Policy {
                            firm: firm as u8 + 1,
                            round,
                            source,
                        })?;
                        if let Some(text) = revised {
                            let digest = strategy_digest(&text);
                            self.strategy_logs[firm].record(round, text.clone())?;
                            strategy_lines[firm] = Some(StrategyLogLine {
                                round,
                                firm: firm as u8 + 1,
                                digest,
                                text,
                            });
                        }
                    }
                }

                if conversing && !transcript.is_empty() {
                    transcripts_log.write(&TranscriptLogLine {
                        round,
                        messages: transcript.messages.clone(),
                    })?;
                }
                Ok(strategy_lines)
            })();

            let strategy_lines = match round_result {
                Ok(lines) => lines,
                Err(err) => {
                    // Roll the in-flight round back so the checkpoint
                    // matches the last fully logged round, then bail.
                    for firm in 0..2 {
                        self.histories[firm].truncate(depth);
                        self.series[firm].truncate(depth.saturating_sub(1));
                    }
                    self.write_failure_checkpoint(round - 1);
                    return Err(err);
                }
            };

            let reflected = planning && reflection_due(round, &self.config.memory);
            for firm in 0..2 {
                let rec = self.histories[firm].last().expect("round just pushed");
                rounds_log.write(&RunLogLine {
                    run_id: self.config.run_id.clone(),
                    round,
                    firm: firm as u8 + 1,
                    price: rec.price,
                    demand: rec.demand,
                    profit: rec.profit,
                    rival_price: rec.rival_price,
                    reflected,
                    conversed: conversing,
                    strategy_digest: strategy_lines[firm].as_ref().map(|l| l.digest.clone()),
                })?;
            }
            for line in strategy_lines.iter().flatten() {
                strategies_log.write(line)?;
            }

            executed = round;
            if self.config.checkpoint_at == Some(round) {
                let body = self.checkpoint_body(round);
                write_checkpoint(
                    &self.run_dir.join(format!("checkpoint-{round:06}.json")),
                    &body,
                )?;
            }

            match detect::stopping_check(&self.series[0], &self.series[1], &self.stopping, round)
            {
                StopDecision::Stop(v) => {
                    verdicts = Some(v);
                    break;
                }
                StopDecision::HardStop => {
                    verdicts = Some(detect::final_verdicts(
                        &self.series[0],
                        &self.series[1],
                        &self.stopping,
                        round,
                    ));
                    break;
                }
                StopDecision::Continue => {}
            }
        }

        let verdicts = verdicts.unwrap_or_else(|| {
            detect::final_verdicts(&self.series[0], &self.series[1], &self.stopping, executed)
        });
        let collusion = if self.refs.cartel.is_some() {
            Some(
                detect::detect_collusion_formation(&self.series[0], &self.series[1], &self.refs)
                    .expect("cartel range present"),
            )
        } else {
            None
        };

        let body = self.checkpoint_body(executed);
        write_checkpoint(&self.run_dir.join(CHECKPOINT_FILE), &body)?;
        let summary = RunSummary {
            run_id: self.config.run_id.clone(),
            rounds_executed: executed,
            verdicts,
            collusion_range_defined: self.refs.cartel.is_some(),
            collusion_formed_at: collusion.and_then(|c| c.formed_at),
            reference_prices: self.refs,
            config: self.config.clone(),
        };
        std::fs::write(
            self.run_dir.join(SUMMARY_FILE),
            serde_json::to_string_pretty(&summary).expect("summary serializes"),
        )?;

        Ok(RunResult {
            run_id: self.config.run_id.clone(),
            rounds_executed: executed,
            verdicts,
            collusion,
            log_path: rounds_path,
        })
    }
}

/// Execute a run from scratch into `run_dir`.
pub fn run(config: &RunConfig, run_dir: &Path) -> Result<RunResult, EngineError> {
    Runner::fresh(config.clone(), run_dir)?.execute(1, false)
}

/// Execute a run with pre-built policy instances (test fixtures such as
/// the echo policy are not expressible as `PolicySpec`).
pub fn run_with_policies(
    config: &RunConfig,
    policies: [Policy; 2],
    run_dir: &Path,
) -> Result<RunResult, EngineError> {
    Runner::with_policies(config.clone(), policies, run_dir)?.execute(1, false)
}

/// Continue a checkpointed run. The continuation behaves exactly as if
/// the overridden schedules had been configured from the start; round
/// numbering continues, and the round log in `run_dir` is appended to
/// when present.
pub fn resume(
    checkpoint_path: &Path,
    overrides: &ResumeOverrides,
    run_dir: &Path,
) -> Result<RunResult, EngineError> {
    let body = read_checkpoint(checkpoint_path)?;
    let start = body.round + 1;
    Runner::from_checkpoint(body, overrides, run_dir)?.execute(start, true)
}

/// Load the summary document from a run directory.
pub fn read_summary(run_dir: &Path) -> Result<RunSummary, EngineError> {
    let raw = std::fs::read_to_string(run_dir.join(SUMMARY_FILE))?;
    serde_json::from_str(&raw).map_err(|e| EngineError::Config(format!("summary: {e}")))
}
