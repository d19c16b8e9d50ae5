//! LLM-backed agent: prompt assembly, a chat-completion client with
//! record/replay cassettes, price parsing, and the reflection call.
//!
//! Prompt wording is frozen by golden-file tests; the wire client is a
//! plain JSON chat-completion POST. In `Replay` mode no network is
//! touched: responses come from a cassette recorded earlier, with each
//! request verified against the recorded digest.

pub mod client;
pub mod parse;
pub mod prompt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::{HistogramBin, StrategyLog};
use crate::policy::Observation;

pub use client::{
    read_cassette, request_digest, CassetteEntry, ChatMessage, IoMode, LlmSession, Role,
};

/// Behavioral disposition injected into the system prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Persona {
    Active,
    Aggressive,
    None,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("prompt variable `{0}` is unbound")]
    MissingVariable(&'static str),
    #[error("API key environment variable `{0}` is not set")]
    AuthMissing(String),
    #[error("provider returned status {status}: {message}")]
    Provider { status: u16, message: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed provider response: {0}")]
    BadResponse(String),
    #[error("cassette entry {seq} does not match the request digest")]
    CassetteMismatch { seq: u64 },
    #[error("cassette exhausted after {0} entries")]
    CassetteExhausted(u64),
    #[error("cassette file corrupt: {0}")]
    CassetteCorrupt(String),
    #[error("no price found in model output")]
    NoPriceFound,
    #[error("no price found after {0} retries")]
    RetriesExhausted(u32),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for LlmError {
    fn from(err: std::io::Error) -> Self {
        LlmError::Io(err.to_string())
    }
}

/// Configuration for one LLM-backed agent slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmAgentConfig {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub firm_name: String,
    pub rival_firm_name: String,
    pub firm_cost: f64,
    pub persona: Persona,
    pub parse_retries: u32,
    pub endpoint: String,
    pub api_key_env: String,
    /// Upper bound for parsed prices (the demand intercept).
    pub price_cap: f64,
    /// Approximate prompt size limit in words; transcript material is
    /// elided oldest-first beyond it.
    pub word_budget: usize,
}

impl LlmAgentConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.firm_name.is_empty() {
            return Err(LlmError::MissingVariable("firm_name"));
        }
        if self.rival_firm_name.is_empty() {
            return Err(LlmError::MissingVariable("firm_name_2"));
        }
        Ok(())
    }
}

/// One message of a round's discussion phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptMessage {
    pub speaker: String,
    pub exchange: u32,
    pub text: String,
}

/// Ordered messages exchanged during one round's discussion phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub round: u32,
    pub messages: Vec<TranscriptMessage>,
}

impl Transcript {
    pub fn new(round: u32) -> Self {
        Transcript {
            round,
            messages: Vec::new(),
        }
    }

    pub fn push(&mut self, speaker: &str, exchange: u32, text: String) {
        self.messages.push(TranscriptMessage {
            speaker: speaker.to_string(),
            exchange,
            text,
        });
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }
}

const FORMAT_REMINDER: &str =
    "Please reply with a single number: the price of your product for the current round.";

/// Ask the model for this round's price, re-prompting with a format
/// reminder when no usable number comes back, up to `parse_retries`
/// times.
pub fn decide_price(
    cfg: &LlmAgentConfig,
    obs: &Observation,
    session: &mut LlmSession,
) -> Result<f64, LlmError> {
    let system = prompt::build_system_prompt(cfg, obs.transcript.is_some())?;
    let round_prompt = prompt::build_round_prompt(obs, cfg.word_budget);
    let mut messages = vec![
        ChatMessage::system(system),
        ChatMessage::user(round_prompt),
    ];
    let mut attempt = 0;
    loop {
        let text = session.complete(
            &cfg.model_id,
            cfg.temperature,
            cfg.max_tokens,
            &messages,
        )?;
        match parse::parse_price(&text, cfg.price_cap) {
            Ok(price) => return Ok(price),
            Err(LlmError::NoPriceFound) if attempt < cfg.parse_retries => {
                attempt += 1;
                messages.push(ChatMessage::assistant(text));
                messages.push(ChatMessage::user(FORMAT_REMINDER.to_string()));
            }
            Err(LlmError::NoPriceFound) => {
                return Err(LlmError::RetriesExhausted(cfg.parse_retries))
            }
            Err(other) => return Err(other),
        }
    }
}

/// One discussion turn. A blank completion means the agent declines to
/// speak, which ends the phase.
pub fn converse(
    cfg: &LlmAgentConfig,
    obs: &Observation,
    session: &mut LlmSession,
) -> Result<Option<String>, LlmError> {
    let system = prompt::build_system_prompt(cfg, true)?;
    let user = prompt::build_conversation_prompt(obs, cfg.word_budget);
    let messages = [ChatMessage::system(system), ChatMessage::user(user)];
    let text = session.complete(&cfg.model_id, cfg.temperature, cfg.max_tokens, &messages)?;
    let trimmed = text.trim();
    if trimmed.is_empty() {
        Ok(None)
    } else {
        Ok(Some(trimmed.to_string()))
    }
}

/// Planning-phase call: send the binned history and past strategies,
/// return the revised strategy text verbatim.
pub fn reflect(
    cfg: &LlmAgentConfig,
    bins: &[HistogramBin],
    log: &StrategyLog,
    session: &mut LlmSession,
) -> Result<String, LlmError> {
    let system = prompt::build_system_prompt(cfg, false)?;
    let user = prompt::build_reflection_prompt(bins, log);
    let messages = [ChatMessage::system(system), ChatMessage::user(user)];
    session.complete(&cfg.model_id, cfg.temperature, cfg.max_tokens, &messages)
}
