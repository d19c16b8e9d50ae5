//! Human-editable TOML run configuration. Keys follow the experiment-
//! table column names (cost1, init_price1, d, rounds, ...); slope
//! parameters accept either numbers or fraction strings like "1/300".

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use duopoly::engine::{
    DetectorOverrides, LlmSettings, PhaseSchedule, RunConfig, Segment,
};
use duopoly::llm::{IoMode, Persona};
use duopoly::market::MarketParams;
use duopoly::memory::MemoryConfig;
use duopoly::policy::PolicySpec;

/// A number that may be written as a fraction string ("1/300").
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratio(pub f64);

impl Serialize for Ratio {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(v) => Ok(Ratio(v)),
            Raw::Text(text) => parse_ratio(&text)
                .map(Ratio)
                .ok_or_else(|| serde::de::Error::custom(format!("invalid number `{text}`"))),
        }
    }
}

fn parse_ratio(text: &str) -> Option<f64> {
    if let Some((num, den)) = text.split_once('/') {
        let num: f64 = num.trim().parse().ok()?;
        let den: f64 = den.trim().parse().ok()?;
        (den != 0.0).then(|| num / den)
    } else {
        text.trim().parse().ok()
    }
}

/// `planning` / `conversation` accept a plain flag or a segment list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    Flag(bool),
    Segments(Vec<Segment>),
}

impl ScheduleSpec {
    fn to_schedule(&self, field: &str) -> Result<PhaseSchedule> {
        match self {
            ScheduleSpec::Flag(enabled) => Ok(PhaseSchedule::always(*enabled)),
            ScheduleSpec::Segments(segments) => PhaseSchedule::from_segments(segments.clone())
                .with_context(|| format!("field `{field}`")),
        }
    }

    fn from_schedule(schedule: &PhaseSchedule) -> Self {
        match schedule.segments() {
            [only] if only.from == 1 && only.to.is_none() => ScheduleSpec::Flag(only.enabled),
            segments => ScheduleSpec::Segments(segments.to_vec()),
        }
    }
}

fn default_a() -> Ratio {
    Ratio(14.0)
}

fn default_beta() -> Ratio {
    Ratio(1.0 / 150.0)
}

fn default_policy() -> PolicySpec {
    PolicySpec::llm()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    #[serde(default = "default_a")]
    pub a: Ratio,
    #[serde(default = "default_beta")]
    pub beta: Ratio,
    pub d: Ratio,
    pub cost1: f64,
    pub cost2: f64,
    pub init_price1: f64,
    pub init_price2: f64,
    pub rounds: u32,
    pub planning: ScheduleSpec,
    pub conversation: ScheduleSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona: Option<Persona>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona1: Option<Persona>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona2: Option<Persona>,
    #[serde(default = "default_policy")]
    pub policy1: PolicySpec,
    #[serde(default = "default_policy")]
    pub policy2: PolicySpec,
    #[serde(default)]
    pub seed: u64,
    /// "live", "record", or "replay"; the latter two need `cassette`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub io_mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cassette: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_at: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm: Option<LlmFileSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detectors: Option<DetectorOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<MemoryConfig>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmFileSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub firm_name1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub firm_name2: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_retries: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_budget: Option<usize>,
}

impl LlmFileSettings {
    fn into_settings(self) -> LlmSettings {
        let defaults = LlmSettings::default();
        LlmSettings {
            model_id: self.model_id.unwrap_or(defaults.model_id),
            temperature: self.temperature.unwrap_or(defaults.temperature),
            max_tokens: self.max_tokens.unwrap_or(defaults.max_tokens),
            firm_names: (
                self.firm_name1.unwrap_or(defaults.firm_names.0),
                self.firm_name2.unwrap_or(defaults.firm_names.1),
            ),
            parse_retries: self.parse_retries.unwrap_or(defaults.parse_retries),
            endpoint: self.endpoint.unwrap_or(defaults.endpoint),
            api_key_env: self.api_key_env.unwrap_or(defaults.api_key_env),
            word_budget: self.word_budget.unwrap_or(defaults.word_budget),
        }
    }

    fn from_settings(settings: &LlmSettings) -> Option<Self> {
        let defaults = LlmSettings::default();
        if settings == &defaults {
            return None;
        }
        let keep = |differs: bool| differs;
        Some(LlmFileSettings {
            model_id: keep(settings.model_id != defaults.model_id)
                .then(|| settings.model_id.clone()),
            temperature: (settings.temperature != defaults.temperature)
                .then_some(settings.temperature),
            max_tokens: (settings.max_tokens != defaults.max_tokens)
                .then_some(settings.max_tokens),
            firm_name1: (settings.firm_names.0 != defaults.firm_names.0)
                .then(|| settings.firm_names.0.clone()),
            firm_name2: (settings.firm_names.1 != defaults.firm_names.1)
                .then(|| settings.firm_names.1.clone()),
            parse_retries: (settings.parse_retries != defaults.parse_retries)
                .then_some(settings.parse_retries),
            endpoint: (settings.endpoint != defaults.endpoint)
                .then(|| settings.endpoint.clone()),
            api_key_env: (settings.api_key_env != defaults.api_key_env)
                .then(|| settings.api_key_env.clone()),
            word_budget: (settings.word_budget != defaults.word_budget)
                .then_some(settings.word_budget),
        })
    }
}

fn io_mode_from_keys(io_mode: Option<&str>, cassette: Option<&Path>) -> Result<IoMode> {
    match io_mode.unwrap_or("live") {
        "live" => Ok(IoMode::Live),
        "record" => Ok(IoMode::Record {
            path: cassette
                .context("field `cassette` is required when io_mode = \"record\"")?
                .to_path_buf(),
        }),
        "replay" => Ok(IoMode::Replay {
            path: cassette
                .context("field `cassette` is required when io_mode = \"replay\"")?
                .to_path_buf(),
        }),
        other => bail!("field `io_mode`: unknown mode `{other}` (live, record, replay)"),
    }
}

impl FileConfig {
    pub fn into_run_config(self, fallback_run_id: &str) -> Result<RunConfig> {
        let persona1 = self.persona1.or(self.persona).unwrap_or(Persona::Active);
        let persona2 = self.persona2.or(self.persona).unwrap_or(Persona::Active);
        Ok(RunConfig {
            run_id: self.run_id.unwrap_or_else(|| fallback_run_id.to_string()),
            market: MarketParams {
                a: self.a.0,
                beta: self.beta.0,
                d: self.d.0,
                c1: self.cost1,
                c2: self.cost2,
            },
            policies: (self.policy1, self.policy2),
            initial_prices: (self.init_price1, self.init_price2),
            planning: self.planning.to_schedule("planning")?,
            conversation: self.conversation.to_schedule("conversation")?,
            personas: (persona1, persona2),
            max_rounds: self.rounds,
            seed: self.seed,
            io_mode: io_mode_from_keys(self.io_mode.as_deref(), self.cassette.as_deref())?,
            memory: self.memory.unwrap_or_default(),
            detectors: self.detectors.unwrap_or_default(),
            llm: self.llm.map(LlmFileSettings::into_settings).unwrap_or_default(),
            checkpoint_at: self.checkpoint_at,
        })
    }

    pub fn from_run_config(config: &RunConfig) -> Self {
        let (io_mode, cassette) = match &config.io_mode {
            IoMode::Live => (None, None),
            IoMode::Record { path } => (Some("record".to_string()), Some(path.clone())),
            IoMode::Replay { path } => (Some("replay".to_string()), Some(path.clone())),
        };
        FileConfig {
            run_id: Some(config.run_id.clone()),
            a: Ratio(config.market.a),
            beta: Ratio(config.market.beta),
            d: Ratio(config.market.d),
            cost1: config.market.c1,
            cost2: config.market.c2,
            init_price1: config.initial_prices.0,
            init_price2: config.initial_prices.1,
            rounds: config.max_rounds,
            planning: ScheduleSpec::from_schedule(&config.planning),
            conversation: ScheduleSpec::from_schedule(&config.conversation),
            persona: None,
            persona1: Some(config.personas.0),
            persona2: Some(config.personas.1),
            policy1: config.policies.0.clone(),
            policy2: config.policies.1.clone(),
            seed: config.seed,
            io_mode,
            cassette,
            checkpoint_at: config.checkpoint_at,
            llm: LlmFileSettings::from_settings(&config.llm),
            detectors: (config.detectors != DetectorOverrides::default())
                .then_some(config.detectors),
            memory: (config.memory != MemoryConfig::default()).then_some(config.memory),
        }
    }
}

/// Parse and validate a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let file: FileConfig = toml::from_str(&raw)
        .with_context(|| format!("parsing config {}", path.display()))?;
    let fallback = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("run")
        .to_string();
    file.into_run_config(&fallback)
}

/// Render a config back to TOML.
pub fn write_config(config: &RunConfig) -> Result<String> {
    toml::to_string_pretty(&FileConfig::from_run_config(config))
        .context("serializing config to TOML")
}
