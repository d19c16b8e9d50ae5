//! Agent policies: scripted oracles, a tabular Q-learning baseline, and
//! the LLM-backed agent.
//!
//! The scripted policies exist to verify the engine and detectors
//! deterministically without a live model; none of them is a claim about
//! behavior. Each policy instance is owned by one agent slot in one run
//! and is stepped sequentially by the engine.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{self, LlmAgentConfig, LlmError, LlmSession, Transcript};
use crate::market::{best_response, DerivedMarket, MarketError, ReferencePrices};
use crate::memory::{HistogramBin, RoundRecord, StrategyLog};

/// Everything an agent may see before deciding: pre-round state only.
/// Bins are present only during a reflection phase; the transcript is
/// present only when the round has a discussion phase.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub round: u32,
    pub own_cost: f64,
    pub window: &'a [RoundRecord],
    pub bins: Option<&'a [HistogramBin]>,
    pub current_strategy: Option<&'a str>,
    pub transcript: Option<&'a Transcript>,
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy failure: {0}")]
    Failure(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("llm policy requires an open session")]
    NoSession,
    #[error("observation window is empty")]
    EmptyWindow,
    #[error("policy state version {found} unsupported (expected {expected})")]
    StateVersion { found: u32, expected: u32 },
}

fn default_punish_length() -> u32 {
    20
}

/// Tabular Q-learning settings. The grid defaults to 15 evenly spaced
/// prices spanning [Bertrand - 0.5, cartel + 0.5]; the state is the
/// rival's previous price snapped to the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QLearningConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    pub learning_rate: f64,
    pub discount: f64,
    /// Exploration probability decays as exp(-rate * rounds_played).
    pub exploration_decay: f64,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        QLearningConfig {
            grid: None,
            learning_rate: 0.15,
            discount: 0.95,
            exploration_decay: 2e-5,
        }
    }
}

/// Declarative policy choice, expressible in run configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    #[serde(flatten)]
    pub kind: PolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl PolicySpec {
    pub fn constant(price: f64) -> Self {
        PolicySpec {
            kind: PolicyKind::Constant { price },
            seed: None,
        }
    }

    pub fn myopic() -> Self {
        PolicySpec {
            kind: PolicyKind::MyopicBestResponse,
            seed: None,
        }
    }

    pub fn grim_trigger(collusive_price: f64, punish_price: f64, tolerance: f64) -> Self {
        PolicySpec {
            kind: PolicyKind::GrimTrigger {
                collusive_price,
                punish_price,
                tolerance,
                punish_length: default_punish_length(),
            },
            seed: None,
        }
    }

    pub fn q_learning() -> Self {
        PolicySpec {
            kind: PolicyKind::QLearning {
                config: QLearningConfig::default(),
            },
            seed: None,
        }
    }

    pub fn llm() -> Self {
        PolicySpec {
            kind: PolicyKind::Llm,
            seed: None,
        }
    }

    pub fn is_llm(&self) -> bool {
        matches!(self.kind, PolicyKind::Llm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    Constant {
        price: f64,
    },
    MyopicBestResponse,
    GrimTrigger {
        collusive_price: f64,
        punish_price: f64,
        tolerance: f64,
        #[serde(default = "default_punish_length")]
        punish_length: u32,
    },
    QLearning {
        #[serde(default)]
        config: QLearningConfig,
    },
    Llm,
}

/// Version tag carried by serialized policy state.
pub const POLICY_STATE_VERSION: u32 = 1;

/// Serializable snapshot of a seeded generator's position. Stored
/// explicitly so the checkpoint format does not depend on the RNG
/// crate's own serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    seed: [u8; 32],
    stream: u64,
    word_pos: u64,
}

impl RngState {
    fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos() as u64,
        }
    }

    fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos as u128);
        rng
    }
}

/// Opaque, versioned snapshot of a policy's internal state for
/// checkpointing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum PolicyState {
    Stateless {
        version: u32,
    },
    GrimTrigger {
        version: u32,
        punish_remaining: u32,
    },
    QLearning {
        version: u32,
        q: Vec<Vec<f64>>,
        pending: Option<(usize, usize)>,
        rng: RngState,
    },
}

impl PolicyState {
    pub fn version(&self) -> u32 {
        match self {
            PolicyState::Stateless { version } => *version,
            PolicyState::GrimTrigger { version, .. } => *version,
            PolicyState::QLearning { version, .. } => *version,
        }
    }
}

/// A live policy instance, possibly holding mutable internal state.
pub enum Policy {
    Constant {
        price: f64,
    },
    Myopic {
        market: DerivedMarket,
        firm: usize,
    },
    GrimTrigger {
        collusive: f64,
        punish: f64,
        tolerance: f64,
        punish_length: u32,
        punish_remaining: u32,
    },
    QLearning(QLearningPolicy),
    Llm {
        cfg: LlmAgentConfig,
    },
    /// Test fixture: prices constant and parrots inbound messages,
    /// opening with a fixed line. Not expressible in configuration.
    Echo {
        price: f64,
        opener: String,
    },
}

impl Policy {
    /// Instantiate a policy for one agent slot. `llm_cfg` must be
    /// provided for [`PolicyKind::Llm`].
    pub fn from_spec(
        spec: &PolicySpec,
        firm: usize,
        market: &DerivedMarket,
        refs: &ReferencePrices,
        seed: u64,
        llm_cfg: Option<LlmAgentConfig>,
    ) -> Result<Policy, PolicyError> {
        match &spec.kind {
            PolicyKind::Constant { price } => Ok(Policy::Constant { price: *price }),
            PolicyKind::MyopicBestResponse => Ok(Policy::Myopic {
                market: *market,
                firm,
            }),
            PolicyKind::GrimTrigger {
                collusive_price,
                punish_price,
                tolerance,
                punish_length,
            } => {
                if punish_price > collusive_price {
                    return Err(PolicyError::Failure(
                        "grim trigger punish price must not exceed the collusive price"
                            .to_string(),
                    ));
                }
                if *tolerance <= 0.0 {
                    return Err(PolicyError::Failure(
                        "grim trigger tolerance must be positive".to_string(),
                    ));
                }
                Ok(Policy::GrimTrigger {
                    collusive: *collusive_price,
                    punish: *punish_price,
                    tolerance: *tolerance,
                    punish_length: *punish_length,
                    punish_remaining: 0,
                })
            }
            PolicyKind::QLearning { config } => Ok(Policy::QLearning(QLearningPolicy::new(
                config,
                firm,
                refs,
                spec.seed.unwrap_or(seed),
            )?)),
            PolicyKind::Llm => {
                let cfg = llm_cfg.ok_or(PolicyError::NoSession)?;
                Ok(Policy::Llm { cfg })
            }
        }
    }

    /// Decide this round's price from pre-round state only.
    pub fn decide_price(
        &mut self,
        obs: &Observation,
        session: Option<&mut LlmSession>,
    ) -> Result<f64, PolicyError> {
        match self {
            Policy::Constant { price } => Ok(*price),
            Policy::Echo { price, .. } => Ok(*price),
            Policy::Myopic { market, firm } => {
                let last = obs.window.last().ok_or(PolicyError::EmptyWindow)?;
                Ok(best_response(market, *firm, last.rival_price)?)
            }
            Policy::GrimTrigger {
                collusive,
                punish,
                tolerance,
                punish_length,
                punish_remaining,
            } => {
                if *punish_remaining > 0 {
                    *punish_remaining -= 1;
                    return Ok(*punish);
                }
                let defected = obs
                    .window
                    .iter()
                    .any(|r| r.rival_price < *collusive - *tolerance);
                if defected {
                    *punish_remaining = punish_length.saturating_sub(1);
                    Ok(*punish)
                } else {
                    Ok(*collusive)
                }
            }
            Policy::QLearning(q) => q.decide(obs),
            Policy::Llm { cfg } => {
                let session = session.ok_or(PolicyError::NoSession)?;
                Ok(llm::decide_price(cfg, obs, session)?)
            }
        }
    }

    /// One discussion turn; scripted policies stay mute.
    pub fn converse(
        &mut self,
        obs: &Observation,
        inbound: Option<&str>,
        session: Option<&mut LlmSession>,
    ) -> Result<Option<String>, PolicyError> {
        match self {
            Policy::Echo { opener, .. } => Ok(Some(
                inbound.map(str::to_string).unwrap_or_else(|| opener.clone()),
            )),
            Policy::Llm { cfg } => {
                let session = session.ok_or(PolicyError::NoSession)?;
                Ok(llm::converse(cfg, obs, session)?)
            }
            _ => Ok(None),
        }
    }

    /// Reflection phase: revise the strategy text, if this policy has
    /// one. Q-learning emits a diagnostic rendering of its greedy row.
    pub fn reflect(
        &mut self,
        obs: &Observation,
        log: &StrategyLog,
        session: Option<&mut LlmSession>,
    ) -> Result<Option<String>, PolicyError> {
        match self {
            Policy::QLearning(q) => Ok(Some(q.describe_greedy())),
            Policy::Llm { cfg } => {
                let session = session.ok_or(PolicyError::NoSession)?;
                let bins = obs.bins.unwrap_or(&[]);
                let text = llm::reflect(cfg, bins, log, session)?;
                if text.trim().is_empty() {
                    Ok(None)
                } else {
                    Ok(Some(text))
                }
            }
            _ => Ok(None),
        }
    }

    pub fn snapshot(&self) -> PolicyState {
        match self {
            Policy::GrimTrigger {
                punish_remaining, ..
            } => PolicyState::GrimTrigger {
                version: POLICY_STATE_VERSION,
                punish_remaining: *punish_remaining,
            },
            Policy::QLearning(q) => PolicyState::QLearning {
                version: POLICY_STATE_VERSION,
                q: q.q.clone(),
                pending: q.pending,
                rng: RngState::capture(&q.rng),
            },
            _ => PolicyState::Stateless {
                version: POLICY_STATE_VERSION,
            },
        }
    }

    pub fn restore(&mut self, state: PolicyState) -> Result<(), PolicyError> {
        if state.version() != POLICY_STATE_VERSION {
            return Err(PolicyError::StateVersion {
                found: state.version(),
                expected: POLICY_STATE_VERSION,
            });
        }
        match (self, state) {
            (
                Policy::GrimTrigger {
                    punish_remaining, ..
                },
                PolicyState::GrimTrigger {
                    punish_remaining: saved,
                    ..
                },
            ) => {
                *punish_remaining = saved;
                Ok(())
            }
            (Policy::QLearning(ql), PolicyState::QLearning { q, pending, rng, .. }) => {
                if q.len() != ql.grid.len() {
                    return Err(PolicyError::Failure(
                        "q-table shape does not match the configured grid".to_string(),
                    ));
                }
                ql.q = q;
                ql.pending = pending;
                ql.rng = rng.restore();
                Ok(())
            }
            (
                Policy::Constant { .. } | Policy::Myopic { .. } | Policy::Llm { .. },
                PolicyState::Stateless { .. },
            ) => Ok(()),
            _ => Err(PolicyError::Failure(
                "policy state kind does not match the configured policy".to_string(),
            )),
        }
    }
}

/// Epsilon-greedy tabular learner over a fixed price grid, with the
/// rival's previous grid price as the state.
pub struct QLearningPolicy {
    grid: Vec<f64>,
    learning_rate: f64,
    discount: f64,
    exploration_decay: f64,
    q: Vec<Vec<f64>>,
    pending: Option<(usize, usize)>,
    rng: ChaCha8Rng,
}

const DEFAULT_GRID_POINTS: usize = 15;
const DEFAULT_GRID_MARGIN: f64 = 0.5;

impl QLearningPolicy {
    pub fn new(
        config: &QLearningConfig,
        firm: usize,
        refs: &ReferencePrices,
        seed: u64,
    ) -> Result<Self, PolicyError> {
        let grid = match &config.grid {
            Some(grid) => grid.clone(),
            None => {
                let cartel = refs.cartel_for(firm).ok_or_else(|| {
                    PolicyError::Failure(
                        "q-learning default grid needs cartel reference prices; supply an \
                         explicit grid for homogeneous goods"
                            .to_string(),
                    )
                })?;
                let lo = refs.bertrand_for(firm) - DEFAULT_GRID_MARGIN;
                let hi = cartel + DEFAULT_GRID_MARGIN;
                (0..DEFAULT_GRID_POINTS)
                    .map(|i| lo + (hi - lo) * i as f64 / (DEFAULT_GRID_POINTS - 1) as f64)
                    .collect()
            }
        };
        if grid.len() < 2 || grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PolicyError::Failure(
                "q-learning grid must be strictly increasing with at least two points"
                    .to_string(),
            ));
        }
        if !(config.learning_rate > 0.0 && config.learning_rate <= 1.0) {
            return Err(PolicyError::Failure(
                "learning rate must lie in (0, 1]".to_string(),
            ));
        }
        if !(0.0..1.0).contains(&config.discount) {
            return Err(PolicyError::Failure(
                "discount must lie in [0, 1)".to_string(),
            ));
        }
        let states = grid.len();
        Ok(QLearningPolicy {
            q: vec![vec![0.0; states]; states],
            grid,
            learning_rate: config.learning_rate,
            discount: config.discount,
            exploration_decay: config.exploration_decay,
            pending: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    fn nearest(&self, price: f64) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, g) in self.grid.iter().enumerate() {
            let dist = (price - g).abs();
            if dist < best_dist {
                best = i;
                best_dist = dist;
            }
        }
        best
    }

    fn greedy(&self, state: usize) -> usize {
        let row = &self.q[state];
        let mut best = 0;
        for (i, v) in row.iter().enumerate() {
            if *v > row[best] {
                best = i;
            }
        }
        best
    }

    fn decide(&mut self, obs: &Observation) -> Result<f64, PolicyError> {
        let last = obs.window.last().ok_or(PolicyError::EmptyWindow)?;
        let state = self.nearest(last.rival_price);
        if let Some((s, a)) = self.pending {
            let best_next = self.q[state][self.greedy(state)];
            let target = last.profit + self.discount * best_next;
            self.q[s][a] += self.learning_rate * (target - self.q[s][a]);
        }
        let rounds_played = obs.round.saturating_sub(1) as f64;
        let epsilon = (-self.exploration_decay * rounds_played).exp();
        let action = if self.rng.gen::<f64>() < epsilon {
            self.rng.gen_range(0..self.grid.len())
        } else {
            self.greedy(state)
        };
        self.pending = Some((state, action));
        Ok(self.grid[action])
    }

    /// Human-readable greedy action per state, for strategy logging.
    fn describe_greedy(&self) -> String {
        (0..self.grid.len())
            .map(|s| {
                format!(
                    "rival near {:.2} -> price {:.2}",
                    self.grid[s],
                    self.grid[self.greedy(s)]
                )
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}
