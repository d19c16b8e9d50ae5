//! Bounded history windows, histogram summaries, and the strategy log.
//!
//! Agents observe only the most recent `window` rounds directly. For the
//! periodic planning phase, older history is compressed into fixed-size
//! bins of per-round averages, and previously adopted strategies are kept
//! in a capped log.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum number of retained strategy entries.
pub const STRATEGY_LOG_CAPACITY: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum MemoryError {
    #[error("strategy text must be nonempty")]
    EmptyStrategy,
}

/// One round from a single firm's perspective. Round 0 holds the
/// configured initial prices evaluated through the market, so every
/// agent has a rival price to react to from round 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub price: f64,
    pub demand: f64,
    pub profit: f64,
    pub rival_price: f64,
}

/// Sizing of the memory machinery. All counts are strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryConfig {
    pub window: usize,
    pub bin_size: usize,
    pub max_bins: usize,
    pub reflection_period: u32,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            window: 20,
            bin_size: 20,
            max_bins: 20,
            reflection_period: 20,
        }
    }
}

/// Per-round averages over one bin of consecutive rounds. Only the
/// newest bin may be partial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_index: usize,
    pub avg_price: f64,
    pub avg_demand: f64,
    pub avg_profit: f64,
    pub avg_rival_price: f64,
    pub rounds_covered: usize,
    pub partial: bool,
}

/// The last `min(window, len)` records in chronological order.
pub fn window_view<'a>(history: &'a [RoundRecord], cfg: &MemoryConfig) -> &'a [RoundRecord] {
    let start = history.len().saturating_sub(cfg.window);
    &history[start..]
}

/// Partition history into consecutive `bin_size`-round bins from the
/// start and return the most recent `max_bins` of them. The final bin is
/// flagged partial when it covers fewer than `bin_size` rounds.
pub fn summarize_history(history: &[RoundRecord], cfg: &MemoryConfig) -> Vec<HistogramBin> {
    let mut bins: Vec<HistogramBin> = history
        .chunks(cfg.bin_size)
        .enumerate()
        .map(|(bin_index, chunk)| {
            let n = chunk.len() as f64;
            HistogramBin {
                bin_index,
                avg_price: chunk.iter().map(|r| r.price).sum::<f64>() / n,
                avg_demand: chunk.iter().map(|r| r.demand).sum::<f64>() / n,
                avg_profit: chunk.iter().map(|r| r.profit).sum::<f64>() / n,
                avg_rival_price: chunk.iter().map(|r| r.rival_price).sum::<f64>() / n,
                rounds_covered: chunk.len(),
                partial: chunk.len() < cfg.bin_size,
            }
        })
        .collect();
    if bins.len() > cfg.max_bins {
        bins.drain(..bins.len() - cfg.max_bins);
    }
    bins
}

/// True on the rounds where the planning phase runs.
pub fn reflection_due(round: u32, cfg: &MemoryConfig) -> bool {
    debug_assert!(round >= 1);
    round % cfg.reflection_period == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyEntry {
    pub round: u32,
    pub text: String,
}

/// Ordered log of adopted strategies; the oldest entry is evicted once
/// the capacity of 20 is exceeded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StrategyLog {
    entries: Vec<StrategyEntry>,
}

impl StrategyLog {
    pub fn new() -> Self {
        StrategyLog::default()
    }

    pub fn record(&mut self, round: u32, text: String) -> Result<(), MemoryError> {
        if text.is_empty() {
            return Err(MemoryError::EmptyStrategy);
        }
        self.entries.push(StrategyEntry { round, text });
        if self.entries.len() > STRATEGY_LOG_CAPACITY {
            self.entries.remove(0);
        }
        Ok(())
    }

    pub fn entries(&self) -> &[StrategyEntry] {
        &self.entries
    }

    pub fn current(&self) -> Option<&str> {
        self.entries.last().map(|e| e.text.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
