//! Deterministic simulator for repeated Bertrand-duopoly pricing games.
//!
//! Two firms set prices simultaneously each round in a differentiated-
//! goods market. Agent slots take pluggable policies: scripted oracles
//! for deterministic testing, a tabular Q-learning baseline, or an
//! LLM-backed agent with bounded memory, periodic strategy reflection,
//! and an optional per-round discussion phase. Runs stop when both
//! firms' prices converge or oscillate within bounds, log every round as
//! JSON Lines, and checkpoint for exact resumption (including mid-run
//! schedule ablations).

pub mod detect;
pub mod engine;
pub mod llm;
pub mod market;
pub mod memory;
pub mod policy;
pub mod runlog;
#[doc(hidden)]
pub mod testing;
