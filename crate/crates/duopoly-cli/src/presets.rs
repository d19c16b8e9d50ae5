//! Bundled experiment presets, one per row of the experiment-settings
//! table (nine groups; the basic group's two identical rows share one
//! preset). All presets default to two LLM agents; policies and io mode
//! are overridable from the command line for scripted runs.

use duopoly::engine::{PhaseSchedule, RunConfig};
use duopoly::llm::Persona;
use duopoly::market::MarketParams;
use duopoly::policy::PolicySpec;

const BETA: f64 = 1.0 / 150.0;
const D_HALF: f64 = 1.0 / 300.0;

struct Row {
    name: &'static str,
    planning: fn() -> PhaseSchedule,
    conversation: fn() -> PhaseSchedule,
    persona: Persona,
    costs: (f64, f64),
    initial_prices: (f64, f64),
    beta: f64,
    d: f64,
    rounds: u32,
}

fn on() -> PhaseSchedule {
    PhaseSchedule::always(true)
}

fn off() -> PhaseSchedule {
    PhaseSchedule::always(false)
}

fn conversation_first_400_of_600() -> PhaseSchedule {
    PhaseSchedule::switch_after(400, true)
}

fn planning_after_100_of_600() -> PhaseSchedule {
    PhaseSchedule::switch_after(100, false)
}

const ROWS: &[Row] = &[
    // Group 1: basic setting (with planning, without conversation).
    Row {
        name: "group1-basic",
        planning: on,
        conversation: off,
        persona: Persona::Active,
        costs: (2.0, 2.0),
        initial_prices: (2.0, 2.0),
        beta: BETA,
        d: D_HALF,
        rounds: 800,
    },
    Row {
        name: "group1-aggressive",
        planning: on,
        conversation: off,
        persona: Persona::Aggressive,
        costs: (2.0, 2.0),
        initial_prices: (2.0, 2.0),
        beta: BETA,
        d: D_HALF,
        rounds: 2000,
    },
    Row {
        name: "group1-no-persona",
        planning: on,
        conversation: off,
        persona: Persona::None,
        costs: (2.0, 2.0),
        initial_prices: (2.0, 2.0),
        beta: BETA,
        d: D_HALF,
        rounds: 400,
    },
    // Group 2: unequal costs.
    Row {
        name: "group2-asymmetric",
        planning: on,
        conversation: off,
        persona: Persona::Active,
        costs: (2.0, 5.0),
        initial_prices: (2.0, 5.0),
        beta: BETA,
        d: D_HALF,
        rounds: 1000,
    },
    Row {
        name: "group2-aggressive-high-start",
        planning: on,
        conversation: off,
        persona: Persona::Aggressive,
        costs: (2.0, 5.0),
        initial_prices: (10.0, 10.0),
        beta: BETA,
        d: D_HALF,
        rounds: 600,
    },
    Row {
        name: "group2-aggressive",
        planning: on,
        conversation: off,
        persona: Persona::Aggressive,
        costs: (2.0, 5.0),
        initial_prices: (2.0, 5.0),
        beta: BETA,
        d: D_HALF,
        rounds: 1200,
    },
    // Group 3: d = 0 (independent products).
    Row {
        name: "group3-independent",
        planning: on,
        conversation: off,
        persona: Persona::Active,
        costs: (2.0, 2.0),
        initial_prices: (2.0, 2.0),
        beta: BETA,
        d: 0.0,
        rounds: 700,
    },
    Row {
        name: "group3-independent-aggressive",
        planning: on,
        conversation: off,
        persona: Persona::Aggressive,
        costs: (2.0, 2.0),
        initial_prices: (2.0, 2.0),
        beta: BETA,
        d: 0.0,
        rounds: 800,
    },
    // Group 4: d = beta = 1/300 (perfect substitutes).
    Row {
        name: "group4-homogeneous",
        planning: on,
        conversation: off,
        persona: Persona::Active,
        costs: (2.0, 2.0),
        initial_prices: (2.0, 2.0),
        beta: D_HALF,
        d: D_HALF,
        rounds: 1800,
    },
    // Group 5: varying initial prices.
    Row {
        name: "group5-split-start",
        planning: on,
        conversation: off,
        persona: Persona::Active,
        costs: (2.0, 2.0),
        initial_prices: (2.0, 10.0),
        beta: BETA,
        d: D_HALF,
        rounds: 500,
    },
    Row {
        name: "group5-mid-start",
        planning: on,
        conversation: off,
        persona: Persona::Active,
        costs: (2.0, 2.0),
        initial_prices: (7.0, 7.0),
        beta: BETA,
        d: D_HALF,
        rounds: 1000,
    },
    // Group 6: conversation enabled throughout.
    Row {
        name: "group6-conversation",
        planning: on,
        conversation: on,
        persona: Persona::Active,
        costs: (2.0, 2.0),
        initial_prices: (2.0, 2.0),
        beta: BETA,
        d: D_HALF,
        rounds: 1200,
    },
    // Group 7: conversation for 400 rounds, then banned for 200.
    Row {
        name: "group7-comm-ablation",
        planning: on,
        conversation: conversation_first_400_of_600,
        persona: Persona::Active,
        costs: (2.0, 2.0),
        initial_prices: (2.0, 2.0),
        beta: BETA,
        d: D_HALF,
        rounds: 600,
    },
    // Group 8: planning disabled.
    Row {
        name: "group8-no-planning",
        planning: off,
        conversation: off,
        persona: Persona::Active,
        costs: (2.0, 2.0),
        initial_prices: (2.0, 2.0),
        beta: BETA,
        d: D_HALF,
        rounds: 550,
    },
    Row {
        name: "group8-no-planning-aggressive",
        planning: off,
        conversation: off,
        persona: Persona::Aggressive,
        costs: (2.0, 2.0),
        initial_prices: (2.0, 2.0),
        beta: BETA,
        d: D_HALF,
        rounds: 1800,
    },
    // Group 9: planning off for 100 rounds, then on for 500.
    Row {
        name: "group9-planning-ablation",
        planning: planning_after_100_of_600,
        conversation: off,
        persona: Persona::Aggressive,
        costs: (2.0, 2.0),
        initial_prices: (2.0, 2.0),
        beta: BETA,
        d: D_HALF,
        rounds: 600,
    },
];

pub fn preset_names() -> Vec<&'static str> {
    ROWS.iter().map(|row| row.name).collect()
}

pub fn preset(name: &str) -> Option<RunConfig> {
    let row = ROWS.iter().find(|row| row.name == name)?;
    let mut config = RunConfig::new(row.name, (PolicySpec::llm(), PolicySpec::llm()));
    config.market = MarketParams {
        a: 14.0,
        beta: row.beta,
        d: row.d,
        c1: row.costs.0,
        c2: row.costs.1,
    };
    config.initial_prices = row.initial_prices;
    config.planning = (row.planning)();
    config.conversation = (row.conversation)();
    config.personas = (row.persona, row.persona);
    config.max_rounds = row.rounds;
    Some(config)
}
