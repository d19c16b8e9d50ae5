//! Golden-file tests freezing every prompt rendering. Regenerate with
//! `UPDATE_GOLDEN=1 cargo test -p duopoly --test prompts` and review the
//! diff before committing.

use std::path::PathBuf;

use duopoly::llm::prompt::{
    build_conversation_prompt, build_reflection_prompt, build_round_prompt, build_system_prompt,
};
use duopoly::llm::{LlmAgentConfig, Persona, Transcript};
use duopoly::memory::{HistogramBin, RoundRecord, StrategyLog};
use duopoly::policy::Observation;

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn check_golden(name: &str, actual: &str) {
    let path = golden_path(name);
    if std::env::var("UPDATE_GOLDEN").is_ok() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("missing golden file {name}; run with UPDATE_GOLDEN=1"));
    assert_eq!(
        actual, expected,
        "{name} drifted from its golden file; regenerate with UPDATE_GOLDEN=1 and review"
    );
}

fn config(persona: Persona) -> LlmAgentConfig {
    LlmAgentConfig {
        model_id: "gpt-4-0314".to_string(),
        temperature: 0.7,
        max_tokens: 128,
        firm_name: "Ed".to_string(),
        rival_firm_name: "Gill".to_string(),
        firm_cost: 2.0,
        persona,
        parse_retries: 3,
        endpoint: String::new(),
        api_key_env: "OPENAI_API_KEY".to_string(),
        price_cap: 14.0,
        word_budget: 6000,
    }
}

#[test]
fn golden_system_prompt_active() {
    let text = build_system_prompt(&config(Persona::Active), false).unwrap();
    check_golden("system_prompt_active.txt", &text);
}

#[test]
fn golden_system_prompt_communication() {
    let text = build_system_prompt(&config(Persona::Active), true).unwrap();
    check_golden("system_prompt_communication.txt", &text);
}

#[test]
fn golden_system_prompt_aggressive() {
    let text = build_system_prompt(&config(Persona::Aggressive), false).unwrap();
    check_golden("system_prompt_aggressive.txt", &text);
}

#[test]
fn golden_system_prompt_no_persona() {
    let text = build_system_prompt(&config(Persona::None), false).unwrap();
    check_golden("system_prompt_no_persona.txt", &text);
}

fn window() -> Vec<RoundRecord> {
    (15..=24)
        .map(|round| RoundRecord {
            round,
            price: 6.0 + (round % 3) as f64 * 0.25,
            demand: 800.0 - (round % 3) as f64 * 10.0,
            profit: 3200.0 - (round % 3) as f64 * 40.0,
            rival_price: 6.5,
        })
        .collect()
}

#[test]
fn golden_round_prompt() {
    let window = window();
    let obs = Observation {
        round: 25,
        own_cost: 2.0,
        window: &window,
        bins: None,
        current_strategy: Some("hold near 6.5 and probe upward every few rounds"),
        transcript: None,
    };
    check_golden("round_prompt.txt", &build_round_prompt(&obs, 6000));
}

#[test]
fn golden_round_prompt_first_round() {
    let window = vec![RoundRecord {
        round: 0,
        price: 2.0,
        demand: 1200.0,
        profit: 0.0,
        rival_price: 2.0,
    }];
    let obs = Observation {
        round: 1,
        own_cost: 2.0,
        window: &window,
        bins: None,
        current_strategy: None,
        transcript: None,
    };
    check_golden(
        "round_prompt_first_round.txt",
        &build_round_prompt(&obs, 6000),
    );
}

#[test]
fn golden_round_prompt_with_discussion() {
    let window = window();
    let mut transcript = Transcript::new(25);
    transcript.push("Ed", 0, "Shall we keep prices steady this round?".to_string());
    transcript.push("Gill", 0, "Steady works for me.".to_string());
    let obs = Observation {
        round: 25,
        own_cost: 2.0,
        window: &window,
        bins: None,
        current_strategy: None,
        transcript: Some(&transcript),
    };
    check_golden(
        "round_prompt_with_discussion.txt",
        &build_round_prompt(&obs, 6000),
    );
}

#[test]
fn golden_conversation_prompt_opening() {
    let window = window();
    let transcript = Transcript::new(25);
    let obs = Observation {
        round: 25,
        own_cost: 2.0,
        window: &window,
        bins: None,
        current_strategy: None,
        transcript: Some(&transcript),
    };
    check_golden(
        "conversation_prompt_opening.txt",
        &build_conversation_prompt(&obs, 6000),
    );
}

#[test]
fn golden_conversation_prompt_reply() {
    let window = window();
    let mut transcript = Transcript::new(25);
    transcript.push("Gill", 0, "Thinking of trying 7 this round.".to_string());
    let obs = Observation {
        round: 25,
        own_cost: 2.0,
        window: &window,
        bins: None,
        current_strategy: None,
        transcript: Some(&transcript),
    };
    check_golden(
        "conversation_prompt_reply.txt",
        &build_conversation_prompt(&obs, 6000),
    );
}

#[test]
fn golden_reflection_prompt() {
    let bins: Vec<HistogramBin> = (0..3)
        .map(|i| HistogramBin {
            bin_index: i,
            avg_price: 6.0 + i as f64 * 0.5,
            avg_demand: 800.0 - i as f64 * 25.0,
            avg_profit: 3200.0 + i as f64 * 100.0,
            avg_rival_price: 6.1 + i as f64 * 0.45,
            rounds_covered: 20,
            partial: false,
        })
        .collect();
    let mut log = StrategyLog::new();
    log.record(20, "match the rival's last price".to_string())
        .unwrap();
    log.record(40, "test a small increase to 6.75".to_string())
        .unwrap();
    check_golden(
        "reflection_prompt.txt",
        &build_reflection_prompt(&bins, &log),
    );
}
