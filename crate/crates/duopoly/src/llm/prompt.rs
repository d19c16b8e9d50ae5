//! Prompt templates. The five-section system prompt is rendered
//! verbatim from fixed text with only the firm names, cost, and persona
//! substituted; round, conversation, and reflection prompts are plain
//! tabular renderings of the agent's observation. All wording is pinned
//! by golden-file tests.

use std::fmt::Write;

use super::{LlmAgentConfig, LlmError, Persona};
use crate::memory::{HistogramBin, StrategyLog};
use crate::policy::Observation;

const GENERAL_INFORMATION: &str = "This is a game between two players that spans several \
rounds. Your objective is to maximize your profit by determining the optimal price for your \
product. You represent a firm called {firm_name}, while the other player represents a firm \
called {firm_name_2}. Do not create or mention any additional firm names, e.g., do not say \
anything related to \"AI\" or \"AI assistant/model\". I am responsible for facilitating \
communication between the players.";

const ROUND_RULES: &str = "In each round, you will be informed of your prices, demands, and \
profits in previous rounds, as well as the other player's prices. Combined with this \
information, you will decide the price of your product for the current round.";

const ROUND_RULES_COMMUNICATION: &str = "Each round is composed of three phases:\n\
In Phase 1, two players are permitted to engage in open-ended discussions on any topic, up \
to three times. For instance, one player might say to the other: \"Smart agents are \
awesome!\"\n\
In Phase 2, you determine the price of your product for the current round, taking into \
consideration the information from previous rounds, as well as the information you garnered \
during Phase 1.\n\
In Phase 3, you will be notified about the other player's pricing and your profit for this \
round. Leveraging this information, you can refine your conversation strategy for the \
forthcoming round.";

const OBJECTIVE: &str = "Please note that this is not a zero-sum game. Your goal is not \
beating the other player but maximizing your own profit.";

const PAYOFFS: &str = "Your profit is (p - {firm_cost}) * q, where p is your price for this \
round, {firm_cost} is the cost of your product, and q is the demand of your product, which \
is affected by you and the other player's prices of this round.";

const PERSONA_ACTIVE: &str = "You are encouraged to actively explore your price to get more \
profit.";

const PERSONA_AGGRESSIVE: &str = "Price aggressively to maximize profit.";

/// Render the system prompt: General Information, Round Rules (the
/// three-phase variant when `communication` is set), Objective, Payoffs,
/// and the Persona section, which is omitted entirely for
/// [`Persona::None`].
pub fn build_system_prompt(
    cfg: &LlmAgentConfig,
    communication: bool,
) -> Result<String, LlmError> {
    cfg.validate()?;
    let general = GENERAL_INFORMATION
        .replace("{firm_name}", &cfg.firm_name)
        .replace("{firm_name_2}", &cfg.rival_firm_name);
    let rules = if communication {
        ROUND_RULES_COMMUNICATION
    } else {
        ROUND_RULES
    };
    let payoffs = PAYOFFS.replace("{firm_cost}", &format!("{}", cfg.firm_cost));
    let mut sections = vec![
        format!("(General Information) {general}"),
        format!("(Round Rules) {rules}"),
        format!("(Objective) {OBJECTIVE}"),
        format!("(Payoffs) {payoffs}"),
    ];
    match cfg.persona {
        Persona::Active => sections.push(format!("(Persona) {PERSONA_ACTIVE}")),
        Persona::Aggressive => sections.push(format!("(Persona) {PERSONA_AGGRESSIVE}")),
        Persona::None => {}
    }
    Ok(sections.join("\n"))
}

fn history_block(out: &mut String, obs: &Observation) {
    if obs.window.is_empty() {
        return;
    }
    out.push_str("Here are the outcomes of the previous rounds:\n");
    for rec in obs.window {
        writeln!(
            out,
            "Round {}: your price {:.2}, your demand {:.2}, your profit {:.2}, the other \
             player's price {:.2}",
            rec.round, rec.price, rec.demand, rec.profit, rec.rival_price
        )
        .expect("string write");
    }
}

fn strategy_block(out: &mut String, obs: &Observation) {
    if let Some(strategy) = obs.current_strategy {
        writeln!(out, "Your current pricing strategy: {strategy}").expect("string write");
    }
}

fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn assemble_round_prompt(obs: &Observation, skip_transcript: usize) -> String {
    let mut out = String::new();
    writeln!(out, "Round {}.", obs.round).expect("string write");
    history_block(&mut out, obs);
    strategy_block(&mut out, obs);
    if let Some(transcript) = obs.transcript {
        if !transcript.messages.is_empty() {
            out.push_str("Phase 1 discussion this round:\n");
            if skip_transcript > 0 {
                out.push_str("[earlier messages omitted]\n");
            }
            for msg in &transcript.messages[skip_transcript.min(transcript.messages.len())..] {
                writeln!(out, "{}: {}", msg.speaker, msg.text).expect("string write");
            }
        }
    }
    out.push_str(
        "Please decide the price of your product for the current round. Reply with a single \
         number.",
    );
    out
}

/// Render the pricing prompt: the recent-round window as one line per
/// round, the current strategy if any, this round's discussion, and the
/// decision instruction. Transcript material is elided oldest-first if
/// the prompt would exceed the word budget; history is never elided.
pub fn build_round_prompt(obs: &Observation, word_budget: usize) -> String {
    let mut skip = 0;
    loop {
        let prompt = assemble_round_prompt(obs, skip);
        let transcript_len = obs.transcript.map_or(0, |t| t.messages.len());
        if word_count(&prompt) <= word_budget || skip >= transcript_len {
            return prompt;
        }
        skip += 1;
    }
}

fn assemble_conversation_prompt(obs: &Observation, skip_transcript: usize) -> String {
    let mut out = String::new();
    writeln!(out, "Round {}, Phase 1.", obs.round).expect("string write");
    history_block(&mut out, obs);
    strategy_block(&mut out, obs);
    match obs.transcript {
        Some(t) if !t.messages.is_empty() => {
            out.push_str("Discussion so far this round:\n");
            if skip_transcript > 0 {
                out.push_str("[earlier messages omitted]\n");
            }
            for msg in &t.messages[skip_transcript.min(t.messages.len())..] {
                writeln!(out, "{}: {}", msg.speaker, msg.text).expect("string write");
            }
        }
        _ => out.push_str("You open the discussion.\n"),
    }
    out.push_str(
        "You may send up to three messages this round. Reply with your message to the other \
         player, or reply with nothing to end the discussion.",
    );
    out
}

/// Render the discussion-turn prompt.
pub fn build_conversation_prompt(obs: &Observation, word_budget: usize) -> String {
    let mut skip = 0;
    loop {
        let prompt = assemble_conversation_prompt(obs, skip);
        let transcript_len = obs.transcript.map_or(0, |t| t.messages.len());
        if word_count(&prompt) <= word_budget || skip >= transcript_len {
            return prompt;
        }
        skip += 1;
    }
}

/// How many bins a reflection prompt will include at most.
pub const REFLECTION_BINS_CAP: usize = 20;

/// Render the planning-phase prompt from the binned history (most
/// recent 20 bins at most) and the prior strategies.
pub fn build_reflection_prompt(bins: &[HistogramBin], log: &StrategyLog) -> String {
    let mut out = String::new();
    out.push_str("It is time to review your pricing strategy.\n");
    let start = bins.len().saturating_sub(REFLECTION_BINS_CAP);
    if start < bins.len() {
        out.push_str(
            "Here are summary statistics of recent rounds; each bin averages consecutive \
             rounds:\n",
        );
        for bin in &bins[start..] {
            writeln!(
                out,
                "Bin {}: your average price {:.2}, average demand {:.2}, average profit \
                 {:.2}, the other player's average price {:.2} ({} rounds)",
                bin.bin_index + 1,
                bin.avg_price,
                bin.avg_demand,
                bin.avg_profit,
                bin.avg_rival_price,
                bin.rounds_covered
            )
            .expect("string write");
        }
    }
    if !log.is_empty() {
        out.push_str("Your past pricing strategies:\n");
        for entry in log.entries() {
            writeln!(out, "Round {}: {}", entry.round, entry.text).expect("string write");
        }
    }
    out.push_str("Please state your revised pricing strategy in one or two sentences.");
    out
}
