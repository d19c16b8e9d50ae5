//! Extraction of a price from free-form model output.

use std::sync::OnceLock;

use regex::Regex;

use super::LlmError;
use crate::market::round_to_cents;

fn number_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\$?\s*([0-9]+(?:\.[0-9]+)?)").expect("valid regex"))
}

/// Take the final decimal number in `text` that falls within
/// `[0, price_cap]`, tolerating a leading currency sign, and round it to
/// two decimals. Models often restate history before answering, so the
/// last in-range number wins.
pub fn parse_price(text: &str, price_cap: f64) -> Result<f64, LlmError> {
    let mut found = None;
    for capture in number_pattern().captures_iter(text) {
        if let Ok(value) = capture[1].parse::<f64>() {
            if (0.0..=price_cap).contains(&value) {
                found = Some(value);
            }
        }
    }
    found.map(round_to_cents).ok_or(LlmError::NoPriceFound)
}
