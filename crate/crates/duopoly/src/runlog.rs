//! JSON Lines artifacts written during a run: one round line per firm,
//! plus transcript and strategy side files.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::llm::TranscriptMessage;

/// One firm-round of the round log. Rounds are contiguous from 1; each
/// executed round yields exactly one line per firm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLogLine {
    pub run_id: String,
    pub round: u32,
    pub firm: u8,
    pub price: f64,
    pub demand: f64,
    pub profit: f64,
    pub rival_price: f64,
    pub reflected: bool,
    pub conversed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy_digest: Option<String>,
}

/// One round's discussion, persisted only when messages were exchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptLogLine {
    pub round: u32,
    pub messages: Vec<TranscriptMessage>,
}

/// One adopted strategy, persisted when a reflection produced text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyLogLine {
    pub round: u32,
    pub firm: u8,
    pub digest: String,
    pub text: String,
}

/// Append-only JSON Lines writer, flushed per line so checkpoints and
/// logs never diverge by more than the round in flight.
pub struct JsonlWriter {
    out: BufWriter<File>,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        Ok(JsonlWriter {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn append(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(JsonlWriter {
            out: BufWriter::new(file),
        })
    }

    pub fn write<T: Serialize>(&mut self, value: &T) -> std::io::Result<()> {
        let line = serde_json::to_string(value)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        writeln!(self.out, "{line}")?;
        self.out.flush()
    }
}

/// Read a whole JSON Lines file into memory.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> std::io::Result<Vec<T>> {
    let file = File::open(path)?;
    let mut items = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("line {}: {e}", i + 1),
            )
        })?;
        items.push(item);
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rounds.jsonl");
        let line = RunLogLine {
            run_id: "test".to_string(),
            round: 1,
            firm: 1,
            price: 6.5,
            demand: 800.0,
            profit: 3200.0,
            rival_price: 6.0,
            reflected: false,
            conversed: true,
            strategy_digest: None,
        };
        let mut writer = JsonlWriter::create(&path).unwrap();
        writer.write(&line).unwrap();
        drop(writer);
        let mut writer = JsonlWriter::append(&path).unwrap();
        let second = RunLogLine {
            round: 2,
            strategy_digest: Some("abcd".to_string()),
            ..line.clone()
        };
        writer.write(&second).unwrap();
        drop(writer);
        let read: Vec<RunLogLine> = read_jsonl(&path).unwrap();
        assert_eq!(read, vec![line, second]);
    }

    #[test]
    fn absent_digest_is_omitted_from_the_line() {
        let line = RunLogLine {
            run_id: "test".to_string(),
            round: 1,
            firm: 1,
            price: 6.5,
            demand: 800.0,
            profit: 3200.0,
            rival_price: 6.0,
            reflected: false,
            conversed: false,
            strategy_digest: None,
        };
        let json = serde_json::to_string(&line).unwrap();
        assert!(!json.contains("strategy_digest"));
    }
}
