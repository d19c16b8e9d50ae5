//! Resumable engine state, written atomically with a content checksum.
//!
//! The file has two lines: a header `{"version": ..., "checksum": ...}`
//! and the body JSON. The checksum is a SHA-256 over the body line's
//! exact bytes, so any tampering (or truncation) is detected before the
//! body is parsed.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EngineError, RunConfig};
use crate::memory::{RoundRecord, StrategyLog};
use crate::policy::PolicyState;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointBody {
    pub version: u32,
    pub run_id: String,
    /// Last completed round.
    pub round: u32,
    pub config: RunConfig,
    /// Digest of the non-overridable parts of the config; an unchanged
    /// digest guarantees the continuation replays the original run.
    pub config_digest: String,
    pub histories: [Vec<RoundRecord>; 2],
    pub strategy_logs: [StrategyLog; 2],
    pub policy_states: [PolicyState; 2],
    pub llm_calls: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    checksum: String,
}

fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn write_checkpoint(path: &Path, body: &CheckpointBody) -> Result<(), EngineError> {
    let body_line = serde_json::to_string(body)
        .map_err(|e| EngineError::Config(format!("checkpoint serialization: {e}")))?;
    let header = Header {
        version: body.version,
        checksum: sha256_hex(body_line.as_bytes()),
    };
    let header_line = serde_json::to_string(&header).expect("header serializes");
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, format!("{header_line}\n{body_line}\n"))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<CheckpointBody, EngineError> {
    let raw = std::fs::read_to_string(path)?;
    let (header_line, rest) = raw
        .split_once('\n')
        .ok_or_else(|| EngineError::CheckpointCorrupt("missing body line".to_string()))?;
    let header: Header = serde_json::from_str(header_line)
        .map_err(|e| EngineError::CheckpointCorrupt(format!("header: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(EngineError::VersionMismatch {
            found: header.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let body_line = rest.strip_suffix('\n').unwrap_or(rest);
    if sha256_hex(body_line.as_bytes()) != header.checksum {
        return Err(EngineError::ChecksumMismatch);
    }
    let body: CheckpointBody = serde_json::from_str(body_line)
        .map_err(|e| EngineError::CheckpointCorrupt(e.to_string()))?;
    if body.version != CHECKPOINT_VERSION {
        return Err(EngineError::VersionMismatch {
            found: body.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    Ok(body)
}
