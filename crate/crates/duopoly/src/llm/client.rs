//! Chat-completion wire client with record/replay cassettes.
//!
//! `Live` posts each request and returns the first choice's text.
//! `Record` does the same while appending one cassette entry per call.
//! `Replay` answers from the cassette without any network access,
//! verifying that each request's digest matches what was recorded; the
//! digest covers the model id, sampling parameters, and every message.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: String) -> Self {
        debug_assert!(!content.is_empty());
        ChatMessage {
            role: Role::System,
            content,
        }
    }

    pub fn user(content: String) -> Self {
        debug_assert!(!content.is_empty());
        ChatMessage {
            role: Role::User,
            content,
        }
    }

    pub fn assistant(content: String) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content,
        }
    }
}

/// How completions are obtained: live network, live plus recording, or
/// cassette playback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum IoMode {
    Live,
    Record { path: PathBuf },
    Replay { path: PathBuf },
}

/// One recorded request/response pair. Replay consumes entries strictly
/// in `seq` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub seq: u64,
    pub digest: String,
    pub response: String,
}

#[derive(Serialize)]
struct DigestPayload<'a> {
    model: &'a str,
    temperature: f64,
    max_tokens: u32,
    messages: &'a [ChatMessage],
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of everything that determines a completion request.
pub fn request_digest(
    model: &str,
    temperature: f64,
    max_tokens: u32,
    messages: &[ChatMessage],
) -> String {
    let payload = DigestPayload {
        model,
        temperature,
        max_tokens,
        messages,
    };
    let json = serde_json::to_string(&payload).expect("digest payload serializes");
    hex(&Sha256::digest(json.as_bytes()))
}

enum Transport {
    Live,
    Record { file: File },
    Replay { entries: Vec<CassetteEntry> },
}

/// One run's completion channel. Calls are strictly sequential within a
/// run; `calls_made` is part of the checkpoint so a resumed replay picks
/// up at the right cassette position.
pub struct LlmSession {
    endpoint: String,
    api_key: Option<String>,
    http: Option<reqwest::blocking::Client>,
    transport: Transport,
    calls: u64,
}

const RETRY_ATTEMPTS: u32 = 3;

impl LlmSession {
    /// Open a session. `Live` and `Record` require the API key to be
    /// present in the named environment variable.
    pub fn open(mode: &IoMode, endpoint: &str, api_key_env: &str) -> Result<Self, LlmError> {
        let needs_network = !matches!(mode, IoMode::Replay { .. });
        let api_key = if needs_network {
            Some(
                std::env::var(api_key_env)
                    .map_err(|_| LlmError::AuthMissing(api_key_env.to_string()))?,
            )
        } else {
            None
        };
        let http = if needs_network {
            Some(
                reqwest::blocking::Client::builder()
                    .timeout(Duration::from_secs(60))
                    .build()
                    .map_err(|e| LlmError::Transport(e.to_string()))?,
            )
        } else {
            None
        };
        let transport = match mode {
            IoMode::Live => Transport::Live,
            IoMode::Record { path } => {
                if let Some(parent) = path.parent() {
                    std::fs::create_dir_all(parent)?;
                }
                let file = OpenOptions::new().create(true).append(true).open(path)?;
                Transport::Record { file }
            }
            IoMode::Replay { path } => {
                // A missing cassette behaves as an empty one: the first
                // call reports exhaustion rather than a file error.
                let entries = if path.exists() {
                    read_cassette(path)?
                } else {
                    Vec::new()
                };
                Transport::Replay { entries }
            }
        };
        Ok(LlmSession {
            endpoint: endpoint.to_string(),
            api_key,
            http,
            transport,
            calls: 0,
        })
    }

    pub fn calls_made(&self) -> u64 {
        self.calls
    }

    /// Position the session as if `calls` completions had already been
    /// made; used when resuming a checkpointed run.
    pub fn skip_to(&mut self, calls: u64) -> Result<(), LlmError> {
        if let Transport::Replay { entries } = &self.transport {
            if calls > entries.len() as u64 {
                return Err(LlmError::CassetteExhausted(entries.len() as u64));
            }
        }
        self.calls = calls;
        Ok(())
    }

    /// Obtain one completion for the given request.
    pub fn complete(
        &mut self,
        model: &str,
        temperature: f64,
        max_tokens: u32,
        messages: &[ChatMessage],
    ) -> Result<String, LlmError> {
        let digest = request_digest(model, temperature, max_tokens, messages);
        let response = match &mut self.transport {
            Transport::Replay { entries } => {
                let entry = entries
                    .get(self.calls as usize)
                    .ok_or(LlmError::CassetteExhausted(entries.len() as u64))?;
                if entry.digest != digest {
                    return Err(LlmError::CassetteMismatch { seq: entry.seq });
                }
                entry.response.clone()
            }
            Transport::Live => post_completion(
                self.http.as_ref().expect("live session has client"),
                &self.endpoint,
                self.api_key.as_deref().expect("live session has key"),
                model,
                temperature,
                max_tokens,
                messages,
            )?,
            Transport::Record { file } => {
                let text = post_completion(
                    self.http.as_ref().expect("record session has client"),
                    &self.endpoint,
                    self.api_key.as_deref().expect("record session has key"),
                    model,
                    temperature,
                    max_tokens,
                    messages,
                )?;
                let entry = CassetteEntry {
                    seq: self.calls,
                    digest,
                    response: text.clone(),
                };
                let line = serde_json::to_string(&entry)
                    .map_err(|e| LlmError::Io(e.to_string()))?;
                writeln!(file, "{line}")?;
                file.flush()?;
                text
            }
        };
        self.calls += 1;
        Ok(response)
    }
}

/// Parse a JSON Lines cassette, checking that sequence numbers run
/// 0, 1, 2, ...
pub fn read_cassette(path: &PathBuf) -> Result<Vec<CassetteEntry>, LlmError> {
    let file = File::open(path)?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: CassetteEntry = serde_json::from_str(&line)
            .map_err(|e| LlmError::CassetteCorrupt(format!("line {}: {e}", i + 1)))?;
        if entry.seq != entries.len() as u64 {
            return Err(LlmError::CassetteCorrupt(format!(
                "line {}: expected seq {}, found {}",
                i + 1,
                entries.len(),
                entry.seq
            )));
        }
        entries.push(entry);
    }
    Ok(entries)
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: String,
}

fn retryable_status(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

fn post_completion(
    client: &reqwest::blocking::Client,
    endpoint: &str,
    api_key: &str,
    model: &str,
    temperature: f64,
    max_tokens: u32,
    messages: &[ChatMessage],
) -> Result<String, LlmError> {
    let body = WireRequest {
        model,
        messages,
        temperature,
        max_tokens,
    };
    let mut last_error = None;
    for attempt in 0..RETRY_ATTEMPTS {
        if attempt > 0 {
            thread::sleep(Duration::from_millis(250 * (1 << attempt)));
        }
        let sent = client
            .post(endpoint)
            .bearer_auth(api_key)
            .json(&body)
            .send();
        match sent {
            Err(e) => {
                last_error = Some(LlmError::Transport(e.to_string()));
            }
            Ok(resp) => {
                let status = resp.status().as_u16();
                if status == 200 {
                    let parsed: WireResponse = resp
                        .json()
                        .map_err(|e| LlmError::BadResponse(e.to_string()))?;
                    return parsed
                        .choices
                        .into_iter()
                        .next()
                        .map(|c| c.message.content)
                        .ok_or_else(|| LlmError::BadResponse("no choices".to_string()));
                }
                let message = resp.text().unwrap_or_default();
                let err = LlmError::Provider { status, message };
                if retryable_status(status) {
                    last_error = Some(err);
                } else {
                    return Err(err);
                }
            }
        }
    }
    Err(last_error.unwrap_or_else(|| LlmError::Transport("no attempts made".to_string())))
}
