//! Minimal chat-completion HTTP stub for exercising the live/record
//! paths in tests and for generating cassette fixtures. Not part of the
//! public API surface.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

/// Chooses the stub's reply from the request body and the call index.
pub type ResponseFn = dyn Fn(&serde_json::Value, usize) -> String + Send + Sync + 'static;

pub struct StubServer {
    addr: std::net::SocketAddr,
    stop: Arc<AtomicBool>,
    hits: Arc<AtomicUsize>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Serve canned responses in order; panics the serving thread if the
    /// queue runs dry.
    pub fn with_queue(responses: Vec<String>) -> StubServer {
        Self::start(move |_, index| {
            responses
                .get(index)
                .unwrap_or_else(|| panic!("stub response queue exhausted at call {index}"))
                .clone()
        })
    }

    pub fn start<F>(respond: F) -> StubServer
    where
        F: Fn(&serde_json::Value, usize) -> String + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
        let addr = listener.local_addr().expect("local addr");
        let stop = Arc::new(AtomicBool::new(false));
        let hits = Arc::new(AtomicUsize::new(0));
        let thread_stop = stop.clone();
        let thread_hits = hits.clone();
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if thread_stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let index = thread_hits.fetch_add(1, Ordering::SeqCst);
                if let Err(e) = serve_one(stream, &respond, index) {
                    eprintln!("stub server error: {e}");
                }
            }
        });
        StubServer {
            addr,
            stop,
            hits,
            handle: Some(handle),
        }
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}/v1/chat/completions", self.addr)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn serve_one(
    mut stream: TcpStream,
    respond: &(impl Fn(&serde_json::Value, usize) -> String + ?Sized),
    index: usize,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        let trimmed = line.trim();
        if trimmed.is_empty() {
            break;
        }
        if let Some(value) = trimmed
            .to_ascii_lowercase()
            .strip_prefix("content-length:")
            .map(str::trim)
            .and_then(|v| v.parse::<usize>().ok())
        {
            content_length = value;
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    let request: serde_json::Value =
        serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
    let text = respond(&request, index);
    let payload = serde_json::json!({
        "choices": [{ "message": { "role": "assistant", "content": text } }]
    })
    .to_string();
    let response = format!(
        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        payload.len(),
        payload
    );
    stream.write_all(response.as_bytes())?;
    stream.flush()
}

/// Text of the last user message in a chat-completion request body.
pub fn last_user_content(request: &serde_json::Value) -> String {
    request["messages"]
        .as_array()
        .and_then(|msgs| {
            msgs.iter()
                .rev()
                .find(|m| m["role"] == "user")
                .and_then(|m| m["content"].as_str())
        })
        .unwrap_or_default()
        .to_string()
}
