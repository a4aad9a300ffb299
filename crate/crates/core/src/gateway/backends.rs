//! Completion backends: deterministic fixtures, an echo stub, a scripted
//! test backend, and a live HTTP client.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use super::cache::read_lines;
use super::{CacheKey, CompletionBackend, GatewayError, ModelRequest};

/// Fixture backend: responses keyed by request digest, loaded read-only.
///
/// A miss is an error unless echo fallback is enabled, in which case the
/// response is a marker embedding the first 64 characters of the prompt.
pub struct FixtureBackend {
    entries: HashMap<String, String>,
    echo_fallback: bool,
}

impl FixtureBackend {
    pub fn new(entries: HashMap<String, String>) -> Self {
        Self {
            entries,
            echo_fallback: false,
        }
    }

    pub fn empty() -> Self {
        Self::new(HashMap::new())
    }

    /// Load one or more fixture files (same line format as the cache).
    pub fn from_files<P: AsRef<Path>>(paths: &[P]) -> Result<Self, GatewayError> {
        let mut entries = HashMap::new();
        for path in paths {
            let (lines, _skipped) =
                read_lines(path.as_ref()).map_err(|e| GatewayError::BackendUnavailable {
                    reason: e.to_string(),
                })?;
            for line in lines {
                entries.insert(line.key, line.response);
            }
        }
        Ok(Self::new(entries))
    }

    pub fn with_echo_fallback(mut self, enabled: bool) -> Self {
        self.echo_fallback = enabled;
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub(crate) fn echo_marker(prompt: &str) -> String {
    let head: String = prompt.chars().take(64).collect();
    format!("[echo] {head}")
}

impl CompletionBackend for FixtureBackend {
    fn complete(&self, request: &ModelRequest, key: &CacheKey) -> Result<String, GatewayError> {
        match self.entries.get(key.digest()) {
            Some(text) => Ok(text.clone()),
            None if self.echo_fallback => Ok(echo_marker(&request.prompt)),
            None => Err(GatewayError::FixtureMiss {
                digest: key.digest().to_string(),
            }),
        }
    }
}

/// Always answers with the echo marker; useful for smoke runs with no
/// fixtures at all.
pub struct EchoBackend;

impl CompletionBackend for EchoBackend {
    fn complete(&self, request: &ModelRequest, _key: &CacheKey) -> Result<String, GatewayError> {
        Ok(echo_marker(&request.prompt))
    }
}

/// Test backend driven by a closure over the full request.
pub struct ScriptedBackend {
    script: ScriptFn,
}

type ScriptFn = Box<dyn Fn(&ModelRequest) -> Option<String> + Send + Sync>;

impl ScriptedBackend {
    pub fn new(script: impl Fn(&ModelRequest) -> Option<String> + Send + Sync + 'static) -> Self {
        Self {
            script: Box::new(script),
        }
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, request: &ModelRequest, key: &CacheKey) -> Result<String, GatewayError> {
        (self.script)(request).ok_or_else(|| GatewayError::FixtureMiss {
            digest: key.digest().to_string(),
        })
    }
}

/// Live HTTP backend.
///
/// Requests POST a JSON body
/// `{model, messages: [{role, content: [text part, base64 image parts]}],
/// temperature, max_tokens}` and expect the completion text in a top-level
/// `"text"` field (an OpenAI-style `choices[0].message.content` is accepted
/// as a fallback). Transient failures are retried up to 3 attempts with
/// exponential backoff.
pub struct LiveBackend {
    endpoint: String,
    token: Option<String>,
    timeout: Duration,
    attempts: u32,
    backoff_base: Duration,
}

impl LiveBackend {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            token: None,
            timeout: Duration::from_secs(60),
            attempts: 3,
            backoff_base: Duration::from_secs(1),
        }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Base delay for the exponential backoff (doubles per retry).
    pub fn with_backoff_base(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    fn body(&self, request: &ModelRequest) -> Result<serde_json::Value, GatewayError> {
        let mut content = vec![serde_json::json!({"type": "text", "text": request.prompt})];
        for image in &request.images {
            let bytes =
                std::fs::read(&image.location).map_err(|e| GatewayError::ImageUnreadable {
                    location: image.location.clone(),
                    reason: e.to_string(),
                })?;
            content.push(serde_json::json!({
                "type": "image",
                "data": encode_base64(&bytes),
            }));
        }
        Ok(serde_json::json!({
            "model": request.model_id,
            "messages": [{"role": "user", "content": content}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }))
    }

    fn post_once(&self, body: &serde_json::Value) -> Result<String, GatewayError> {
        let agent = ureq::AgentBuilder::new()
            .timeout_read(self.timeout)
            .timeout_write(self.timeout)
            .build();
        let mut request = agent
            .post(&self.endpoint)
            .set("content-type", "application/json");
        if let Some(token) = &self.token {
            request = request.set("authorization", &format!("Bearer {token}"));
        }
        let response = request
            .send_string(&body.to_string())
            .map_err(|e| match e {
                ureq::Error::Transport(t) => GatewayError::BackendUnavailable {
                    reason: t.to_string(),
                },
                ureq::Error::Status(code, _) => GatewayError::BackendUnavailable {
                    reason: format!("http status {code}"),
                },
            })?;
        let payload: serde_json::Value =
            response
                .into_json()
                .map_err(|e| GatewayError::BackendUnavailable {
                    reason: e.to_string(),
                })?;
        extract_completion_text(&payload).ok_or_else(|| GatewayError::BackendUnavailable {
            reason: "response body carries no completion text".to_string(),
        })
    }
}

fn extract_completion_text(payload: &serde_json::Value) -> Option<String> {
    if let Some(text) = payload.get("text").and_then(|v| v.as_str()) {
        return Some(text.to_string());
    }
    payload
        .get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}

impl CompletionBackend for LiveBackend {
    fn complete(&self, request: &ModelRequest, _key: &CacheKey) -> Result<String, GatewayError> {
        let body = self.body(request)?;
        let mut delay = self.backoff_base;
        let mut last_error = GatewayError::BackendUnavailable {
            reason: "no attempts".into(),
        };
        for attempt in 0..self.attempts {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.post_once(&body) {
                Ok(text) => return Ok(text),
                Err(e) => last_error = e,
            }
        }
        Err(last_error)
    }
}

const BASE64_ALPHABET: &[u8; 64] =
    b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

/// Standard (RFC 4648) base64 with padding.
pub fn encode_base64(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len().div_ceil(3) * 4);
    for chunk in bytes.chunks(3) {
        let b0 = chunk[0] as u32;
        let b1 = chunk.get(1).copied().unwrap_or(0) as u32;
        let b2 = chunk.get(2).copied().unwrap_or(0) as u32;
        let triple = (b0 << 16) | (b1 << 8) | b2;
        out.push(BASE64_ALPHABET[(triple >> 18) as usize & 63] as char);
        out.push(BASE64_ALPHABET[(triple >> 12) as usize & 63] as char);
        out.push(if chunk.len() > 1 {
            BASE64_ALPHABET[(triple >> 6) as usize & 63] as char
        } else {
            '='
        });
        out.push(if chunk.len() > 2 {
            BASE64_ALPHABET[triple as usize & 63] as char
        } else {
            '='
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::{cache_key, ModelGateway};
    use super::*;
    use crate::gateway::FixtureEmbedder;
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::Arc;

    #[test]
    fn base64_reference_vectors() {
        // RFC 4648 test vectors
        assert_eq!(encode_base64(b""), "");
        assert_eq!(encode_base64(b"f"), "Zg==");
        assert_eq!(encode_base64(b"fo"), "Zm8=");
        assert_eq!(encode_base64(b"foo"), "Zm9v");
        assert_eq!(encode_base64(b"foob"), "Zm9vYg==");
        assert_eq!(encode_base64(b"fooba"), "Zm9vYmE=");
        assert_eq!(encode_base64(b"foobar"), "Zm9vYmFy");
    }

    #[test]
    fn fixture_hit_then_cache_hit() {
        let request = ModelRequest::text("m", "what year");
        let key = cache_key(&request).unwrap();
        let mut entries = HashMap::new();
        entries.insert(key.digest().to_string(), "2019".to_string());
        let gateway = ModelGateway::new(
            Arc::new(FixtureBackend::new(entries)),
            Arc::new(FixtureEmbedder::new(8)),
        );

        let first = gateway.complete(&request).unwrap();
        assert_eq!(first.text, "2019");
        assert!(!first.cached);
        let second = gateway.complete(&request).unwrap();
        assert_eq!(second.text, "2019");
        assert!(second.cached);
        // cache served the second call: exactly one backend call happened
        assert_eq!(gateway.call_counts().backend_calls, 1);
        assert_eq!(gateway.call_counts().completions, 2);
    }

    #[test]
    fn fixture_miss_without_fallback_is_an_error() {
        let gateway = ModelGateway::new(
            Arc::new(FixtureBackend::empty()),
            Arc::new(FixtureEmbedder::new(8)),
        );
        let err = gateway
            .complete(&ModelRequest::text("m", "anything"))
            .unwrap_err();
        assert!(matches!(err, GatewayError::FixtureMiss { .. }));
    }

    #[test]
    fn fixture_miss_with_echo_fallback_returns_marker() {
        let gateway = ModelGateway::new(
            Arc::new(FixtureBackend::empty().with_echo_fallback(true)),
            Arc::new(FixtureEmbedder::new(8)),
        );
        let long_prompt = "z".repeat(100);
        let response = gateway
            .complete(&ModelRequest::text("m", long_prompt))
            .unwrap();
        assert_eq!(response.text, format!("[echo] {}", "z".repeat(64)));
    }

    /// Minimal blocking HTTP stub: answers each accepted connection with the
    /// next canned (status, body) pair.
    fn stub_http_server(
        responses: Vec<(u16, String)>,
    ) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut seen_bodies = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                let request = loop {
                    let n = stream.read(&mut chunk).unwrap();
                    buf.extend_from_slice(&chunk[..n]);
                    let text = String::from_utf8_lossy(&buf).to_string();
                    if let Some(header_end) = text.find("\r\n\r\n") {
                        let content_length = text
                            .lines()
                            .find_map(|l| {
                                l.to_lowercase()
                                    .strip_prefix("content-length:")
                                    .map(|v| v.trim().parse::<usize>().unwrap())
                            })
                            .unwrap_or(0);
                        if buf.len() >= header_end + 4 + content_length {
                            break text;
                        }
                    }
                };
                let body_start = request.find("\r\n\r\n").unwrap() + 4;
                seen_bodies.push(request[body_start..].to_string());
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
            seen_bodies
        });
        (format!("http://{addr}"), handle)
    }

    #[test]
    fn live_backend_returns_text_field_verbatim() {
        let (endpoint, handle) = stub_http_server(vec![(
            200,
            serde_json::json!({"text": "Volkswagen Beetle"}).to_string(),
        )]);
        let backend = LiveBackend::new(endpoint).with_token(Some("secret".into()));
        let request = ModelRequest::text("m", "what car is this");
        let key = cache_key(&request).unwrap();
        let text = backend.complete(&request, &key).unwrap();
        assert_eq!(text, "Volkswagen Beetle");

        let bodies = handle.join().unwrap();
        let sent: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(sent["model"], "m");
        assert_eq!(sent["messages"][0]["role"], "user");
        assert_eq!(
            sent["messages"][0]["content"][0]["text"],
            "what car is this"
        );
    }

    #[test]
    fn live_backend_retries_transient_failures() {
        let (endpoint, handle) = stub_http_server(vec![
            (500, "{}".to_string()),
            (200, serde_json::json!({"text": "ok"}).to_string()),
        ]);
        let backend = LiveBackend::new(endpoint).with_backoff_base(Duration::from_millis(1));
        let request = ModelRequest::text("m", "x");
        let key = cache_key(&request).unwrap();
        assert_eq!(backend.complete(&request, &key).unwrap(), "ok");
        handle.join().unwrap();
    }

    #[test]
    fn live_backend_gives_up_after_attempts() {
        let (endpoint, handle) = stub_http_server(vec![
            (503, "{}".to_string()),
            (503, "{}".to_string()),
            (503, "{}".to_string()),
        ]);
        let backend = LiveBackend::new(endpoint).with_backoff_base(Duration::from_millis(1));
        let request = ModelRequest::text("m", "x");
        let key = cache_key(&request).unwrap();
        let err = backend.complete(&request, &key).unwrap_err();
        assert!(matches!(err, GatewayError::BackendUnavailable { .. }));
        handle.join().unwrap();
    }

    #[test]
    fn openai_style_body_accepted() {
        let payload = serde_json::json!({
            "choices": [{"message": {"content": "hello"}}]
        });
        assert_eq!(extract_completion_text(&payload).as_deref(), Some("hello"));
    }
}
