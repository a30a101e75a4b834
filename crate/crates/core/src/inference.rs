//! Request construction and the raw response log. The HTTP transport lives
//! in the client crate; everything here is pure.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::corpus::{ContextPrime, TrialKey};
use crate::error::{Error, Result};

/// Suffix appended to every prime so the model answers with the object list.
pub const JSON_FORMAT_INSTRUCTION: &str =
    "Provide response in JSON format with keys: 'objects' (list of {id, name, affordance, reasoning}).";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub endpoint_url: String,
    pub model_id: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub parallelism: usize,
    /// Forward the trial seed as the wire `seed` parameter.
    pub send_seed: bool,
    /// First backoff delay; later delays grow by a factor of four.
    pub backoff_base_secs: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "http://localhost:1234".into(),
            model_id: "qwen3-vl-30b-a3b-instruct".into(),
            max_tokens: 512,
            temperature: 0.7,
            timeout_secs: 120.0,
            max_retries: 3,
            parallelism: 1,
            send_seed: true,
            backoff_base_secs: 1.0,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_tokens == 0 {
            return Err(Error::InvalidInput("max_tokens must be positive".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::InvalidInput("parallelism must be positive".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::InvalidInput("temperature outside [0, 2]".into()));
        }
        if self.timeout_secs <= 0.0 {
            return Err(Error::InvalidInput("timeout must be positive".into()));
        }
        Ok(())
    }

    /// `<endpoint>/v1/chat/completions`, tolerating a trailing slash or an
    /// endpoint that already ends in `/v1`.
    pub fn completions_url(&self) -> String {
        let base = self.endpoint_url.trim_end_matches('/');
        let base = base.strip_suffix("/v1").unwrap_or(base);
        format!("{base}/v1/chat/completions")
    }

    /// Delay before retry number `attempt` (0-based): base, 4·base, 16·base, …
    pub fn backoff(&self, attempt: u32) -> std::time::Duration {
        std::time::Duration::from_secs_f64(self.backoff_base_secs * 4f64.powi(attempt as i32))
    }
}

/// Text sent for a prime: prompt, blank line, JSON-format instruction.
pub fn prompt_text(prime: &ContextPrime) -> String {
    format!("{}\n\n{}", prime.prompt_text, JSON_FORMAT_INSTRUCTION)
}

/// Builds the chat-completions request body: a single user message holding
/// the prompt text and the image as a base64 JPEG data URI.
pub fn build_request(
    key: &TrialKey,
    prime: &ContextPrime,
    image_bytes: &[u8],
    config: &InferenceConfig,
) -> Result<Value> {
    if image_bytes.is_empty() {
        return Err(Error::InvalidInput(format!("empty image bytes for {}", key.image_id)));
    }
    if prime.id != key.prime_id {
        return Err(Error::InvalidInput(format!(
            "prime {} does not match trial prime {}",
            prime.id, key.prime_id
        )));
    }
    let encoded = base64::engine::general_purpose::STANDARD.encode(image_bytes);
    let mut body = json!({
        "model": config.model_id,
        "messages": [{
            "role": "user",
            "content": [
                {"type": "text", "text": prompt_text(prime)},
                {"type": "image_url", "image_url": {"url": format!("data:image/jpeg;base64,{encoded}")}},
            ],
        }],
        "max_tokens": config.max_tokens,
        "temperature": key.temperature.value(),
        "stream": false,
    });
    if config.send_seed {
        body["seed"] = json!(key.seed);
    }
    Ok(body)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseStatus {
    Ok,
    InferenceError,
}

/// One line of the raw log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResponse {
    #[serde(flatten)]
    pub key: TrialKey,
    pub status: ResponseStatus,
    pub text: String,
    pub latency_ms: f64,
    pub timestamp: String,
    pub error_detail: Option<String>,
}

impl RawResponse {
    pub fn ok(key: TrialKey, text: String, latency_ms: f64, timestamp: String) -> Result<Self> {
        if text.is_empty() {
            return Err(Error::InvalidInput("ok response with empty text".into()));
        }
        Ok(Self {
            key,
            status: ResponseStatus::Ok,
            text,
            latency_ms,
            timestamp,
            error_detail: None,
        })
    }

    pub fn error(key: TrialKey, detail: impl Into<String>, latency_ms: f64, timestamp: String) -> Self {
        let mut detail = detail.into();
        if detail.is_empty() {
            detail = "unspecified inference error".into();
        }
        Self {
            key,
            status: ResponseStatus::InferenceError,
            text: String::new(),
            latency_ms,
            timestamp,
            error_detail: Some(detail),
        }
    }
}

pub fn now_timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Reads every record of a raw log, in file order.
pub fn read_raw_log(path: &Path) -> Result<Vec<RawResponse>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::Malformed {
            line: n + 1,
            detail: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Collapses a log that may hold several attempts per key: the first `ok`
/// record wins, otherwise the last error is kept. Output is sorted by key.
pub fn latest_per_key(records: Vec<RawResponse>) -> Vec<RawResponse> {
    let mut by_key: BTreeMap<TrialKey, RawResponse> = BTreeMap::new();
    for r in records {
        match by_key.get(&r.key) {
            Some(existing) if existing.status == ResponseStatus::Ok => {}
            _ => {
                by_key.insert(r.key.clone(), r);
            }
        }
    }
    by_key.into_values().collect()
}

pub fn append_raw(writer: &mut impl Write, record: &RawResponse) -> Result<()> {
    let line = serde_json::to_string(record)?;
    writer
        .write_all(line.as_bytes())
        .and_then(|_| writer.write_all(b"\n"))
        .and_then(|_| writer.flush())
        .map_err(|e| Error::io("<raw log>", e))
}
