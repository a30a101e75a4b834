//! Runs a trial plan against an OpenAI-compatible chat endpoint.

use std::collections::{BTreeMap, HashSet};
use std::fs::OpenOptions;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use drift_core::corpus::TrialKey;
use drift_core::inference::{append_raw, build_request, now_timestamp, read_raw_log, ResponseStatus};
use drift_core::{Error, InferenceConfig, RawResponse, Result, TrialPlan};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::Value;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Skip trials already logged as `ok`; errored trials are retried.
    pub resume: bool,
    /// Sent as a bearer token when present.
    pub api_key: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub planned: usize,
    pub already_done: usize,
    pub ok: usize,
    pub errors: usize,
}

enum Attempt {
    Done(String),
    Retry(String),
    Fatal(String),
}

/// Pulls the assistant text from a chat-completions response body. Content
/// given as a list of parts is concatenated.
pub fn completion_text(body: &Value) -> Option<String> {
    let content = body.pointer("/choices/0/message/content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => Some(
            parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect::<Vec<_>>()
                .join(""),
        ),
        _ => None,
    }
}

fn attempt(client: &Client, url: &str, body: &Value, api_key: Option<&str>) -> Attempt {
    let mut req = client.post(url).json(body);
    if let Some(k) = api_key {
        req = req.bearer_auth(k);
    }
    let resp = match req.send() {
        Ok(r) => r,
        Err(e) => return Attempt::Retry(format!("transport: {e}")),
    };
    let status = resp.status();
    let text = resp.text().unwrap_or_default();
    if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
        return Attempt::Retry(format!("HTTP {status}: {}", truncate(&text)));
    }
    if !status.is_success() {
        return Attempt::Fatal(format!("HTTP {status}: {}", truncate(&text)));
    }
    let parsed: Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(e) => return Attempt::Fatal(format!("unreadable response body: {e}")),
    };
    match completion_text(&parsed) {
        Some(t) if !t.is_empty() => Attempt::Done(t),
        Some(_) => Attempt::Fatal("empty completion".into()),
        None => Attempt::Fatal("response has no choices[0].message.content".into()),
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}

fn run_trial(
    client: &Client,
    key: &TrialKey,
    image: Option<&PathBuf>,
    config: &InferenceConfig,
    api_key: Option<&str>,
) -> RawResponse {
    let started = Instant::now();
    let elapsed = || started.elapsed().as_secs_f64() * 1000.0;
    let Some(path) = image else {
        return RawResponse::error(
            key.clone(),
            format!("no image for {}", key.image_id),
            0.0,
            now_timestamp(),
        );
    };
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) => {
            return RawResponse::error(
                key.clone(),
                format!("reading {}: {e}", path.display()),
                0.0,
                now_timestamp(),
            )
        }
    };
    let body = match build_request(key, key.prime_id.prime(), &bytes, config) {
        Ok(b) => b,
        Err(e) => return RawResponse::error(key.clone(), e.to_string(), 0.0, now_timestamp()),
    };
    let url = config.completions_url();
    let mut last = String::new();
    for n in 0..=config.max_retries {
        let t0 = Instant::now();
        match attempt(client, &url, &body, api_key) {
            Attempt::Done(text) => {
                let latency = t0.elapsed().as_secs_f64() * 1000.0;
                return RawResponse::ok(key.clone(), text, latency, now_timestamp())
                    .unwrap_or_else(|e| RawResponse::error(key.clone(), e.to_string(), latency, now_timestamp()));
            }
            Attempt::Fatal(detail) => return RawResponse::error(key.clone(), detail, elapsed(), now_timestamp()),
            Attempt::Retry(detail) => {
                last = detail;
                if n < config.max_retries {
                    std::thread::sleep(config.backoff(n));
                }
            }
        }
    }
    RawResponse::error(
        key.clone(),
        format!("gave up after {} attempts: {last}", config.max_retries + 1),
        elapsed(),
        now_timestamp(),
    )
}

/// Executes every pending trial and appends one record per trial to
/// `log_path`. Workers only send records; a single writer owns the file.
pub fn run_plan(
    plan: &TrialPlan,
    images: &BTreeMap<String, PathBuf>,
    config: &InferenceConfig,
    log_path: &Path,
    options: &RunOptions,
) -> Result<RunSummary> {
    config.validate()?;
    let mut done: HashSet<TrialKey> = HashSet::new();
    if log_path.exists() {
        if !options.resume {
            return Err(Error::InvalidInput(format!(
                "{} already exists; resume or remove it",
                log_path.display()
            )));
        }
        done = read_raw_log(log_path)?
            .into_iter()
            .filter(|r| r.status == ResponseStatus::Ok)
            .map(|r| r.key)
            .collect();
    }
    let pending: Vec<&TrialKey> = plan.trials.iter().filter(|k| !done.contains(*k)).collect();
    let mut summary = RunSummary {
        planned: plan.trials.len(),
        already_done: plan.trials.len() - pending.len(),
        ..Default::default()
    };
    if pending.is_empty() {
        return Ok(summary);
    }

    let client = Client::builder()
        .timeout(Duration::from_secs_f64(config.timeout_secs))
        .build()
        .map_err(|e| Error::Provider(e.to_string()))?;
    if let Some(dir) = log_path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(log_path)
        .map_err(|e| Error::io(log_path, e))?;
    let mut writer = BufWriter::new(file);

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<RawResponse>();
    let api_key = options.api_key.as_deref();
    std::thread::scope(|s| -> Result<()> {
        for _ in 0..config.parallelism.min(pending.len()) {
            let tx = tx.clone();
            let (client, next, pending) = (&client, &next, &pending);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(key) = pending.get(i) else { break };
                let record = run_trial(client, key, images.get(&key.image_id), config, api_key);
                if tx.send(record).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for record in rx {
            match record.status {
                ResponseStatus::Ok => summary.ok += 1,
                ResponseStatus::InferenceError => summary.errors += 1,
            }
            append_raw(&mut writer, &record)?;
        }
        Ok(())
    })?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn completion_text_shapes() {
        let s = json!({"choices": [{"message": {"content": "hi"}}]});
        assert_eq!(completion_text(&s).as_deref(), Some("hi"));
        let parts = json!({"choices": [{"message": {"content": [{"type": "text", "text": "a"}, {"type": "text", "text": "b"}]}}]});
        assert_eq!(completion_text(&parts).as_deref(), Some("ab"));
        assert_eq!(completion_text(&json!({"choices": []})), None);
    }
}
