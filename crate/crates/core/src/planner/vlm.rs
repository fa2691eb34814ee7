use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{score_heuristic, Candidate, Decision, ScorerConfig, VisitGrid, LABELS};
use crate::error::ScorerError;
use crate::sensor::{rasterize, View};

pub const PROMPT_VERSION: u32 = 1;
pub const PROMPT_TEMPLATE: &str = include_str!("prompt_v1.txt");

pub const FORMAT_REMINDER: &str = "Your previous answer could not be used. Reply with only a JSON object of the form \
{\"Reason\": \"<one sentence>\", \"Choice\": \"<one of the labels>\"}.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VlmSettings {
    pub endpoint: String,
    pub model: String,
    /// Environment variable overriding `endpoint`.
    pub endpoint_env: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
    /// Attempts per request on server or network errors.
    pub transport_attempts: u32,
    /// First retry delay; doubles on each further retry.
    pub backoff_ms: u64,
    /// Request-hash to response cache used by replay mode.
    pub replay_dir: Option<PathBuf>,
}

impl Default for VlmSettings {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o-mini".into(),
            endpoint_env: "VIEWNAV_VLM_URL".into(),
            api_key_env: "VIEWNAV_VLM_API_KEY".into(),
            timeout_secs: 60,
            transport_attempts: 3,
            backoff_ms: 500,
            replay_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub system: String,
    pub user: String,
    pub image_png: Vec<u8>,
}

fn section<'a>(template: &'a str, name: &str) -> &'a str {
    let tag = format!("[{name}]\n");
    let start = template.find(&tag).map(|i| i + tag.len()).unwrap_or(0);
    let rest = &template[start..];
    let end = rest.find("\n[").map(|i| i + 1).unwrap_or(rest.len());
    rest[..end].trim_end()
}

/// Prompt text with the target interpolated, plus the stitched candidate
/// image badged with the labels.
pub fn build_prompt(candidates: &[Candidate], target: &str) -> Result<Prompt, ScorerError> {
    let labels: Vec<String> = candidates.iter().map(|c| c.label.clone()).collect();
    let list = labels.join(", ");
    let fill = |s: &str| s.replace("{labels}", &list).replace("{target}", target);
    let views: Vec<View> = candidates.iter().map(|c| c.imagined.clone()).collect();
    let image_png = rasterize(&views, Some(&labels)).map_err(|e| ScorerError::Config(e.to_string()))?;
    Ok(Prompt {
        system: fill(section(PROMPT_TEMPLATE, "system")),
        user: fill(section(PROMPT_TEMPLATE, "user")),
        image_png,
    })
}

/// Chat-completions request for attempt `attempt` (0-based); retries carry
/// the format reminder.
pub fn request_body(prompt: &Prompt, model: &str, attempt: u32) -> String {
    let mut text = prompt.user.clone();
    if attempt > 0 {
        text.push_str("\n\n");
        text.push_str(FORMAT_REMINDER);
    }
    let url = format!("data:image/png;base64,{}", base64::engine::general_purpose::STANDARD.encode(&prompt.image_png));
    let body = json!({
        "model": model,
        "temperature": 0,
        "messages": [
            {"role": "system", "content": prompt.system},
            {"role": "user", "content": [
                {"type": "text", "text": text},
                {"type": "image_url", "image_url": {"url": url}},
            ]},
        ],
    });
    body.to_string()
}

/// Hex SHA-256 of a request body; replay files are named after it.
pub fn request_key(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

/// Message text of a chat-completions response, or the body itself when it
/// is not one.
fn response_text(body: &str) -> String {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| v["choices"][0]["message"]["content"].as_str().map(String::from))
        .unwrap_or_else(|| body.to_string())
}

/// First balanced `{...}` in `text`, honoring string literals.
fn first_object(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let mut from = 0;
    while let Some(off) = text[from..].find('{') {
        let start = from + off;
        let (mut depth, mut in_str, mut esc) = (0i32, false, false);
        for (i, &b) in bytes.iter().enumerate().skip(start) {
            if in_str {
                match (esc, b) {
                    (true, _) => esc = false,
                    (false, b'\\') => esc = true,
                    (false, b'"') => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        let candidate = &text[start..=i];
                        if serde_json::from_str::<Value>(candidate).is_ok() {
                            return Some(candidate);
                        }
                        break;
                    }
                }
                _ => {}
            }
        }
        from = start + 1;
    }
    None
}

/// `(choice, reason)` from the first JSON object in `text`, if its
/// `Choice` is one of `labels`.
pub fn parse_choice(text: &str, labels: &[String]) -> Option<(String, String)> {
    let obj: Value = serde_json::from_str(first_object(text)?).ok()?;
    let choice = obj.get("Choice")?.as_str()?.trim().to_ascii_uppercase();
    if !labels.contains(&choice) {
        return None;
    }
    let reason = obj.get("Reason").and_then(Value::as_str).unwrap_or_default().to_string();
    Some((choice, reason))
}

pub trait VlmTransport {
    /// Posts one request body and returns the response body.
    fn send(&mut self, body: &str) -> Result<String, ScorerError>;
}

/// Asks the remote model to pick a candidate. Unusable answers are retried
/// with a format reminder up to `cfg.retry_limit` times in total, then the
/// heuristic decides and the decision is marked `fallback`.
pub fn score_vlm(
    candidates: &[Candidate],
    target: &str,
    visits: &VisitGrid,
    cfg: &ScorerConfig,
    transport: &mut dyn VlmTransport,
) -> Result<Decision, ScorerError> {
    let labels: Vec<String> = candidates.iter().map(|c| c.label.clone()).collect();
    debug_assert!(labels.iter().all(|l| LABELS.contains(&l.as_str())));
    let prompt = build_prompt(candidates, target)?;
    let mut last = None;
    for attempt in 0..cfg.retry_limit.max(1) {
        let text = response_text(&transport.send(&request_body(&prompt, &cfg.vlm.model, attempt))?);
        if let Some((choice, reason)) = parse_choice(&text, &labels) {
            return Ok(Decision { choice, reason, scorer_id: "vlm".into(), raw_response: Some(text) });
        }
        last = Some(text);
    }
    let mut d = score_heuristic(candidates, target, visits, cfg);
    d.scorer_id = "fallback".into();
    d.raw_response = last;
    Ok(d)
}

/// Blocking HTTP client for a chat-completions endpoint.
pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
    attempts: u32,
    backoff: Duration,
}

impl HttpTransport {
    /// Endpoint and key come from the environment variables named in
    /// `settings`, with `settings.endpoint` as the default URL.
    pub fn from_env(settings: &VlmSettings) -> Self {
        let url = std::env::var(&settings.endpoint_env).unwrap_or_else(|_| settings.endpoint.clone());
        let key = std::env::var(&settings.api_key_env).ok().filter(|k| !k.is_empty());
        Self::new(url, key, settings)
    }

    pub fn new(url: String, api_key: Option<String>, settings: &VlmSettings) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(settings.timeout_secs)))
            .http_status_as_error(false)
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
            url,
            api_key,
            attempts: settings.transport_attempts.max(1),
            backoff: Duration::from_millis(settings.backoff_ms),
        }
    }
}

impl VlmTransport for HttpTransport {
    fn send(&mut self, body: &str) -> Result<String, ScorerError> {
        let mut message = String::new();
        for attempt in 0..self.attempts {
            if attempt > 0 {
                thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            match req.send(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if status == 401 || status == 403 {
                        return Err(ScorerError::Auth { status });
                    }
                    let text = resp.body_mut().read_to_string().unwrap_or_default();
                    if (200..300).contains(&status) {
                        return Ok(text);
                    }
                    message = format!("HTTP {status}: {}", text.chars().take(200).collect::<String>());
                    if status < 500 {
                        return Err(ScorerError::Transport { attempts: attempt + 1, message });
                    }
                }
                Err(e) => message = e.to_string(),
            }
        }
        Err(ScorerError::Transport { attempts: self.attempts, message })
    }
}

fn response_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("{key}.response"))
}

/// Serves recorded responses keyed by the request hash; never touches the
/// network.
pub struct ReplayTransport {
    dir: PathBuf,
}

impl ReplayTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl VlmTransport for ReplayTransport {
    fn send(&mut self, body: &str) -> Result<String, ScorerError> {
        let key = request_key(body);
        fs::read_to_string(response_path(&self.dir, &key)).map_err(|_| ScorerError::ReplayMiss(key))
    }
}

/// Forwards to another transport and stores each request and response for
/// later replay.
pub struct RecordingTransport<T> {
    inner: T,
    dir: PathBuf,
}

impl<T: VlmTransport> RecordingTransport<T> {
    pub fn new(inner: T, dir: impl Into<PathBuf>) -> Result<Self, ScorerError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { inner, dir })
    }
}

impl<T: VlmTransport> VlmTransport for RecordingTransport<T> {
    fn send(&mut self, body: &str) -> Result<String, ScorerError> {
        let resp = self.inner.send(body)?;
        let key = request_key(body);
        fs::write(self.dir.join(format!("{key}.request.json")), body)?;
        fs::write(response_path(&self.dir, &key), &resp)?;
        Ok(resp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    fn labels() -> Vec<String> {
        LABELS.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_well_formed_answer() {
        let got = parse_choice(r#"{"Reason":"couch likely near TV","Choice":"C"}"#, &labels());
        assert_eq!(got, Some(("C".into(), "couch likely near TV".into())));
    }

    #[test]
    fn parses_object_embedded_in_prose() {
        let text = "Sure! Here is my answer:\n```json\n{\"Reason\": \"a {brace} in text\", \"Choice\": \" e \"}\n```";
        assert_eq!(parse_choice(text, &labels()).unwrap().0, "E");
    }

    #[test]
    fn rejects_bad_choices() {
        assert_eq!(parse_choice("Choice: Z", &labels()), None);
        assert_eq!(parse_choice(r#"{"Reason":"x","Choice":"Z"}"#, &labels()), None);
        assert_eq!(parse_choice(r#"{"Reason":"x"}"#, &labels()), None);
        assert_eq!(parse_choice(r#"{"Choice": 3}"#, &labels()), None);
    }

    #[test]
    fn reads_chat_completion_content() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"{\"Reason\":\"r\",\"Choice\":\"B\"}"}}]}"#;
        assert_eq!(parse_choice(&response_text(body), &labels()).unwrap().0, "B");
    }

    #[test]
    fn template_sections_are_filled() {
        let sys = section(PROMPT_TEMPLATE, "system");
        let user = section(PROMPT_TEMPLATE, "user");
        assert!(!sys.contains("[user]") && !sys.is_empty());
        assert!(user.contains("{target}") && user.contains("\"Reason\""));
    }

    /// Serves one canned HTTP response per connection, returning the port.
    fn serve(responses: Vec<(u16, &'static str)>) -> (u16, thread::JoinHandle<usize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        let handle = thread::spawn(move || {
            let mut served = 0;
            for (status, body) in responses {
                let (mut s, _) = listener.accept().unwrap();
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                // read headers, then the declared body length
                loop {
                    let n = s.read(&mut chunk).unwrap();
                    buf.extend_from_slice(&chunk[..n]);
                    let text = String::from_utf8_lossy(&buf);
                    if let Some(h) = text.find("\r\n\r\n") {
                        let len = text[..h]
                            .lines()
                            .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                            .unwrap_or(0);
                        if buf.len() >= h + 4 + len {
                            break;
                        }
                    }
                    if n == 0 {
                        break;
                    }
                }
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                s.write_all(reply.as_bytes()).unwrap();
                served += 1;
            }
            served
        });
        (port, handle)
    }

    fn settings() -> VlmSettings {
        VlmSettings { backoff_ms: 1, timeout_secs: 5, ..VlmSettings::default() }
    }

    #[test]
    fn http_auth_failure_is_not_retried() {
        let (port, h) = serve(vec![(401, "nope")]);
        let mut t = HttpTransport::new(format!("http://127.0.0.1:{port}/"), Some("k".into()), &settings());
        assert!(matches!(t.send("{}"), Err(ScorerError::Auth { status: 401 })));
        assert_eq!(h.join().unwrap(), 1);
    }

    #[test]
    fn http_server_errors_are_retried() {
        let (port, h) = serve(vec![(503, "busy"), (500, "oops"), (200, "ok")]);
        let mut t = HttpTransport::new(format!("http://127.0.0.1:{port}/"), None, &settings());
        assert_eq!(t.send("{}").unwrap(), "ok");
        assert_eq!(h.join().unwrap(), 3);

        let (port, h) = serve(vec![(500, "a"), (502, "b"), (503, "c")]);
        let mut t = HttpTransport::new(format!("http://127.0.0.1:{port}/"), None, &settings());
        assert!(matches!(t.send("{}"), Err(ScorerError::Transport { attempts: 3, .. })));
        assert_eq!(h.join().unwrap(), 3);
    }

    #[test]
    fn record_then_replay() {
        struct Fixed;
        impl VlmTransport for Fixed {
            fn send(&mut self, _: &str) -> Result<String, ScorerError> {
                Ok("{\"Reason\":\"r\",\"Choice\":\"D\"}".into())
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let mut rec = RecordingTransport::new(Fixed, dir.path()).unwrap();
        let resp = rec.send("body-1").unwrap();
        let mut replay = ReplayTransport::new(dir.path());
        assert_eq!(replay.send("body-1").unwrap(), resp);
        assert!(matches!(replay.send("body-2"), Err(ScorerError::ReplayMiss(_))));
    }
}
