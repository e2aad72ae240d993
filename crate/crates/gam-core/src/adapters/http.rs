//! HTTP adapter client: one POST endpoint serving every adapter function.
//!
//! Wire format:
//!   request  `{"fn": <name>, "payload": {...}}`
//!   response `{"ok": bool, "result": ..., "tokens": {"in": n, "out": n}?}`
//!
//! Judge responses are parsed strictly against their schemas; a malformed or
//! out-of-schema response is an adapter failure, never a silent default.
//! Transport errors and 5xx responses are retried up to three times with
//! exponential backoff. In-flight requests are bounded by a configurable
//! limit. Backend-reported token counts (or request/response size estimates
//! when the backend reports none) accumulate in an internal meter readable via
//! [`HttpAdapters::reported_tokens`].

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};

use super::{
    estimate_tokens, CallMeter, Embedder, Generator, MeterReading, Ner, PresentedSentence,
    Rewriter, Segmenter, SufficiencyJudge, SupportJudge, TimeExtractor,
};

pub const ENV_URL: &str = "GAM_ADAPTER_URL";
pub const ENV_KEY: &str = "GAM_ADAPTER_KEY";
pub const ENV_TIMEOUT_MS: &str = "GAM_ADAPTER_TIMEOUT_MS";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub embed_dim: usize,
    pub max_retries: u32,
    pub retry_base_ms: u64,
    pub max_in_flight: usize,
}

impl HttpConfig {
    /// Reads `GAM_ADAPTER_URL`, `GAM_ADAPTER_KEY`, and `GAM_ADAPTER_TIMEOUT_MS`.
    pub fn from_env(embed_dim: usize) -> Result<Self> {
        let base_url = std::env::var(ENV_URL)
            .map_err(|_| Error::InvalidConfig(format!("{ENV_URL} is not set")))?;
        let api_key = std::env::var(ENV_KEY).ok();
        let timeout_ms = match std::env::var(ENV_TIMEOUT_MS) {
            Ok(v) => v
                .parse::<u64>()
                .map_err(|_| Error::InvalidConfig(format!("{ENV_TIMEOUT_MS} must be an integer")))?,
            Err(_) => 30_000,
        };
        Ok(HttpConfig {
            base_url,
            api_key,
            timeout: Duration::from_millis(timeout_ms),
            embed_dim,
            max_retries: 3,
            retry_base_ms: 200,
            max_in_flight: 4,
        })
    }
}

struct Gate {
    slots: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Gate {
            slots: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut slots = self.slots.lock().unwrap();
        while *slots == 0 {
            slots = self.cv.wait(slots).unwrap();
        }
        *slots -= 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'a> {
    gate: &'a Gate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.gate.slots.lock().unwrap() += 1;
        self.gate.cv.notify_one();
    }
}

#[derive(Deserialize)]
struct WireResponse {
    ok: bool,
    #[serde(default)]
    result: Value,
    #[serde(default)]
    error: Option<String>,
    #[serde(default)]
    tokens: Option<WireTokens>,
}

#[derive(Deserialize)]
struct WireTokens {
    #[serde(rename = "in")]
    tokens_in: u64,
    #[serde(rename = "out")]
    tokens_out: u64,
}

pub struct HttpAdapters {
    cfg: HttpConfig,
    client: reqwest::blocking::Client,
    gate: Gate,
    reported: CallMeter,
    id: String,
}

impl HttpAdapters {
    pub fn new(cfg: HttpConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| Error::Adapter(format!("http client init: {e}")))?;
        let id = format!("http:{}", cfg.base_url);
        Ok(HttpAdapters {
            gate: Gate::new(cfg.max_in_flight),
            reported: CallMeter::default(),
            cfg,
            client,
            id,
        })
    }

    /// Token totals as reported by the backend (or size estimates for calls
    /// where the backend reported none).
    pub fn reported_tokens(&self) -> MeterReading {
        self.reported.reading()
    }

    fn call(&self, function: &str, payload: Value) -> Result<Value> {
        let body = json!({ "fn": function, "payload": payload });
        let body_len = body.to_string().len();
        let _slot = self.gate.acquire();
        let mut attempt = 0u32;
        loop {
            match self.try_once(&body) {
                Ok((resp, resp_len)) => {
                    if !resp.ok {
                        return Err(Error::Adapter(format!(
                            "{function}: backend error: {}",
                            resp.error.unwrap_or_else(|| "unspecified".into())
                        )));
                    }
                    match resp.tokens {
                        Some(t) => self.reported.add(t.tokens_in, t.tokens_out, 0.0),
                        None => self.reported.add(
                            estimate_tokens(body_len),
                            estimate_tokens(resp_len),
                            0.0,
                        ),
                    }
                    return Ok(resp.result);
                }
                Err(Retryable::No(e)) => return Err(e),
                Err(Retryable::Yes(e)) => {
                    if attempt >= self.cfg.max_retries {
                        return Err(e);
                    }
                    let backoff = self.cfg.retry_base_ms << attempt;
                    std::thread::sleep(Duration::from_millis(backoff));
                    attempt += 1;
                }
            }
        }
    }

    fn try_once(&self, body: &Value) -> std::result::Result<(WireResponse, usize), Retryable> {
        let mut req = self.client.post(&self.cfg.base_url).json(body);
        if let Some(key) = &self.cfg.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| Retryable::Yes(Error::Adapter(format!("transport: {e}"))))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| Retryable::Yes(Error::Adapter(format!("transport: {e}"))))?;
        if status.is_server_error() {
            return Err(Retryable::Yes(Error::Adapter(format!(
                "backend status {status}"
            ))));
        }
        if !status.is_success() {
            return Err(Retryable::No(Error::Adapter(format!(
                "backend status {status}: {text}"
            ))));
        }
        let parsed: WireResponse = serde_json::from_str(&text).map_err(|e| {
            Retryable::No(Error::Adapter(format!("malformed response JSON: {e}")))
        })?;
        Ok((parsed, text.len()))
    }
}

enum Retryable {
    Yes(Error),
    No(Error),
}

fn expect_str(v: &Value, function: &str) -> Result<String> {
    v.as_str()
        .map(|s| s.to_string())
        .ok_or_else(|| Error::Adapter(format!("{function}: result is not a string")))
}

fn sentences_payload(sentences: &[PresentedSentence]) -> Value {
    Value::Array(
        sentences
            .iter()
            .map(|s| json!({ "sid": s.id, "text": s.text }))
            .collect(),
    )
}

impl Embedder for HttpAdapters {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.cfg.embed_dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>> {
        let result = self.call("embed", json!({ "text": text }))?;
        let arr = result
            .as_array()
            .ok_or_else(|| Error::Adapter("embed: result is not an array".into()))?;
        arr.iter()
            .map(|x| {
                x.as_f64()
                    .map(|f| f as f32)
                    .ok_or_else(|| Error::Adapter("embed: non-numeric component".into()))
            })
            .collect()
    }
}

impl Segmenter for HttpAdapters {
    fn id(&self) -> &str {
        &self.id
    }

    fn segment(&self, text: &str) -> Result<Vec<(String, (usize, usize))>> {
        let result = self.call("segment", json!({ "text": text }))?;
        let arr = result
            .as_array()
            .ok_or_else(|| Error::Adapter("segment: result is not an array".into()))?;
        arr.iter()
            .map(|item| {
                let text = item
                    .get("text")
                    .and_then(Value::as_str)
                    .ok_or_else(|| Error::Adapter("segment: missing text".into()))?;
                let start = item.get("start").and_then(Value::as_u64);
                let end = item.get("end").and_then(Value::as_u64);
                match (start, end) {
                    (Some(a), Some(b)) => Ok((text.to_string(), (a as usize, b as usize))),
                    _ => Err(Error::Adapter("segment: missing span".into())),
                }
            })
            .collect()
    }
}

impl Ner for HttpAdapters {
    fn id(&self) -> &str {
        &self.id
    }

    fn extract(&self, sentence: &str) -> Result<Vec<String>> {
        let result = self.call("ner", json!({ "sentence": sentence }))?;
        let arr = result
            .as_array()
            .ok_or_else(|| Error::Adapter("ner: result is not an array".into()))?;
        arr.iter()
            .map(|x| expect_str(x, "ner"))
            .collect()
    }
}

impl TimeExtractor for HttpAdapters {
    fn id(&self) -> &str {
        &self.id
    }

    fn extract_time(&self, text: &str) -> Result<Option<String>> {
        let result = self.call("extract_time", json!({ "text": text }))?;
        let s = expect_str(&result, "extract_time")?;
        // The extraction prompt answers NONE for untimed text.
        if s.trim().eq_ignore_ascii_case("none") {
            Ok(None)
        } else {
            Ok(Some(s))
        }
    }
}

impl SufficiencyJudge for HttpAdapters {
    fn id(&self) -> &str {
        &self.id
    }

    fn judge(&self, question: &str, sentences: &[PresentedSentence]) -> Result<bool> {
        let result = self.call(
            "judge_sufficiency",
            json!({ "question": question, "sentences": sentences_payload(sentences) }),
        )?;
        let verdict = result
            .get("sufficient")
            .and_then(Value::as_str)
            .ok_or_else(|| {
                Error::Adapter("judge_sufficiency: missing \"sufficient\" field".into())
            })?;
        match verdict {
            "yes" => Ok(true),
            "no" => Ok(false),
            other => Err(Error::Adapter(format!(
                "judge_sufficiency: invalid verdict {other:?}"
            ))),
        }
    }
}

impl SupportJudge for HttpAdapters {
    fn id(&self) -> &str {
        &self.id
    }

    fn support(
        &self,
        question: &str,
        predicted_answer: &str,
        sentences: &[PresentedSentence],
    ) -> Result<Vec<u32>> {
        let result = self.call(
            "judge_support",
            json!({
                "question": question,
                "predicted_answer": predicted_answer,
                "sentences": sentences_payload(sentences),
            }),
        )?;
        let arr = result
            .get("support sids")
            .and_then(Value::as_array)
            .ok_or_else(|| {
                Error::Adapter("judge_support: missing \"support sids\" field".into())
            })?;
        arr.iter()
            .map(|v| match v {
                Value::Number(n) => n
                    .as_u64()
                    .map(|x| x as u32)
                    .ok_or_else(|| Error::Adapter("judge_support: invalid sid".into())),
                Value::String(s) => s
                    .parse::<u32>()
                    .map_err(|_| Error::Adapter(format!("judge_support: invalid sid {s:?}"))),
                _ => Err(Error::Adapter("judge_support: invalid sid".into())),
            })
            .collect()
    }
}

impl Rewriter for HttpAdapters {
    fn id(&self) -> &str {
        &self.id
    }

    fn rewrite(&self, question: &str) -> Result<String> {
        let result = self.call("rewrite", json!({ "question": question }))?;
        expect_str(&result, "rewrite")
    }
}

impl Generator for HttpAdapters {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, question: &str, passages: &[&str]) -> Result<String> {
        let result = self.call(
            "generate",
            json!({ "question": question, "passages": passages }),
        )?;
        expect_str(&result, "generate")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// Minimal one-shot HTTP server returning canned bodies in order.
    fn serve(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<usize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut served = 0usize;
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = [0u8; 8192];
                // Read the request head and enough of the body to unblock the client.
                let _ = stream.read(&mut buf);
                let reason = if status == 200 { "OK" } else { "ERR" };
                let resp = format!(
                    "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(resp.as_bytes()).unwrap();
                served += 1;
            }
            served
        });
        (format!("http://{addr}/"), handle)
    }

    fn cfg(url: String) -> HttpConfig {
        HttpConfig {
            base_url: url,
            api_key: None,
            timeout: Duration::from_secs(5),
            embed_dim: 2,
            max_retries: 3,
            retry_base_ms: 1,
            max_in_flight: 2,
        }
    }

    #[test]
    fn sufficiency_parses_strict_schema() {
        let (url, h) = serve(vec![(
            200,
            r#"{"ok":true,"result":{"sufficient":"yes"},"tokens":{"in":12,"out":3}}"#.into(),
        )]);
        let http = HttpAdapters::new(cfg(url)).unwrap();
        let shown = vec![PresentedSentence { id: 1, text: "s".into() }];
        assert!(http.judge("q", &shown).unwrap());
        assert_eq!(http.reported_tokens().tokens_in, 12);
        h.join().unwrap();
    }

    #[test]
    fn sufficiency_rejects_out_of_schema_verdict() {
        let (url, h) = serve(vec![(
            200,
            r#"{"ok":true,"result":{"sufficient":"maybe"}}"#.into(),
        )]);
        let http = HttpAdapters::new(cfg(url)).unwrap();
        let shown = vec![PresentedSentence { id: 1, text: "s".into() }];
        assert!(matches!(http.judge("q", &shown), Err(Error::Adapter(_))));
        h.join().unwrap();
    }

    #[test]
    fn retries_on_server_error_then_succeeds() {
        let (url, h) = serve(vec![
            (500, r#"{"ok":false}"#.into()),
            (200, r#"{"ok":true,"result":"2001"}"#.into()),
        ]);
        let http = HttpAdapters::new(cfg(url)).unwrap();
        assert_eq!(http.extract_time("in 2001").unwrap(), Some("2001".into()));
        assert_eq!(h.join().unwrap(), 2);
    }

    #[test]
    fn extract_time_maps_none() {
        let (url, h) = serve(vec![(200, r#"{"ok":true,"result":"NONE"}"#.into())]);
        let http = HttpAdapters::new(cfg(url)).unwrap();
        assert_eq!(http.extract_time("no dates here").unwrap(), None);
        h.join().unwrap();
    }

    #[test]
    fn support_accepts_string_and_numeric_sids() {
        let (url, h) = serve(vec![(
            200,
            r#"{"ok":true,"result":{"support sids":["3",5]}}"#.into(),
        )]);
        let http = HttpAdapters::new(cfg(url)).unwrap();
        let shown = vec![
            PresentedSentence { id: 3, text: "a".into() },
            PresentedSentence { id: 5, text: "b".into() },
        ];
        assert_eq!(http.support("q", "ans", &shown).unwrap(), vec![3, 5]);
        h.join().unwrap();
    }

    #[test]
    fn backend_reported_error_is_adapter_failure() {
        let (url, h) = serve(vec![(
            200,
            r#"{"ok":false,"error":"model unavailable"}"#.into(),
        )]);
        let http = HttpAdapters::new(cfg(url)).unwrap();
        let err = http.rewrite("q").unwrap_err();
        assert!(matches!(err, Error::Adapter(_)), "{err}");
        h.join().unwrap();
    }
}
