//! Scorer backed by an OpenAI-compatible chat-completions endpoint.
//!
//! Severity requests ask for a one-token answer with `top_logprobs`, and the
//! log-probabilities of the five category tokens become the category logits.
//! Box requests ask for a JSON array of normalized boxes in the reply text.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::cache::ResponseCache;
use super::{
    restricted_softmax, retain_valid_boxes, BBox, CategoryLogits, PatchIndex, Scorer, Severity,
    SeverityDistribution, NUM_CATEGORIES,
};
use crate::error::{Error, Result};
use crate::image::io::{encode_png, BitDepth};
use crate::image::ImageF;

/// Environment variable holding the bearer token for the remote endpoint.
pub const API_KEY_ENV: &str = "FUMO_API_KEY";

/// Logit assigned to categories absent from the returned top-k, relative to the smallest observed.
const MISSING_LOGIT_OFFSET: f64 = 10.0;

const DEFAULT_SEVERITY_PROMPT: &str = "You are inspecting a photo taken through glass. \
Rate how strongly reflections from the glass degrade this image patch. \
Answer with exactly one word from: None, Minor, Mid, Major, Critical.";

const DEFAULT_BOXES_PROMPT: &str = "You are inspecting a photo taken through glass. \
Find the regions dominated by reflections from the glass. Reply with only a JSON array \
of boxes in normalized image coordinates, each {\"x0\": .., \"y0\": .., \"x1\": .., \"y1\": ..} \
with 0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1. Reply [] if there are none.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerConfig {
    pub endpoint_url: String,
    pub model_name: String,
    /// Softmax temperature applied to the category logits.
    pub temperature: f64,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub cache_path: Option<PathBuf>,
    pub top_logprobs: u8,
    pub severity_prompt: String,
    pub boxes_prompt: String,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "https://api.openai.com/v1/chat/completions".to_string(),
            model_name: "gpt-4o-mini".to_string(),
            temperature: 1.0,
            timeout_secs: 60,
            max_in_flight: 4,
            cache_path: None,
            top_logprobs: 20,
            severity_prompt: DEFAULT_SEVERITY_PROMPT.to_string(),
            boxes_prompt: DEFAULT_BOXES_PROMPT.to_string(),
        }
    }
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::invalid(format!(
                "scorer temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.max_in_flight < 1 {
            return Err(Error::invalid("max_in_flight must be at least 1"));
        }
        if self.endpoint_url.is_empty() {
            return Err(Error::invalid("endpoint_url is empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: usize,
    /// Delay before the second attempt; doubles for each later one.
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

/// Counting semaphore bounding concurrent HTTP requests.
struct Slots {
    free: Mutex<usize>,
    cond: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cond: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cond.wait(free).unwrap();
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cond.notify_one();
    }
}

pub struct RemoteScorer {
    cfg: ScorerConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    retry: RetryPolicy,
    cache: Option<ResponseCache>,
    slots: Slots,
    sent: AtomicUsize,
}

impl RemoteScorer {
    pub fn new(cfg: ScorerConfig, api_key: Option<String>) -> Result<Self> {
        cfg.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs.max(1))))
            .http_status_as_error(true)
            .build()
            .into();
        let cache = cfg.cache_path.as_ref().map(ResponseCache::open).transpose()?;
        Ok(Self {
            slots: Slots::new(cfg.max_in_flight),
            cfg,
            api_key,
            agent,
            retry: RetryPolicy::default(),
            cache,
            sent: AtomicUsize::new(0),
        })
    }

    /// Builds a scorer whose API key comes from [`API_KEY_ENV`]; a missing key is an error.
    pub fn from_env(cfg: ScorerConfig) -> Result<Self> {
        match std::env::var(API_KEY_ENV) {
            Ok(key) if !key.is_empty() => Self::new(cfg, Some(key)),
            _ => Err(Error::ScorerUnavailable {
                endpoint: cfg.endpoint_url.clone(),
                reason: format!("{API_KEY_ENV} is not set"),
            }),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn config(&self) -> &ScorerConfig {
        &self.cfg
    }

    /// Number of HTTP requests attempted so far, including retries.
    pub fn requests_sent(&self) -> usize {
        self.sent.load(Ordering::SeqCst)
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_ref()
    }

    fn request_body(&self, prompt: &str, png: &[u8], want_logprobs: bool) -> Value {
        let data_url = format!(
            "data:image/png;base64,{}",
            base64::engine::general_purpose::STANDARD.encode(png)
        );
        let mut body = json!({
            "model": self.cfg.model_name,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": prompt},
                    {"type": "image_url", "image_url": {"url": data_url}}
                ]
            }],
            "temperature": 0,
        });
        if want_logprobs {
            body["max_tokens"] = json!(1);
            body["logprobs"] = json!(true);
            body["top_logprobs"] = json!(self.cfg.top_logprobs);
        }
        body
    }

    fn post(&self, body: &Value) -> Result<Value> {
        let _slot = self.slots.acquire();
        let mut last_error = String::from("no attempts made");
        for attempt in 0..self.retry.attempts.max(1) {
            if attempt > 0 {
                thread::sleep(self.retry.initial_backoff * (1u32 << (attempt - 1)));
            }
            self.sent.fetch_add(1, Ordering::SeqCst);
            match self.post_once(body) {
                Ok(text) => {
                    return serde_json::from_str(&text)
                        .map_err(|e| Error::Protocol(format!("response is not JSON: {e}")));
                }
                Err(e) => {
                    log::warn!(
                        "{} attempt {}/{} failed: {e}",
                        self.cfg.endpoint_url,
                        attempt + 1,
                        self.retry.attempts
                    );
                    last_error = e;
                }
            }
        }
        Err(Error::ScorerUnavailable {
            endpoint: self.cfg.endpoint_url.clone(),
            reason: last_error,
        })
    }

    fn post_once(&self, body: &Value) -> std::result::Result<String, String> {
        let mut req = self.agent.post(&self.cfg.endpoint_url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let resp = req.send_json(body).map_err(|e| e.to_string())?;
        resp.into_body().read_to_string().map_err(|e| e.to_string())
    }

    fn patch_logits(&self, patch: &ImageF) -> Result<CategoryLogits> {
        let png = encode_png(patch, BitDepth::Eight)?;
        let prompt = &self.cfg.severity_prompt;
        let key = ResponseCache::key(&png, prompt, &self.cfg.model_name);
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.logits(&key)) {
            return CategoryLogits::new(hit);
        }
        let resp = self.post(&self.request_body(prompt, &png, true))?;
        let logits = category_logits_from_response(&resp)?;
        if let Some(cache) = &self.cache {
            cache.put_logits(&key, *logits.values())?;
        }
        Ok(logits)
    }
}

impl Scorer for RemoteScorer {
    fn score_patch(&self, patch: &ImageF, _at: PatchIndex) -> Result<SeverityDistribution> {
        restricted_softmax(&self.patch_logits(patch)?, self.cfg.temperature)
    }

    fn detect_reflection_boxes(&self, img: &ImageF) -> Result<Vec<BBox>> {
        let png = encode_png(img, BitDepth::Eight)?;
        let prompt = &self.cfg.boxes_prompt;
        let key = ResponseCache::key(&png, prompt, &self.cfg.model_name);
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.boxes(&key)) {
            return Ok(hit);
        }
        let resp = self.post(&self.request_body(prompt, &png, false))?;
        let text = resp
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Protocol("response has no message content".into()))?;
        let boxes = parse_boxes(text);
        if let Some(cache) = &self.cache {
            cache.put_boxes(&key, &boxes)?;
        }
        Ok(boxes)
    }

    fn describe(&self) -> String {
        format!("remote({} @ {})", self.cfg.model_name, self.cfg.endpoint_url)
    }
}

fn normalize_token(token: &str) -> String {
    token
        .trim()
        .trim_matches(|c: char| c.is_ascii_punctuation())
        .to_lowercase()
}

/// Category matched by a generated token: exact name, or an unambiguous prefix of one.
fn match_category(token: &str) -> Option<Severity> {
    let t = normalize_token(token);
    if t.is_empty() {
        return None;
    }
    if let Some(c) = Severity::ALL.iter().find(|c| c.name().to_lowercase() == t) {
        return Some(*c);
    }
    if t.len() < 2 {
        return None;
    }
    let mut hits = Severity::ALL
        .iter()
        .filter(|c| c.name().to_lowercase().starts_with(&t));
    match (hits.next(), hits.next()) {
        (Some(c), None) => Some(*c),
        _ => None,
    }
}

/// Extracts the five category logits from the first generated token's top log-probabilities.
pub(crate) fn category_logits_from_response(resp: &Value) -> Result<CategoryLogits> {
    let first = resp
        .pointer("/choices/0/logprobs/content/0")
        .ok_or_else(|| Error::Protocol("response carries no token log-probabilities".into()))?;
    let mut entries = vec![first];
    if let Some(top) = first.get("top_logprobs") {
        let top = top
            .as_array()
            .ok_or_else(|| Error::Protocol("top_logprobs is not an array".into()))?;
        entries.extend(top);
    }
    let candidates = entries
        .into_iter()
        .map(|entry| {
            let token = entry.get("token").and_then(Value::as_str);
            let logprob = entry.get("logprob").and_then(Value::as_f64);
            match (token, logprob) {
                (Some(t), Some(lp)) if lp.is_finite() => Ok((t, lp)),
                _ => Err(Error::Protocol(format!("malformed logprob entry {entry}"))),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut logits = [f64::NEG_INFINITY; NUM_CATEGORIES];
    for (token, lp) in &candidates {
        if let Some(c) = match_category(token) {
            let slot = &mut logits[c.index()];
            *slot = slot.max(*lp);
        }
    }
    if logits.iter().all(|l| l.is_infinite()) {
        return Err(Error::Protocol(
            "no severity category among the returned tokens".into(),
        ));
    }
    let floor = candidates
        .iter()
        .map(|(_, lp)| *lp)
        .fold(f64::INFINITY, f64::min)
        - MISSING_LOGIT_OFFSET;
    for l in logits.iter_mut().filter(|l| l.is_infinite()) {
        *l = floor;
    }
    CategoryLogits::new(logits)
}

/// Parses a JSON array of boxes out of free-form reply text.
///
/// Entries may be objects with `x0, y0, x1, y1` or four-element arrays.
/// Anything unparseable yields an empty list; invalid boxes are dropped.
pub(crate) fn parse_boxes(text: &str) -> Vec<BBox> {
    let span = match (text.find('['), text.rfind(']')) {
        (Some(a), Some(b)) if a < b => &text[a..=b],
        _ => {
            log::warn!("box reply contains no JSON array: {text:?}");
            return Vec::new();
        }
    };
    let items: Vec<Value> = match serde_json::from_str(span) {
        Ok(v) => v,
        Err(e) => {
            log::warn!("box reply is not a JSON array ({e}): {span:?}");
            return Vec::new();
        }
    };
    let boxes = items
        .iter()
        .filter_map(|item| {
            let coords: Option<[f64; 4]> = match item {
                Value::Object(o) => Some([
                    o.get("x0")?.as_f64()?,
                    o.get("y0")?.as_f64()?,
                    o.get("x1")?.as_f64()?,
                    o.get("y1")?.as_f64()?,
                ]),
                Value::Array(a) if a.len() == 4 => Some([
                    a[0].as_f64()?,
                    a[1].as_f64()?,
                    a[2].as_f64()?,
                    a[3].as_f64()?,
                ]),
                _ => None,
            };
            coords.map(|[x0, y0, x1, y1]| BBox { x0, y0, x1, y1 })
        })
        .collect();
    retain_valid_boxes(boxes, "remote")
}
