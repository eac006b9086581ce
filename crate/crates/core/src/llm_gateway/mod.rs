//! Uniform chat-completion and embedding interface.
//!
//! [`Gateway`] wraps a [`Backend`] (live HTTP or the deterministic mock) and
//! adds the retry policy, the in-flight call limit, the cumulative token
//! budget and usage accounting. It is `Sync`; share it by reference across
//! worker threads.

mod live;
mod mock;

pub use live::{LiveBackend, LiveConfig};
pub use mock::{MockBackend, DEFAULT_MOCK_DIMENSION};

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("network error: {0}")]
    Network(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("token budget exceeded: used {used} of {cap}")]
    BudgetExceeded { used: u64, cap: u64 },
    #[error("embedding dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("http status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("fixture error: {0}")]
    Fixture(String),
}

impl GatewayError {
    fn retryable(&self) -> bool {
        matches!(self, GatewayError::Network(_) | GatewayError::MalformedResponse(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResponseFormat {
    #[default]
    FreeText,
    JsonObject,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub prompt_text: String,
    pub max_output_tokens: u32,
    pub temperature: f32,
    pub response_format: ResponseFormat,
}

impl ChatRequest {
    pub fn new(prompt_text: impl Into<String>) -> Result<Self, GatewayError> {
        let prompt_text = prompt_text.into();
        if prompt_text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("prompt_text is empty".into()));
        }
        Ok(Self {
            prompt_text,
            max_output_tokens: 1024,
            temperature: 0.0,
            response_format: ResponseFormat::FreeText,
        })
    }

    pub fn json(mut self) -> Self {
        self.response_format = ResponseFormat::JsonObject;
        self
    }

    pub fn max_output_tokens(mut self, n: u32) -> Result<Self, GatewayError> {
        if n == 0 {
            return Err(GatewayError::InvalidRequest("max_output_tokens must be >= 1".into()));
        }
        self.max_output_tokens = n;
        Ok(self)
    }

    pub fn temperature(mut self, t: f32) -> Result<Self, GatewayError> {
        if !(0.0..=2.0).contains(&t) {
            return Err(GatewayError::InvalidRequest(format!("temperature {t} outside [0, 2]")));
        }
        self.temperature = t;
        Ok(self)
    }
}

/// Token counters for one call or an accumulated run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

impl std::ops::Add for TokenUsage {
    type Output = TokenUsage;
    fn add(self, rhs: Self) -> Self {
        TokenUsage {
            prompt_tokens: self.prompt_tokens + rhs.prompt_tokens,
            completion_tokens: self.completion_tokens + rhs.completion_tokens,
        }
    }
}

impl std::ops::AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for TokenUsage {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(TokenUsage::default(), |a, b| a + b)
    }
}

/// Unit-normalized embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    /// Normalizes `values` to unit L2 norm. Fails on empty or zero vectors.
    pub fn new(values: Vec<f32>) -> Result<Self, GatewayError> {
        if values.is_empty() {
            return Err(GatewayError::MalformedResponse("empty embedding".into()));
        }
        let norm = values.iter().map(|v| (*v as f64) * (*v as f64)).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(GatewayError::MalformedResponse("embedding has zero or non-finite norm".into()));
        }
        Ok(Self {
            values: values.into_iter().map(|v| (v as f64 / norm) as f32).collect(),
        })
    }

    /// Wraps values already known to be unit length (e.g. loaded from disk).
    pub fn from_normalized(values: Vec<f32>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f32 {
        dot(&self.values, &other.values)
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}

pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
            // SAFETY: the required CPU features were detected at runtime.
            return unsafe { dot_avx2(a, b) };
        }
    }
    dot_portable(a, b)
}

#[inline(always)]
fn dot_lanes<const FUSED: bool>(a: &[f32], b: &[f32]) -> f32 {
    // independent accumulators let the compiler vectorize
    let mut acc = [0.0f32; 16];
    let ca = a.chunks_exact(16);
    let cb = b.chunks_exact(16);
    let tail: f32 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for j in 0..16 {
            acc[j] = if FUSED { x[j].mul_add(y[j], acc[j]) } else { acc[j] + x[j] * y[j] };
        }
    }
    acc.iter().sum::<f32>() + tail
}

fn dot_portable(a: &[f32], b: &[f32]) -> f32 {
    dot_lanes::<false>(a, b)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn dot_avx2(a: &[f32], b: &[f32]) -> f32 {
    dot_lanes::<true>(a, b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub usage: TokenUsage,
}

/// A chat/embedding provider. Implementations perform a single attempt;
/// retries live in [`Gateway`].
pub trait Backend: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
    /// Raw vectors, one per input, in input order.
    fn embed(&self, texts: &[String]) -> Result<(Vec<Vec<f32>>, u64), GatewayError>;
    /// Number of network operations this backend has attempted.
    fn network_operations(&self) -> u64 {
        0
    }
    fn name(&self) -> &'static str;
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    /// Total attempts per call, including the first.
    pub attempts: u32,
    pub backoff_base: Duration,
    pub max_in_flight: usize,
    /// Cumulative chat token cap; `None` for unlimited.
    pub token_budget: Option<u64>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            attempts: 3,
            backoff_base: Duration::from_secs(1),
            max_in_flight: 10,
            token_budget: None,
        }
    }
}

struct Semaphore {
    available: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self { available: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut guard = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *guard == 0 {
            guard = self.cv.wait(guard).unwrap_or_else(|e| e.into_inner());
        }
        *guard -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut guard = self.0.available.lock().unwrap_or_else(|e| e.into_inner());
        *guard += 1;
        self.0.cv.notify_one();
    }
}

/// Snapshot of the gateway's counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GatewayStats {
    pub chat_calls: u64,
    pub embed_calls: u64,
    pub usage: TokenUsage,
    pub embedding_tokens: u64,
    pub network_operations: u64,
}

pub struct Gateway {
    backend: Box<dyn Backend>,
    config: GatewayConfig,
    permits: Semaphore,
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
    embedding_tokens: AtomicU64,
    chat_calls: AtomicU64,
    embed_calls: AtomicU64,
    dimension: AtomicUsize,
}

impl Gateway {
    pub fn new(backend: Box<dyn Backend>, config: GatewayConfig) -> Self {
        let permits = Semaphore::new(config.max_in_flight);
        Self {
            backend,
            config,
            permits,
            prompt_tokens: AtomicU64::new(0),
            completion_tokens: AtomicU64::new(0),
            embedding_tokens: AtomicU64::new(0),
            chat_calls: AtomicU64::new(0),
            embed_calls: AtomicU64::new(0),
            dimension: AtomicUsize::new(0),
        }
    }

    /// Mock-backed gateway with default settings.
    pub fn mock(backend: MockBackend) -> Self {
        Self::new(Box::new(backend), GatewayConfig::default())
    }

    pub fn backend_name(&self) -> &'static str {
        self.backend.name()
    }

    pub fn max_in_flight(&self) -> usize {
        self.config.max_in_flight.max(1)
    }

    pub fn usage(&self) -> TokenUsage {
        TokenUsage {
            prompt_tokens: self.prompt_tokens.load(Ordering::SeqCst),
            completion_tokens: self.completion_tokens.load(Ordering::SeqCst),
        }
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            chat_calls: self.chat_calls.load(Ordering::SeqCst),
            embed_calls: self.embed_calls.load(Ordering::SeqCst),
            usage: self.usage(),
            embedding_tokens: self.embedding_tokens.load(Ordering::SeqCst),
            network_operations: self.backend.network_operations(),
        }
    }

    fn check_budget(&self) -> Result<(), GatewayError> {
        if let Some(cap) = self.config.token_budget {
            let used = self.usage().total();
            if used >= cap {
                return Err(GatewayError::BudgetExceeded { used, cap });
            }
        }
        Ok(())
    }

    fn record(&self, usage: TokenUsage) {
        self.prompt_tokens.fetch_add(usage.prompt_tokens, Ordering::SeqCst);
        self.completion_tokens.fetch_add(usage.completion_tokens, Ordering::SeqCst);
    }

    fn backoff(&self, attempt: u32) {
        let delay = self.config.backoff_base.saturating_mul(1u32 << attempt.min(16));
        if !delay.is_zero() {
            std::thread::sleep(delay);
        }
    }

    /// One chat completion with retries. The returned usage covers every
    /// attempt, including discarded malformed responses.
    pub fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.check_budget()?;
        let _permit = self.permits.acquire();
        let attempts = self.config.attempts.max(1);
        let mut usage = TokenUsage::default();
        let mut last_err = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                self.backoff(attempt - 1);
            }
            self.chat_calls.fetch_add(1, Ordering::SeqCst);
            match self.backend.chat(request) {
                Ok(resp) => {
                    self.record(resp.usage);
                    usage += resp.usage;
                    match validate(request, &resp.text) {
                        Ok(()) => return Ok(ChatResponse { text: resp.text, usage }),
                        Err(e) => last_err = Some(e),
                    }
                }
                Err(e) if e.retryable() => last_err = Some(e),
                Err(e) => return Err(e),
            }
            log::debug!("chat attempt {} failed: {:?}", attempt + 1, last_err);
        }
        Err(last_err.unwrap_or_else(|| GatewayError::Network("no attempts made".into())))
    }

    /// Embeds every text; vectors come back unit-normalized.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::InvalidRequest("no texts to embed".into()));
        }
        if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(GatewayError::InvalidRequest(format!("text {i} is empty")));
        }
        let _permit = self.permits.acquire();
        let attempts = self.config.attempts.max(1);
        let mut last_err = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                self.backoff(attempt - 1);
            }
            self.embed_calls.fetch_add(1, Ordering::SeqCst);
            match self.backend.embed(texts) {
                Ok((raw, tokens)) => {
                    self.embedding_tokens.fetch_add(tokens, Ordering::SeqCst);
                    return self.finish_embeddings(texts.len(), raw);
                }
                Err(e) if e.retryable() => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last_err.unwrap_or_else(|| GatewayError::Network("no attempts made".into())))
    }

    fn finish_embeddings(
        &self,
        expected: usize,
        raw: Vec<Vec<f32>>,
    ) -> Result<Vec<EmbeddingVector>, GatewayError> {
        if raw.len() != expected {
            return Err(GatewayError::MalformedResponse(format!(
                "expected {expected} embeddings, got {}",
                raw.len()
            )));
        }
        let dim = raw[0].len();
        for v in &raw {
            if v.len() != dim {
                return Err(GatewayError::DimensionMismatch { expected: dim, found: v.len() });
            }
        }
        match self.dimension.compare_exchange(0, dim, Ordering::SeqCst, Ordering::SeqCst) {
            Ok(_) => {}
            Err(prev) if prev == dim => {}
            Err(prev) => return Err(GatewayError::DimensionMismatch { expected: prev, found: dim }),
        }
        raw.into_iter().map(EmbeddingVector::new).collect()
    }

    /// Embeds in batches of `batch` texts.
    pub fn embed_batched(
        &self,
        texts: &[String],
        batch: usize,
    ) -> Result<Vec<EmbeddingVector>, GatewayError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(batch.max(1)) {
            out.extend(self.embed(chunk)?);
        }
        Ok(out)
    }

    /// Runs `f` over `items` on up to `max_in_flight` worker threads.
    /// Results are returned in input order.
    pub fn fan_out<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync,
    {
        let workers = self.max_in_flight().min(items.len());
        if workers <= 1 {
            return items.iter().map(&f).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= items.len() {
                        break;
                    }
                    let r = f(&items[i]);
                    *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().unwrap_or_else(|e| e.into_inner()).expect("worker filled slot"))
            .collect()
    }
}

fn validate(request: &ChatRequest, text: &str) -> Result<(), GatewayError> {
    if text.trim().is_empty() {
        return Err(GatewayError::MalformedResponse("empty completion".into()));
    }
    if request.response_format == ResponseFormat::JsonObject {
        match serde_json::from_str::<serde_json::Value>(strip_code_fence(text)) {
            Ok(serde_json::Value::Object(_)) => {}
            Ok(_) => return Err(GatewayError::MalformedResponse("JSON is not an object".into())),
            Err(e) => return Err(GatewayError::MalformedResponse(e.to_string())),
        }
    }
    Ok(())
}

/// Strips a surrounding markdown code fence, which some models add around JSON.
pub fn strip_code_fence(text: &str) -> &str {
    let t = text.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let rest = rest.trim_start_matches(|c: char| c.is_alphabetic());
        if let Some(body) = rest.trim_end().strip_suffix("```") {
            return body.trim();
        }
    }
    t
}

/// Mock accounting rule: ceil(chars / 4).
pub fn estimate_usage_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    struct Scripted {
        replies: Mutex<Vec<Result<String, GatewayError>>>,
        calls: AtomicU32,
    }

    impl Backend for Scripted {
        fn chat(&self, _r: &ChatRequest) -> Result<ChatResponse, GatewayError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let next = self.replies.lock().unwrap().remove(0);
            next.map(|text| ChatResponse {
                usage: TokenUsage { prompt_tokens: 1, completion_tokens: 2 },
                text,
            })
        }
        fn embed(&self, texts: &[String]) -> Result<(Vec<Vec<f32>>, u64), GatewayError> {
            Ok((texts.iter().enumerate().map(|(i, _)| vec![1.0; 2 + i]).collect(), 0))
        }
        fn name(&self) -> &'static str {
            "scripted"
        }
    }

    fn gateway(replies: Vec<Result<String, GatewayError>>, budget: Option<u64>) -> Gateway {
        Gateway::new(
            Box::new(Scripted { replies: Mutex::new(replies), calls: AtomicU32::new(0) }),
            GatewayConfig { backoff_base: Duration::ZERO, token_budget: budget, ..Default::default() },
        )
    }

    #[test]
    fn retries_malformed_json_then_succeeds() {
        let g = gateway(vec![Ok("not json".into()), Ok("{\"a\":1}".into())], None);
        let req = ChatRequest::new("x").unwrap().json();
        let resp = g.chat(&req).unwrap();
        assert_eq!(resp.text, "{\"a\":1}");
        // both attempts are accounted
        assert_eq!(resp.usage, TokenUsage { prompt_tokens: 2, completion_tokens: 4 });
        assert_eq!(g.usage(), resp.usage);
    }

    #[test]
    fn malformed_after_all_attempts() {
        let g = gateway(vec![Ok("[]".into()), Ok("x".into()), Ok("y".into())], None);
        let req = ChatRequest::new("x").unwrap().json();
        assert!(matches!(g.chat(&req), Err(GatewayError::MalformedResponse(_))));
        assert_eq!(g.stats().chat_calls, 3);
    }

    #[test]
    fn budget_cap() {
        let g = gateway(vec![Ok("a".into()), Ok("b".into())], Some(3));
        let req = ChatRequest::new("x").unwrap();
        g.chat(&req).unwrap();
        assert!(matches!(g.chat(&req), Err(GatewayError::BudgetExceeded { used: 3, cap: 3 })));
    }

    #[test]
    fn inconsistent_dimensions_rejected() {
        let g = gateway(vec![], None);
        let err = g.embed(&["a".to_string(), "b".to_string()]).unwrap_err();
        assert_eq!(err, GatewayError::DimensionMismatch { expected: 2, found: 3 });
    }

    #[test]
    fn request_validation() {
        assert!(ChatRequest::new("  ").is_err());
        assert!(ChatRequest::new("a").unwrap().max_output_tokens(0).is_err());
        assert!(ChatRequest::new("a").unwrap().temperature(2.5).is_err());
    }

    #[test]
    fn embedding_is_normalized() {
        let v = EmbeddingVector::new(vec![3.0, 4.0]).unwrap();
        assert!((v.values()[0] - 0.6).abs() < 1e-6);
        assert!(EmbeddingVector::new(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn fan_out_preserves_order() {
        let g = gateway(vec![], None);
        let items: Vec<u32> = (0..37).collect();
        let out = g.fan_out(&items, |x| x * 2);
        assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn strips_fence() {
        assert_eq!(strip_code_fence("```json\n{\"a\":1}\n```"), "{\"a\":1}");
    }
}
