//! HTTP access shared by the registry and repository clients: live
//! transport with retries and per-host rate limiting, fixture replay and
//! recording, and a per-run response cache.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fixtures::{FixtureStore, RecordedResponse, RequestKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Live,
    Offline,
    /// Live requests whose responses are written to the fixture store.
    Record,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "live" => Ok(Mode::Live),
            "offline" => Ok(Mode::Offline),
            "record" => Ok(Mode::Record),
            other => Err(format!("unknown mode `{other}` (expected live, offline or record)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Live => "live",
            Mode::Offline => "offline",
            Mode::Record => "record",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FetchError {
    #[error("network error for {url}: {message}")]
    Network { url: String, message: String },
    #[error("no fixture recorded for {key}")]
    FixtureMissing { key: String },
    #[error("rate limited by {host}{}", retry_after.map(|s| format!(", retry after {s}s")).unwrap_or_default())]
    RateLimited { host: String, retry_after: Option<u64> },
    #[error("fixture store: {0}")]
    Store(String),
}

pub type Response = RecordedResponse;

pub trait Transport: Send + Sync {
    fn get(&self, url: &str, headers: &[(String, String)]) -> Result<Response, FetchError>;
}

/// Headers worth keeping in recorded fixtures.
const KEPT_HEADERS: &[&str] = &["retry-after", "x-ratelimit-remaining", "x-ratelimit-reset", "location"];

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .user_agent(concat!("chainsmell/", env!("CARGO_PKG_VERSION")))
            .build();
        UreqTransport {
            agent: ureq::Agent::new_with_config(config),
        }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(30))
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &str, headers: &[(String, String)]) -> Result<Response, FetchError> {
        let mut request = self.agent.get(url);
        for (name, value) in headers {
            request = request.header(name.as_str(), value.as_str());
        }
        let mut response = request.call().map_err(|e| FetchError::Network {
            url: url.to_string(),
            message: e.to_string(),
        })?;
        let status = response.status().as_u16();
        let kept = response
            .headers()
            .iter()
            .filter(|(name, _)| KEPT_HEADERS.contains(&name.as_str()))
            .filter_map(|(name, value)| Some((name.as_str().to_string(), value.to_str().ok()?.to_string())))
            .collect();
        let body = response
            .body_mut()
            .with_config()
            .limit(64 * 1024 * 1024)
            .read_to_vec()
            .map_err(|e| FetchError::Network {
                url: url.to_string(),
                message: e.to_string(),
            })?;
        Ok(Response {
            status,
            headers: kept,
            body,
        })
    }
}

fn host_of(url: &str) -> String {
    url::Url::parse(url)
        .ok()
        .and_then(|u| u.host_str().map(str::to_string))
        .unwrap_or_default()
}

/// Token bucket per host.
#[derive(Debug)]
pub struct RateLimiter {
    per_second: f64,
    burst: f64,
    buckets: Mutex<HashMap<String, (f64, Instant)>>,
}

impl RateLimiter {
    pub fn new(per_second: f64, burst: u32) -> Self {
        RateLimiter {
            per_second,
            burst: f64::from(burst.max(1)),
            buckets: Mutex::new(HashMap::new()),
        }
    }

    /// Takes one token for `host`; returns how long the caller must wait
    /// before sending.
    pub fn reserve(&self, host: &str) -> Duration {
        let now = Instant::now();
        let mut buckets = self.buckets.lock().unwrap();
        let (tokens, last) = buckets.entry(host.to_string()).or_insert((self.burst, now));
        let refill = now.saturating_duration_since(*last).as_secs_f64() * self.per_second;
        *tokens = (*tokens + refill).min(self.burst) - 1.0;
        *last = now;
        if *tokens >= 0.0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(-*tokens / self.per_second)
        }
    }
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
    /// Upper bound on any single wait, including server-requested ones.
    pub max_wait: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
            max_wait: Duration::from_secs(60),
        }
    }
}

fn is_rate_limited(resp: &Response) -> bool {
    resp.status == 429
        || (resp.status == 403
            && resp
                .headers
                .get("x-ratelimit-remaining")
                .is_some_and(|v| v.trim() == "0"))
}

fn retry_after(resp: &Response) -> Option<u64> {
    resp.headers.get("retry-after").and_then(|v| v.trim().parse().ok())
}

/// Live transport wrapper applying the retry policy and the shared rate
/// limiter.
pub struct PoliteTransport<T> {
    inner: T,
    policy: RetryPolicy,
    limiter: Arc<RateLimiter>,
    sleep: Box<dyn Fn(Duration) + Send + Sync>,
}

impl<T: Transport> PoliteTransport<T> {
    pub fn new(inner: T, policy: RetryPolicy, limiter: Arc<RateLimiter>) -> Self {
        PoliteTransport {
            inner,
            policy,
            limiter,
            sleep: Box::new(std::thread::sleep),
        }
    }

    pub fn with_sleep(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Box::new(sleep);
        self
    }
}

impl<T: Transport> Transport for PoliteTransport<T> {
    fn get(&self, url: &str, headers: &[(String, String)]) -> Result<Response, FetchError> {
        let host = host_of(url);
        let mut backoff = self.policy.initial_backoff;
        let attempts = self.policy.attempts.max(1);
        for attempt in 1..=attempts {
            let wait = self.limiter.reserve(&host);
            if !wait.is_zero() {
                (self.sleep)(wait);
            }
            let last = attempt == attempts;
            match self.inner.get(url, headers) {
                Ok(resp) if is_rate_limited(&resp) => {
                    let after = retry_after(&resp);
                    if last {
                        return Err(FetchError::RateLimited {
                            host,
                            retry_after: after,
                        });
                    }
                    let wait = after.map_or(backoff, Duration::from_secs);
                    (self.sleep)(wait.min(self.policy.max_wait));
                }
                Ok(resp) if resp.status >= 500 && !last => {
                    let wait = retry_after(&resp).map_or(backoff, Duration::from_secs);
                    (self.sleep)(wait.min(self.policy.max_wait));
                }
                Ok(resp) => return Ok(resp),
                Err(FetchError::Network { .. }) if !last => {
                    (self.sleep)(backoff.min(self.policy.max_wait));
                }
                Err(e) => return Err(e),
            }
            backoff *= 2;
        }
        unreachable!("loop returns on the last attempt")
    }
}

type Slot = Arc<OnceLock<Result<Response, FetchError>>>;

/// Mode-aware, caching front door for all outgoing requests of one run.
pub struct Fetcher {
    mode: Mode,
    transport: Option<Box<dyn Transport>>,
    store: Option<FixtureStore>,
    cache: Mutex<HashMap<RequestKey, Slot>>,
    sent: AtomicUsize,
}

impl Fetcher {
    pub fn offline(store: FixtureStore) -> Self {
        Fetcher {
            mode: Mode::Offline,
            transport: None,
            store: Some(store),
            cache: Mutex::new(HashMap::new()),
            sent: AtomicUsize::new(0),
        }
    }

    pub fn live(transport: impl Transport + 'static) -> Self {
        Fetcher {
            mode: Mode::Live,
            transport: Some(Box::new(transport)),
            store: None,
            cache: Mutex::new(HashMap::new()),
            sent: AtomicUsize::new(0),
        }
    }

    pub fn recording(transport: impl Transport + 'static, store: FixtureStore) -> Self {
        Fetcher {
            mode: Mode::Record,
            transport: Some(Box::new(transport)),
            store: Some(store),
            cache: Mutex::new(HashMap::new()),
            sent: AtomicUsize::new(0),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Requests actually sent over the transport or read from fixtures
    /// (cache hits excluded).
    pub fn requests_sent(&self) -> usize {
        self.sent.load(Ordering::SeqCst)
    }

    /// Fetches `url`, memoized on `key` for the lifetime of this fetcher.
    pub fn get(&self, key: &RequestKey, url: &str, headers: &[(String, String)]) -> Result<Response, FetchError> {
        let slot = {
            let mut cache = self.cache.lock().unwrap();
            Arc::clone(cache.entry(key.clone()).or_default())
        };
        slot.get_or_init(|| {
            self.sent.fetch_add(1, Ordering::SeqCst);
            self.fetch_uncached(key, url, headers)
        })
        .clone()
    }

    fn fetch_uncached(
        &self,
        key: &RequestKey,
        url: &str,
        headers: &[(String, String)],
    ) -> Result<Response, FetchError> {
        match self.mode {
            Mode::Offline => {
                let store = self.store.as_ref().expect("offline fetcher has a store");
                store
                    .load(key)
                    .map_err(|e| FetchError::Store(e.to_string()))?
                    .ok_or_else(|| FetchError::FixtureMissing { key: key.to_string() })
            }
            Mode::Live | Mode::Record => {
                let transport = self.transport.as_ref().expect("live fetcher has a transport");
                let resp = transport.get(url, headers)?;
                if let (Mode::Record, Some(store)) = (self.mode, &self.store) {
                    store.save(key, &resp).map_err(|e| FetchError::Store(e.to_string()))?;
                }
                Ok(resp)
            }
        }
    }
}

/// Ordered record of the requests made while collecting one package's facts.
#[derive(Debug, Default, Clone)]
pub struct RequestLog {
    lines: Vec<String>,
    requests: usize,
}

impl RequestLog {
    pub fn record(&mut self, key: &RequestKey, outcome: &Result<Response, FetchError>) {
        let result = match outcome {
            Ok(resp) => resp.status.to_string(),
            Err(e) => format!("error: {e}"),
        };
        self.lines.push(format!("{key} -> {result}"));
        self.requests += 1;
    }

    /// Number of recorded requests, notes excluded.
    pub fn requests(&self) -> usize {
        self.requests
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn extend(&mut self, other: RequestLog) {
        self.requests += other.requests;
        self.lines.extend(other.lines);
    }

    /// `sha256:<hex>` over the newline-joined log.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for line in &self.lines {
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
        }
        format!("sha256:{}", hex::encode(hasher.finalize()))
    }
}

/// Convenience: fetch and log in one step.
pub fn fetch_logged(
    fetcher: &Fetcher,
    log: &mut RequestLog,
    key: &RequestKey,
    url: &str,
    headers: &[(String, String)],
) -> Result<Response, FetchError> {
    let outcome = fetcher.get(key, url, headers);
    log.record(key, &outcome);
    outcome
}

pub fn bearer(token: Option<&str>) -> Vec<(String, String)> {
    token
        .filter(|t| !t.is_empty())
        .map(|t| vec![("authorization".to_string(), format!("Bearer {t}"))])
        .unwrap_or_default()
}

pub fn headers(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    struct Scripted {
        responses: Mutex<Vec<Result<Response, FetchError>>>,
        calls: AtomicU32,
    }

    impl Scripted {
        fn new(mut responses: Vec<Result<Response, FetchError>>) -> Self {
            responses.reverse();
            Scripted {
                responses: Mutex::new(responses),
                calls: AtomicU32::new(0),
            }
        }
    }

    impl Transport for Scripted {
        fn get(&self, _url: &str, _h: &[(String, String)]) -> Result<Response, FetchError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.responses.lock().unwrap().pop().expect("script exhausted")
        }
    }

    impl Transport for Arc<Scripted> {
        fn get(&self, url: &str, h: &[(String, String)]) -> Result<Response, FetchError> {
            self.as_ref().get(url, h)
        }
    }

    fn status(code: u16, headers: &[(&str, &str)]) -> Result<Response, FetchError> {
        Ok(Response {
            status: code,
            headers: headers.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            body: Vec::new(),
        })
    }

    fn polite(script: Arc<Scripted>, waits: Arc<Mutex<Vec<Duration>>>) -> PoliteTransport<Arc<Scripted>> {
        PoliteTransport::new(script, RetryPolicy::default(), Arc::new(RateLimiter::new(1000.0, 100)))
            .with_sleep(move |d| waits.lock().unwrap().push(d))
    }

    #[test]
    fn retries_with_exponential_backoff() {
        let script = Arc::new(Scripted::new(vec![
            Err(FetchError::Network {
                url: "u".into(),
                message: "reset".into(),
            }),
            status(503, &[]),
            status(200, &[]),
        ]));
        let waits = Arc::new(Mutex::new(Vec::new()));
        let t = polite(Arc::clone(&script), Arc::clone(&waits));
        assert_eq!(t.get("https://registry.npmjs.org/x", &[]).unwrap().status, 200);
        assert_eq!(script.calls.load(Ordering::SeqCst), 3);
        assert_eq!(
            *waits.lock().unwrap(),
            vec![Duration::from_secs(1), Duration::from_secs(2)]
        );
    }

    #[test]
    fn honors_retry_after_and_surfaces_rate_limit() {
        let script = Arc::new(Scripted::new(vec![
            status(429, &[("retry-after", "7")]),
            status(429, &[("retry-after", "7")]),
            status(403, &[("x-ratelimit-remaining", "0"), ("retry-after", "30")]),
        ]));
        let waits = Arc::new(Mutex::new(Vec::new()));
        let t = polite(Arc::clone(&script), Arc::clone(&waits));
        let err = t.get("https://api.github.com/repos/a/b", &[]).unwrap_err();
        assert_eq!(
            err,
            FetchError::RateLimited {
                host: "api.github.com".into(),
                retry_after: Some(30)
            }
        );
        assert_eq!(
            *waits.lock().unwrap(),
            vec![Duration::from_secs(7), Duration::from_secs(7)]
        );
    }

    #[test]
    fn client_errors_are_not_retried() {
        let script = Arc::new(Scripted::new(vec![status(404, &[])]));
        let waits = Arc::new(Mutex::new(Vec::new()));
        let t = polite(Arc::clone(&script), waits);
        assert_eq!(t.get("https://x.org/", &[]).unwrap().status, 404);
        assert_eq!(script.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn cache_serves_repeat_requests() {
        let script = Arc::new(Scripted::new(vec![status(200, &[])]));
        let fetcher = Fetcher::live(Arc::clone(&script));
        let key = RequestKey::new("npm", "a", "1.0.0", "manifest");
        let first = fetcher.get(&key, "https://registry.npmjs.org/a/1.0.0", &[]);
        let second = fetcher.get(&key, "https://registry.npmjs.org/a/1.0.0", &[]);
        assert_eq!(first, second);
        assert_eq!(fetcher.requests_sent(), 1);
        assert_eq!(script.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn offline_missing_fixture_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let fetcher = Fetcher::offline(FixtureStore::new(dir.path()));
        let key = RequestKey::new("npm", "a", "1.0.0", "manifest");
        assert!(matches!(
            fetcher.get(&key, "https://registry.npmjs.org/a/1.0.0", &[]),
            Err(FetchError::FixtureMissing { .. })
        ));
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let store = FixtureStore::new(dir.path());
        let script = Arc::new(Scripted::new(vec![status(410, &[("retry-after", "1")])]));
        let key = RequestKey::new("github", "a/b", "-", "repo");
        let recorder = Fetcher::recording(Arc::clone(&script), store.clone());
        let live = recorder.get(&key, "https://api.github.com/repos/a/b", &[]).unwrap();
        let replay = Fetcher::offline(store);
        assert_eq!(replay.get(&key, "ignored", &[]).unwrap(), live);
    }

    #[test]
    fn limiter_delays_after_burst() {
        let limiter = RateLimiter::new(1.0, 2);
        assert_eq!(limiter.reserve("h"), Duration::ZERO);
        assert_eq!(limiter.reserve("h"), Duration::ZERO);
        assert!(limiter.reserve("h") > Duration::from_millis(500));
        assert_eq!(limiter.reserve("other"), Duration::ZERO);
    }
}
