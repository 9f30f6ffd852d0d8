use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VadError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientMode {
    Live,
    Mock,
}

/// Access to an external captioner / language model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    pub endpoint: String,
    /// Per-request timeout in seconds.
    pub timeout_secs: f64,
    pub max_in_flight: usize,
    pub retries: u32,
    /// Sleep before retry `k` is `k * retry_backoff_ms`.
    pub retry_backoff_ms: u64,
    pub mode: ClientMode,
    pub mock_seed: u64,
    pub max_tokens: u32,
    /// Recorded in provenance; defaults to the endpoint in live mode.
    pub model_name: Option<String>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            endpoint: String::new(),
            timeout_secs: 30.0,
            max_in_flight: 4,
            retries: 2,
            retry_backoff_ms: 200,
            mode: ClientMode::Mock,
            mock_seed: 0,
            max_tokens: 256,
            model_name: None,
        }
    }
}

impl ClientConfig {
    pub fn mock(seed: u64) -> Self {
        ClientConfig {
            mock_seed: seed,
            ..Default::default()
        }
    }

    pub fn live(endpoint: impl Into<String>) -> Self {
        ClientConfig {
            endpoint: endpoint.into(),
            mode: ClientMode::Live,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_in_flight == 0 {
            return Err(VadError::InvalidConfig("max_in_flight must be >= 1".into()));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(VadError::InvalidConfig(format!("timeout {} must be positive", self.timeout_secs)));
        }
        if self.mode == ClientMode::Live {
            let uri = ureq::http::Uri::from_str(&self.endpoint)
                .map_err(|e| VadError::InvalidConfig(format!("endpoint {:?}: {e}", self.endpoint)))?;
            let scheme_ok = matches!(uri.scheme_str(), Some("http") | Some("https"));
            if !scheme_ok || uri.host().is_none_or(str::is_empty) {
                return Err(VadError::InvalidConfig(format!(
                    "endpoint {:?} is not an http(s) URL",
                    self.endpoint
                )));
            }
        }
        Ok(())
    }

    pub fn model_name(&self) -> String {
        match (&self.model_name, self.mode) {
            (Some(name), _) => name.clone(),
            (None, ClientMode::Live) => self.endpoint.clone(),
            (None, ClientMode::Mock) => MockEcho::NAME.to_string(),
        }
    }

    /// The generator this configuration describes.
    pub fn generator(&self) -> Result<Box<dyn TextGenerator>> {
        self.validate()?;
        Ok(match self.mode {
            ClientMode::Live => Box::new(HttpGenerator::new(self)),
            ClientMode::Mock => Box::new(MockEcho),
        })
    }
}

/// Something that turns a prompt into text.
pub trait TextGenerator: Send + Sync {
    fn generate(&self, prompt: &str, max_tokens: u32) -> Result<String>;
}

/// Offline stand-in that answers with its prompt.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockEcho;

impl MockEcho {
    pub const NAME: &'static str = "mock-echo";
}

impl TextGenerator for MockEcho {
    fn generate(&self, prompt: &str, _max_tokens: u32) -> Result<String> {
        Ok(prompt.to_string())
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireReply {
    text: String,
}

/// JSON-over-HTTP client: `POST {"prompt", "max_tokens"}`, expects 200 with
/// `{"text"}`.
pub struct HttpGenerator {
    agent: ureq::Agent,
    endpoint: String,
}

impl HttpGenerator {
    pub fn new(cfg: &ClientConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpGenerator {
            agent,
            endpoint: cfg.endpoint.clone(),
        }
    }
}

fn transport_error(err: ureq::Error) -> VadError {
    match err {
        ureq::Error::Timeout(_) => VadError::ClientTimeout { attempts: 1 },
        ureq::Error::Io(e) if e.kind() == std::io::ErrorKind::TimedOut || e.kind() == std::io::ErrorKind::WouldBlock => {
            VadError::ClientTimeout { attempts: 1 }
        }
        ureq::Error::StatusCode(status) => VadError::ClientHttpError { status },
        other => VadError::ClientTransport(other.to_string()),
    }
}

impl TextGenerator for HttpGenerator {
    fn generate(&self, prompt: &str, max_tokens: u32) -> Result<String> {
        let mut reply = self
            .agent
            .post(&self.endpoint)
            .send_json(WireRequest { prompt, max_tokens })
            .map_err(transport_error)?;
        let status = reply.status().as_u16();
        if status != 200 {
            return Err(VadError::ClientHttpError { status });
        }
        let body: WireReply = reply.body_mut().read_json().map_err(|e| match e {
            ureq::Error::Json(e) => VadError::ClientTransport(format!("malformed reply: {e}")),
            other => transport_error(other),
        })?;
        Ok(body.text)
    }
}

/// Calls `generator` until it yields non-empty text or `retries` extra
/// attempts are spent. Non-retryable errors surface immediately.
pub fn generate_with_retry(generator: &dyn TextGenerator, prompt: &str, cfg: &ClientConfig) -> Result<String> {
    let attempts = cfg.retries + 1;
    let mut last = None;
    for attempt in 0..attempts {
        if attempt > 0 && cfg.retry_backoff_ms > 0 {
            std::thread::sleep(Duration::from_millis(cfg.retry_backoff_ms * attempt as u64));
        }
        let result = generator.generate(prompt, cfg.max_tokens).and_then(|text| {
            if text.trim().is_empty() {
                Err(VadError::EmptyCaption)
            } else {
                Ok(text)
            }
        });
        match result {
            Ok(text) => return Ok(text),
            Err(e) if e.is_retryable() => {
                log::warn!("client attempt {}/{attempts} failed: {e}", attempt + 1);
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(match last.expect("at least one attempt") {
        VadError::ClientTimeout { .. } => VadError::ClientTimeout { attempts },
        other => other,
    })
}

/// Maps `f` over `items` with at most `max_in_flight` calls running at
/// once. Output order follows input order; the lowest-index error wins.
pub fn fan_out<T, R, F>(items: &[T], max_in_flight: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> Result<R> + Sync,
{
    let workers = max_in_flight.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<R>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(i, &items[i]);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|r| r.expect("every index visited"))
        .collect()
}
