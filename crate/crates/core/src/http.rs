//! Blocking JSON-over-HTTP client shared by the remote backend, scorer and
//! extractor. Bounds in-flight requests and retries transport errors, 429
//! and 5xx responses with exponential backoff.

use std::time::Duration;

use parking_lot::{Condvar, Mutex};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum HttpError {
    #[error("transport error calling {url}: {message}")]
    Transport { url: String, message: String },
    #[error("{url} returned HTTP {status}: {body}")]
    Status {
        url: String,
        status: u16,
        body: String,
    },
    #[error("could not decode response from {url}: {message}")]
    Decode { url: String, message: String },
    #[error("http client setup failed: {0}")]
    Setup(String),
}

impl HttpError {
    fn retryable(&self) -> bool {
        match self {
            HttpError::Transport { .. } => true,
            HttpError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpSettings {
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub max_in_flight: usize,
}

impl Default for HttpSettings {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
            max_in_flight: 8,
        }
    }
}

/// Counting semaphore for outstanding requests.
#[derive(Debug)]
struct InFlight {
    cap: usize,
    busy: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(cap: usize) -> Self {
        Self {
            cap: cap.max(1),
            busy: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut busy = self.busy.lock();
        while *busy >= self.cap {
            self.freed.wait(&mut busy);
        }
        *busy += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.busy.lock() -= 1;
        self.0.freed.notify_one();
    }
}

pub struct JsonClient {
    http: reqwest::blocking::Client,
    settings: HttpSettings,
    in_flight: InFlight,
    bearer: Option<String>,
}

impl std::fmt::Debug for JsonClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JsonClient")
            .field("settings", &self.settings)
            .field("bearer", &self.bearer.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl JsonClient {
    pub fn new(settings: HttpSettings, bearer: Option<String>) -> Result<Self, HttpError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(settings.timeout)
            .build()
            .map_err(|e| HttpError::Setup(e.to_string()))?;
        Ok(Self {
            http,
            in_flight: InFlight::new(settings.max_in_flight),
            settings,
            bearer,
        })
    }

    pub fn settings(&self) -> &HttpSettings {
        &self.settings
    }

    pub fn post_json<Req, Resp>(&self, url: &str, body: &Req) -> Result<Resp, HttpError>
    where
        Req: Serialize + ?Sized,
        Resp: DeserializeOwned,
    {
        let mut attempt = 0u32;
        loop {
            let result = {
                let _permit = self.in_flight.acquire();
                self.post_once(url, body)
            };
            match result {
                Err(e) if e.retryable() && attempt < self.settings.max_retries => {
                    let delay = self.settings.backoff_base * 2u32.saturating_pow(attempt);
                    tracing::warn!(url, attempt, ?delay, error = %e, "retrying request");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn post_once<Req, Resp>(&self, url: &str, body: &Req) -> Result<Resp, HttpError>
    where
        Req: Serialize + ?Sized,
        Resp: DeserializeOwned,
    {
        let mut req = self.http.post(url).json(body);
        if let Some(token) = &self.bearer {
            req = req.bearer_auth(token);
        }
        let response = req.send().map_err(|e| HttpError::Transport {
            url: url.to_string(),
            message: e.to_string(),
        })?;
        let status = response.status();
        let text = response.text().map_err(|e| HttpError::Transport {
            url: url.to_string(),
            message: e.to_string(),
        })?;
        if !status.is_success() {
            return Err(HttpError::Status {
                url: url.to_string(),
                status: status.as_u16(),
                body: text,
            });
        }
        serde_json::from_str(&text).map_err(|e| HttpError::Decode {
            url: url.to_string(),
            message: e.to_string(),
        })
    }
}
